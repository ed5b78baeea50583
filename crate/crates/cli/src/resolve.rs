//! Turning flags, a manifest file and preset defaults into one run spec.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgMatches, ValueEnum};
use ssmix::corpus::{DataFormat, Schema};
use ssmix::trainer::{read_manifest, TrainConfig};
use ssmix::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_MIN_COUNT: usize = 1;
pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_HIDDEN: usize = 64;

/// Every manifest key that also exists as a `train`/`sweep` flag. Flag ids
/// and manifest keys coincide so that explicit flags can be layered over a
/// manifest as plain strings.
const KEYS: [&str; 23] = [
    "preset",
    "train",
    "valid",
    "schema",
    "format",
    "max_len",
    "min_count",
    "dim",
    "hidden",
    "lr1",
    "epochs1",
    "lr2",
    "epochs2",
    "batch_size",
    "lambda0",
    "alpha",
    "variant",
    "eval_every",
    "seed",
    "weight_decay",
    "warmup",
    "loss_weighting",
    "optimizer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Finetune,
    Desk,
}

impl Preset {
    pub fn config(self) -> TrainConfig {
        match self {
            Preset::Finetune => TrainConfig::default(),
            Preset::Desk => TrainConfig::desk(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Finetune => "finetune",
            Preset::Desk => "desk",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune" => Ok(Preset::Finetune),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

/// A fully resolved training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub preset: Preset,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub schema: Schema,
    pub format: DataFormat,
    pub max_len: usize,
    pub min_count: usize,
    pub dim: usize,
    pub hidden: usize,
    pub cfg: TrainConfig,
}

fn parse<T: FromStr>(entries: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match entries.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}"))),
        None => Ok(default),
    }
}

impl RunSpec {
    /// Layers explicitly given flags over the optional manifest.
    pub fn resolve(matches: &ArgMatches, config: Option<&Path>) -> Result<Self> {
        let mut entries = match config {
            Some(path) => read_manifest(path)?,
            None => BTreeMap::new(),
        };
        for key in KEYS {
            if matches.value_source(key) != Some(ValueSource::CommandLine) {
                continue;
            }
            if let Some(mut raw) = matches.get_raw(key) {
                if let Some(v) = raw.next() {
                    entries.insert(key.to_string(), v.to_string_lossy().into_owned());
                }
            }
        }
        Self::from_entries(&entries)
    }

    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let preset = parse(entries, "preset", Preset::Finetune)?;
        let mut cfg = preset.config();
        cfg.apply_entries(entries)?;
        cfg.validate()?;
        let path = |key: &str| {
            entries
                .get(key)
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config(format!("no {key} file: pass --{key} or set {key}= in --config")))
        };
        let train = path("train")?;
        let valid = path("valid")?;
        let format = parse(entries, "format", DataFormat::from_path(&train))?;
        let spec = Self {
            preset,
            schema: parse(entries, "schema", Schema::Single)?,
            format,
            max_len: parse(entries, "max_len", DEFAULT_MAX_LEN)?,
            min_count: parse(entries, "min_count", DEFAULT_MIN_COUNT)?,
            dim: parse(entries, "dim", DEFAULT_DIM)?,
            hidden: parse(entries, "hidden", DEFAULT_HIDDEN)?,
            train,
            valid,
            cfg,
        };
        if spec.dim == 0 || spec.hidden == 0 {
            return Err(Error::Config("dim and hidden must be positive".into()));
        }
        if spec.max_len < 3 {
            return Err(Error::MaxLenTooSmall(spec.max_len));
        }
        Ok(spec)
    }

    /// Manifest lines, in a fixed order.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("preset", self.preset.to_string()),
            ("train", self.train.display().to_string()),
            ("valid", self.valid.display().to_string()),
            ("schema", self.schema.to_string()),
            ("format", self.format.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_count", self.min_count.to_string()),
            ("dim", self.dim.to_string()),
            ("hidden", self.hidden.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        out.extend(self.cfg.to_entries());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn preset_supplies_rates_and_entries_override() {
        let spec = RunSpec::from_entries(&entries(&[("train", "t.tsv"), ("valid", "v.tsv")])).unwrap();
        assert_eq!(spec.cfg, TrainConfig::default());
        assert_eq!(spec.format, DataFormat::Tsv);

        let spec = RunSpec::from_entries(&entries(&[
            ("train", "t.jsonl"),
            ("valid", "v.jsonl"),
            ("preset", "desk"),
            ("lr2", "0.5"),
        ]))
        .unwrap();
        assert_eq!(spec.format, DataFormat::Jsonl);
        assert_eq!(spec.cfg.step1.lr, TrainConfig::desk().step1.lr);
        assert_eq!(spec.cfg.step2.lr, 0.5);
    }

    #[test]
    fn entries_round_trip() {
        let spec = RunSpec::from_entries(&entries(&[
            ("train", "t.tsv"),
            ("valid", "v.tsv"),
            ("schema", "paired"),
            ("dim", "4"),
            ("variant", "random_token"),
        ]))
        .unwrap();
        let back: BTreeMap<String, String> = spec.to_entries().into_iter().collect();
        assert_eq!(RunSpec::from_entries(&back).unwrap(), spec);
    }

    #[test]
    fn missing_files_and_bad_values_are_config_errors() {
        assert!(matches!(RunSpec::from_entries(&entries(&[])), Err(Error::Config(_))));
        let bad = entries(&[("train", "t"), ("valid", "v"), ("dim", "x")]);
        assert!(matches!(RunSpec::from_entries(&bad), Err(Error::Config(_))));
    }
}
