use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mixer::{MixConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalEvery {
    Epoch,
    Steps(usize),
}

impl fmt::Display for EvalEvery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalEvery::Epoch => f.write_str("epoch"),
            EvalEvery::Steps(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for EvalEvery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epoch" => Ok(EvalEvery::Epoch),
            n => match n.parse::<usize>() {
                Ok(k) if k > 0 => Ok(EvalEvery::Steps(k)),
                _ => Err(Error::Config(format!("eval-every must be \"epoch\" or a positive step count, got {s:?}"))),
            },
        }
    }
}

/// Which label takes the mixing ratio in the mixed-example loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossWeighting {
    /// `(1 - lambda) * CE(y_a) + lambda * CE(y_b)`, matching the soft label.
    Label,
    /// `lambda * CE(y_a) + (1 - lambda) * CE(y_b)`.
    Algorithm1,
}

impl fmt::Display for LossWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossWeighting::Label => "label",
            LossWeighting::Algorithm1 => "algorithm1",
        })
    }
}

impl FromStr for LossWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(LossWeighting::Label),
            "algorithm1" => Ok(LossWeighting::Algorithm1),
            _ => Err(Error::Config(format!("unknown loss weighting {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    AdamW,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adamw" => Ok(OptimizerKind::AdamW),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub step1: PhaseConfig,
    pub step2: PhaseConfig,
    pub batch_size: usize,
    pub lambda0: f64,
    pub alpha: f64,
    pub variant: Variant,
    pub eval_every: EvalEvery,
    pub seed: u64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub loss_weighting: LossWeighting,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    /// The fine-tuning recipe: 5e-5 for three epochs, then 1e-5 for five
    /// epochs of mixup, batch 32, prior ratio 0.1.
    fn default() -> Self {
        Self {
            step1: PhaseConfig { lr: 5e-5, epochs: 3 },
            step2: PhaseConfig { lr: 1e-5, epochs: 5 },
            batch_size: 32,
            lambda0: 0.1,
            alpha: 0.2,
            variant: Variant::Ssmix,
            eval_every: EvalEvery::Epoch,
            seed: 0,
            weight_decay: 1e-4,
            warmup_fraction: 0.1,
            loss_weighting: LossWeighting::Label,
            optimizer: OptimizerKind::AdamW,
        }
    }
}

impl TrainConfig {
    /// Learning rates suited to training the toy model from scratch. The
    /// default rates target fine-tuning a pretrained encoder and barely
    /// move a randomly initialized model in a few hundred steps.
    pub fn desk() -> Self {
        Self {
            step1: PhaseConfig { lr: 1e-2, epochs: 3 },
            step2: PhaseConfig { lr: 2e-3, epochs: 5 },
            ..Self::default()
        }
    }

    pub fn mix_config(&self) -> Result<MixConfig> {
        MixConfig::new(self.variant, self.lambda0, self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!("batch size must be even and at least 2, got {}", self.batch_size)));
        }
        for (name, v) in [("step1 lr", self.step1.lr), ("step2 lr", self.step2.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup fraction must be in [0, 1), got {}", self.warmup_fraction)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        self.mix_config()?;
        Ok(())
    }

    /// Flat `key=value` pairs, the run manifest's training section.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        [
            ("lr1", self.step1.lr.to_string()),
            ("epochs1", self.step1.epochs.to_string()),
            ("lr2", self.step2.lr.to_string()),
            ("epochs2", self.step2.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lambda0", self.lambda0.to_string()),
            ("alpha", self.alpha.to_string()),
            ("variant", self.variant.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("seed", self.seed.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("warmup", self.warmup_fraction.to_string()),
            ("loss_weighting", self.loss_weighting.to_string()),
            ("optimizer", self.optimizer.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Overrides fields from manifest entries; unknown keys are ignored so
    /// a manifest can carry data and model settings as well.
    pub fn apply_entries(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
        }
        for (k, v) in entries {
            match k.as_str() {
                "lr1" => self.step1.lr = parse(k, v)?,
                "epochs1" => self.step1.epochs = parse(k, v)?,
                "lr2" => self.step2.lr = parse(k, v)?,
                "epochs2" => self.step2.epochs = parse(k, v)?,
                "batch_size" => self.batch_size = parse(k, v)?,
                "lambda0" => self.lambda0 = parse(k, v)?,
                "alpha" => self.alpha = parse(k, v)?,
                "variant" => self.variant = v.parse()?,
                "eval_every" => self.eval_every = v.parse()?,
                "seed" => self.seed = parse(k, v)?,
                "weight_decay" => self.weight_decay = parse(k, v)?,
                "warmup" => self.warmup_fraction = parse(k, v)?,
                "loss_weighting" => self.loss_weighting = v.parse()?,
                "optimizer" => self.optimizer = v.parse()?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Writes a flat `key=value` file.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for (k, v) in entries {
        writeln!(f, "{k}={v}")?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::row(path, i + 1, "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.step1, PhaseConfig { lr: 5e-5, epochs: 3 });
        assert_eq!(c.step2, PhaseConfig { lr: 1e-5, epochs: 5 });
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.lambda0, 0.1);
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.weight_decay, 1e-4);
        assert_eq!(c.warmup_fraction, 0.1);
        c.validate().unwrap();
    }

    #[test]
    fn validation_rejects_odd_batches_and_bad_rates() {
        let odd = TrainConfig {
            batch_size: 31,
            ..TrainConfig::default()
        };
        assert!(odd.validate().is_err());
        let mut bad = TrainConfig::default();
        bad.step2.lr = 0.0;
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lambda0: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let cfg = TrainConfig {
            variant: Variant::RandomToken,
            eval_every: EvalEvery::Steps(50),
            seed: 99,
            loss_weighting: LossWeighting::Algorithm1,
            ..TrainConfig::desk()
        };
        let mut entries = cfg.to_entries();
        entries.push(("dim".into(), "16".into()));
        write_manifest(&path, &entries).unwrap();
        let mut back = TrainConfig::default();
        back.apply_entries(&read_manifest(&path).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
