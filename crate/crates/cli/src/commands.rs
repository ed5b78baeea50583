use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::ArgMatches;
use ssmix::corpus::{
    decode, encode, generate_synthetic, load_dataset, read_rows, DataFormat, Dataset, LabelMap, LabeledExample,
    LoadOptions, Schema, Split, SyntheticConfig, TokenSequence, Vocabulary,
};
use ssmix::mixer::{MixConfig, MixResult, Span, Variant};
use ssmix::model::{ModelConfig, ToyTextClassifier};
use ssmix::saliency::compute_saliency;
use ssmix::trainer::{
    self, evaluate_with_loss, mix_pair, read_manifest, write_manifest, EvalRecord, MetricsCsv, RunMetrics,
    TrainObserver, METRICS_HEADER,
};
use ssmix::{rng, Error, Result};

use crate::resolve::{RunSpec, DEFAULT_MAX_LEN};
use crate::{EvalArgs, GenArgs, MixArgs, ModelSource, SaliencyArgs, SweepArgs, TrainArgs};

const VOCAB_FILE: &str = "vocab.txt";
const LABELS_FILE: &str = "labels.tsv";
const MANIFEST_FILE: &str = "manifest.txt";

/// Creates `dir` and refuses to clobber any of `names` unless forced.
fn prepare_out(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    if !force {
        if let Some(existing) = names.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    Ok(())
}

pub fn gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let ext = args.format.to_string();
    let train_name = format!("train.{ext}");
    let valid_name = format!("valid.{ext}");
    prepare_out(&args.out, &[&train_name, &valid_name, LABELS_FILE], args.force)?;

    let mut cfg = SyntheticConfig::new(args.task, args.classes, args.n_train, args.n_valid, args.seed);
    cfg.keywords_per_class = args.keywords_per_class;
    cfg.noise_words = args.noise_words;
    let data = generate_synthetic(&cfg)?;
    for (name, rows) in [(&train_name, &data.train), (&valid_name, &data.valid)] {
        let mut f = BufWriter::new(fs::File::create(args.out.join(name))?);
        for row in rows {
            let line = match args.format {
                DataFormat::Tsv => row.to_tsv(),
                DataFormat::Jsonl => row.to_jsonl(),
            };
            writeln!(f, "{line}")?;
        }
        f.flush()?;
    }
    data.labels.save(&args.out.join(LABELS_FILE))?;
    writeln!(
        out,
        "wrote {} train and {} valid rows ({} task, {} labels) to {}",
        data.train.len(),
        data.valid.len(),
        args.task,
        data.labels.len(),
        args.out.display()
    )?;
    Ok(())
}

struct RunData {
    vocab: Vocabulary,
    labels: LabelMap,
    train: Dataset,
    valid: Dataset,
}

fn load_run_data(spec: &RunSpec) -> Result<RunData> {
    let rows = read_rows(&spec.train, spec.format, spec.schema)?;
    let texts: Vec<&str> = rows.iter().flat_map(|r| r.texts.iter().map(String::as_str)).collect();
    let vocab = Vocabulary::build(&texts, spec.min_count)?;
    let opts = LoadOptions {
        format: spec.format,
        schema: spec.schema,
        split: Split::Train,
        max_len: spec.max_len,
    };
    let (train, labels) = load_dataset(&spec.train, &opts, &vocab, None)?;
    let valid_opts = LoadOptions {
        split: Split::Valid,
        ..opts
    };
    let (valid, _) = load_dataset(&spec.valid, &valid_opts, &vocab, Some(&labels))?;
    Ok(RunData {
        vocab,
        labels,
        train,
        valid,
    })
}

fn init_model(spec: &RunSpec, data: &RunData, seed: u64) -> ToyTextClassifier {
    let cfg = ModelConfig::new(data.vocab.len(), data.labels.len(), spec.schema == Schema::Paired)
        .with_dims(spec.dim, spec.hidden);
    ToyTextClassifier::init(cfg, &mut rng::stream(seed, rng::INIT))
}

fn report_phase(out: &mut dyn Write, name: &str, m: &RunMetrics) -> Result<()> {
    match m.best_accuracy() {
        Some(acc) => writeln!(
            out,
            "{name}: best accuracy {acc} over {} evaluations ({:.2}s)",
            m.records.len(),
            m.elapsed.as_secs_f64()
        )?,
        None => writeln!(out, "{name}: skipped")?,
    }
    Ok(())
}

pub fn train(args: &TrainArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<()> {
    let spec = RunSpec::resolve(matches, args.config.as_deref())?;
    prepare_out(
        &args.out,
        &[VOCAB_FILE, LABELS_FILE, MANIFEST_FILE, MetricsCsv::FILE, MetricsCsv::CHECKPOINT],
        args.force,
    )?;
    let data = load_run_data(&spec)?;
    data.vocab.save(&args.out.join(VOCAB_FILE))?;
    data.labels.save(&args.out.join(LABELS_FILE))?;
    write_manifest(&args.out.join(MANIFEST_FILE), &spec.to_entries())?;

    let model = init_model(&spec, &data, spec.cfg.seed);
    let mut observer = MetricsCsv::create(&args.out)?;
    let outcome = trainer::train(&model, &data.train, &data.valid, &spec.cfg, &mut observer)?;
    report_phase(out, "step1", &outcome.step1)?;
    report_phase(out, "step2", &outcome.step2)?;
    writeln!(out, "best_accuracy={}", outcome.best_accuracy)?;
    Ok(())
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let spec = RunSpec::from_entries(&read_manifest(&args.run.join(MANIFEST_FILE))?)?;
    let vocab = Vocabulary::load(&args.run.join(VOCAB_FILE))?;
    let labels = LabelMap::load(&args.run.join(LABELS_FILE))?;
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.run.join(MetricsCsv::CHECKPOINT));
    let model = ToyTextClassifier::load(&checkpoint)?;
    let opts = LoadOptions {
        format: args.format.unwrap_or_else(|| DataFormat::from_path(&args.data)),
        schema: spec.schema,
        split: args.split,
        max_len: spec.max_len,
    };
    let (dataset, _) = load_dataset(&args.data, &opts, &vocab, Some(&labels))?;
    let (accuracy, loss) = evaluate_with_loss(&model, &dataset)?;
    writeln!(out, "accuracy={accuracy} loss={loss} n={}", dataset.len())?;
    Ok(())
}

struct Loaded {
    vocab: Option<Vocabulary>,
    labels: Option<LabelMap>,
    model: Option<ToyTextClassifier>,
    max_len: usize,
}

fn load_source(src: &ModelSource) -> Result<Loaded> {
    let mut loaded = Loaded {
        vocab: None,
        labels: None,
        model: None,
        max_len: DEFAULT_MAX_LEN,
    };
    if let Some(run) = &src.run {
        let spec = RunSpec::from_entries(&read_manifest(&run.join(MANIFEST_FILE))?)?;
        loaded.max_len = spec.max_len;
        loaded.vocab = Some(Vocabulary::load(&run.join(VOCAB_FILE))?);
        loaded.labels = Some(LabelMap::load(&run.join(LABELS_FILE))?);
        let ckpt = run.join(MetricsCsv::CHECKPOINT);
        if src.checkpoint.is_none() {
            loaded.model = Some(ToyTextClassifier::load(&ckpt)?);
        }
    }
    if let Some(p) = &src.checkpoint {
        loaded.model = Some(ToyTextClassifier::load(p)?);
    }
    if let Some(p) = &src.vocab {
        loaded.vocab = Some(Vocabulary::load(p)?);
    }
    if let Some(p) = &src.labels {
        loaded.labels = Some(LabelMap::load(p)?);
    }
    if let Some(n) = src.max_len {
        loaded.max_len = n;
    }
    if let (Some(model), Some(vocab)) = (&loaded.model, &loaded.vocab) {
        if model.config().vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} vocabulary entries, vocabulary has {}",
                model.config().vocab_size,
                vocab.len()
            )));
        }
    }
    Ok(loaded)
}

fn label_index(labels: Option<&LabelMap>, label: &str) -> Result<usize> {
    match labels {
        Some(map) => map
            .get(label)
            .ok_or_else(|| Error::Config(format!("label {label:?} is not in the label map"))),
        None => label
            .parse()
            .map_err(|_| Error::Config(format!("without a label map, labels must be class indices, got {label:?}"))),
    }
}

fn label_name(labels: Option<&LabelMap>, index: usize) -> String {
    labels
        .and_then(|m| m.label(index))
        .map(str::to_string)
        .unwrap_or_else(|| index.to_string())
}

fn encode_all(vocab: &Vocabulary, texts: &[&str], max_len: usize) -> Result<Vec<TokenSequence>> {
    texts.iter().map(|t| encode(vocab, t, max_len)).collect()
}

fn texts<'a>(first: &'a str, second: Option<&'a str>) -> Vec<&'a str> {
    std::iter::once(first).chain(second).collect()
}

fn fmt_span(span: Option<Span>) -> String {
    span.map(|s| format!("{}+{}", s.start, s.len)).unwrap_or_else(|| "-".into())
}

/// Runs one input-level mix and returns it with the vocabulary used.
pub fn mix_texts(args: &MixArgs) -> Result<(MixResult, Vocabulary, Option<LabelMap>)> {
    if !args.variant.is_input_level() {
        return Err(Error::Config(format!(
            "mix prints token-level mixes; {} is not one (use ssmix, random_span, random_token or unk_replace)",
            args.variant
        )));
    }
    MixConfig::new(args.variant, args.lambda0, 0.2)?;
    if args.a2.is_some() != args.b2.is_some() {
        return Err(Error::Config("give --a2 and --b2 together for paired inputs".into()));
    }
    let loaded = load_source(&args.source)?;
    let a_texts = texts(&args.a, args.a2.as_deref());
    let b_texts = texts(&args.b, args.b2.as_deref());
    let vocab = match loaded.vocab {
        Some(v) => v,
        None if args.variant == Variant::Ssmix => {
            return Err(Error::Config("ssmix needs a model: pass --run or --checkpoint with --vocab".into()))
        }
        None => {
            let all: Vec<&str> = a_texts.iter().chain(&b_texts).copied().collect();
            Vocabulary::build(&all, 1)?
        }
    };
    let a = LabeledExample {
        sentences: encode_all(&vocab, &a_texts, loaded.max_len)?,
        label: label_index(loaded.labels.as_ref(), &args.label_a)?,
    };
    let b = LabeledExample {
        sentences: encode_all(&vocab, &b_texts, loaded.max_len)?,
        label: label_index(loaded.labels.as_ref(), &args.label_b)?,
    };
    let saliency = match (&loaded.model, args.variant) {
        (Some(model), Variant::Ssmix) => Some((
            compute_saliency(model, &a.sentences, a.label)?,
            compute_saliency(model, &b.sentences, b.label)?,
        )),
        (None, Variant::Ssmix) => {
            return Err(Error::Config("ssmix needs a checkpoint: pass --run or --checkpoint".into()))
        }
        _ => None,
    };
    let sal = saliency.as_ref().map(|(sa, sb)| (sa.as_slice(), sb.as_slice()));
    let mut r = rng::stream(args.seed, rng::MIX);
    let result = mix_pair(args.variant, &a, &b, sal, args.lambda0, &mut r)?;
    Ok((result, vocab, loaded.labels))
}

pub fn mix(args: &MixArgs, out: &mut dyn Write) -> Result<()> {
    let (result, vocab, labels) = mix_texts(args)?;
    writeln!(out, "sentence\tmixed\tlambda\tlabel_a\tlabel_b\tspan_a\tspan_b\treplaced")?;
    let label = &result.soft_label;
    for (i, (seq, prov)) in result.mixed.iter().zip(&result.provenance).enumerate() {
        let replaced: Vec<String> = prov
            .replacements
            .iter()
            .map(|r| match r.source {
                Some(src) => format!("{}<{}", r.position, src),
                None => format!("{}<unk", r.position),
            })
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            i + 1,
            decode(&vocab, seq),
            result.lambda,
            label_name(labels.as_ref(), label.y_a),
            label_name(labels.as_ref(), label.y_b),
            fmt_span(prov.span_a),
            fmt_span(prov.span_b),
            if replaced.is_empty() { "-".to_string() } else { replaced.join(",") }
        )?;
    }
    Ok(())
}

pub fn saliency(args: &SaliencyArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = load_source(&args.source)?;
    let (Some(model), Some(vocab)) = (&loaded.model, &loaded.vocab) else {
        return Err(Error::Config(
            "saliency needs a model and vocabulary: pass --run, or --checkpoint with --vocab".into(),
        ));
    };
    let sentences = encode_all(vocab, &texts(&args.text, args.text2.as_deref()), loaded.max_len)?;
    let label = label_index(loaded.labels.as_ref(), &args.label)?;
    let maps = compute_saliency(model, &sentences, label)?;
    writeln!(out, "sentence\tposition\ttoken\tscore")?;
    for (s, (seq, map)) in sentences.iter().zip(&maps).enumerate() {
        for (pos, (&id, score)) in seq.ids().iter().zip(map.scores()).enumerate() {
            writeln!(out, "{}\t{pos}\t{}\t{score}", s + 1, vocab.token(id).unwrap_or("[UNK]"))?;
        }
    }
    Ok(())
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds must look like 0..4 or 1,2,3, got {s:?}"));
    let seeds: Vec<u64> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

pub fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    s.split(',').map(|v| v.trim().parse()).collect()
}

/// Sample mean and standard deviation (n - 1 denominator; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct SweepCsv {
    file: BufWriter<fs::File>,
    seed: u64,
}

impl TrainObserver for SweepCsv {
    fn on_eval(&mut self, record: &EvalRecord) -> Result<()> {
        writeln!(self.file, "{},{}", self.seed, record.csv_row())?;
        Ok(())
    }
}

pub const SWEEP_SUMMARY: &str = "summary.csv";
pub const SWEEP_RUNS: &str = "runs.csv";

pub fn sweep(args: &SweepArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<()> {
    let spec = RunSpec::resolve(matches, args.train.config.as_deref())?;
    let seeds = parse_seeds(&args.seeds)?;
    let variants = parse_variants(&args.variants)?;
    let dir = &args.train.out;
    let per_variant: Vec<String> = variants.iter().map(|v| format!("{v}.csv")).collect();
    let mut names: Vec<&str> = vec![SWEEP_SUMMARY, SWEEP_RUNS, MANIFEST_FILE];
    names.extend(per_variant.iter().map(String::as_str));
    prepare_out(dir, &names, args.train.force)?;

    let data = load_run_data(&spec)?;
    let mut manifest = spec.to_entries();
    manifest.retain(|(k, _)| k != "variant" && k != "seed");
    manifest.push(("seeds".into(), args.seeds.clone()));
    manifest.push(("variants".into(), args.variants.clone()));
    write_manifest(&dir.join(MANIFEST_FILE), &manifest)?;

    let mut runs = BufWriter::new(fs::File::create(dir.join(SWEEP_RUNS))?);
    writeln!(runs, "variant,seed,best_accuracy")?;
    let mut summary = BufWriter::new(fs::File::create(dir.join(SWEEP_SUMMARY))?);
    writeln!(summary, "variant,seeds,mean,std")?;
    writeln!(out, "variant\tmean\tstd")?;
    for (variant, file) in variants.iter().zip(&per_variant) {
        let mut csv = BufWriter::new(fs::File::create(dir.join(file))?);
        writeln!(csv, "seed,{METRICS_HEADER}")?;
        let mut observer = SweepCsv { file: csv, seed: 0 };
        let mut best = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let mut cfg = spec.cfg.clone();
            cfg.variant = *variant;
            cfg.seed = seed;
            observer.seed = seed;
            let model = init_model(&spec, &data, seed);
            let outcome = trainer::train(&model, &data.train, &data.valid, &cfg, &mut observer)?;
            writeln!(runs, "{variant},{seed},{}", outcome.best_accuracy)?;
            best.push(outcome.best_accuracy);
        }
        observer.file.flush()?;
        let (mean, std) = mean_std(&best);
        writeln!(summary, "{variant},{},{mean},{std}", best.len())?;
        writeln!(out, "{variant}\t{mean:.4}\t{std:.4}")?;
    }
    runs.flush()?;
    summary.flush()?;
    Ok(())
}
