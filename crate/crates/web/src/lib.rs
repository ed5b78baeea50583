//! Browser demo: a toy classifier trained in the page on synthetic keyword
//! data, with saliency shading, single-pair mixing and a histogram of the
//! interpolation ratio.
//!
//! Every export returns a JSON string. The plain Rust methods carry the
//! logic and are what the native tests exercise; the `#[wasm_bindgen]`
//! wrappers only translate errors.

use serde_json::{json, Value};
use ssmix::corpus::{encode, generate_synthetic, LabelMap, LabeledExample, SyntheticConfig, Task, Vocabulary};
use ssmix::mixer::{sample_interp_lambda, Variant};
use ssmix::model::{ModelConfig, ToyTextClassifier};
use ssmix::rng;
use ssmix::saliency::compute_saliency;
use ssmix::trainer::{self, NoopObserver, PhaseConfig, TrainConfig};
use ssmix::{Error, Result};
use wasm_bindgen::prelude::*;

const MAX_LEN: usize = 64;
const CLASSES: usize = 3;

#[wasm_bindgen]
pub struct Demo {
    vocab: Vocabulary,
    labels: LabelMap,
    model: ToyTextClassifier,
    keywords: Vec<Vec<String>>,
    samples: Vec<(String, String)>,
    accuracy: f64,
}

impl Demo {
    /// Generates data and trains for four short epochs of plain
    /// cross-entropy; a fraction of a second natively.
    pub fn build(seed: u64) -> Result<Self> {
        let data = generate_synthetic(&SyntheticConfig::new(Task::Single, CLASSES, 1200, 150, seed))?;
        let (vocab, train, valid) = data.encode(MAX_LEN)?;
        let cfg = TrainConfig {
            step1: PhaseConfig { lr: 1e-2, epochs: 4 },
            step2: PhaseConfig { lr: 2e-3, epochs: 0 },
            variant: Variant::None,
            seed,
            ..TrainConfig::desk()
        };
        let init = ToyTextClassifier::init(
            ModelConfig::new(vocab.len(), CLASSES, false).with_dims(8, 16),
            &mut rng::stream(seed, rng::INIT),
        );
        let outcome = trainer::train(&init, &train, &valid, &cfg, &mut NoopObserver)?;
        let samples = data
            .valid
            .iter()
            .take(6)
            .map(|r| (r.texts[0].clone(), r.label.clone()))
            .collect();
        Ok(Self {
            vocab,
            labels: data.labels,
            model: outcome.model,
            keywords: data.keywords,
            samples,
            accuracy: outcome.best_accuracy,
        })
    }

    fn label(&self, name: &str) -> Result<usize> {
        self.labels
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown label {name:?}")))
    }

    fn example(&self, text: &str, label: &str) -> Result<LabeledExample> {
        Ok(LabeledExample::single(encode(&self.vocab, text, MAX_LEN)?, self.label(label)?))
    }

    fn token(&self, id: usize) -> &str {
        self.vocab.token(id).unwrap_or("[UNK]")
    }

    /// Labels, their keywords, validation accuracy and a few sample rows.
    pub fn info_value(&self) -> Value {
        let labels: Vec<&str> = (0..self.labels.len()).filter_map(|i| self.labels.label(i)).collect();
        json!({
            "labels": labels,
            "keywords": self.keywords,
            "accuracy": self.accuracy,
            "samples": self.samples.iter().map(|(t, l)| json!({"text": t, "label": l})).collect::<Vec<_>>(),
        })
    }

    /// Per-token saliency, with scores also normalized to the largest one.
    pub fn saliency_value(&self, text: &str, label: &str) -> Result<Value> {
        let ex = self.example(text, label)?;
        let map = &compute_saliency(&self.model, &ex.sentences, ex.label)?[0];
        let max = map.scores().iter().copied().fold(0.0, f64::max);
        let seq = ex.first();
        let tokens: Vec<Value> = seq
            .ids()
            .iter()
            .zip(map.scores())
            .zip(seq.special_mask())
            .map(|((&id, &s), &special)| {
                json!({
                    "token": self.token(id),
                    "score": s,
                    "shade": if max > 0.0 { s / max } else { 0.0 },
                    "special": special,
                })
            })
            .collect();
        Ok(json!({ "tokens": tokens }))
    }

    /// Mixes `b` into `a`; each output token says where it came from.
    #[allow(clippy::too_many_arguments)]
    pub fn mix_value(
        &self,
        a: &str,
        label_a: &str,
        b: &str,
        label_b: &str,
        lambda0: f64,
        variant: &str,
        seed: u64,
    ) -> Result<Value> {
        let variant: Variant = variant.parse()?;
        let (ea, eb) = (self.example(a, label_a)?, self.example(b, label_b)?);
        let saliency = if variant == Variant::Ssmix {
            Some((
                compute_saliency(&self.model, &ea.sentences, ea.label)?,
                compute_saliency(&self.model, &eb.sentences, eb.label)?,
            ))
        } else {
            None
        };
        let maps = saliency.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()));
        let out = trainer::mix_pair(variant, &ea, &eb, maps, lambda0, &mut rng::stream(seed, rng::MIX))?;
        let (mixed, prov) = (&out.mixed[0], &out.provenance[0]);
        let tokens: Vec<Value> = mixed
            .ids()
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                let origin = match prov.replacements.iter().find(|r| r.position == pos) {
                    Some(r) if r.source.is_some() => "b",
                    Some(_) => "unk",
                    None if mixed.special_mask()[pos] => "special",
                    None => "a",
                };
                json!({ "token": self.token(id), "origin": origin })
            })
            .collect();
        Ok(json!({
            "tokens": tokens,
            "lambda": out.lambda,
            "label_a": label_a,
            "label_b": label_b,
            "span_a": prov.span_a.map(|s| [s.start, s.len]),
            "span_b": prov.span_b.map(|s| [s.start, s.len]),
        }))
    }
}

/// Histogram of `max(x, 1 - x)` for `x ~ Beta(alpha, alpha)` over `[0.5, 1]`.
pub fn beta_histogram_value(alpha: f64, n: usize, bins: usize, seed: u64) -> Result<Value> {
    if bins == 0 || n == 0 {
        return Err(Error::Config("need at least one draw and one bin".into()));
    }
    let mut r = rng::stream(seed, rng::MIX);
    let mut counts = vec![0usize; bins];
    let mut sum = 0.0;
    for _ in 0..n {
        let x = sample_interp_lambda(alpha, &mut r)?;
        sum += x;
        let bin = (((x - 0.5) * 2.0 * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| 0.5 + 0.5 * i as f64 / bins as f64).collect();
    Ok(json!({ "edges": edges, "counts": counts, "mean": sum / n as f64 }))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<Demo, JsError> {
        Demo::build(seed.into()).map_err(js)
    }

    pub fn info(&self) -> String {
        self.info_value().to_string()
    }

    pub fn saliency(&self, text: &str, label: &str) -> std::result::Result<String, JsError> {
        self.saliency_value(text, label).map(|v| v.to_string()).map_err(js)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn mix(
        &self,
        a: &str,
        label_a: &str,
        b: &str,
        label_b: &str,
        lambda0: f64,
        variant: &str,
        seed: u32,
    ) -> std::result::Result<String, JsError> {
        self.mix_value(a, label_a, b, label_b, lambda0, variant, seed.into())
            .map(|v| v.to_string())
            .map_err(js)
    }
}

#[wasm_bindgen]
pub fn beta_histogram(alpha: f64, n: u32, bins: u32, seed: u32) -> std::result::Result<String, JsError> {
    beta_histogram_value(alpha, n as usize, bins as usize, seed.into())
        .map(|v| v.to_string())
        .map_err(js)
}
