//! Two-step training: plain cross-entropy first, then mixup fine-tuning
//! from the best step-one checkpoint.
//!
//! In step two each shuffled batch is split into halves `b1` and `b2`,
//! paired index-wise. The loss is the mean of four group means:
//! `CE(b1)`, `CE(b2)`, `mix(b1, b2)` and `mix(b2, b1)`. Mixing both ways
//! matters because span mixing is not symmetric.

mod config;
mod metrics;

pub use config::{read_manifest, write_manifest, EvalEvery, LossWeighting, OptimizerKind, PhaseConfig, TrainConfig};
pub use metrics::{EvalRecord, MetricsCsv, Phase, RunMetrics, METRICS_HEADER};

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::corpus::{Dataset, LabeledExample, Split};
use crate::error::{Error, Result};
use crate::mixer::{self, MixResult, Variant};
use crate::model::{argmax, LinearSchedule, MixLayer, Optimizer, Params, SoftLabel, ToyTextClassifier};
use crate::rng;
use crate::saliency::{compute_saliency, SaliencyMap};

/// Hooks for streaming results out of a run.
pub trait TrainObserver {
    fn on_eval(&mut self, _record: &EvalRecord) -> Result<()> {
        Ok(())
    }

    /// Called whenever a strictly better validation accuracy is reached.
    fn on_best(&mut self, _model: &ToyTextClassifier, _record: &EvalRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Argmax accuracy; ties in logits go to the smallest class index.
pub fn evaluate(model: &ToyTextClassifier, dataset: &Dataset) -> Result<f64> {
    Ok(evaluate_with_loss(model, dataset)?.0)
}

/// Accuracy and mean cross-entropy.
pub fn evaluate_with_loss(model: &ToyTextClassifier, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for ex in dataset.examples() {
        let trace = model.forward(&ex.sentences, SoftLabel::hard(ex.label))?;
        if argmax(&trace.logits) == ex.label {
            correct += 1;
        }
        loss += trace.loss;
    }
    let n = dataset.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Loss and ratio statistics for one step-two batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    /// The four group means, in order `b1`, `b2`, `mix(b1, b2)`, `mix(b2, b1)`.
    pub groups: [f64; 4],
    /// Ratio on the second label for every mixed example.
    pub lambdas: Vec<f64>,
}

/// Splits a batch into two equal halves.
pub fn split_batch<T>(batch: &[T]) -> Result<(&[T], &[T])> {
    if batch.len() % 2 != 0 {
        return Err(Error::Config(format!("cannot halve a batch of {} examples", batch.len())));
    }
    Ok(batch.split_at(batch.len() / 2))
}

fn saliency_for(model: &ToyTextClassifier, ex: &LabeledExample) -> Result<Vec<SaliencyMap>> {
    compute_saliency(model, &ex.sentences, ex.label)
}

/// Builds one input-level mixed example of `a` with `b`.
pub fn mix_pair(
    variant: Variant,
    a: &LabeledExample,
    b: &LabeledExample,
    saliency: Option<(&[SaliencyMap], &[SaliencyMap])>,
    lambda0: f64,
    rng: &mut rng::Rng,
) -> Result<MixResult> {
    match variant {
        Variant::Ssmix => {
            let (sa, sb) = saliency.ok_or_else(|| Error::Config("ssmix needs saliency maps".into()))?;
            mixer::ssmix(&a.sentences, &b.sentences, sa, sb, a.label, b.label, lambda0)
        }
        Variant::RandomSpan => mixer::random_span_mix(&a.sentences, &b.sentences, a.label, b.label, lambda0, rng),
        Variant::RandomToken => mixer::random_token_mix(&a.sentences, &b.sentences, a.label, b.label, lambda0, rng),
        Variant::UnkReplace => mixer::unk_replace(&a.sentences, a.label, lambda0, rng),
        other => Err(Error::Config(format!("{other} is not an input-level variant"))),
    }
}

/// Four-term step-two loss for halves `b1` and `b2`, accumulating its
/// gradient into `grads`. Saliency gradients are used only for scoring.
pub fn mixup_batch_loss(
    model: &ToyTextClassifier,
    b1: &[&LabeledExample],
    b2: &[&LabeledExample],
    cfg: &TrainConfig,
    rng: &mut rng::Rng,
    grads: &mut Params,
) -> Result<BatchLoss> {
    if b1.len() != b2.len() || b1.is_empty() {
        return Err(Error::Config(format!("batch halves differ: {} vs {}", b1.len(), b2.len())));
    }
    let n = b1.len();
    let scale = 1.0 / (4.0 * n as f64);
    let mut groups = [0.0; 4];
    let mut lambdas = Vec::with_capacity(2 * n);

    for (g, half) in [b1, b2].into_iter().enumerate() {
        for ex in half {
            let trace = model.forward(&ex.sentences, SoftLabel::hard(ex.label))?;
            model.backward_into(&trace, scale, grads);
            groups[g] += trace.loss / n as f64;
        }
    }

    let saliency: Option<(Vec<Vec<SaliencyMap>>, Vec<Vec<SaliencyMap>>)> = if cfg.variant == Variant::Ssmix {
        let s1 = b1.iter().map(|ex| saliency_for(model, ex)).collect::<Result<_>>()?;
        let s2 = b2.iter().map(|ex| saliency_for(model, ex)).collect::<Result<_>>()?;
        Some((s1, s2))
    } else {
        None
    };

    for (g, (first, second, flip)) in [(b1, b2, false), (b2, b1, true)].into_iter().enumerate() {
        for i in 0..n {
            let (a, b) = (first[i], second[i]);
            let trace = if cfg.variant.is_interpolation() {
                let layer = if cfg.variant == Variant::EmbedMix {
                    MixLayer::Embed
                } else {
                    MixLayer::Hidden
                };
                let lambda = mixer::sample_interp_lambda(cfg.alpha, rng)?;
                model.forward_hiddenmix(&a.sentences, &b.sentences, a.label, b.label, lambda, layer)?
            } else {
                let sal = saliency.as_ref().map(|(s1, s2)| {
                    if flip {
                        (s2[i].as_slice(), s1[i].as_slice())
                    } else {
                        (s1[i].as_slice(), s2[i].as_slice())
                    }
                });
                let mixed = mix_pair(cfg.variant, a, b, sal, cfg.lambda0, rng)?;
                let label = match cfg.loss_weighting {
                    LossWeighting::Label => mixed.soft_label,
                    LossWeighting::Algorithm1 => mixed.soft_label.transposed(),
                };
                let trace = model.forward(&mixed.mixed, label)?;
                lambdas.push(mixed.lambda);
                trace
            };
            if cfg.variant.is_interpolation() {
                lambdas.push(trace.label.lambda);
            }
            model.backward_into(&trace, scale, grads);
            groups[2 + g] += trace.loss / n as f64;
        }
    }

    Ok(BatchLoss {
        loss: groups.iter().sum::<f64>() / 4.0,
        groups,
        lambdas,
    })
}

fn make_optimizer(model: &ToyTextClassifier, cfg: &TrainConfig) -> Optimizer {
    match cfg.optimizer {
        OptimizerKind::AdamW => Optimizer::adamw(model, cfg.weight_decay),
        OptimizerKind::Sgd => Optimizer::Sgd {
            weight_decay: cfg.weight_decay,
        },
    }
}

fn check_datasets(model: &ToyTextClassifier, train: &Dataset, valid: &Dataset) -> Result<()> {
    for ds in [train, valid] {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ds.num_classes() > model.config().num_classes {
            return Err(Error::Config(format!(
                "{} split has {} classes but the model has {}",
                ds.split(),
                ds.num_classes(),
                model.config().num_classes
            )));
        }
    }
    Ok(())
}

struct PhaseRun<'a> {
    phase: Phase,
    model: ToyTextClassifier,
    best: ToyTextClassifier,
    best_accuracy: f64,
    metrics: RunMetrics,
    valid: &'a Dataset,
    observer: &'a mut dyn TrainObserver,
    lambdas: Vec<f64>,
}

impl PhaseRun<'_> {
    fn evaluate(&mut self, step: usize) -> Result<()> {
        let (accuracy, loss) = evaluate_with_loss(&self.model, self.valid)?;
        let lambda_mean = if self.phase == Phase::Step2 && !self.lambdas.is_empty() {
            Some(self.lambdas.iter().sum::<f64>() / self.lambdas.len() as f64)
        } else {
            None
        };
        self.lambdas.clear();
        let record = EvalRecord {
            step,
            phase: self.phase,
            split: Split::Valid,
            accuracy,
            loss,
            lambda_mean,
        };
        self.observer.on_eval(&record)?;
        if self.metrics.best.is_none() || accuracy > self.best_accuracy {
            self.best_accuracy = accuracy;
            self.best = self.model.clone();
            self.metrics.best = Some(self.metrics.records.len());
            self.observer.on_best(&self.model, &record)?;
        }
        self.metrics.records.push(record);
        Ok(())
    }
}

fn should_eval(cfg: &TrainConfig, step: usize, end_of_epoch: bool) -> bool {
    match cfg.eval_every {
        EvalEvery::Epoch => end_of_epoch,
        EvalEvery::Steps(k) => step % k == 0,
    }
}

/// Step one: plain mini-batch cross-entropy. Returns the checkpoint with
/// the highest validation accuracy (earliest on ties).
pub fn train_step1(
    model: &ToyTextClassifier,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ToyTextClassifier, RunMetrics)> {
    cfg.validate()?;
    check_datasets(model, train, valid)?;
    let started = Instant::now();
    let mut run = PhaseRun {
        phase: Phase::Step1,
        model: model.clone(),
        best: model.clone(),
        best_accuracy: f64::NEG_INFINITY,
        metrics: RunMetrics::default(),
        valid,
        observer,
        lambdas: Vec::new(),
    };
    if cfg.step1.epochs == 0 {
        return Ok((run.best, run.metrics));
    }

    let bs = cfg.batch_size;
    let steps_per_epoch = train.len().div_ceil(bs);
    let schedule = LinearSchedule::new(cfg.step1.lr, steps_per_epoch * cfg.step1.epochs, cfg.warmup_fraction);
    let mut optimizer = make_optimizer(model, cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, rng::SHUFFLE);
    let mut step = 0;
    let mut evaluated_at = None;

    for _ in 0..cfg.step1.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(bs).enumerate() {
            let mut grads = Params::zeros(run.model.config());
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let ex = &train.examples()[i];
                let trace = run.model.forward(&ex.sentences, SoftLabel::hard(ex.label))?;
                run.model.backward_into(&trace, scale, &mut grads);
                epoch_loss += trace.loss * scale / steps_per_epoch as f64;
            }
            optimizer.step(&mut run.model, &grads, schedule.lr(step))?;
            step += 1;
            if should_eval(cfg, step, b + 1 == steps_per_epoch) {
                run.evaluate(step)?;
                evaluated_at = Some(step);
            }
        }
        run.metrics.epoch_losses.push(epoch_loss);
    }
    if evaluated_at != Some(step) {
        run.evaluate(step)?;
    }
    run.metrics.elapsed = started.elapsed();
    Ok((run.best, run.metrics))
}

/// Step two: mixup fine-tuning from `start`. The starting model is
/// evaluated first, so the returned model is never worse on validation
/// than the step-one best.
pub fn train_step2(
    start: &ToyTextClassifier,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ToyTextClassifier, RunMetrics)> {
    cfg.validate()?;
    check_datasets(start, train, valid)?;
    let started = Instant::now();
    let mut run = PhaseRun {
        phase: Phase::Step2,
        model: start.clone(),
        best: start.clone(),
        best_accuracy: f64::NEG_INFINITY,
        metrics: RunMetrics::default(),
        valid,
        observer,
        lambdas: Vec::new(),
    };
    run.evaluate(0)?;
    if cfg.step2.epochs == 0 {
        run.metrics.elapsed = started.elapsed();
        return Ok((run.best, run.metrics));
    }

    let bs = cfg.batch_size;
    // Each batch is trimmed to an even size; a trailing single example is skipped.
    let batches_per_epoch = train.len() / bs + usize::from(train.len() % bs >= 2);
    let schedule = LinearSchedule::new(cfg.step2.lr, batches_per_epoch * cfg.step2.epochs, cfg.warmup_fraction);
    let mut optimizer = make_optimizer(start, cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, rng::SHUFFLE_STEP2);
    let mut mix_rng = rng::stream(cfg.seed, rng::MIX);
    let mut step = 0;
    let mut evaluated_at = Some(0);

    for _ in 0..cfg.step2.epochs {
        order.shuffle(&mut shuffle);
        let batches: Vec<&[usize]> = order
            .chunks(bs)
            .map(|c| &c[..c.len() - c.len() % 2])
            .filter(|c| c.len() >= 2)
            .collect();
        let mut epoch_loss = 0.0;
        for (b, chunk) in batches.iter().enumerate() {
            let examples: Vec<&LabeledExample> = chunk.iter().map(|&i| &train.examples()[i]).collect();
            let mut grads = Params::zeros(run.model.config());
            if cfg.variant == Variant::None {
                let scale = 1.0 / examples.len() as f64;
                for ex in &examples {
                    let trace = run.model.forward(&ex.sentences, SoftLabel::hard(ex.label))?;
                    run.model.backward_into(&trace, scale, &mut grads);
                    epoch_loss += trace.loss * scale / batches.len() as f64;
                }
            } else {
                let (b1, b2) = split_batch(&examples)?;
                let out = mixup_batch_loss(&run.model, b1, b2, cfg, &mut mix_rng, &mut grads)?;
                epoch_loss += out.loss / batches.len() as f64;
                run.lambdas.extend(out.lambdas);
            }
            optimizer.step(&mut run.model, &grads, schedule.lr(step))?;
            step += 1;
            if should_eval(cfg, step, b + 1 == batches.len()) {
                run.evaluate(step)?;
                evaluated_at = Some(step);
            }
        }
        run.metrics.epoch_losses.push(epoch_loss);
    }
    if evaluated_at != Some(step) {
        run.evaluate(step)?;
    }
    run.metrics.elapsed = started.elapsed();
    Ok((run.best, run.metrics))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyTextClassifier,
    pub best_accuracy: f64,
    pub step1: RunMetrics,
    pub step2: RunMetrics,
}

/// Both steps back to back. The reported accuracy is the best over both.
pub fn train(
    model: &ToyTextClassifier,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let (best1, step1) = train_step1(model, train, valid, cfg, observer)?;
    let (best2, step2) = train_step2(&best1, train, valid, cfg, observer)?;
    let best_accuracy = step1
        .best_accuracy()
        .into_iter()
        .chain(step2.best_accuracy())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TrainOutcome {
        model: best2,
        best_accuracy,
        step1,
        step2,
    })
}
