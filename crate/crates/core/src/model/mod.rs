//! A small text classifier with hand-written gradients.
//!
//! Architecture: token embedding, a per-token dense layer with `tanh`, mean
//! pooling over non-PAD positions, and a linear output layer. For paired
//! inputs the two pooled sentence vectors are concatenated before the
//! output layer.
//!
//! Every position is fed through one or more weighted *branches*. A plain
//! forward has one branch of weight 1 per token. The interpolation
//! baselines give a position two branches (one token from each source)
//! and combine them either before the dense layer (embedding mixing) or
//! after it (hidden mixing). The backward pass routes gradients through
//! the same branches, so all three modes share one exact derivative.

mod checkpoint;
mod optim;

pub use optim::{AdamW, LinearSchedule, Optimizer};

use rand::Rng;

use crate::corpus::{TokenSequence, PAD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub paired: bool,
    pub activation: Activation,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, num_classes: usize, paired: bool) -> Self {
        Self {
            vocab_size,
            dim: 32,
            hidden: 64,
            num_classes,
            paired,
            activation: Activation::Tanh,
        }
    }

    pub fn with_dims(mut self, dim: usize, hidden: usize) -> Self {
        self.dim = dim;
        self.hidden = hidden;
        self
    }

    pub fn sentences(&self) -> usize {
        if self.paired {
            2
        } else {
            1
        }
    }

    /// Width of the output layer's input.
    pub fn pooled_width(&self) -> usize {
        self.hidden * self.sentences()
    }
}

/// All trainable tensors, row-major. Also used for gradients and optimizer
/// moments, which have identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `vocab_size x dim`
    pub embedding: Vec<f64>,
    /// `dim x hidden`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `pooled_width x num_classes`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            embedding: vec![0.0; cfg.vocab_size * cfg.dim],
            w1: vec![0.0; cfg.dim * cfg.hidden],
            b1: vec![0.0; cfg.hidden],
            w2: vec![0.0; cfg.pooled_width() * cfg.num_classes],
            b2: vec![0.0; cfg.num_classes],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Soft target `(1 - lambda) * onehot(y_a) + lambda * onehot(y_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabel {
    pub y_a: usize,
    pub y_b: usize,
    pub lambda: f64,
}

impl SoftLabel {
    pub fn new(y_a: usize, y_b: usize, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::RatioOutOfRange(lambda));
        }
        Ok(Self { y_a, y_b, lambda })
    }

    pub fn hard(y: usize) -> Self {
        Self {
            y_a: y,
            y_b: y,
            lambda: 0.0,
        }
    }

    /// Swaps which label receives `lambda`, giving the weighting
    /// `lambda * CE(y_a) + (1 - lambda) * CE(y_b)`.
    pub fn transposed(self) -> Self {
        Self {
            lambda: 1.0 - self.lambda,
            ..self
        }
    }
}

/// Cross-entropy of `logits` against class `y`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    log_sum_exp(logits) - logits[y]
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `(1 - lambda) * CE(logits, y_a) + lambda * CE(logits, y_b)`.
pub fn mixup_loss(logits: &[f64], label: &SoftLabel) -> Result<f64> {
    if !(0.0..=1.0).contains(&label.lambda) {
        return Err(Error::RatioOutOfRange(label.lambda));
    }
    for y in [label.y_a, label.y_b] {
        if y >= logits.len() {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: logits.len(),
            });
        }
    }
    Ok((1.0 - label.lambda) * cross_entropy(logits, label.y_a) + label.lambda * cross_entropy(logits, label.y_b))
}

/// Where two sources are interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixLayer {
    /// Token embeddings, before the dense layer.
    Embed,
    /// Per-token hidden activations, after the dense layer.
    Hidden,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    /// Source example: 0 for the first, 1 for the second.
    pub source: usize,
    /// Vocabulary row this branch reads, if any.
    pub token: Option<usize>,
    pub weight: f64,
    pub embedding: Vec<f64>,
    /// Dense activation of this branch alone (hidden mixing only).
    pub activation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrace {
    pub branches: Vec<BranchTrace>,
    /// Input to the dense layer (embedding mixing and plain forward).
    pub input: Vec<f64>,
    /// Hidden activation after mixing.
    pub hidden: Vec<f64>,
}

impl PositionTrace {
    pub fn is_active(&self) -> bool {
        !self.branches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTrace {
    pub positions: Vec<PositionTrace>,
    pub active: usize,
}

/// Everything needed to run the exact backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layer: MixLayer,
    pub sentences: Vec<SentenceTrace>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub label: SoftLabel,
    pub loss: f64,
}

/// Loss gradient with respect to each position's first-source token
/// embedding, per sentence. Zero at PAD positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub sentences: Vec<Vec<Vec<f64>>>,
}

/// One input position: `(source, token, embedding, weight)` branches.
type PositionInput = Vec<(usize, Option<usize>, Vec<f64>, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTextClassifier {
    config: ModelConfig,
    params: Params,
}

impl ToyTextClassifier {
    pub fn zeros(config: ModelConfig) -> Self {
        Self {
            params: Params::zeros(&config),
            config,
        }
    }

    /// Uniform initialization: embeddings in `[-0.5, 0.5]`, dense weights
    /// Glorot-uniform, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let mut params = Params::zeros(&config);
        for v in params.embedding.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let a1 = (6.0 / (config.dim + config.hidden) as f64).sqrt();
        for v in params.w1.iter_mut() {
            *v = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (config.pooled_width() + config.num_classes) as f64).sqrt();
        for v in params.w2.iter_mut() {
            *v = rng.random_range(-a2..a2);
        }
        let mut model = Self { config, params };
        model.zero_pad_row();
        model
    }

    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Self> {
        let expected = Params::zeros(&config);
        for (a, b) in params.tensors().iter().zip(expected.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Checkpoint("tensor shape does not match header".into()));
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        let mut model = Self { config, params };
        model.zero_pad_row();
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access for optimizers and tests. Callers that touch the
    /// embedding table should call [`Self::zero_pad_row`] afterwards.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn zero_pad_row(&mut self) {
        let d = self.config.dim;
        self.params.embedding[PAD * d..(PAD + 1) * d].fill(0.0);
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        let d = self.config.dim;
        &self.params.embedding[id * d..(id + 1) * d]
    }

    fn check_input(&self, sentences: &[TokenSequence], label: &SoftLabel) -> Result<()> {
        if sentences.len() != self.config.sentences() {
            return Err(Error::SentenceCount {
                expected: self.config.sentences(),
                got: sentences.len(),
            });
        }
        for s in sentences {
            if let Some(&id) = s.ids().iter().find(|&&id| id >= self.config.vocab_size) {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.config.vocab_size,
                });
            }
        }
        for y in [label.y_a, label.y_b] {
            if y >= self.config.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: self.config.num_classes,
                });
            }
        }
        if !(0.0..=1.0).contains(&label.lambda) {
            return Err(Error::RatioOutOfRange(label.lambda));
        }
        Ok(())
    }

    /// Per-position embedding vectors of a sequence; `None` at PAD.
    pub fn embed(&self, seq: &TokenSequence) -> Vec<Option<Vec<f64>>> {
        seq.ids()
            .iter()
            .map(|&id| (id != PAD).then(|| self.embedding_row(id).to_vec()))
            .collect()
    }

    pub fn forward(&self, sentences: &[TokenSequence], label: SoftLabel) -> Result<ForwardTrace> {
        self.check_input(sentences, &label)?;
        let inputs = sentences
            .iter()
            .map(|s| {
                s.ids()
                    .iter()
                    .map(|&id| {
                        if id == PAD {
                            vec![]
                        } else {
                            vec![(0, Some(id), self.embedding_row(id).to_vec(), 1.0)]
                        }
                    })
                    .collect()
            })
            .collect();
        self.run(inputs, MixLayer::Embed, label)
    }

    /// Forward from explicit per-position embedding vectors (`None` = PAD).
    /// The vectors are not tied to vocabulary rows, so the backward pass
    /// leaves the embedding table gradient untouched for them.
    pub fn forward_embedded(&self, sentences: &[Vec<Option<Vec<f64>>>], label: SoftLabel) -> Result<ForwardTrace> {
        if sentences.len() != self.config.sentences() {
            return Err(Error::SentenceCount {
                expected: self.config.sentences(),
                got: sentences.len(),
            });
        }
        let inputs = sentences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|e| match e {
                        Some(v) => vec![(0, None, v.clone(), 1.0)],
                        None => vec![],
                    })
                    .collect()
            })
            .collect();
        self.run(inputs, MixLayer::Embed, label)
    }

    /// Embedding-level interpolation: `lambda * e_a + (1 - lambda) * e_b`
    /// per position, sequences zero-padded to a common length. The loss
    /// uses `SoftLabel(y_a, y_b, 1 - lambda)` so `y_a` carries weight
    /// `lambda`.
    pub fn forward_embedmix(
        &self,
        a: &[TokenSequence],
        b: &[TokenSequence],
        y_a: usize,
        y_b: usize,
        lambda: f64,
    ) -> Result<ForwardTrace> {
        self.forward_hiddenmix(a, b, y_a, y_b, lambda, MixLayer::Embed)
    }

    /// Interpolation at `layer`; see [`Self::forward_embedmix`].
    pub fn forward_hiddenmix(
        &self,
        a: &[TokenSequence],
        b: &[TokenSequence],
        y_a: usize,
        y_b: usize,
        lambda: f64,
        layer: MixLayer,
    ) -> Result<ForwardTrace> {
        let label = SoftLabel::new(y_a, y_b, 1.0 - lambda)?;
        self.check_input(a, &label)?;
        self.check_input(b, &label)?;
        let mut inputs = Vec::with_capacity(a.len());
        for (sa, sb) in a.iter().zip(b) {
            let len = sa.len().max(sb.len());
            let (pa, pb) = (sa.padded_to(len), sb.padded_to(len));
            if pa.len() != pb.len() {
                return Err(Error::LengthMismatch(pa.len(), pb.len()));
            }
            let positions: Vec<PositionInput> = pa
                .ids()
                .iter()
                .zip(pb.ids())
                .map(|(&ia, &ib)| {
                    let mut branches = Vec::with_capacity(2);
                    if ia != PAD {
                        branches.push((0, Some(ia), self.embedding_row(ia).to_vec(), lambda));
                    }
                    if ib != PAD {
                        branches.push((1, Some(ib), self.embedding_row(ib).to_vec(), 1.0 - lambda));
                    }
                    branches
                })
                .collect();
            inputs.push(positions);
        }
        self.run(inputs, layer, label)
    }

    fn dense(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.config.dim, self.config.hidden);
        let mut z = self.params.b1.clone();
        for j in 0..d {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let row = &self.params.w1[j * h..(j + 1) * h];
            for k in 0..h {
                z[k] += xj * row[k];
            }
        }
        match self.config.activation {
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        }
        z
    }

    fn run(&self, inputs: Vec<Vec<PositionInput>>, layer: MixLayer, label: SoftLabel) -> Result<ForwardTrace> {
        let (d, h, c) = (self.config.dim, self.config.hidden, self.config.num_classes);
        let mut sentences = Vec::with_capacity(inputs.len());
        let mut pooled = vec![0.0; self.config.pooled_width()];
        for (s, positions) in inputs.into_iter().enumerate() {
            let mut traces = Vec::with_capacity(positions.len());
            let mut active = 0;
            let pool = &mut pooled[s * h..(s + 1) * h];
            for branches in positions {
                let mut input = vec![0.0; d];
                let mut hidden = vec![0.0; h];
                let mut bts = Vec::with_capacity(branches.len());
                for (source, token, embedding, weight) in branches {
                    let activation = match layer {
                        MixLayer::Embed => {
                            for j in 0..d {
                                input[j] += weight * embedding[j];
                            }
                            Vec::new()
                        }
                        MixLayer::Hidden => {
                            let act = self.dense(&embedding);
                            for k in 0..h {
                                hidden[k] += weight * act[k];
                            }
                            act
                        }
                    };
                    bts.push(BranchTrace {
                        source,
                        token,
                        weight,
                        embedding,
                        activation,
                    });
                }
                if !bts.is_empty() {
                    if layer == MixLayer::Embed {
                        hidden = self.dense(&input);
                    }
                    active += 1;
                    for k in 0..h {
                        pool[k] += hidden[k];
                    }
                }
                traces.push(PositionTrace {
                    branches: bts,
                    input,
                    hidden,
                });
            }
            if active > 0 {
                let inv = 1.0 / active as f64;
                pool.iter_mut().for_each(|v| *v *= inv);
            }
            sentences.push(SentenceTrace {
                positions: traces,
                active,
            });
        }

        let mut logits = self.params.b2.clone();
        for (k, &p) in pooled.iter().enumerate() {
            let row = &self.params.w2[k * c..(k + 1) * c];
            for cls in 0..c {
                logits[cls] += p * row[cls];
            }
        }
        let lse = log_sum_exp(&logits);
        let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        let loss = mixup_loss(&logits, &label)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok(ForwardTrace {
            layer,
            sentences,
            pooled,
            logits,
            probs,
            label,
            loss,
        })
    }

    /// Exact gradients of `trace.loss` with respect to every parameter and
    /// to each position's first-source embedding vector.
    pub fn backward(&self, trace: &ForwardTrace) -> (Params, EmbeddingGrads) {
        let mut grads = Params::zeros(&self.config);
        let emb = self.backward_into(trace, 1.0, &mut grads);
        (grads, emb)
    }

    /// Accumulates `scale * dLoss/dParams` into `grads`. The returned
    /// embedding gradients carry the same scale.
    pub fn backward_into(&self, trace: &ForwardTrace, scale: f64, grads: &mut Params) -> EmbeddingGrads {
        let (d, h, c) = (self.config.dim, self.config.hidden, self.config.num_classes);
        let label = &trace.label;

        let mut dlogits: Vec<f64> = trace.probs.iter().map(|p| p * scale).collect();
        dlogits[label.y_a] -= (1.0 - label.lambda) * scale;
        dlogits[label.y_b] -= label.lambda * scale;

        let mut dpooled = vec![0.0; trace.pooled.len()];
        for (k, &p) in trace.pooled.iter().enumerate() {
            let row = &self.params.w2[k * c..(k + 1) * c];
            let grow = &mut grads.w2[k * c..(k + 1) * c];
            for cls in 0..c {
                grow[cls] += p * dlogits[cls];
                dpooled[k] += row[cls] * dlogits[cls];
            }
        }
        for cls in 0..c {
            grads.b2[cls] += dlogits[cls];
        }

        let mut out = Vec::with_capacity(trace.sentences.len());
        for (s, sent) in trace.sentences.iter().enumerate() {
            let mut per_pos = Vec::with_capacity(sent.positions.len());
            let dh: Vec<f64> = if sent.active > 0 {
                dpooled[s * h..(s + 1) * h].iter().map(|v| v / sent.active as f64).collect()
            } else {
                vec![0.0; h]
            };
            for pos in &sent.positions {
                let mut de_first = vec![0.0; d];
                if !pos.is_active() {
                    per_pos.push(de_first);
                    continue;
                }
                match trace.layer {
                    MixLayer::Embed => {
                        let dz: Vec<f64> = (0..h).map(|k| dh[k] * (1.0 - pos.hidden[k] * pos.hidden[k])).collect();
                        let dx = self.dense_backward(&pos.input, &dz, grads);
                        for b in &pos.branches {
                            let de: Vec<f64> = dx.iter().map(|v| v * b.weight).collect();
                            self.accumulate_row(b.token, &de, grads);
                            if b.source == 0 {
                                de_first = de;
                            }
                        }
                    }
                    MixLayer::Hidden => {
                        for b in &pos.branches {
                            let dz: Vec<f64> = (0..h)
                                .map(|k| b.weight * dh[k] * (1.0 - b.activation[k] * b.activation[k]))
                                .collect();
                            let de = self.dense_backward(&b.embedding, &dz, grads);
                            self.accumulate_row(b.token, &de, grads);
                            if b.source == 0 {
                                de_first = de;
                            }
                        }
                    }
                }
                per_pos.push(de_first);
            }
            out.push(per_pos);
        }
        EmbeddingGrads { sentences: out }
    }

    /// Accumulates dense-layer gradients for input `x` and pre-activation
    /// gradient `dz`; returns the gradient with respect to `x`.
    fn dense_backward(&self, x: &[f64], dz: &[f64], grads: &mut Params) -> Vec<f64> {
        let (d, h) = (self.config.dim, self.config.hidden);
        for k in 0..h {
            grads.b1[k] += dz[k];
        }
        let mut dx = vec![0.0; d];
        for j in 0..d {
            let row = &self.params.w1[j * h..(j + 1) * h];
            let grow = &mut grads.w1[j * h..(j + 1) * h];
            let mut acc = 0.0;
            for k in 0..h {
                grow[k] += x[j] * dz[k];
                acc += row[k] * dz[k];
            }
            dx[j] = acc;
        }
        dx
    }

    fn accumulate_row(&self, token: Option<usize>, de: &[f64], grads: &mut Params) {
        if let Some(id) = token {
            if id != PAD {
                let d = self.config.dim;
                for (g, v) in grads.embedding[id * d..(id + 1) * d].iter_mut().zip(de) {
                    *g += v;
                }
            }
        }
    }

    /// Logits of a plain forward, without a loss.
    pub fn predict(&self, sentences: &[TokenSequence]) -> Result<Vec<f64>> {
        Ok(self.forward(sentences, SoftLabel::hard(0))?.logits)
    }
}

/// Index of the largest logit; the smallest index wins ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
