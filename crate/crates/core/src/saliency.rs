//! Token saliency: the L2 norm of the loss gradient with respect to each
//! position's input embedding.

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::model::{SoftLabel, ToyTextClassifier};

/// Non-negative per-position scores, aligned with a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    scores: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::NonFinite("saliency scores"));
        }
        Ok(Self { scores })
    }

    /// Same score everywhere; span selection then picks the leftmost window.
    pub fn constant(len: usize, value: f64) -> Self {
        Self {
            scores: vec![value.abs(); len],
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub(crate) fn check_aligned(&self, seq: &TokenSequence) -> Result<()> {
        if self.scores.len() != seq.len() {
            return Err(Error::SaliencyLength {
                expected: seq.len(),
                got: self.scores.len(),
            });
        }
        Ok(())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One saliency map per sentence, from the cross-entropy against `label`.
///
/// Special and PAD positions get their true gradient norms; excluding them
/// from mixing is the mixer's job.
pub fn compute_saliency(
    model: &ToyTextClassifier,
    sentences: &[TokenSequence],
    label: usize,
) -> Result<Vec<SaliencyMap>> {
    let trace = model.forward(sentences, SoftLabel::hard(label))?;
    let (_, emb) = model.backward(&trace);
    emb.sentences
        .iter()
        .map(|positions| SaliencyMap::new(positions.iter().map(|g| l2(g)).collect()))
        .collect()
}

/// The same quantity by central differences, perturbing one embedding
/// coordinate at a time. Costs two forwards per coordinate.
pub fn saliency_fd_oracle(
    model: &ToyTextClassifier,
    sentences: &[TokenSequence],
    label: usize,
    step: f64,
) -> Result<Vec<SaliencyMap>> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let label = SoftLabel::hard(label);
    let base: Vec<Vec<Option<Vec<f64>>>> = sentences.iter().map(|s| model.embed(s)).collect();
    let loss_at = |emb: &[Vec<Option<Vec<f64>>>]| -> Result<f64> { Ok(model.forward_embedded(emb, label)?.loss) };

    let mut maps = Vec::with_capacity(sentences.len());
    let mut probe = base.clone();
    for s in 0..base.len() {
        let mut scores = Vec::with_capacity(base[s].len());
        for i in 0..base[s].len() {
            let Some(e) = &base[s][i] else {
                scores.push(0.0);
                continue;
            };
            let mut sq = 0.0;
            for j in 0..e.len() {
                probe[s][i].as_mut().expect("non-PAD")[j] = e[j] + step;
                let plus = loss_at(&probe)?;
                probe[s][i].as_mut().expect("non-PAD")[j] = e[j] - step;
                let minus = loss_at(&probe)?;
                probe[s][i].as_mut().expect("non-PAD")[j] = e[j];
                let g = (plus - minus) / (2.0 * step);
                sq += g * g;
            }
            scores.push(sq.sqrt());
        }
        maps.push(SaliencyMap::new(scores)?);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::corpus::PAD;
    use crate::model::ModelConfig;
    use crate::rng;

    fn random_case(r: &mut rng::Rng) -> (ToyTextClassifier, Vec<TokenSequence>, usize) {
        let vocab = r.random_range(6..=20);
        let cfg = ModelConfig::new(vocab, r.random_range(2..=4), r.random_bool(0.3))
            .with_dims(r.random_range(1..=4), r.random_range(1..=4));
        let model = ToyTextClassifier::init(cfg, r);
        let sentences = (0..cfg.sentences())
            .map(|_| {
                let n = r.random_range(1..=4);
                let content: Vec<usize> = (0..n).map(|_| r.random_range(1..vocab)).collect();
                TokenSequence::from_content(&content)
            })
            .collect();
        let label = r.random_range(0..cfg.num_classes);
        (model, sentences, label)
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let mut r = rng::stream(11, 3);
        for _ in 0..20 {
            let (model, sentences, label) = random_case(&mut r);
            let analytic = compute_saliency(&model, &sentences, label).unwrap();
            let numeric = saliency_fd_oracle(&model, &sentences, label, 1e-3).unwrap();
            for (a, n) in analytic.iter().zip(&numeric) {
                assert_eq!(a.len(), n.len());
                for (x, y) in a.scores().iter().zip(n.scores()) {
                    let scale = x.abs().max(y.abs()).max(1e-6);
                    assert!((x - y).abs() <= 1e-4 * scale, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn pad_scores_zero_and_all_non_negative() {
        let mut r = rng::stream(12, 3);
        let (model, sentences, label) = random_case(&mut r);
        let padded: Vec<TokenSequence> = sentences.iter().map(|s| s.padded_to(s.len() + 3)).collect();
        for (map, seq) in compute_saliency(&model, &padded, label).unwrap().iter().zip(&padded) {
            assert_eq!(map.len(), seq.len());
            for (score, &id) in map.scores().iter().zip(seq.ids()) {
                assert!(*score >= 0.0);
                if id == PAD {
                    assert_eq!(*score, 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_loss_gives_zero_scores() {
        let model = ToyTextClassifier::zeros(ModelConfig::new(9, 2, false).with_dims(3, 3));
        let s = [TokenSequence::from_content(&[4, 5, 6])];
        for map in compute_saliency(&model, &s, 0)
            .unwrap()
            .into_iter()
            .chain(saliency_fd_oracle(&model, &s, 0, 1e-3).unwrap())
        {
            assert!(map.scores().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scores_depend_on_output_scale() {
        let cfg = ModelConfig::new(9, 2, false).with_dims(3, 4);
        let model = ToyTextClassifier::init(cfg, &mut rng::stream(13, rng::INIT));
        let s = [TokenSequence::from_content(&[4, 5, 6, 7])];
        let before = compute_saliency(&model, &s, 1).unwrap();
        let mut doubled = model.clone();
        doubled.params_mut().w2.iter_mut().for_each(|w| *w *= 2.0);
        let after = compute_saliency(&doubled, &s, 1).unwrap();
        assert_ne!(before, after);
        let fd = saliency_fd_oracle(&doubled, &s, 1, 1e-3).unwrap();
        for (x, y) in after[0].scores().iter().zip(fd[0].scores()) {
            assert!((x - y).abs() <= 1e-4 * x.abs().max(1e-6));
        }
    }

    #[test]
    fn repeated_tokens_score_equally_under_mean_pooling() {
        let cfg = ModelConfig::new(9, 2, false).with_dims(3, 4);
        let model = ToyTextClassifier::init(cfg, &mut rng::stream(14, rng::INIT));
        let s = [TokenSequence::from_content(&[4, 7, 5, 7])];
        let map = &compute_saliency(&model, &s, 0).unwrap()[0];
        assert_eq!(map.scores()[2], map.scores()[4]);
        assert_ne!(map.scores()[1], map.scores()[2]);
    }

    #[test]
    fn saliency_is_read_only() {
        let cfg = ModelConfig::new(9, 2, false).with_dims(3, 4);
        let model = ToyTextClassifier::init(cfg, &mut rng::stream(15, rng::INIT));
        let bits: Vec<u64> = model.params().tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect();
        compute_saliency(&model, &[TokenSequence::from_content(&[4, 5])], 1).unwrap();
        let after: Vec<u64> = model.params().tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect();
        assert_eq!(bits, after);
    }

    #[test]
    fn rejects_bad_step_and_scores() {
        let model = ToyTextClassifier::zeros(ModelConfig::new(9, 2, false).with_dims(2, 2));
        let s = [TokenSequence::from_content(&[4])];
        assert!(saliency_fd_oracle(&model, &s, 0, 0.0).is_err());
        assert!(SaliencyMap::new(vec![0.1, -1.0]).is_err());
        assert!(SaliencyMap::new(vec![f64::NAN]).is_err());
    }
}
