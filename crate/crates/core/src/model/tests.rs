use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::corpus::{CLS, SEP};
use crate::rng;

fn seq(content: &[usize]) -> TokenSequence {
    TokenSequence::from_content(content)
}

/// Central finite difference of the loss with respect to every parameter.
fn fd_param_grads(model: &ToyTextClassifier, f: impl Fn(&ToyTextClassifier) -> f64, step: f64) -> Params {
    let mut grads = Params::zeros(model.config());
    let mut probe = model.clone();
    for (t, gt) in grads.tensors_mut().into_iter().enumerate() {
        for i in 0..gt.len() {
            let orig = probe.params().tensors()[t][i];
            probe.params_mut().tensors_mut()[t][i] = orig + step;
            let plus = f(&probe);
            probe.params_mut().tensors_mut()[t][i] = orig - step;
            let minus = f(&probe);
            probe.params_mut().tensors_mut()[t][i] = orig;
            gt[i] = (plus - minus) / (2.0 * step);
        }
    }
    grads
}

fn assert_close(analytic: f64, numeric: f64, rtol: f64, what: &str) {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    assert!(
        (analytic - numeric).abs() <= rtol * scale,
        "{what}: analytic {analytic:e} vs finite difference {numeric:e}"
    );
}

fn assert_grads_close(analytic: &Params, numeric: &Params, rtol: f64) {
    let names = ["embedding", "w1", "b1", "w2", "b2"];
    for ((a, n), name) in analytic.tensors().iter().zip(numeric.tensors()).zip(names) {
        for (i, (x, y)) in a.iter().zip(n).enumerate() {
            assert_close(*x, *y, rtol, &format!("{name}[{i}]"));
        }
    }
}

fn random_seq(rng: &mut rng::Rng, vocab: usize, max_content: usize) -> TokenSequence {
    let n = rng.random_range(1..=max_content);
    let content: Vec<usize> = (0..n).map(|_| rng.random_range(1..vocab)).collect();
    seq(&content)
}

#[test]
fn zero_model_gives_uniform_softmax() {
    for c in [2, 3, 7] {
        let model = ToyTextClassifier::zeros(ModelConfig::new(10, c, false).with_dims(3, 4));
        let trace = model.forward(&[seq(&[4, 5, 6])], SoftLabel::hard(1)).unwrap();
        assert!(trace.logits.iter().all(|&l| l == 0.0));
        assert!(trace.probs.iter().all(|&p| (p - 1.0 / c as f64).abs() < 1e-15));
        assert!((trace.loss - (c as f64).ln()).abs() < 1e-15);
    }
}

#[test]
fn scalar_model_matches_hand_arithmetic() {
    let cfg = ModelConfig::new(5, 2, false).with_dims(1, 1);
    let mut model = ToyTextClassifier::zeros(cfg);
    {
        let p = model.params_mut();
        p.embedding[4] = 0.5;
        p.w1[0] = 2.0;
        p.b1[0] = 0.1;
        p.w2.copy_from_slice(&[1.5, -0.5]);
        p.b2.copy_from_slice(&[0.2, -0.1]);
    }
    let one_token = TokenSequence::new(vec![4], vec![false]).unwrap();
    let trace = model.forward(&[one_token], SoftLabel::hard(0)).unwrap();

    let h = (2.0f64 * 0.5 + 0.1).tanh();
    let l0 = 1.5 * h + 0.2;
    let l1 = -0.5 * h - 0.1;
    let loss = (l0.exp() + l1.exp()).ln() - l0;
    assert!((trace.logits[0] - l0).abs() < 1e-15);
    assert!((trace.logits[1] - l1).abs() < 1e-15);
    assert!((trace.loss - loss).abs() < 1e-14);

    // dL/de = (p0 - 1) * 1.5 * (1 - h^2) * 2 + p1 * (-0.5) * (1 - h^2) * 2
    let p0 = l0.exp() / (l0.exp() + l1.exp());
    let de = ((p0 - 1.0) * 1.5 + (1.0 - p0) * -0.5) * (1.0 - h * h) * 2.0;
    let (grads, emb) = model.backward(&trace);
    assert!((emb.sentences[0][0][0] - de).abs() < 1e-14);
    assert!((grads.embedding[4] - de).abs() < 1e-14);
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::new(12, 3, false).with_dims(4, 3);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(1, rng::INIT));
    let s = [seq(&[4, 5, 9, 11])];
    assert_eq!(model.forward(&s, SoftLabel::hard(2)).unwrap(), model.forward(&s, SoftLabel::hard(2)).unwrap());
}

#[test]
fn rejects_out_of_range_ids_and_wrong_arity() {
    let model = ToyTextClassifier::zeros(ModelConfig::new(6, 2, false).with_dims(2, 2));
    assert!(matches!(
        model.forward(&[seq(&[4, 6])], SoftLabel::hard(0)),
        Err(Error::TokenOutOfRange { id: 6, .. })
    ));
    assert!(matches!(
        model.forward(&[seq(&[4]), seq(&[5])], SoftLabel::hard(0)),
        Err(Error::SentenceCount { .. })
    ));
    assert!(model.forward(&[seq(&[4])], SoftLabel::hard(2)).is_err());
}

#[test]
fn mixup_loss_examples() {
    let logits = [0.0, 0.0];
    let l = mixup_loss(&logits, &SoftLabel::new(0, 1, 0.2).unwrap()).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

    let logits = [1.3, -0.4, 2.2];
    let ce_a = cross_entropy(&logits, 0);
    let ce_b = cross_entropy(&logits, 2);
    assert_eq!(mixup_loss(&logits, &SoftLabel::new(0, 2, 0.0).unwrap()).unwrap(), ce_a);
    assert_eq!(mixup_loss(&logits, &SoftLabel::new(0, 2, 1.0).unwrap()).unwrap(), ce_b);
    let bad = SoftLabel {
        y_a: 0,
        y_b: 1,
        lambda: 1.5,
    };
    assert!(matches!(mixup_loss(&logits, &bad), Err(Error::RatioOutOfRange(_))));
    assert!(SoftLabel::new(0, 1, -0.1).is_err());
}

#[test]
fn transposed_weighting_swaps_roles() {
    let logits = [0.7, -1.1];
    let label = SoftLabel::new(0, 1, 0.3).unwrap();
    let a1 = mixup_loss(&logits, &label.transposed()).unwrap();
    let expected = 0.3 * cross_entropy(&logits, 0) + 0.7 * cross_entropy(&logits, 1);
    assert!((a1 - expected).abs() < 1e-15);
}

#[test]
fn pad_positions_have_zero_embedding_gradient() {
    let cfg = ModelConfig::new(9, 2, false).with_dims(3, 4);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(3, rng::INIT));
    let padded = seq(&[4, 5, 6]).padded_to(7);
    let trace = model.forward(&[padded.clone()], SoftLabel::hard(1)).unwrap();
    let (_, emb) = model.backward(&trace);
    for (i, &id) in padded.ids().iter().enumerate() {
        if id == PAD {
            assert!(emb.sentences[0][i].iter().all(|&v| v == 0.0));
        } else {
            assert!(emb.sentences[0][i].iter().any(|&v| v != 0.0));
        }
    }
    // Padding does not change the prediction.
    let plain = model.forward(&[seq(&[4, 5, 6])], SoftLabel::hard(1)).unwrap();
    assert_eq!(plain.logits, trace.logits);
}

#[test]
fn lambda_zero_soft_label_equals_hard_label_gradients() {
    let cfg = ModelConfig::new(9, 3, false).with_dims(3, 4);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(4, rng::INIT));
    let s = [seq(&[4, 8, 6])];
    let soft = model.forward(&s, SoftLabel::new(1, 2, 0.0).unwrap()).unwrap();
    let hard = model.forward(&s, SoftLabel::hard(1)).unwrap();
    assert_eq!(model.backward(&soft), model.backward(&hard));
}

#[test]
fn param_gradients_match_finite_differences() {
    let mut r = rng::stream(42, 7);
    for case in 0..30 {
        let paired = case % 3 == 2;
        let vocab = r.random_range(6..=20);
        let cfg = ModelConfig::new(vocab, r.random_range(2..=4), paired)
            .with_dims(r.random_range(1..=4), r.random_range(1..=4));
        let model = ToyTextClassifier::init(cfg, &mut r);
        let sentences: Vec<TokenSequence> = (0..cfg.sentences()).map(|_| random_seq(&mut r, vocab, 4)).collect();
        let label = SoftLabel::new(
            r.random_range(0..cfg.num_classes),
            r.random_range(0..cfg.num_classes),
            r.random_range(0.0..1.0),
        )
        .unwrap();
        let trace = model.forward(&sentences, label).unwrap();
        let (grads, _) = model.backward(&trace);
        let fd = fd_param_grads(&model, |m| m.forward(&sentences, label).unwrap().loss, 1e-3);
        assert_grads_close(&grads, &fd, 1e-4);
    }
}

#[test]
fn interpolation_gradients_match_finite_differences() {
    let mut r = rng::stream(5, 7);
    for case in 0..24 {
        let layer = if case % 2 == 0 { MixLayer::Embed } else { MixLayer::Hidden };
        let vocab = r.random_range(6..=20);
        let cfg = ModelConfig::new(vocab, 3, case % 4 >= 2).with_dims(r.random_range(1..=4), r.random_range(1..=4));
        let model = ToyTextClassifier::init(cfg, &mut r);
        let a: Vec<TokenSequence> = (0..cfg.sentences()).map(|_| random_seq(&mut r, vocab, 4)).collect();
        let b: Vec<TokenSequence> = (0..cfg.sentences()).map(|_| random_seq(&mut r, vocab, 4)).collect();
        let lambda = r.random_range(0.5..1.0);
        let f = |m: &ToyTextClassifier| m.forward_hiddenmix(&a, &b, 0, 2, lambda, layer).unwrap().loss;
        let trace = model.forward_hiddenmix(&a, &b, 0, 2, lambda, layer).unwrap();
        let (grads, _) = model.backward(&trace);
        assert_grads_close(&grads, &fd_param_grads(&model, f, 1e-3), 1e-4);
    }
}

#[test]
fn embedding_gradients_match_finite_differences() {
    let mut r = rng::stream(6, 7);
    for _ in 0..20 {
        let vocab = r.random_range(6..=20);
        let cfg = ModelConfig::new(vocab, 2, false).with_dims(r.random_range(1..=4), r.random_range(1..=4));
        let model = ToyTextClassifier::init(cfg, &mut r);
        let s = random_seq(&mut r, vocab, 4);
        let label = SoftLabel::hard(r.random_range(0..2));
        let (_, emb) = model.backward(&model.forward(&[s.clone()], label).unwrap());
        let base = model.embed(&s);
        for (i, e) in base.iter().enumerate() {
            let Some(e) = e else { continue };
            for j in 0..e.len() {
                let mut plus = base.clone();
                plus[i].as_mut().unwrap()[j] += 1e-3;
                let mut minus = base.clone();
                minus[i].as_mut().unwrap()[j] -= 1e-3;
                let fd = (model.forward_embedded(&[plus], label).unwrap().loss
                    - model.forward_embedded(&[minus], label).unwrap().loss)
                    / 2e-3;
                assert_close(emb.sentences[0][i][j], fd, 1e-4, "embedding");
            }
        }
    }
}

#[test]
fn embedmix_at_lambda_one_is_plain_forward() {
    let cfg = ModelConfig::new(12, 2, false).with_dims(3, 5);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(8, rng::INIT));
    let a = [seq(&[4, 5, 6, 7])];
    let b = [seq(&[8, 9])];
    let plain = model.forward(&a, SoftLabel::hard(1)).unwrap();
    for layer in [MixLayer::Embed, MixLayer::Hidden] {
        let mixed = model.forward_hiddenmix(&a, &b, 1, 0, 1.0, layer).unwrap();
        assert_eq!(mixed.logits, plain.logits);
        assert_eq!(mixed.pooled, plain.pooled);
        assert_eq!(mixed.loss, plain.loss);
    }
}

#[test]
fn identical_sources_reproduce_plain_logits() {
    let cfg = ModelConfig::new(12, 2, true).with_dims(3, 5);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(9, rng::INIT));
    let a = [seq(&[4, 5, 6]), seq(&[7, 11])];
    let plain = model.forward(&a, SoftLabel::hard(0)).unwrap();
    for lambda in [0.5, 0.63, 0.9] {
        for layer in [MixLayer::Embed, MixLayer::Hidden] {
            let mixed = model.forward_hiddenmix(&a, &a, 0, 0, lambda, layer).unwrap();
            for (x, y) in mixed.logits.iter().zip(&plain.logits) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn embedmix_pools_interpolated_scalars() {
    // d = h = 1, W1 = 1, b1 = 0: pooled = mean(tanh(0.5 * e_a + 0.5 * e_b)).
    let cfg = ModelConfig::new(8, 2, false).with_dims(1, 1);
    let mut model = ToyTextClassifier::zeros(cfg);
    {
        let p = model.params_mut();
        p.embedding.copy_from_slice(&[0.0, 0.1, 0.2, -0.3, 0.4, -0.6, 0.9, 1.2]);
        p.w1[0] = 1.0;
        p.w2.copy_from_slice(&[1.0, -1.0]);
    }
    let a = [seq(&[4, 5])];
    let b = [seq(&[6])];
    let trace = model.forward_embedmix(&a, &b, 0, 1, 0.5).unwrap();
    let e = &model.params().embedding;
    // Positions: CLS/CLS, 4/6, 5/SEP, SEP/PAD.
    let xs = [
        0.5 * e[CLS] + 0.5 * e[CLS],
        0.5 * e[4] + 0.5 * e[6],
        0.5 * e[5] + 0.5 * e[SEP],
        0.5 * e[SEP],
    ];
    let expected = xs.iter().map(|x: &f64| x.tanh()).sum::<f64>() / 4.0;
    assert!((trace.pooled[0] - expected).abs() < 1e-15);
    assert_eq!(trace.label, SoftLabel::new(0, 1, 0.5).unwrap());
}

#[test]
fn embed_layer_matches_embedmix_exactly() {
    let cfg = ModelConfig::new(12, 3, false).with_dims(3, 5);
    let model = ToyTextClassifier::init(cfg, &mut rng::stream(10, rng::INIT));
    let a = [seq(&[4, 5, 6])];
    let b = [seq(&[8, 9, 10, 11])];
    assert_eq!(
        model.forward_embedmix(&a, &b, 0, 2, 0.7).unwrap(),
        model.forward_hiddenmix(&a, &b, 0, 2, 0.7, MixLayer::Embed).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixup_loss_is_linear_in_lambda(
        logits in prop::collection::vec(-5.0f64..5.0, 2..6),
        lambda in 0.0f64..=1.0,
        ya in 0usize..6,
        yb in 0usize..6,
    ) {
        let c = logits.len();
        let (ya, yb) = (ya % c, yb % c);
        let at = |l| mixup_loss(&logits, &SoftLabel::new(ya, yb, l).unwrap()).unwrap();
        let interp = (1.0 - lambda) * at(0.0) + lambda * at(1.0);
        prop_assert!((at(lambda) - interp).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_positive_for_finite_logits(
        logits in prop::collection::vec(-20.0f64..20.0, 2..6),
        lambda in 0.01f64..0.99,
    ) {
        let l = mixup_loss(&logits, &SoftLabel::new(0, 1, lambda).unwrap()).unwrap();
        prop_assert!(l > 0.0);
    }
}
