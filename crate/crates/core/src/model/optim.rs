use super::{Params, ToyTextClassifier};
use crate::error::{Error, Result};

/// AdamW with decoupled weight decay:
///
/// ```text
/// theta *= 1 - lr * weight_decay
/// m = b1 * m + (1 - b1) * g
/// v = b2 * v + (1 - b2) * g^2
/// theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Params,
    v: Params,
    t: u64,
}

impl AdamW {
    pub fn new(shape: &Params, weight_decay: f64) -> Self {
        let mut m = shape.clone();
        m.scale(0.0);
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    AdamW(AdamW),
    /// Plain gradient descent with decoupled weight decay, for debugging.
    Sgd { weight_decay: f64 },
}

impl Optimizer {
    pub fn adamw(model: &ToyTextClassifier, weight_decay: f64) -> Self {
        Optimizer::AdamW(AdamW::new(model.params(), weight_decay))
    }

    /// Applies one update and re-zeroes the PAD embedding row. Fails before
    /// touching the model if any gradient is non-finite.
    pub fn step(&mut self, model: &mut ToyTextClassifier, grads: &Params, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        match self {
            Optimizer::AdamW(adam) => adam.step(model.params_mut(), grads, lr),
            Optimizer::Sgd { weight_decay } => {
                let decay = 1.0 - lr * *weight_decay;
                model.params_mut().scale(decay);
                model.params_mut().add_scaled(grads, -lr);
            }
        }
        model.zero_pad_row();
        if !model.params().is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `base_lr`, then linear decay to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LinearSchedule {
    pub fn new(base_lr: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        Self {
            base_lr,
            warmup_steps: (total_steps as f64 * warmup_fraction) as usize,
            total_steps,
        }
    }

    /// Rate for the optimizer step with zero-based index `step`.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let remaining = self.total_steps.saturating_sub(step) as f64;
        let span = (self.total_steps - self.warmup_steps).max(1) as f64;
        self.base_lr * (remaining / span).max(0.0)
    }
}
