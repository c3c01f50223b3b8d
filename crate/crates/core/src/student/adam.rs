use crate::error::{PktError, Result};
use crate::student::{Gradients, StudentModel};

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-4;

    /// Zero moments sized for `model`, with `beta1 = 0.9`, `beta2 = 0.999`,
    /// `eps = 1e-8`.
    pub fn new(model: &StudentModel, lr: f64) -> Result<Self> {
        Self::with_hyperparams(model, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(
        model: &StudentModel,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(PktError::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(PktError::InvalidArgument(
                "Adam betas must lie in (0, 1)".into(),
            ));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(PktError::InvalidArgument(
                "Adam eps must be positive".into(),
            ));
        }
        let n = model.num_params();
        Ok(AdamState {
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
        })
    }

    /// Applies one update to `model` in place.
    pub fn step(&mut self, model: &mut StudentModel, grads: &Gradients) -> Result<()> {
        let shapes_match = grads.layers.len() == model.layers().len()
            && grads
                .layers
                .iter()
                .zip(model.layers())
                .all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.len() == l.bias.len());
        if !shapes_match || self.m.len() != model.num_params() {
            return Err(PktError::ShapeMismatch(
                "gradients do not match model parameters".into(),
            ));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let g = grads.flatten();
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
