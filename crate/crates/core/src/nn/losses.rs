//! Weighted MSE losses for pose feature maps and the binary cross entropy of
//! the detection head.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Coefficients of the weighted feature losses: pixel weights are
/// `jhm_peak * target^2 + jhm_base` for heat maps and
/// `paf_peak * |target vector|^2 + paf_base` for affinity fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub jhm_peak: f64,
    pub jhm_base: f64,
    pub paf_peak: f64,
    pub paf_base: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { jhm_peak: 1.0, jhm_base: 1.0, paf_peak: 0.3, paf_base: 0.7 }
    }
}

impl LossWeights {
    /// Plain (unweighted) MSE variant used as the ablation baseline.
    pub fn unweighted() -> Self {
        LossWeights { jhm_peak: 0.0, jhm_base: 1.0, paf_peak: 0.0, paf_base: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("jhm_peak", self.jhm_peak),
            ("jhm_base", self.jhm_base),
            ("paf_peak", self.paf_peak),
            ("paf_base", self.paf_base),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn check_same_shape(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Contract(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Weighted squared error over a heat-map tensor. Each element carries the
/// weight `jhm_peak * target^2 + jhm_base`. Returns the loss and its analytic
/// gradient w.r.t. the prediction.
pub fn weighted_mse_jhm(pred: &Tensor, target: &Tensor, w: &LossWeights) -> Result<(f64, Tensor)> {
    check_same_shape(pred, target)?;
    let mut grad = Tensor::zeros(pred.shape());
    let g = grad.data_mut();
    let mut loss = 0.0;
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let alpha = w.jhm_peak * t * t + w.jhm_base;
        let diff = p - t;
        loss += alpha * diff * diff;
        g[i] = 2.0 * alpha * diff;
    }
    Ok((loss, grad))
}

/// Weighted squared error over an affinity-field tensor laid out as
/// `[C][2][H][W]`. The weight `paf_peak * |target vector|^2 + paf_base` is
/// shared by both components of a pixel's vector.
pub fn weighted_mse_paf(pred: &Tensor, target: &Tensor, w: &LossWeights) -> Result<(f64, Tensor)> {
    check_same_shape(pred, target)?;
    let shape = pred.shape();
    if shape.len() != 3 || shape[0] % 2 != 0 {
        return Err(Error::Contract(format!(
            "paf loss expects a [2C,H,W] tensor, got {shape:?}"
        )));
    }
    let plane = shape[1] * shape[2];
    let pairs = shape[0] / 2;
    let mut grad = Tensor::zeros(shape);
    let g = grad.data_mut();
    let p = pred.data();
    let t = target.data();
    let mut loss = 0.0;
    for c in 0..pairs {
        let x0 = c * 2 * plane;
        let y0 = x0 + plane;
        for i in 0..plane {
            let (tx, ty) = (t[x0 + i], t[y0 + i]);
            let alpha = w.paf_peak * (tx * tx + ty * ty) + w.paf_base;
            let dx = p[x0 + i] - tx;
            let dy = p[y0 + i] - ty;
            loss += alpha * (dx * dx + dy * dy);
            g[x0 + i] = 2.0 * alpha * dx;
            g[y0 + i] = 2.0 * alpha * dy;
        }
    }
    Ok((loss, grad))
}

/// Numerically safe two-way softmax (inputs shifted by their max).
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Binary cross entropy over a softmax probability pair.
///
/// Returns the loss and its gradient w.r.t. the pre-softmax logits (which
/// only depends on the probabilities: `p - onehot(label)`).
pub fn bce_loss(p: [f64; 2], label: u8) -> Result<(f64, [f64; 2])> {
    if (p[0] + p[1] - 1.0).abs() > 1e-6 || !(0.0..=1.0).contains(&p[0]) {
        return Err(Error::Contract(format!("({}, {}) is not a probability pair", p[0], p[1])));
    }
    let clamp = |x: f64| x.max(1e-12);
    let loss = if label == 1 { -clamp(p[1]).ln() } else { -clamp(p[0]).ln() };
    let target = [if label == 1 { 0.0 } else { 1.0 }, if label == 1 { 1.0 } else { 0.0 }];
    Ok((loss, [p[0] - target[0], p[1] - target[1]]))
}
