//! RMSprop with momentum and weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    /// Squared-gradient smoothing coefficient.
    pub rms_decay: f64,
    pub epsilon: f64,
    /// Epochs without validation improvement before the learning rate is
    /// multiplied by `lr_decay_factor`.
    pub plateau_patience: usize,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of samples held out for the plateau rule.
    pub validation_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-6,
            weight_decay: 1e-8,
            momentum: 0.9,
            rms_decay: 0.99,
            epsilon: 1e-8,
            plateau_patience: 5,
            lr_decay_factor: 0.1,
            batch_size: 1,
            epochs: 20,
            validation_fraction: 0.1,
            shuffle_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::Config("lr_decay_factor must be in (0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// RMSprop state over a flat parameter vector:
/// `v <- rho*v + (1-rho)*g^2`, `m <- momentum*m + g/(sqrt(v)+eps)`,
/// `x <- x - lr*m`, with weight decay added to `g` first.
#[derive(Debug, Clone)]
pub struct RmsProp {
    learning_rate: f64,
    weight_decay: f64,
    momentum: f64,
    rms_decay: f64,
    epsilon: f64,
    square_avg: Vec<f64>,
    momentum_buf: Vec<f64>,
}

impl RmsProp {
    pub fn new(param_count: usize, cfg: &OptimizerConfig) -> RmsProp {
        RmsProp {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            momentum: cfg.momentum,
            rms_decay: cfg.rms_decay,
            epsilon: cfg.epsilon,
            square_avg: vec![0.0; param_count],
            momentum_buf: vec![0.0; param_count],
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn scale_learning_rate(&mut self, factor: f64) {
        self.learning_rate *= factor;
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            let v = self.rms_decay * self.square_avg[i] + (1.0 - self.rms_decay) * g * g;
            self.square_avg[i] = v;
            let m = self.momentum * self.momentum_buf[i] + g / (v.sqrt() + self.epsilon);
            self.momentum_buf[i] = m;
            params[i] -= self.learning_rate * m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_and_decay_leave_params_unchanged() {
        let cfg = OptimizerConfig { weight_decay: 0.0, learning_rate: 0.1, ..OptimizerConfig::default() };
        let mut opt = RmsProp::new(3, &cfg);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        opt.step(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, before);
    }

    #[test]
    fn step_moves_against_gradient() {
        let cfg = OptimizerConfig { learning_rate: 0.1, weight_decay: 0.0, ..OptimizerConfig::default() };
        let mut opt = RmsProp::new(1, &cfg);
        let mut params = vec![1.0];
        opt.step(&mut params, &[2.0]);
        assert!(params[0] < 1.0);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = OptimizerConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        cfg.learning_rate = 1e-3;
        cfg.lr_decay_factor = 1.5;
        assert!(cfg.validate().is_err());
    }
}
