use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::Tensor;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

/// Identity used by the tape to route gradients back to a parameter.
/// Clones of a parameter share its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

/// A learnable tensor together with its Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Parameter {
    id: ParamId,
    name: String,
    tensor: Tensor,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        let n = tensor.numel();
        Parameter {
            id: ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            tensor,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.values()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.tensor.grad()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn adam_moments(&self) -> (&[f64], &[f64]) {
        (&self.adam_m, &self.adam_v)
    }

    /// Replaces the values. The shape must be unchanged; optimizer state is kept.
    pub fn assign(&mut self, values: Tensor) -> Result<()> {
        if values.shape() != self.tensor.shape() {
            return Err(Error::dim(format!(
                "cannot assign shape {:?} to parameter {} of shape {:?}",
                values.shape(),
                self.name,
                self.tensor.shape()
            )));
        }
        self.tensor = values;
        Ok(())
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        self.tensor.set_grad(grad)
    }

    pub fn clear_grad(&mut self) {
        self.tensor.clear_grad();
    }

    /// True when no gradient is held or every entry is exactly zero.
    pub fn grad_is_zero(&self) -> bool {
        self.grad().is_none_or(|g| g.iter().all(|&v| v == 0.0))
    }
}

/// Adam hyperparameters. Weight decay is decoupled from the gradient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {:?}", self)))
        }
    }
}

/// One Adam update for every parameter, then zeroes the gradients.
///
/// Fails without touching anything if a parameter has no gradient.
pub fn adam_step(params: &mut [&mut Parameter], cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(p) = params.iter().find(|p| p.grad().is_none()) {
        return Err(Error::contract(format!(
            "parameter {} has no gradient; run backward first",
            p.name
        )));
    }
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let Parameter {
            tensor,
            adam_m,
            adam_v,
            ..
        } = &mut **p;
        let grad = tensor.grad().map(<[f64]>::to_vec).unwrap_or_default();
        let values = tensor.values_mut();
        for i in 0..values.len() {
            let g = grad[i];
            adam_m[i] = cfg.beta1 * adam_m[i] + (1.0 - cfg.beta1) * g;
            adam_v[i] = cfg.beta2 * adam_v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = adam_m[i] / bias1;
            let v_hat = adam_v[i] / bias2;
            let decay = cfg.learning_rate * cfg.weight_decay * values[i];
            values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon) + decay;
        }
        tensor.zero_grad();
    }
    Ok(())
}
