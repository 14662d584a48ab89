use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts without
/// touching the parameter.
pub fn adam_step(param: &mut Param, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
    if grad.len() != param.value.numel() {
        return Err(Error::Shape(format!(
            "gradient of length {} for parameter {} with {} elements",
            grad.len(),
            param.name,
            param.value.numel()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(param.name.clone()));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let values = param.value.data_mut();
    for (((w, m), v), &g) in values
        .iter_mut()
        .zip(param.first_moment.iter_mut())
        .zip(param.second_moment.iter_mut())
        .zip(grad)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
