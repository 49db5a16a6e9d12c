use serde::{Deserialize, Serialize};

use super::checkpoint::f64_b64;
use super::params::{locate_param, ParamSegment};
use crate::error::{Error, Result};

/// Adam hyperparameters with an exponentially decaying learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr_init: 5e-4,
            lr_final: 5e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn constant(lr: f64) -> Self {
        Self {
            lr_init: lr,
            lr_final: lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_init > 0.0
            && self.lr_final > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(with = "f64_b64")]
    pub first_moment: Vec<f64>,
    #[serde(with = "f64_b64")]
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            step: 0,
            lr_init: config.lr_init,
            lr_final: config.lr_final,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        })
    }

    pub fn config(&self) -> AdamConfig {
        AdamConfig {
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// `lr_init * (lr_final / lr_init)^(step / total_steps)`.
    pub fn learning_rate(&self, total_steps: u64) -> f64 {
        let frac = if total_steps == 0 {
            0.0
        } else {
            self.step as f64 / total_steps as f64
        };
        self.lr_init * (self.lr_final / self.lr_init).powf(frac)
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// `segments` names the parameters so a non-finite gradient can be reported precisely.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    total_steps: u64,
    segments: &[ParamSegment],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Config(format!(
            "Adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if state.step >= total_steps {
        return Err(Error::Usage(format!(
            "Adam already took {} of {total_steps} scheduled steps",
            state.step
        )));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            param: locate_param(segments, bad),
            msg: format!("non-finite gradient {}", grads[bad]),
        });
    }

    let lr = state.learning_rate(total_steps);
    let t = (state.step + 1) as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    state.step += 1;
    Ok(())
}
