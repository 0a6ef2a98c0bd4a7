//! AdamW with decoupled weight decay.
//!
//! ```text
//! theta <- theta * (1 - lr * wd)
//! m <- b1 m + (1 - b1) g
//! v <- b2 v + (1 - b2) g^2
//! theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```

use serde::{Deserialize, Serialize};

use super::encoder::EncoderParams;
use super::objective::Gradients;
use super::state::ModelState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One AdamW update of a flat tensor. `step` counts from 1.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamWConfig,
    lr: f64,
    step: u64,
) -> Result<()> {
    let n = params.len();
    for (len, what) in [
        (grads.len(), "gradient"),
        (m.len(), "first moment"),
        (v.len(), "second moment"),
    ] {
        if len != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: len,
                context: what,
            });
        }
    }
    if step == 0 {
        return Err(Error::InvalidConfig("optimizer step counts from 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let decay = 1.0 - lr * cfg.weight_decay;
    for i in 0..n {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Optimizer state for a whole [`ModelState`]. Frozen towers are skipped
/// entirely, including weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    m: EncoderParams,
    v: EncoderParams,
    tau_m: f64,
    tau_v: f64,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, like: &EncoderParams) -> Self {
        AdamW {
            cfg,
            m: like.zeros_like(),
            v: like.zeros_like(),
            tau_m: 0.0,
            tau_v: 0.0,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, state: &mut ModelState, grads: &Gradients, lr: f64) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let freeze = state.freeze;
        let g_all = grads.params.tensors();
        let m_all = self.m.tensors_mut();
        let v_all = self.v.tensors_mut();
        for (((p, g), m), v) in state
            .params
            .tensors_mut()
            .into_iter()
            .zip(g_all)
            .zip(m_all)
            .zip(v_all)
        {
            if freeze.is_frozen(p.tower) {
                continue;
            }
            adamw_step(p.data, g.data, m.data, v.data, &self.cfg, lr, step)?;
        }
        if state.learn_tau {
            // optimize log(tau) so the temperature stays positive; no decay
            let mut log_tau = [state.tau.ln()];
            let g = [grads.tau * state.tau];
            let cfg = AdamWConfig {
                weight_decay: 0.0,
                ..self.cfg
            };
            let (mut m, mut v) = ([self.tau_m], [self.tau_v]);
            adamw_step(&mut log_tau, &g, &mut m, &mut v, &cfg, lr, step)?;
            self.tau_m = m[0];
            self.tau_v = v[0];
            state.tau = log_tau[0].exp();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = [1.5, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        for step in 1..=5 {
            adamw_step(&mut p, &[0.0, 0.0], &mut m, &mut v, &cfg, 1e-3, step).unwrap();
        }
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = v_hat = 1 after one step with g = 1, so the move is lr / (1 + eps)
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adamw_step(&mut p, &[1.0], &mut m, &mut v, &cfg, 1e-3, 1).unwrap();
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((p[0] + 1e-3).abs() < 1e-3 * 1e-7);
    }

    #[test]
    fn decay_without_gradient_shrinks_geometrically() {
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut p = [2.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adamw_step(&mut p, &[0.0], &mut m, &mut v, &cfg, 0.01, 1).unwrap();
        assert_eq!(p[0], 2.0 * (1.0 - 0.01 * 0.1));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = AdamWConfig::default();
        let mut p = [0.0; 2];
        let (mut m, mut v) = ([0.0; 2], [0.0; 1]);
        assert!(adamw_step(&mut p, &[0.0; 2], &mut m, &mut v, &cfg, 1e-3, 1).is_err());
        let mut v2 = [0.0; 2];
        assert!(adamw_step(&mut p, &[0.0; 2], &mut m, &mut v2, &cfg, 1e-3, 0).is_err());
    }
}
