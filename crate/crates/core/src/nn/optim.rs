//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::Result;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    first_moment: ParamSet,
    second_moment: ParamSet,
    step: u64,
    pub lr: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            lr,
            weight_decay,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Per scalar:
    /// `p ← p − lr·m̂/(√v̂ + ε) − lr·λ·p`, with bias-corrected moments.
    pub fn adam_step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        params.check_compatible(grads)?;
        params.check_compatible(&self.first_moment)?;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        let (lr, decay) = (self.lr, self.weight_decay);
        let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
        for ((p, g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let p = p.value.values_mut();
            let g = g.value.values();
            let m = m.value.values_mut();
            let v = v.value.values_mut();
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let decay_term = lr * decay * p[i];
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON) + decay_term;
            }
        }
        Ok(())
    }
}

/// Plain gradient descent with coupled L2: `p ← p − lr·(g + λ·p)`.
/// Parameters whose names are in `no_decay` skip the L2 term.
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    lr: f64,
    weight_decay: f64,
    no_decay: &[&str],
) -> Result<()> {
    params.check_compatible(grads)?;
    for (p, g) in params.iter_mut().zip(grads.iter()) {
        let decay = if no_decay.contains(&p.name.as_str()) {
            0.0
        } else {
            weight_decay
        };
        for (pv, gv) in p.value.values_mut().iter_mut().zip(g.value.values()) {
            *pv -= lr * (gv + decay * *pv);
        }
    }
    Ok(())
}
