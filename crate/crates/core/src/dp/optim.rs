use serde::{Deserialize, Serialize};

use super::GradMap;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First/second moment estimates and step count, keyed like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub config: AdamConfig,
    pub m: GradMap,
    pub v: GradMap,
    pub t: u64,
}

impl OptimState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: GradMap::new(),
            v: GradMap::new(),
            t: 0,
        }
    }
}

/// Adam on a (privatized) gradient; weight decay is added to the gradient
/// (L2-coupled), which is a no-op at the default of 0.
pub fn dp_adam_step(params: &mut GradMap, grad: &GradMap, state: &mut OptimState) -> Result<()> {
    step(params, grad, state, false)
}

/// AdamW: weight decay is applied to the parameters directly, decoupled from
/// the adaptive update.
pub fn adamw_step(params: &mut GradMap, grad: &GradMap, state: &mut OptimState) -> Result<()> {
    step(params, grad, state, true)
}

fn step(params: &mut GradMap, grad: &GradMap, state: &mut OptimState, decoupled: bool) -> Result<()> {
    for (name, g) in grad {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Structure(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let c = state.config;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (name, g) in grad {
        let p = params.get_mut(name).expect("checked above");
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            let gi = if decoupled {
                pd[i] -= c.lr * c.weight_decay * pd[i];
                gi
            } else {
                gi + c.weight_decay * pd[i]
            };
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
    Ok(())
}
