//! Per-example clipping, the Gaussian mechanism and the optimizers that
//! consume privatized gradients.

mod clip;
mod norms;
mod optim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub use clip::{
    clip_factors, clipped_sum, clipped_sum_captured, mean_gradient, privatize, scale_map,
};
pub use norms::{
    ghost_norms_with, per_example_gradients, per_example_norms_ghost, per_example_norms_naive,
    GhostPath,
};
pub use optim::{adamw_step, dp_adam_step, AdamConfig, OptimState};

/// Gradients (or parameters) keyed by parameter name.
pub type GradMap = BTreeMap<String, Tensor>;

/// How per-example norms are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Materialize every per-example gradient.
    Naive,
    /// Norms from captured activation/output-gradient factors.
    #[default]
    Ghost,
}

impl std::str::FromStr for ClipMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "naive" => Ok(ClipMode::Naive),
            "ghost" => Ok(ClipMode::Ghost),
            _ => Err(crate::error::Error::Config(format!("unknown clip mode {s:?} (expected ghost or naive)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub clipping_norm: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub mode: ClipMode,
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clipping_norm > 0.0) {
            return Err(Error::Config(format!(
                "clipping norm must be positive, got {}",
                self.clipping_norm
            )));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Config(format!(
                "noise multiplier must be nonnegative, got {}",
                self.noise_multiplier
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Global L2 norm of a gradient map.
pub fn global_norm(g: &GradMap) -> f64 {
    g.values().map(Tensor::norm_sq).sum::<f64>().sqrt()
}
