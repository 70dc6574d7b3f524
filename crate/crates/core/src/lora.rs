//! Low-rank adapters.
//!
//! An adapted projection computes `x·W + b + s·(x·Aᵀ)·Bᵀ` with `W` frozen,
//! `A: [r×d]`, `B: [p×r]` and `s = α/r`. `B` starts at zero so a fresh
//! adapter leaves the base output unchanged.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_ALPHA: f64 = 16.0;
pub const INIT_STD: f64 = 0.02;

/// Projections that can carry an adapter.
pub const ADAPTABLE: [&str; 4] = ["q", "k", "v", "o"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    /// Attention projections to adapt, a subset of [`ADAPTABLE`].
    pub targets: Vec<String>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK,
            alpha: DEFAULT_ALPHA,
            targets: vec!["q".into(), "v".into()],
        }
    }
}

impl LoraConfig {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn validate(&self, d_in: usize, d_out: usize) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("LoRA rank must be at least 1".into()));
        }
        if self.rank > d_in.min(d_out) {
            return Err(Error::Config(format!(
                "LoRA rank {} exceeds min(d_in, d_out) = {}",
                self.rank,
                d_in.min(d_out)
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("LoRA alpha must be positive, got {}", self.alpha)));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("LoRA needs at least one target projection".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !ADAPTABLE.contains(&t.as_str())) {
            return Err(Error::Config(format!(
                "unknown LoRA target {t:?}; expected one of {ADAPTABLE:?}"
            )));
        }
        Ok(())
    }
}

/// Adapter for one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// Name of the adapted projection, e.g. `h0.attn.q`.
    pub layer: String,
    /// `[r × d_in]`
    pub a: Tensor,
    /// `[d_out × r]`
    pub b: Tensor,
    pub rank: usize,
    pub scaling: f64,
}

impl LoraAdapter {
    pub fn new<R: RngCore>(
        layer: &str,
        d_in: usize,
        d_out: usize,
        cfg: &LoraConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate(d_in, d_out)?;
        Ok(Self {
            layer: layer.to_string(),
            a: Tensor::randn(&[cfg.rank, d_in], INIT_STD, rng),
            b: Tensor::zeros(&[d_out, cfg.rank]),
            rank: cfg.rank,
            scaling: cfg.scaling(),
        })
    }

    pub fn numel(&self) -> usize {
        self.a.numel() + self.b.numel()
    }
}

pub fn a_name(layer: &str) -> String {
    format!("{layer}.lora_a")
}

pub fn b_name(layer: &str) -> String {
    format!("{layer}.lora_b")
}

pub fn is_adapter_param(name: &str) -> bool {
    name.ends_with(".lora_a") || name.ends_with(".lora_b")
}

/// `x·W + b + scaling·(x·Aᵀ)·Bᵀ`. Both low-rank maps are affine ops, so a
/// per-example backward captures them like any other weight.
pub fn lora_forward(
    tape: &mut Tape,
    x: Var,
    weight: Var,
    bias: Option<Var>,
    a: Var,
    b: Var,
    scaling: f64,
) -> Result<Var> {
    let base = tape.affine(x, weight, bias)?;
    let down = tape.affine_t(x, a, None)?;
    let up = tape.affine_t(down, b, None)?;
    let up = tape.scale(up, scaling)?;
    tape.add(base, up)
}

/// `adapter / (base + adapter)`; `1.0` when nothing is adapted, meaning every
/// parameter is trained.
pub fn trainable_fraction(base_params: usize, adapter_params: usize) -> f64 {
    if adapter_params == 0 {
        1.0
    } else {
        adapter_params as f64 / (base_params + adapter_params) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn degenerate_ranks_are_rejected() {
        let mut cfg = LoraConfig::default();
        cfg.rank = 0;
        assert!(matches!(cfg.validate(4, 4), Err(Error::Config(_))));
        cfg.rank = 5;
        assert!(matches!(cfg.validate(4, 8), Err(Error::Config(_))));
        cfg.rank = 4;
        assert!(cfg.validate(4, 8).is_ok());
        cfg.targets = vec!["mlp".into()];
        assert!(cfg.validate(4, 8).is_err());
    }

    #[test]
    fn fresh_adapter_is_zero_on_the_up_projection() {
        let a = LoraAdapter::new("h0.attn.q", 6, 5, &LoraConfig::default().with_rank(2), &mut seeded(1))
            .unwrap();
        assert_eq!(a.a.shape(), [2, 6]);
        assert_eq!(a.b.shape(), [5, 2]);
        assert!(a.b.data().iter().all(|&x| x == 0.0));
        assert_eq!(a.scaling, 8.0);
        assert_eq!(trainable_fraction(100, 0), 1.0);
        assert_eq!(trainable_fraction(90, 10), 0.1);
    }

    impl LoraConfig {
        fn with_rank(mut self, r: usize) -> Self {
            self.rank = r;
            self
        }
    }
}
