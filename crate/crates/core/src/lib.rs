//! Differentially private fine-tuning and evaluation of query-focused meeting
//! summarizers.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: tensors, a reverse-mode tape and per-example gradient capture
//! * [`accountant`]: Rényi-DP accounting and noise calibration
//! * [`dp`]: per-example norms (naive and ghost), clipping, noise, Adam/AdamW
//! * [`lora`]: low-rank adapters for parameter-efficient private training
//! * [`model`]: a small causal transformer, checkpoints and beam search
//! * [`data`]: corpus loading, flattening, vocabulary and synthetic meetings
//! * [`metrics`]: ROUGE, faithfulness, length statistics, hallucination rate
//! * [`harness`]: run configuration, training loop and cross-domain reports

pub mod accountant;
pub mod autodiff;
pub mod data;
pub mod dp;
pub mod error;
pub mod harness;
pub mod lora;
pub mod metrics;
pub mod model;
pub mod rng;

pub use accountant::{PrivacySpec, RdpCurve};
pub use autodiff::{GradMode, Gradients, Tape, Tensor, Var};
pub use error::{Error, Result};

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
