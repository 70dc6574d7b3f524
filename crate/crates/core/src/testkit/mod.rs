//! Independent reference implementations used as test oracles.
//!
//! Nothing here shares code paths with the production implementations it
//! checks: finite differences instead of the tape, scalar loops instead of
//! vectorized updates, exhaustive enumeration instead of dynamic programming
//! or beam pruning.

pub mod adam;
pub mod beam;
pub mod gradcheck;
pub mod lcs;
pub mod models;
pub mod nets;
pub mod rdp_oracle;
