//! Rényi-DP accounting for the (Poisson-)subsampled Gaussian mechanism.
//!
//! Per-step RDP is evaluated at integer orders with the exact binomial
//! expansion, composed additively over steps and converted to (ε, δ)-DP with
//! `ε = min_α ε(α) + ln(1/δ)/(α−1)`. [`calibrate_sigma`] bisects the noise
//! multiplier to hit a target budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end of the noise-multiplier search bracket.
pub const SIGMA_MIN: f64 = 0.3;
/// Upper end of the noise-multiplier search bracket.
pub const SIGMA_MAX: f64 = 100.0;
/// Calibration stops once the accounted ε is this close below the target.
pub const CALIBRATION_TOLERANCE: f64 = 1e-3;

/// Integer orders 2..=64 plus 128 and 256.
pub fn default_orders() -> Vec<f64> {
    (2..=64)
        .map(f64::from)
        .chain([128.0, 256.0])
        .collect()
}

/// The privacy contract between the training loop and the accountant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub target_epsilon: f64,
    pub delta: f64,
    pub sample_rate: f64,
    pub steps: u64,
    pub noise_multiplier: f64,
    pub clipping_norm: f64,
}

impl PrivacySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "target epsilon must be positive, got {}",
                self.target_epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.sample_rate) {
            return Err(Error::Domain(format!(
                "sample rate must lie in [0,1], got {}",
                self.sample_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::Domain("steps must be at least 1".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Domain(format!(
                "noise multiplier must be nonnegative, got {}",
                self.noise_multiplier
            )));
        }
        if !(self.clipping_norm > 0.0) {
            return Err(Error::Domain(format!(
                "clipping norm must be positive, got {}",
                self.clipping_norm
            )));
        }
        Ok(())
    }

    /// ε actually spent by `steps` steps at the stored noise multiplier.
    pub fn accounted_epsilon(&self) -> Result<f64> {
        account(self.noise_multiplier, self.sample_rate, self.steps, self.delta)
    }
}

/// `δ = 1/(2·n)` for a training set of `n` examples.
pub fn default_delta(train_size: usize) -> f64 {
    1.0 / (2.0 * train_size as f64)
}

/// RDP curve: ε(α) at a set of orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    orders: Vec<f64>,
    epsilons: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, epsilons: Vec<f64>) -> Result<Self> {
        if orders.len() != epsilons.len() {
            return Err(Error::Domain(format!(
                "{} orders but {} epsilons",
                orders.len(),
                epsilons.len()
            )));
        }
        if orders.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("orders must be strictly increasing".into()));
        }
        if orders.iter().any(|&a| !(a > 1.0)) {
            return Err(Error::Domain("orders must exceed 1".into()));
        }
        if epsilons.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Domain("RDP epsilons must be nonnegative".into()));
        }
        Ok(Self { orders, epsilons })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Per-step curve of the subsampled Gaussian at every order in `orders`.
    pub fn subsampled_gaussian(orders: &[f64], sample_rate: f64, sigma: f64) -> Result<Self> {
        let eps = orders
            .iter()
            .map(|&a| {
                let order = integer_order(a)?;
                rdp_subsampled_gaussian(order, sample_rate, sigma)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(orders.to_vec(), eps)
    }
}

fn integer_order(a: f64) -> Result<u32> {
    if a.fract() != 0.0 || a < 2.0 || a > u32::MAX as f64 {
        return Err(Error::Domain(format!("fractional or out-of-range order {a}")));
    }
    Ok(a as u32)
}

/// RDP of the Gaussian mechanism with sensitivity 1: `α / (2σ²)`.
pub fn rdp_gaussian(order: f64, sigma: f64) -> Result<f64> {
    if !(order > 1.0) {
        return Err(Error::Domain(format!("order must exceed 1, got {order}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(order / (2.0 * sigma * sigma))
}

/// `ln(e^x − 1)` for `x > 0`, accurate at both ends.
fn ln_expm1(x: f64) -> f64 {
    if x < 1.0 {
        x.exp_m1().ln()
    } else {
        x + (-(-x).exp()).ln_1p()
    }
}

/// `ln(1 + e^y)` without overflow.
fn ln1p_exp(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// RDP at integer order `α ≥ 2` of the Poisson-subsampled Gaussian mechanism:
///
/// `ε(α) = ln( Σ_k C(α,k) (1−q)^(α−k) q^k e^(k(k−1)/(2σ²)) ) / (α−1)`.
///
/// The binomial weights sum to one, so the series is rewritten as
/// `1 + Σ_{k≥2} C(α,k)(1−q)^(α−k) q^k (e^(k(k−1)/(2σ²)) − 1)`; every term of
/// the tail is nonnegative and is accumulated in log space, which keeps full
/// relative precision both for tiny ε (small q, large σ) and for huge ε.
pub fn rdp_subsampled_gaussian(order: u32, sample_rate: f64, sigma: f64) -> Result<f64> {
    if order < 2 {
        return Err(Error::Domain(format!("order must be an integer >= 2, got {order}")));
    }
    if !(0.0..=1.0).contains(&sample_rate) {
        return Err(Error::Domain(format!(
            "sample rate must lie in [0,1], got {sample_rate}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if sample_rate == 0.0 {
        return Ok(0.0);
    }
    let ln_q = sample_rate.ln();
    let ln_1mq = (-sample_rate).ln_1p();
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let a = order as usize;

    let mut log_terms = Vec::with_capacity(a - 1);
    // ln C(α, k) via the multiplicative recurrence
    let mut ln_binom = 0.0f64;
    for k in 1..=a {
        ln_binom += ((a - k + 1) as f64).ln() - (k as f64).ln();
        if k < 2 {
            continue;
        }
        let rest = (a - k) as f64;
        let ln_weight = if rest == 0.0 {
            0.0
        } else if ln_1mq == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            rest * ln_1mq
        };
        let exponent = (k * (k - 1)) as f64 * inv_two_var;
        log_terms.push(ln_binom + ln_weight + k as f64 * ln_q + ln_expm1(exponent));
    }
    let log_tail = log_sum_exp(&log_terms);
    let eps = if log_tail == f64::NEG_INFINITY {
        0.0
    } else {
        ln1p_exp(log_tail) / (a as f64 - 1.0)
    };
    Ok(eps.max(0.0))
}

/// Additive composition of `steps` identical mechanisms.
pub fn compose(per_step: &RdpCurve, steps: u64) -> Result<RdpCurve> {
    if steps == 0 {
        return Err(Error::Domain("steps must be at least 1".into()));
    }
    let s = steps as f64;
    Ok(RdpCurve {
        orders: per_step.orders.clone(),
        epsilons: per_step.epsilons.iter().map(|e| e * s).collect(),
    })
}

/// Convert an RDP curve to (ε, δ)-DP. Returns `(ε, best order)`; ties go to
/// the smallest order. A curve that is zero at every order describes a
/// mechanism whose output ignores the data, which is (0, 0)-DP.
pub fn to_dp(curve: &RdpCurve, delta: f64) -> Result<(f64, f64)> {
    if curve.is_empty() {
        return Err(Error::Domain("empty RDP curve".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    if curve.epsilons.iter().all(|&e| e == 0.0) {
        return Ok((0.0, curve.orders[0]));
    }
    let log_inv_delta = -delta.ln();
    let mut best = (f64::INFINITY, curve.orders[0]);
    for (&a, &e) in curve.orders.iter().zip(&curve.epsilons) {
        let eps = e + log_inv_delta / (a - 1.0);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    Ok(best)
}

/// Full per-order table for a training run, used by the planner output.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountingTable {
    pub composed: RdpCurve,
    /// `ε(α) + ln(1/δ)/(α−1)` for each order.
    pub converted: Vec<f64>,
    pub epsilon: f64,
    pub best_order: f64,
}

pub fn accounting_table(sigma: f64, sample_rate: f64, steps: u64, delta: f64) -> Result<AccountingTable> {
    let per_step = RdpCurve::subsampled_gaussian(&default_orders(), sample_rate, sigma)?;
    let composed = compose(&per_step, steps)?;
    let (epsilon, best_order) = to_dp(&composed, delta)?;
    let log_inv_delta = -delta.ln();
    let converted = composed
        .orders
        .iter()
        .zip(&composed.epsilons)
        .map(|(a, e)| e + log_inv_delta / (a - 1.0))
        .collect();
    Ok(AccountingTable {
        composed,
        converted,
        epsilon,
        best_order,
    })
}

/// ε after `steps` steps of the subsampled Gaussian with noise multiplier `sigma`.
pub fn account(sigma: f64, sample_rate: f64, steps: u64, delta: f64) -> Result<f64> {
    let per_step = RdpCurve::subsampled_gaussian(&default_orders(), sample_rate, sigma)?;
    let composed = compose(&per_step, steps)?;
    Ok(to_dp(&composed, delta)?.0)
}

/// Smallest-noise σ in `[SIGMA_MIN, SIGMA_MAX]` whose accounted ε is at most
/// `target_epsilon` and within [`CALIBRATION_TOLERANCE`] of it. When even
/// `SIGMA_MIN` satisfies the budget, `SIGMA_MIN` is returned.
pub fn calibrate_sigma(target_epsilon: f64, delta: f64, sample_rate: f64, steps: u64) -> Result<f64> {
    if !(target_epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "target epsilon must be positive, got {target_epsilon}"
        )));
    }
    let eps_at = |s: f64| account(s, sample_rate, steps, delta);
    if eps_at(SIGMA_MIN)? <= target_epsilon {
        return Ok(SIGMA_MIN);
    }
    if eps_at(SIGMA_MAX)? > target_epsilon {
        return Err(Error::Calibration {
            target: target_epsilon,
            lo: SIGMA_MIN,
            hi: SIGMA_MAX,
        });
    }
    // invariant: eps(lo) > target >= eps(hi)
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    for _ in 0..200 {
        let e_hi = eps_at(hi)?;
        if target_epsilon - e_hi <= CALIBRATION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eps_at(mid)? > target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
