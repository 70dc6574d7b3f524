//! The privacy planner: σ for a target budget and the per-order breakdown.

use serde::Serialize;

use super::table::Table;
use crate::accountant::{accounting_table, calibrate_sigma, default_delta, AccountingTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanRequest {
    pub target_epsilon: f64,
    /// Defaults to `1/(2·dataset_size)`.
    pub delta: Option<f64>,
    pub dataset_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub delta: f64,
    pub sample_rate: f64,
    pub steps: u64,
    pub sigma: f64,
    pub table: AccountingTable,
}

pub fn plan(req: &PlanRequest) -> Result<Plan> {
    if req.dataset_size == 0 || req.batch_size == 0 || req.epochs == 0 {
        return Err(Error::Config("dataset size, batch size and epochs must be positive".into()));
    }
    let delta = req.delta.unwrap_or_else(|| default_delta(req.dataset_size));
    let sample_rate = (req.batch_size as f64 / req.dataset_size as f64).min(1.0);
    let steps = (req.epochs * req.dataset_size.div_ceil(req.batch_size)) as u64;
    let sigma = calibrate_sigma(req.target_epsilon, delta, sample_rate, steps)?;
    let table = accounting_table(sigma, sample_rate, steps, delta)?;
    Ok(Plan {
        delta,
        sample_rate,
        steps,
        sigma,
        table,
    })
}

impl Plan {
    /// One row per RDP order: composed RDP ε and the converted (ε, δ) bound.
    pub fn order_table(&self) -> Table {
        let mut t = Table::new(["order", "rdp_epsilon", "epsilon", "best"]);
        let c = &self.table.composed;
        for ((a, r), e) in c.orders().iter().zip(c.epsilons()).zip(&self.table.converted) {
            t.push([
                format!("{a}"),
                format!("{r:.6}"),
                format!("{e:.6}"),
                if *a == self.table.best_order { "*".into() } else { String::new() },
            ]);
        }
        t
    }

    pub fn summary(&self) -> String {
        format!(
            "noise multiplier {:.6}\ndelta {:e}\nsample rate {:.6}\nsteps {}\nepsilon {:.6} at order {}\n",
            self.sigma, self.delta, self.sample_rate, self.steps, self.table.epsilon, self.table.best_order
        )
    }
}
