//! Exact mixed-integer linear programming kernel.
//!
//! Models are built with [`MilpModel`], solved with [`solve_lp`] (continuous
//! relaxation) or [`solve_mip`] (best-first branch-and-bound), and can be
//! cross-checked with the brute-force [`enumerate_oracle`] and the
//! [`check_solution`] feasibility report.
//!
//! The simplex works on a dense tableau. That is fine for the block
//! structured models in this crate (up to a few thousand rows and columns)
//! and not meant as a general-purpose solver.

mod bnb;
mod check;
mod model;
mod oracle;
pub mod simplex;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bnb::{solve_mip, solve_mip_with, MipOptions};
pub use check::{check_solution, Violation, ViolationKind};
pub use model::{Constraint, MilpModel, Sense, Var, VarKind, Variable};
pub use oracle::{enumerate_oracle, enumerate_oracle_with, OracleOutcome, DEFAULT_ORACLE_CAP};

/// Feasibility and integrality tolerance shared by the kernel.
pub const FEAS_TOL: f64 = 1e-6;
pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: SolveStatus,
    /// One value per model variable; empty unless `Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub solve_time_s: f64,
}

impl MipSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn without_values(status: SolveStatus, nodes: u64, iters: u64, t: Duration) -> Self {
        MipSolution {
            status,
            values: Vec::new(),
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            nodes,
            lp_iterations: iters,
            solve_time_s: t.as_secs_f64(),
        }
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("simplex made no progress within {iterations} iterations")]
    Numerics { iterations: u64 },
    #[error("time limit of {limit_s} s reached (incumbent available: {})", incumbent.is_some())]
    Timeout {
        limit_s: f64,
        incumbent: Option<Box<MipSolution>>,
    },
    #[error("enumeration needs {needed:e} assignments but the cap is {cap}")]
    CapExceeded { needed: f64, cap: u64 },
}

/// Solves the continuous relaxation of `model`.
pub fn solve_lp(model: &MilpModel) -> Result<MipSolution, KernelError> {
    model.validate()?;
    let start = std::time::Instant::now();
    let r = simplex::solve(model)?;
    let status = match r.status {
        simplex::LpStatus::Optimal => SolveStatus::Optimal,
        simplex::LpStatus::Infeasible => SolveStatus::Infeasible,
        simplex::LpStatus::Unbounded => SolveStatus::Unbounded,
    };
    if status != SolveStatus::Optimal {
        return Ok(MipSolution::without_values(
            status,
            1,
            r.iterations,
            start.elapsed(),
        ));
    }
    Ok(MipSolution {
        status,
        values: r.values,
        objective: r.objective,
        nodes: 1,
        lp_iterations: r.iterations,
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}
