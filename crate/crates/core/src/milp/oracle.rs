use std::time::Instant;

use super::simplex::{self, LpStatus};
use super::{KernelError, MilpModel, MipSolution, Sense, SolveStatus, FEAS_TOL, INT_TOL};

pub const DEFAULT_ORACLE_CAP: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub solution: MipSolution,
    /// Complete integer assignments that reached the leaf evaluation.
    pub assignments_scanned: u64,
}

/// Brute-force optimum with the default assignment cap.
pub fn enumerate_oracle(model: &MilpModel) -> Result<MipSolution, KernelError> {
    enumerate_oracle_with(model, DEFAULT_ORACLE_CAP).map(|o| o.solution)
}

/// Visits every integer assignment inside the variable bounds and solves the
/// continuous remainder as an LP at each one. The cap applies to the product
/// of the integer range sizes.
///
/// Rows that only involve integer variables are checked as soon as their
/// last variable is assigned, so infeasible partial assignments are cut
/// early. This does not change the result, only how many leaves are reached.
pub fn enumerate_oracle_with(model: &MilpModel, cap: u64) -> Result<OracleOutcome, KernelError> {
    model.validate()?;
    let start = Instant::now();
    let n = model.num_vars();
    let int_vars: Vec<usize> = model.integer_vars().map(|v| v.0).collect();

    let mut ranges = Vec::with_capacity(int_vars.len());
    let mut needed = 1.0_f64;
    for &j in &int_vars {
        let v = &model.vars[j];
        let lo = (v.lb - INT_TOL).ceil();
        let hi = (v.ub + INT_TOL).floor();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(KernelError::CapExceeded {
                needed: f64::INFINITY,
                cap,
            });
        }
        needed *= (hi - lo + 1.0).max(0.0);
        ranges.push((lo, hi));
    }
    if needed > cap as f64 {
        return Err(KernelError::CapExceeded { needed, cap });
    }

    let has_continuous = int_vars.len() < n;

    // Position in the enumeration order at which each integer-only row
    // becomes fully assigned.
    let mut pos_of = vec![usize::MAX; n];
    for (p, &j) in int_vars.iter().enumerate() {
        pos_of[j] = p;
    }
    let mut checks_at: Vec<Vec<usize>> = vec![Vec::new(); int_vars.len() + 1];
    for (ci, c) in model.constraints.iter().enumerate() {
        if c.terms.iter().any(|(v, _)| pos_of[v.0] == usize::MAX) {
            continue;
        }
        let last = c
            .terms
            .iter()
            .map(|(v, _)| pos_of[v.0] + 1)
            .max()
            .unwrap_or(0);
        checks_at[last].push(ci);
    }

    let mut search = Search {
        model,
        int_vars: &int_vars,
        ranges: &ranges,
        checks_at: &checks_at,
        has_continuous,
        values: model
            .vars
            .iter()
            .map(|v| if v.lb.is_finite() { v.lb } else { 0.0 })
            .collect(),
        best: None,
        unbounded: false,
        scanned: 0,
        iterations: 0,
    };
    if checks_at[0]
        .iter()
        .all(|&ci| row_ok(model, ci, &search.values))
    {
        search.descend(0)?;
    }

    let elapsed = start.elapsed();
    let solution = if search.unbounded {
        MipSolution::without_values(
            SolveStatus::Unbounded,
            search.scanned,
            search.iterations,
            elapsed,
        )
    } else {
        match search.best {
            None => MipSolution::without_values(
                SolveStatus::Infeasible,
                search.scanned,
                search.iterations,
                elapsed,
            ),
            Some((objective, values)) => MipSolution {
                status: SolveStatus::Optimal,
                values,
                objective,
                nodes: search.scanned,
                lp_iterations: search.iterations,
                solve_time_s: elapsed.as_secs_f64(),
            },
        }
    };
    Ok(OracleOutcome {
        solution,
        assignments_scanned: search.scanned,
    })
}

struct Search<'a> {
    model: &'a MilpModel,
    int_vars: &'a [usize],
    ranges: &'a [(f64, f64)],
    checks_at: &'a [Vec<usize>],
    has_continuous: bool,
    values: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
    unbounded: bool,
    scanned: u64,
    iterations: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) -> Result<(), KernelError> {
        if self.unbounded {
            return Ok(());
        }
        if depth == self.int_vars.len() {
            return self.leaf();
        }
        let j = self.int_vars[depth];
        let (lo, hi) = self.ranges[depth];
        let mut v = lo;
        while v <= hi {
            self.values[j] = v;
            if self.checks_at[depth + 1]
                .iter()
                .all(|&ci| row_ok(self.model, ci, &self.values))
            {
                self.descend(depth + 1)?;
            }
            v += 1.0;
        }
        Ok(())
    }

    fn leaf(&mut self) -> Result<(), KernelError> {
        self.scanned += 1;
        let (objective, values) = if self.has_continuous {
            let mut lb: Vec<f64> = self.model.vars.iter().map(|v| v.lb).collect();
            let mut ub: Vec<f64> = self.model.vars.iter().map(|v| v.ub).collect();
            for &j in self.int_vars {
                lb[j] = self.values[j];
                ub[j] = self.values[j];
            }
            let r = simplex::solve_with_bounds(self.model, &lb, &ub)?;
            self.iterations += r.iterations;
            match r.status {
                LpStatus::Infeasible => return Ok(()),
                LpStatus::Unbounded => {
                    self.unbounded = true;
                    return Ok(());
                }
                LpStatus::Optimal => {
                    let mut v = r.values;
                    for &j in self.int_vars {
                        v[j] = self.values[j];
                    }
                    (self.model.objective_value(&v), v)
                }
            }
        } else {
            (
                self.model.objective_value(&self.values),
                self.values.clone(),
            )
        };
        let better = match &self.best {
            None => true,
            Some((b, _)) => objective < *b - 1e-9 * b.abs().max(1.0),
        };
        if better {
            self.best = Some((objective, values));
        }
        Ok(())
    }
}

fn row_ok(model: &MilpModel, ci: usize, values: &[f64]) -> bool {
    let c = &model.constraints[ci];
    let act = c.activity(values);
    let tol = FEAS_TOL * c.rhs.abs().max(1.0);
    match c.sense {
        Sense::Le => act <= c.rhs + tol,
        Sense::Ge => act >= c.rhs - tol,
        Sense::Eq => (act - c.rhs).abs() <= tol,
    }
}
