//! Dense-tableau primal simplex for bounded variables.
//!
//! Every row `a·x (<=|=|>=) b` gets a slack `s` with `a·x + s = b`, so the
//! slack bounds encode the sense. Nonbasic columns rest at one of their
//! bounds (or at zero when free). Rows whose slack cannot start feasible get
//! an artificial column; phase 1 drives the artificials to zero, then phase 2
//! optimizes the real objective with the artificials fixed at zero.
//!
//! Pricing is Dantzig's rule with a Harris two-pass ratio test. After a run
//! of degenerate pivots the solver switches to Bland's rule (lowest index
//! entering and leaving) until the objective moves again, which rules out
//! cycling. The tableau is stored densely but the pivot loop only touches
//! the nonzeros of the pivot row, which keeps block-structured models cheap.
//! Intended scale is up to a few thousand rows and columns.
//!
//! Models are equilibrated first with power-of-two row and column factors,
//! so scaled-cost rows and unit-count rows share one pivot tolerance.

use super::{KernelError, MilpModel, Sense};

pub const MAX_ITERATIONS: u64 = 50_000;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-12;
const HARRIS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: u32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural values; empty unless `Optimal`.
    pub values: Vec<f64>,
    /// Objective including the model offset; meaningful only when `Optimal`.
    pub objective: f64,
    pub iterations: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
    Free,
}

struct Tableau {
    m: usize,
    ncol: usize,
    first_artificial: usize,
    rows: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    /// Current value of nonbasic columns (ignored for basic ones).
    xval: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    d: Vec<f64>,
    iterations: u64,
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Power-of-two row and column factors that bring the constraint matrix
/// close to unit magnitudes: `a'_ij = row_i · a_ij · col_j`, and a scaled
/// column value `x'_j` stands for `x_j = col_j · x'_j`.
pub struct Scaling {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

const SCALING_PASSES: usize = 6;

impl Scaling {
    /// Alternating geometric-mean passes over rows and columns.
    pub fn equilibrate(model: &MilpModel) -> Scaling {
        let (n, m) = (model.num_vars(), model.num_constraints());
        let mut row = vec![1.0; m];
        let mut col = vec![1.0; n];
        let geometric = |lo: f64, hi: f64| {
            if hi > 0.0 {
                1.0 / (lo * hi).sqrt()
            } else {
                1.0
            }
        };
        for _ in 0..SCALING_PASSES {
            for (i, c) in model.constraints.iter().enumerate() {
                let (lo, hi) = magnitude_range(c.terms.iter().map(|&(v, a)| a * col[v.0]));
                row[i] = geometric(lo, hi);
            }
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![0.0_f64; n];
            for (i, c) in model.constraints.iter().enumerate() {
                for &(v, a) in &c.terms {
                    let x = (a * row[i]).abs();
                    if x > 0.0 {
                        lo[v.0] = lo[v.0].min(x);
                        hi[v.0] = hi[v.0].max(x);
                    }
                }
            }
            for j in 0..n {
                col[j] = geometric(lo[j], hi[j]);
            }
        }
        let pow2 = |f: f64| 2f64.powi(f.log2().round() as i32);
        Scaling {
            row: row.into_iter().map(pow2).collect(),
            col: col.into_iter().map(pow2).collect(),
        }
    }

    fn apply(&self, model: &MilpModel) -> MilpModel {
        let mut scaled = model.clone();
        for (c, &r) in scaled.constraints.iter_mut().zip(&self.row) {
            for (v, a) in c.terms.iter_mut() {
                *a *= r * self.col[v.0];
            }
            c.rhs *= r;
        }
        for (c, &s) in scaled.objective.iter_mut().zip(&self.col) {
            *c *= s;
        }
        scaled
    }
}

fn magnitude_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .map(f64::abs)
        .filter(|&a| a > 0.0)
        .fold((f64::INFINITY, 0.0), |(lo, hi), a| (lo.min(a), hi.max(a)))
}

/// Solves the LP relaxation of `model` with the variable bounds replaced by
/// `lb`/`ub` (one entry per structural variable).
pub fn solve_with_bounds(
    model: &MilpModel,
    lb: &[f64],
    ub: &[f64],
) -> Result<LpResult, KernelError> {
    solve_scaled(model, &Scaling::equilibrate(model), lb, ub)
}

/// Like [`solve_with_bounds`] with precomputed scaling factors.
pub fn solve_scaled(
    model: &MilpModel,
    scaling: &Scaling,
    lb: &[f64],
    ub: &[f64],
) -> Result<LpResult, KernelError> {
    let n = model.num_vars();
    debug_assert_eq!(lb.len(), n);
    debug_assert_eq!(ub.len(), n);
    if lb.iter().zip(ub).any(|(l, u)| l > u) {
        return Ok(infeasible(0));
    }
    let slb: Vec<f64> = lb.iter().zip(&scaling.col).map(|(b, s)| b / s).collect();
    let sub: Vec<f64> = ub.iter().zip(&scaling.col).map(|(b, s)| b / s).collect();
    let mut result = solve_unscaled(&scaling.apply(model), &slb, &sub)?;
    if result.status == LpStatus::Optimal {
        for (x, s) in result.values.iter_mut().zip(&scaling.col) {
            *x *= s;
        }
        // Values snapped back onto bounds they reached in scaled space.
        for ((x, &l), &u) in result.values.iter_mut().zip(lb).zip(ub) {
            *x = x.clamp(l, u);
        }
        result.objective = model.objective_value(&result.values);
    }
    Ok(result)
}

fn solve_unscaled(model: &MilpModel, lb: &[f64], ub: &[f64]) -> Result<LpResult, KernelError> {
    let n = model.num_vars();

    let bmax = model
        .constraints
        .iter()
        .map(|c| c.rhs.abs())
        .fold(0.0_f64, f64::max);
    let feas_tol = 1e-9 * (1.0 + bmax);

    let mut t = Tableau::build(model, lb, ub);

    if t.ncol > t.first_artificial {
        let mut phase1 = vec![0.0; t.ncol];
        for c in phase1.iter_mut().skip(t.first_artificial) {
            *c = 1.0;
        }
        match t.run(&phase1)? {
            Outcome::Optimal => {}
            // Phase 1 is bounded below by zero.
            Outcome::Unbounded => unreachable!("phase 1 objective is bounded"),
        }
        let infeasibility: f64 = (t.first_artificial..t.ncol).map(|j| t.value(j)).sum();
        if infeasibility > feas_tol {
            return Ok(infeasible(t.iterations));
        }
        for j in t.first_artificial..t.ncol {
            t.ub[j] = 0.0;
            if t.status[j] != Status::Basic {
                t.status[j] = Status::Lower;
                t.xval[j] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; t.ncol];
    cost[..n].copy_from_slice(&model.objective);
    match t.run(&cost)? {
        Outcome::Unbounded => Ok(LpResult {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective: f64::NEG_INFINITY,
            iterations: t.iterations,
        }),
        Outcome::Optimal => {
            let values: Vec<f64> = (0..n).map(|j| t.value(j)).collect();
            let objective = model.objective_value(&values);
            Ok(LpResult {
                status: LpStatus::Optimal,
                values,
                objective,
                iterations: t.iterations,
            })
        }
    }
}

/// LP relaxation of `model` under its own bounds.
pub fn solve(model: &MilpModel) -> Result<LpResult, KernelError> {
    let lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    solve_with_bounds(model, &lb, &ub)
}

fn infeasible(iterations: u64) -> LpResult {
    LpResult {
        status: LpStatus::Infeasible,
        values: Vec::new(),
        objective: f64::INFINITY,
        iterations,
    }
}

impl Tableau {
    fn build(model: &MilpModel, lb: &[f64], ub: &[f64]) -> Tableau {
        let n = model.num_vars();
        let m = model.num_constraints();

        let mut xval = Vec::with_capacity(n + m);
        let mut status = Vec::with_capacity(n + m);
        for j in 0..n {
            let (v, s) = if lb[j].is_finite() {
                (lb[j], Status::Lower)
            } else if ub[j].is_finite() {
                (ub[j], Status::Upper)
            } else {
                (0.0, Status::Free)
            };
            xval.push(v);
            status.push(s);
        }

        // Residual of every row at the starting point decides whether the
        // slack can be basic or an artificial is needed.
        let mut needs_artificial = Vec::with_capacity(m);
        let mut residual = Vec::with_capacity(m);
        let mut slack_bounds = Vec::with_capacity(m);
        for c in &model.constraints {
            let r = c.rhs - c.terms.iter().map(|&(v, a)| a * xval[v.0]).sum::<f64>();
            let (slb, sub) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            needs_artificial.push(r < slb || r > sub);
            residual.push(r);
            slack_bounds.push((slb, sub));
        }
        let n_art = needs_artificial.iter().filter(|&&b| b).count();
        let ncol = n + m + n_art;
        let first_artificial = n + m;

        let mut lbv: Vec<f64> = lb.to_vec();
        let mut ubv: Vec<f64> = ub.to_vec();
        for &(slb, sub) in &slack_bounds {
            lbv.push(slb);
            ubv.push(sub);
        }
        lbv.extend(std::iter::repeat_n(0.0, n_art));
        ubv.extend(std::iter::repeat_n(f64::INFINITY, n_art));

        let mut rows = vec![0.0; m * ncol];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        status.resize(ncol, Status::Lower);
        xval.resize(ncol, 0.0);

        let mut next_art = first_artificial;
        for (i, c) in model.constraints.iter().enumerate() {
            let row = &mut rows[i * ncol..(i + 1) * ncol];
            for &(v, a) in &c.terms {
                row[v.0] += a;
            }
            row[n + i] = 1.0;
            let slack = n + i;
            if needs_artificial[i] {
                // Slack rests at zero, which is its violated (finite) bound.
                status[slack] = match c.sense {
                    Sense::Ge => Status::Upper,
                    _ => Status::Lower,
                };
                xval[slack] = 0.0;
                let sign = if residual[i] > 0.0 { 1.0 } else { -1.0 };
                row[next_art] = sign;
                // Normalize so the artificial has a unit column.
                if sign < 0.0 {
                    for v in row.iter_mut() {
                        *v = -*v;
                    }
                }
                basis[i] = next_art;
                status[next_art] = Status::Basic;
                beta[i] = residual[i].abs();
                next_art += 1;
            } else {
                basis[i] = slack;
                status[slack] = Status::Basic;
                beta[i] = residual[i];
            }
        }

        Tableau {
            m,
            ncol,
            first_artificial,
            rows,
            beta,
            basis,
            status,
            xval,
            lb: lbv,
            ub: ubv,
            d: vec![0.0; ncol],
            iterations: 0,
        }
    }

    fn value(&self, j: usize) -> f64 {
        if self.status[j] == Status::Basic {
            let r = self
                .basis
                .iter()
                .position(|&b| b == j)
                .expect("basic column has a row");
            self.beta[r]
        } else {
            self.xval[j]
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.ncol..(r + 1) * self.ncol]
    }

    fn price(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let start = r * self.ncol;
            for j in 0..self.ncol {
                let a = self.rows[start + j];
                if a != 0.0 {
                    self.d[j] -= cb * a;
                }
            }
        }
        for r in 0..self.m {
            self.d[self.basis[r]] = 0.0;
        }
    }

    /// Entering candidate: column index and direction (+1 increase, -1 decrease).
    fn choose_entering(&self, tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncol {
            let dir = match self.status[j] {
                Status::Basic => continue,
                _ if self.lb[j] == self.ub[j] => continue,
                Status::Lower if self.d[j] < -tol => 1.0,
                Status::Upper if self.d[j] > tol => -1.0,
                Status::Free if self.d[j] < -tol => 1.0,
                Status::Free if self.d[j] > tol => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = self.d[j].abs();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Step length at which basic row `r` hits a bound when the entering
    /// column moves by `dir`. `slack` widens bounds for the Harris pass.
    fn row_limit(&self, r: usize, alpha: f64, dir: f64, slack: f64) -> Option<f64> {
        let b = self.basis[r];
        let rate = -dir * alpha; // d(beta_r)/d(theta)
        if rate < 0.0 && self.lb[b].is_finite() {
            Some(((self.beta[r] - self.lb[b] + slack) / -rate).max(0.0))
        } else if rate > 0.0 && self.ub[b].is_finite() {
            Some(((self.ub[b] - self.beta[r] + slack) / rate).max(0.0))
        } else {
            None
        }
    }

    fn choose_leaving(&self, q: usize, dir: f64, bland: bool) -> (Option<usize>, f64) {
        let col: Vec<(usize, f64)> = (0..self.m)
            .map(|r| (r, self.rows[r * self.ncol + q]))
            .filter(|&(_, a)| a.abs() > PIVOT_TOL)
            .collect();

        let flip = if self.lb[q].is_finite() && self.ub[q].is_finite() {
            self.ub[q] - self.lb[q]
        } else {
            f64::INFINITY
        };

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for &(r, a) in &col {
                if let Some(lim) = self.row_limit(r, a, dir, 0.0) {
                    let better = match best {
                        None => true,
                        Some((br, bl)) => {
                            lim < bl - 1e-12
                                || (lim <= bl + 1e-12 && self.basis[r] < self.basis[br])
                        }
                    };
                    if better {
                        best = Some((r, lim));
                    }
                }
            }
            return match best {
                Some((r, lim)) if lim < flip => (Some(r), lim),
                _ => (None, flip),
            };
        }

        // Harris pass 1: largest step allowed with relaxed bounds.
        let mut relaxed = f64::INFINITY;
        for &(r, a) in &col {
            if let Some(lim) = self.row_limit(r, a, dir, HARRIS_TOL) {
                relaxed = relaxed.min(lim);
            }
        }
        if flip <= relaxed {
            return (None, flip);
        }
        if relaxed == f64::INFINITY {
            return (None, f64::INFINITY);
        }
        // Pass 2: among rows that block within the relaxed step, take the
        // largest pivot magnitude.
        let mut best: Option<(usize, f64, f64)> = None;
        for &(r, a) in &col {
            if let Some(lim) = self.row_limit(r, a, dir, 0.0) {
                if lim <= relaxed {
                    let mag = a.abs();
                    let better = match best {
                        None => true,
                        Some((br, _, bm)) => {
                            mag > bm || (mag == bm && self.basis[r] < self.basis[br])
                        }
                    };
                    if better {
                        best = Some((r, lim, mag));
                    }
                }
            }
        }
        match best {
            Some((r, lim, _)) => (Some(r), lim),
            None => (None, f64::INFINITY),
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<Outcome, KernelError> {
        let cmax = cost.iter().map(|c| c.abs()).fold(0.0_f64, f64::max);
        let tol = 1e-10 * (1.0 + cmax);
        self.price(cost);
        let mut degenerate_run = 0u32;
        let mut pivots_since_refresh = 0u32;

        loop {
            let bland = degenerate_run >= DEGENERATE_STREAK;
            let Some((q, dir)) = self.choose_entering(tol, bland) else {
                return Ok(Outcome::Optimal);
            };
            if self.iterations >= MAX_ITERATIONS {
                return Err(KernelError::Numerics {
                    iterations: self.iterations,
                });
            }
            self.iterations += 1;

            let (leave, theta) = self.choose_leaving(q, dir, bland);
            if theta == f64::INFINITY {
                return Ok(Outcome::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            // Move basic values along the entering column.
            for r in 0..self.m {
                let a = self.rows[r * self.ncol + q];
                if a != 0.0 {
                    self.beta[r] -= dir * a * theta;
                }
            }

            match leave {
                None => {
                    // Bound flip, basis unchanged.
                    let (s, v) = if dir > 0.0 {
                        (Status::Upper, self.ub[q])
                    } else {
                        (Status::Lower, self.lb[q])
                    };
                    self.status[q] = s;
                    self.xval[q] = v;
                }
                Some(p) => {
                    let entering_value = self.xval[q] + dir * theta;
                    let leaving = self.basis[p];
                    let rate = -dir * self.rows[p * self.ncol + q];
                    let (s, v) = if rate < 0.0 {
                        (Status::Lower, self.lb[leaving])
                    } else {
                        (Status::Upper, self.ub[leaving])
                    };
                    self.status[leaving] = s;
                    self.xval[leaving] = v;
                    self.basis[p] = q;
                    self.status[q] = Status::Basic;
                    self.beta[p] = entering_value;
                    self.pivot(p, q);
                    pivots_since_refresh += 1;
                    if pivots_since_refresh >= 200 {
                        // Periodic refresh keeps the reduced costs from drifting.
                        self.price(cost);
                        pivots_since_refresh = 0;
                    }
                }
            }
        }
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let ncol = self.ncol;
        let piv = self.rows[p * ncol + q];
        let inv = 1.0 / piv;
        let mut nz: Vec<(usize, f64)> = Vec::new();
        {
            let prow = &mut self.rows[p * ncol..(p + 1) * ncol];
            for (j, v) in prow.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push((j, *v));
                    }
                }
            }
            prow[q] = 1.0;
        }
        for r in 0..self.m {
            if r == p {
                continue;
            }
            let start = r * ncol;
            let f = self.rows[start + q];
            if f == 0.0 {
                continue;
            }
            for &(j, pv) in &nz {
                let cell = &mut self.rows[start + j];
                *cell -= f * pv;
                if cell.abs() < DROP_TOL {
                    *cell = 0.0;
                }
            }
            self.rows[start + q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &(j, pv) in &nz {
                self.d[j] -= f * pv;
            }
        }
        self.d[q] = 0.0;
        debug_assert!(self.row(p)[q] == 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{MilpModel, Sense};

    #[test]
    fn lower_bound_row() {
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, 10.0);
        m.set_objective_coef(x, 1.0);
        m.add_constraint("c", [(x, 1.0)], Sense::Ge, 3.0);
        let r = solve(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.values[0] - 3.0).abs() < 1e-9);
        assert!((r.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_case() {
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, f64::INFINITY);
        let y = m.continuous("y", 0.0, f64::INFINITY);
        m.set_objective_coef(x, -1.0);
        m.set_objective_coef(y, -1.0);
        m.add_constraint("c", [(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let r = solve(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut m = MilpModel::new("inf");
        let x = m.continuous("x", 0.0, f64::INFINITY);
        m.add_constraint("a", [(x, 1.0)], Sense::Ge, 2.0);
        m.add_constraint("b", [(x, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Infeasible);

        let mut m = MilpModel::new("unb");
        let x = m.continuous("x", 0.0, f64::INFINITY);
        let y = m.continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.set_objective_coef(y, 1.0);
        m.add_constraint("a", [(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min z  s.t. z - x = -2, x + y = 5, y <= 1, z free
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, f64::INFINITY);
        let y = m.continuous("y", 0.0, 1.0);
        let z = m.continuous("z", f64::NEG_INFINITY, f64::INFINITY);
        m.set_objective_coef(z, 1.0);
        m.add_constraint("e1", [(z, 1.0), (x, -1.0)], Sense::Eq, -2.0);
        m.add_constraint("e2", [(x, 1.0), (y, 1.0)], Sense::Eq, 5.0);
        let r = solve(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        // x >= 4 because y <= 1, so z = x - 2 >= 2.
        assert!((r.objective - 2.0).abs() < 1e-9, "{}", r.objective);
    }

    #[test]
    fn upper_bounded_variables_flip() {
        // max 3x + 2y  s.t. x + y <= 3, x <= 2, y <= 2
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, 2.0);
        let y = m.continuous("y", 0.0, 2.0);
        m.set_objective_coef(x, -3.0);
        m.set_objective_coef(y, -2.0);
        m.add_constraint("c", [(x, 1.0), (y, 1.0)], Sense::Le, 3.0);
        let r = solve(&m).unwrap();
        assert!((r.objective + 8.0).abs() < 1e-9);
        assert!((r.values[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn inverted_bounds_are_infeasible() {
        let mut m = MilpModel::new("t");
        m.continuous("x", 0.0, 1.0);
        let r = solve_with_bounds(&m, &[2.0], &[1.0]).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }
}
