use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::simplex::{self, LpStatus};
use super::{KernelError, MilpModel, MipSolution, SolveStatus, INT_TOL};

#[derive(Clone, Debug)]
pub struct MipOptions {
    pub time_limit: Duration,
    pub int_tol: f64,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            time_limit: Duration::from_secs(300),
            int_tol: INT_TOL,
        }
    }
}

struct Node {
    bound: f64,
    /// `bound` rounded to a fixed grid, so float noise does not break ties.
    key: i64,
    id: u64,
    lb: Vec<f64>,
    ub: Vec<f64>,
    /// LP solution of this node, kept so children do not need the parent.
    values: Vec<f64>,
}

// Min-heap on bound; among equal bounds the newest node comes first, so
// plateaus are searched depth-first.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .cmp(&self.key)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

pub fn solve_mip(model: &MilpModel) -> Result<MipSolution, KernelError> {
    solve_mip_with(model, &MipOptions::default())
}

/// Nodes between two dives from the best open node.
const DIVE_EVERY: u64 = 200;

/// Best-first branch-and-bound. Branches on the most fractional integer
/// variable (lowest index on ties) within the highest branching priority
/// class that still has a fractional variable. Nodes whose LP bound cannot beat the
/// incumbent are pruned, so the returned incumbent is optimal. A rounding
/// dive at the root and periodically afterwards supplies incumbents early.
pub fn solve_mip_with(model: &MilpModel, opts: &MipOptions) -> Result<MipSolution, KernelError> {
    model.validate()?;
    let start = Instant::now();
    let int_vars: Vec<usize> = model.integer_vars().map(|v| v.0).collect();

    // Integer bounds are rounded inward once; an empty integer box is
    // infeasible before any LP is solved.
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    for &j in &int_vars {
        lb[j] = (lb[j] - opts.int_tol).ceil();
        ub[j] = (ub[j] + opts.int_tol).floor();
        if lb[j] > ub[j] {
            return Ok(MipSolution::without_values(
                SolveStatus::Infeasible,
                0,
                0,
                start.elapsed(),
            ));
        }
    }

    let classes = priority_classes(model, &int_vars);
    let mut nodes = 0u64;
    let mut iterations = 0u64;
    let mut next_id = 0u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();

    let scaling = simplex::Scaling::equilibrate(model);
    let root = simplex::solve_scaled(model, &scaling, &lb, &ub)?;
    nodes += 1;
    iterations += root.iterations;
    match root.status {
        LpStatus::Infeasible => {
            return Ok(MipSolution::without_values(
                SolveStatus::Infeasible,
                nodes,
                iterations,
                start.elapsed(),
            ))
        }
        LpStatus::Unbounded => {
            return Ok(MipSolution::without_values(
                SolveStatus::Unbounded,
                nodes,
                iterations,
                start.elapsed(),
            ))
        }
        LpStatus::Optimal => {}
    }
    let root = Node {
        bound: root.objective,
        key: bound_key(root.objective),
        id: next_id,
        lb,
        ub,
        values: root.values,
    };
    next_id += 1;
    let mut last_dive = 0u64;
    dive(
        model,
        &scaling,
        &root,
        &classes,
        opts,
        start,
        &mut incumbent,
        &mut nodes,
        &mut iterations,
    )?;
    heap.push(root);

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if !improves(node.bound, *best) {
                // Everything left in the heap has a bound at least this large.
                break;
            }
        }
        if start.elapsed() > opts.time_limit {
            let incumbent = incumbent
                .map(|(_, values)| polish(model, &int_vars, values, nodes, iterations, start))
                .transpose()?
                .map(Box::new);
            return Err(KernelError::Timeout {
                limit_s: opts.time_limit.as_secs_f64(),
                incumbent,
            });
        }

        if nodes - last_dive >= DIVE_EVERY {
            last_dive = nodes;
            dive(
                model,
                &scaling,
                &node,
                &classes,
                opts,
                start,
                &mut incumbent,
                &mut nodes,
                &mut iterations,
            )?;
            if let Some((best, _)) = &incumbent {
                if !improves(node.bound, *best) {
                    continue;
                }
            }
        }

        let Some(j) = most_fractional(&node.values, &classes, opts.int_tol) else {
            // Integral LP optimum: new incumbent (bound order guarantees it
            // beats the current one).
            if incumbent
                .as_ref()
                .is_none_or(|(best, _)| improves(node.bound, *best))
            {
                incumbent = Some((node.bound, node.values));
            }
            continue;
        };

        let v = node.values[j];
        let children = [
            (node.lb[j], v.floor()), // x_j <= floor(v)
            (v.ceil(), node.ub[j]),  // x_j >= ceil(v)
        ];
        for (clb, cub) in children {
            if clb > cub {
                continue;
            }
            let mut lb = node.lb.clone();
            let mut ub = node.ub.clone();
            lb[j] = clb;
            ub[j] = cub;
            let r = simplex::solve_scaled(model, &scaling, &lb, &ub)?;
            nodes += 1;
            iterations += r.iterations;
            if r.status != LpStatus::Optimal {
                // A bounded parent cannot have an unbounded child.
                continue;
            }
            if let Some((best, _)) = &incumbent {
                if !improves(r.objective, *best) {
                    continue;
                }
            }
            heap.push(Node {
                bound: r.objective,
                key: bound_key(r.objective),
                id: next_id,
                lb,
                ub,
                values: r.values,
            });
            next_id += 1;
        }
    }

    match incumbent {
        None => Ok(MipSolution::without_values(
            SolveStatus::Infeasible,
            nodes,
            iterations,
            start.elapsed(),
        )),
        Some((_, values)) => polish(model, &int_vars, values, nodes, iterations, start),
    }
}

/// Depth-first rounding from `node`: fixes the least fractional integer
/// variable to its nearest integer (the other side if that is infeasible)
/// and re-solves, until the LP point is integral or both sides fail.
#[allow(clippy::too_many_arguments)]
fn dive(
    model: &MilpModel,
    scaling: &simplex::Scaling,
    node: &Node,
    classes: &[Vec<usize>],
    opts: &MipOptions,
    start: Instant,
    incumbent: &mut Option<(f64, Vec<f64>)>,
    nodes: &mut u64,
    iterations: &mut u64,
) -> Result<(), KernelError> {
    let mut lb = node.lb.clone();
    let mut ub = node.ub.clone();
    let mut values = node.values.clone();
    let mut objective = node.bound;
    loop {
        if let Some((best, _)) = incumbent {
            if !improves(objective, *best) {
                return Ok(());
            }
        }
        let Some(j) = least_fractional(&values, classes, opts.int_tol) else {
            *incumbent = Some((objective, values));
            return Ok(());
        };
        if start.elapsed() > opts.time_limit {
            return Ok(());
        }
        let v = values[j];
        let near = v.round();
        let far = if near > v { v.floor() } else { v.ceil() };
        let mut next = None;
        for target in [near, far] {
            let (old_lb, old_ub) = (lb[j], ub[j]);
            lb[j] = target;
            ub[j] = target;
            let r = simplex::solve_scaled(model, scaling, &lb, &ub)?;
            *nodes += 1;
            *iterations += r.iterations;
            if r.status == LpStatus::Optimal {
                next = Some(r);
                break;
            }
            lb[j] = old_lb;
            ub[j] = old_ub;
        }
        let Some(r) = next else {
            return Ok(());
        };
        values = r.values;
        objective = r.objective;
    }
}

fn least_fractional(values: &[f64], classes: &[Vec<usize>], tol: f64) -> Option<usize> {
    classes.iter().find_map(|class| {
        let mut best: Option<(usize, f64)> = None;
        for &j in class {
            let v = values[j];
            let dist = (v - v.round()).abs();
            if dist <= tol {
                continue;
            }
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        best.map(|(j, _)| j)
    })
}

/// Heap key of a bound: 1e-3 of a scaled cost unit.
fn bound_key(bound: f64) -> i64 {
    (bound * 1e3).round() as i64
}

fn improves(bound: f64, incumbent: f64) -> bool {
    bound < incumbent - 1e-9 * incumbent.abs().max(1.0)
}

/// Integer variables grouped by branching priority, highest class first,
/// each class in index order.
fn priority_classes(model: &MilpModel, int_vars: &[usize]) -> Vec<Vec<usize>> {
    let mut levels: Vec<u32> = int_vars
        .iter()
        .map(|&j| model.vars[j].branch_priority)
        .collect();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();
    levels
        .into_iter()
        .map(|p| {
            int_vars
                .iter()
                .copied()
                .filter(|&j| model.vars[j].branch_priority == p)
                .collect()
        })
        .collect()
}

/// Most fractional variable of the first class that has one; lowest index
/// on ties.
fn most_fractional(values: &[f64], classes: &[Vec<usize>], tol: f64) -> Option<usize> {
    classes.iter().find_map(|class| {
        let mut best: Option<(usize, f64)> = None;
        for &j in class {
            let v = values[j];
            let frac = v - v.floor();
            let dist = frac.min(1.0 - frac);
            if dist <= tol {
                continue;
            }
            if best.is_none_or(|(_, d)| dist > d) {
                best = Some((j, dist));
            }
        }
        best.map(|(j, _)| j)
    })
}

/// Snaps integer variables to exact integers and re-solves the continuous
/// remainder with them fixed, so the reported point is internally
/// consistent.
fn polish(
    model: &MilpModel,
    int_vars: &[usize],
    values: Vec<f64>,
    nodes: u64,
    iterations: u64,
    start: Instant,
) -> Result<MipSolution, KernelError> {
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    for &j in int_vars {
        let r = values[j].round();
        lb[j] = r;
        ub[j] = r;
    }
    let fixed = simplex::solve_with_bounds(model, &lb, &ub)?;
    let (values, iterations) = if fixed.status == LpStatus::Optimal {
        let mut v = fixed.values;
        for &j in int_vars {
            v[j] = lb[j];
        }
        (v, iterations + fixed.iterations)
    } else {
        (values, iterations)
    };
    let objective = model.objective_value(&values);
    Ok(MipSolution {
        status: SolveStatus::Optimal,
        values,
        objective,
        nodes,
        lp_iterations: iterations,
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}
