use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{add_block, unscale_cost, Block, StagedSource, Staging};
use crate::error::{Error, Result};
use crate::instance::{distance_matrix, Instance};
use crate::milp::{
    check_solution, solve_mip_with, KernelError, MilpModel, MipOptions, MipSolution, SolveStatus,
};
use crate::scenario::DemandShockScenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    /// True when the wall-clock budget ran out and the values are the best
    /// incumbent rather than a proven optimum.
    pub time_limited: bool,
    /// Solver objective in currency units.
    pub objective: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub solve_time_s: f64,
    pub variables: usize,
    pub constraints: usize,
}

impl SolverStats {
    pub(crate) fn new(model: &MilpModel, sol: &MipSolution, time_limited: bool) -> Self {
        SolverStats {
            status: sol.status,
            time_limited,
            objective: unscale_cost(sol.objective),
            nodes: sol.nodes,
            lp_iterations: sol.lp_iterations,
            solve_time_s: sol.solve_time_s,
            variables: model.num_vars(),
            constraints: model.num_constraints(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sent {
    pub hub: String,
    pub fcm: String,
    pub units: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDispatch {
    pub node: String,
    pub sent: Vec<Sent>,
    pub stabilized: bool,
    /// Minutes until the slowest dispatched unit is active; 0 when nothing
    /// is sent.
    pub response_minutes: f64,
    /// Units short of the requirement, per FCM type.
    pub shortfall: BTreeMap<String, u32>,
    pub shortfall_cost: f64,
    pub restoration_cost: f64,
    /// Shock duration in hours.
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub scenario_id: usize,
    pub nodes: Vec<NodeDispatch>,
    /// Recourse cost (currency).
    pub recourse_cost: f64,
    pub shortfall_cost: f64,
    pub restoration_cost: f64,
    /// Raw solver values, in model variable order.
    pub values: Vec<f64>,
    pub solver: SolverStats,
}

impl DispatchDecision {
    /// Units of type `fcm` sent to `node` from all hubs.
    pub fn units_to(&self, node: &str, fcm: &str) -> u32 {
        self.nodes
            .iter()
            .filter(|n| n.node == node)
            .flat_map(|n| &n.sent)
            .filter(|s| s.fcm == fcm)
            .map(|s| s.units)
            .sum()
    }
}

/// A standalone second-stage model together with the layout needed to
/// decode its solutions.
#[derive(Clone, Debug)]
pub struct Stage2Model {
    pub model: MilpModel,
    pub(crate) block: Block,
}

/// Builds the dispatch MILP of `scenario` against fixed hub stock.
pub fn build_stage2_model(
    instance: &Instance,
    staged: &Staging,
    scenario: &DemandShockScenario,
) -> Result<Stage2Model> {
    if !staged.fits(instance) {
        return Err(Error::Shape(format!(
            "staging must be {} hubs by {} FCM types",
            instance.hubs.len(),
            instance.fcm_types.len()
        )));
    }
    let dist = distance_matrix(&instance.network)?;
    let mut model = MilpModel::new(format!("dispatch-s{}", scenario.id));
    let block = add_block(
        &mut model,
        instance,
        &dist,
        scenario,
        StagedSource::Fixed(&staged.units),
    );
    for &(v, c) in &block.terms {
        model.add_objective_coef(v, c);
    }
    model.objective_offset = block.offset;
    Ok(Stage2Model { model, block })
}

impl Stage2Model {
    /// Recourse cost (currency) of raw values.
    pub fn cost(&self, values: &[f64]) -> f64 {
        unscale_cost(self.block.cost(values))
    }

    /// Turns solver output into a decision, after checking it against the
    /// model and recomputing the recourse cost from the raw values.
    pub fn decode(
        &self,
        instance: &Instance,
        staged: &Staging,
        sol: &MipSolution,
        time_limited: bool,
    ) -> Result<DispatchDecision> {
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Infeasible(format!(
                "dispatch model {} returned {:?}; x = 0, u = 0 is always feasible",
                self.model.name, sol.status
            )));
        }
        let violations = check_solution(&self.model, &sol.values);
        if !violations.is_empty() {
            return Err(Error::SelfCheck(format!(
                "dispatch solution violates {} rows or bounds, first: {:?}",
                violations.len(),
                violations[0]
            )));
        }
        let decision = decode_block(
            instance,
            &self.block,
            &sol.values,
            SolverStats::new(&self.model, sol, time_limited),
        );
        verify_block(instance, &self.block, &sol.values, Some(staged))?;
        let recomputed = self.block.cost(&sol.values);
        if (recomputed - sol.objective).abs() > 1e-6 * sol.objective.abs().max(1.0) {
            return Err(Error::SelfCheck(format!(
                "recourse cost {recomputed} recomputed from values differs from solver objective {}",
                sol.objective
            )));
        }
        Ok(decision)
    }
}

/// Exact integer checks on a block solution: units within stock and demand,
/// nonnegative shortfall.
pub(crate) fn verify_block(
    instance: &Instance,
    block: &Block,
    values: &[f64],
    staged: Option<&Staging>,
) -> Result<()> {
    let int = |v: crate::milp::Var| values[v.0].round() as i64;
    if let Some(staged) = staged {
        for d in 0..instance.hubs.len() {
            for l in 0..instance.fcm_types.len() {
                let used: i64 = block
                    .nodes
                    .iter()
                    .filter_map(|n| {
                        n.types
                            .iter()
                            .position(|&m| m == l)
                            .map(|k| int(n.sent[k][d]))
                    })
                    .sum();
                if used > i64::from(staged.get(d, l)) {
                    return Err(Error::SelfCheck(format!(
                        "scenario {}: {} units of {} sent from {} holding {}",
                        block.scenario,
                        used,
                        instance.fcm_types[l].id,
                        instance.hubs[d].id,
                        staged.get(d, l)
                    )));
                }
            }
        }
    }
    for n in &block.nodes {
        for (k, x) in n.sent.iter().enumerate() {
            let served: i64 = x.iter().map(|&v| int(v)).sum();
            if served > i64::from(n.required[k]) || x.iter().any(|&v| int(v) < 0) {
                return Err(Error::SelfCheck(format!(
                    "scenario {}: node {} served {} of {} units",
                    block.scenario, instance.nodes[n.node].id, served, n.required[k]
                )));
            }
        }
    }
    for n in &block.nodes {
        let window = instance.nodes[n.node].stabilize_window;
        if int(n.stabilized) == 1 && values[n.response.0] > window + 1e-6 * window.max(1.0) {
            return Err(Error::SelfCheck(format!(
                "scenario {}: node {} stabilized with response {} beyond its {window} min window",
                block.scenario, instance.nodes[n.node].id, values[n.response.0]
            )));
        }
        for (x, w) in n.sent.iter().zip(&n.serves) {
            if x.iter().zip(w).any(|(&x, &w)| int(x) > 0 && int(w) != 1) {
                return Err(Error::SelfCheck(format!(
                    "scenario {}: node {} served by a hub not marked as serving",
                    block.scenario, instance.nodes[n.node].id
                )));
            }
        }
    }
    let (shortfall, _) = block.cost_parts(values);
    if shortfall < 0.0 {
        return Err(Error::SelfCheck(format!(
            "scenario {}: negative shortfall cost",
            block.scenario
        )));
    }
    Ok(())
}

pub(crate) fn decode_block(
    instance: &Instance,
    block: &Block,
    values: &[f64],
    solver: SolverStats,
) -> DispatchDecision {
    let mut nodes = Vec::with_capacity(block.nodes.len());
    for n in &block.nodes {
        let mut sent = Vec::new();
        let mut shortfall = BTreeMap::new();
        let mut response: f64 = 0.0;
        let mut short_cost = 0.0;
        for (k, &l) in n.types.iter().enumerate() {
            let fcm = &instance.fcm_types[l].id;
            let mut served = 0;
            for (d, &v) in n.sent[k].iter().enumerate() {
                let units = values[v.0].round() as u32;
                if units > 0 {
                    sent.push(Sent {
                        hub: instance.hubs[d].id.clone(),
                        fcm: fcm.clone(),
                        units,
                    });
                    served += units;
                    response = response.max(n.activation[k][d]);
                }
            }
            let short = n.required[k] - served;
            shortfall.insert(fcm.clone(), short);
            short_cost += n.penalty[k] * f64::from(short);
        }
        let stabilized = values[n.stabilized.0].round() == 1.0;
        nodes.push(NodeDispatch {
            node: instance.nodes[n.node].id.clone(),
            sent,
            stabilized,
            response_minutes: response,
            shortfall,
            shortfall_cost: unscale_cost(short_cost),
            restoration_cost: if stabilized {
                0.0
            } else {
                unscale_cost(n.restoration)
            },
            duration: n.duration,
        });
    }
    let (shortfall, restoration) = block.cost_parts(values);
    DispatchDecision {
        scenario_id: block.scenario,
        nodes,
        recourse_cost: unscale_cost(shortfall + restoration),
        shortfall_cost: unscale_cost(shortfall),
        restoration_cost: unscale_cost(restoration),
        values: values.to_vec(),
        solver,
    }
}

pub fn solve_stage2(
    instance: &Instance,
    staged: &Staging,
    scenario: &DemandShockScenario,
) -> Result<DispatchDecision> {
    solve_stage2_with(instance, staged, scenario, &MipOptions::default())
}

/// Solves one scenario's dispatch against fixed stock. On a timeout with
/// an incumbent, the incumbent is decoded with `solver.time_limited` set.
pub fn solve_stage2_with(
    instance: &Instance,
    staged: &Staging,
    scenario: &DemandShockScenario,
    opts: &MipOptions,
) -> Result<DispatchDecision> {
    let built = build_stage2_model(instance, staged, scenario)?;
    match solve_mip_with(&built.model, opts) {
        Ok(sol) => built.decode(instance, staged, &sol, false),
        Err(KernelError::Timeout {
            incumbent: Some(sol),
            ..
        }) => built.decode(instance, staged, &sol, true),
        Err(e) => Err(e.into()),
    }
}
