//! First stage: hub activation and shipments, solved as one extensive-form
//! MILP that embeds every scenario's dispatch block and a linearized CVaR.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{
    add_block, scale_cost, solve_stage2_with, unscale_cost, Block, DispatchDecision, SolverStats,
    StagedSource, Staging,
};
use crate::error::{read_json, write_json, Error, Result};
use crate::instance::{distance_matrix, Instance};
use crate::milp::{
    check_solution, solve_lp, solve_mip_with, KernelError, MilpModel, MipOptions, Sense, Var,
};
use crate::risk::cvar_discrete;
use crate::scenario::ScenarioSet;

/// Variable layout of an extensive form.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    /// Hub activation, per hub.
    pub open: Vec<Var>,
    /// Units shipped, `[fcm type][hub][supplier]`.
    pub ship: Vec<Vec<Vec<Var>>>,
    pub blocks: Vec<Block>,
    /// Recourse cost per scenario (scaled).
    pub recourse: Vec<Var>,
    /// CVaR threshold.
    pub threshold: Var,
    /// Excess of each scenario's recourse over the threshold.
    pub excess: Vec<Var>,
    pub probs: Vec<f64>,
    /// Scaled setup cost per hub.
    pub setup_cost: Vec<f64>,
    /// Scaled shipping cost per unit, `[fcm type][hub][supplier]`.
    pub ship_cost: Vec<Vec<Vec<f64>>>,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct ExtensiveForm {
    pub model: MilpModel,
    pub(crate) layout: Layout,
}

impl ExtensiveForm {
    /// Hub activation variables, in instance order.
    pub fn open_vars(&self) -> &[Var] {
        &self.layout.open
    }

    /// Per-scenario recourse cost variables.
    pub fn recourse_vars(&self) -> &[Var] {
        &self.layout.recourse
    }

    pub fn threshold_var(&self) -> Var {
        self.layout.threshold
    }

    /// Per-scenario CVaR excess variables.
    pub fn excess_vars(&self) -> &[Var] {
        &self.layout.excess
    }
}

/// Number of variables `build_extensive_form` creates: one activation per
/// hub, one shipment per (type, hub, supplier), per scenario and shocked
/// node two variables per (hub, required type) plus stabilization and
/// response time, per scenario the recourse cost and its CVaR excess, and
/// the CVaR threshold.
pub fn extensive_form_size(instance: &Instance, scenarios: &ScenarioSet) -> usize {
    let hubs = instance.hubs.len();
    let first = hubs + instance.fcm_types.len() * hubs * instance.suppliers.len();
    let second: usize = scenarios
        .scenarios
        .iter()
        .map(|s| {
            let nodes: usize = s
                .shocks
                .iter()
                .map(|sh| 2 * hubs * sh.requirement.values().filter(|&&r| r > 0).count() + 2)
                .sum();
            nodes + 2
        })
        .sum();
    first + second + 1
}

/// Hub and shipment decisions are branched on before any dispatch
/// variable; once they are integral the scenario blocks decouple.
const FIRST_STAGE_PRIORITY: u32 = 1;

/// Builds the extensive form. Costs are scaled to integers; the objective
/// is setup plus shipping plus `(1 − λ)·E[Q] + λ·(ζ + E[η]/(1 − α))` with
/// `η_s >= Q_s − ζ`, `η_s >= 0`.
pub fn build_extensive_form(instance: &Instance, scenarios: &ScenarioSet) -> Result<ExtensiveForm> {
    scenarios.validate(instance)?;
    let dist = distance_matrix(&instance.network)?;
    let (hubs, types, sups) = (
        instance.hubs.len(),
        instance.fcm_types.len(),
        instance.suppliers.len(),
    );
    let lambda = instance.risk.lambda;
    let alpha = instance.risk.alpha;
    let mut m = MilpModel::new("extensive-form");

    let setup_cost: Vec<f64> = instance
        .hubs
        .iter()
        .map(|h| scale_cost(h.setup_cost))
        .collect();
    let open: Vec<Var> = instance
        .hubs
        .iter()
        .map(|h| m.binary(format!("z[{}]", h.id)))
        .collect();
    for (d, &z) in open.iter().enumerate() {
        m.set_objective_coef(z, setup_cost[d]);
        m.set_branch_priority(z, FIRST_STAGE_PRIORITY);
    }

    let mut ship = vec![vec![Vec::with_capacity(sups); hubs]; types];
    let mut ship_cost = vec![vec![Vec::with_capacity(sups); hubs]; types];
    for (l, t) in instance.fcm_types.iter().enumerate() {
        for (d, h) in instance.hubs.iter().enumerate() {
            for (g, s) in instance.suppliers.iter().enumerate() {
                let ub = instance.inventory(g, &t.id).min(h.capacity_units).max(0);
                let y = m.integer(format!("y[{},{},{}]", t.id, h.id, s.id), 0.0, ub as f64);
                let cost = scale_cost(t.unit_transport_cost * dist.km(s.bus, h.bus));
                m.set_objective_coef(y, cost);
                m.set_branch_priority(y, FIRST_STAGE_PRIORITY);
                ship[l][d].push(y);
                ship_cost[l][d].push(cost);
            }
        }
    }
    for (l, t) in instance.fcm_types.iter().enumerate() {
        for (g, s) in instance.suppliers.iter().enumerate() {
            m.add_constraint(
                format!("inventory[{},{}]", s.id, t.id),
                (0..hubs).map(|d| (ship[l][d][g], 1.0)),
                Sense::Le,
                instance.inventory(g, &t.id) as f64,
            );
        }
    }
    // Per-shipment activation links; implied by the hub capacity row for
    // integer points but much tighter in the relaxation.
    for (l, t) in instance.fcm_types.iter().enumerate() {
        for (d, h) in instance.hubs.iter().enumerate() {
            for (g, s) in instance.suppliers.iter().enumerate() {
                let ub = m.var(ship[l][d][g]).ub;
                if ub > 0.0 {
                    m.add_constraint(
                        format!("ship_link[{},{},{}]", t.id, h.id, s.id),
                        [(ship[l][d][g], 1.0), (open[d], -ub)],
                        Sense::Le,
                        0.0,
                    );
                }
            }
        }
    }
    for (d, h) in instance.hubs.iter().enumerate() {
        let inflow = (0..types).flat_map(|l| ship[l][d].iter().map(|&y| (y, 1.0)));
        m.add_constraint(
            format!("hub_capacity[{}]", h.id),
            inflow.chain([(open[d], -(h.capacity_units as f64))]),
            Sense::Le,
            0.0,
        );
    }

    let probs = scenarios.probabilities();
    let mut blocks = Vec::with_capacity(scenarios.len());
    let mut recourse = Vec::with_capacity(scenarios.len());
    let mut excess = Vec::with_capacity(scenarios.len());
    for sc in &scenarios.scenarios {
        let block = add_block(&mut m, instance, &dist, sc, StagedSource::Shipments(&ship));
        // A closed hub holds no stock, so nothing leaves it. Implied for
        // integer points, but it keeps a fractional activation from
        // dispatching at full strength in the relaxation.
        for nv in &block.nodes {
            for (k, &l) in nv.types.iter().enumerate() {
                for d in 0..hubs {
                    let stock_ub: f64 = ship[l][d].iter().map(|&y| m.var(y).ub).sum();
                    let most = f64::from(nv.required[k])
                        .min(stock_ub)
                        .min(instance.hubs[d].capacity_units as f64);
                    m.add_constraint(
                        format!(
                            "open_link[s{},{},{},{}]",
                            sc.id,
                            instance.nodes[nv.node].id,
                            instance.hubs[d].id,
                            instance.fcm_types[l].id
                        ),
                        [(nv.sent[k][d], 1.0), (open[d], -most)],
                        Sense::Le,
                        0.0,
                    );
                }
            }
        }
        let q = m.continuous(format!("Q[s{}]", sc.id), 0.0, block.offset);
        let eta = m.continuous(format!("eta[s{}]", sc.id), 0.0, f64::INFINITY);
        m.add_constraint(
            format!("recourse[s{}]", sc.id),
            [(q, 1.0)]
                .into_iter()
                .chain(block.terms.iter().map(|&(v, c)| (v, -c))),
            Sense::Eq,
            block.offset,
        );
        blocks.push(block);
        recourse.push(q);
        excess.push(eta);
    }
    let threshold = m.continuous("zeta", f64::NEG_INFINITY, f64::INFINITY);
    for (s, (&q, &eta)) in recourse.iter().zip(&excess).enumerate() {
        m.add_constraint(
            format!("cvar_excess[s{s}]"),
            [(eta, 1.0), (q, -1.0), (threshold, 1.0)],
            Sense::Ge,
            0.0,
        );
        m.set_objective_coef(q, (1.0 - lambda) * probs[s]);
        m.set_objective_coef(eta, lambda * probs[s] / (1.0 - alpha));
    }
    m.set_objective_coef(threshold, lambda);

    Ok(ExtensiveForm {
        model: m,
        layout: Layout {
            open,
            ship,
            blocks,
            recourse,
            threshold,
            excess,
            probs,
            setup_cost,
            ship_cost,
            lambda,
            alpha,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shipment {
    pub fcm: String,
    pub hub: String,
    pub supplier: String,
    pub units: u32,
}

/// Currency amounts of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub setup: f64,
    pub transport: f64,
    /// Probability-weighted recourse cost.
    pub expected_recourse: f64,
    /// CVaR of the recourse cost at `alpha`.
    pub cvar: f64,
    /// Threshold attaining the CVaR.
    pub zeta: f64,
    /// `setup + transport + (1 − lambda)·expected_recourse + lambda·cvar`.
    pub total: f64,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOnePlan {
    /// Hub ids in instance order with their activation.
    pub hubs: Vec<(String, bool)>,
    /// Nonzero shipments.
    pub shipments: Vec<Shipment>,
    /// Units per hub and type after shipping.
    pub staging: Staging,
    pub breakdown: CostBreakdown,
    /// Optimal recourse cost per scenario with the plan fixed.
    pub scenario_costs: Vec<f64>,
    /// Recourse cost per scenario as carried inside the extensive form.
    pub block_costs: Vec<f64>,
    /// `ζ + Σ p_s η_s / (1 − α)` from the extensive form.
    pub cvar_epigraph: f64,
    /// Threshold `ζ` matching `cvar_epigraph`.
    pub zeta_epigraph: f64,
    /// Per-scenario CVaR excess `η_s` matching `cvar_epigraph`.
    pub eta: Vec<f64>,
    pub solver: SolverStats,
}

impl StageOnePlan {
    pub fn is_open(&self, hub: &str) -> bool {
        self.hubs.iter().any(|(h, open)| h == hub && *open)
    }

    pub fn load(path: &Path) -> Result<StageOnePlan> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// A plan that opens nothing and ships nothing; used as a baseline.
    pub fn empty(instance: &Instance) -> StageOnePlan {
        StageOnePlan {
            hubs: instance
                .hubs
                .iter()
                .map(|h| (h.id.clone(), false))
                .collect(),
            shipments: Vec::new(),
            staging: Staging::empty(instance),
            breakdown: CostBreakdown {
                setup: 0.0,
                transport: 0.0,
                expected_recourse: 0.0,
                cvar: 0.0,
                zeta: 0.0,
                total: 0.0,
                lambda: instance.risk.lambda,
                alpha: instance.risk.alpha,
            },
            scenario_costs: Vec::new(),
            block_costs: Vec::new(),
            cvar_epigraph: 0.0,
            zeta_epigraph: 0.0,
            eta: Vec::new(),
            solver: SolverStats {
                status: crate::milp::SolveStatus::Optimal,
                time_limited: false,
                objective: 0.0,
                nodes: 0,
                lp_iterations: 0,
                solve_time_s: 0.0,
                variables: 0,
                constraints: 0,
            },
        }
    }
}

pub fn solve_plan(instance: &Instance, scenarios: &ScenarioSet) -> Result<StageOnePlan> {
    solve_plan_with(instance, scenarios, &MipOptions::default())
}

/// Solves the extensive form and reports the plan with its cost breakdown.
///
/// When the time limit is hit with an incumbent, the incumbent is returned
/// with `solver.time_limited` set; without one the timeout is an error.
pub fn solve_plan_with(
    instance: &Instance,
    scenarios: &ScenarioSet,
    opts: &MipOptions,
) -> Result<StageOnePlan> {
    let form = build_extensive_form(instance, scenarios)?;
    let (sol, time_limited) = match solve_mip_with(&form.model, opts) {
        Ok(sol) => (sol, false),
        Err(KernelError::Timeout {
            incumbent: Some(sol),
            ..
        }) => (*sol, true),
        Err(e) => return Err(e.into()),
    };
    if !sol.is_optimal() {
        return Err(Error::Infeasible(format!(
            "extensive form returned {:?}; shortfalls are penalized, so this is a modeling bug",
            sol.status
        )));
    }
    let violations = check_solution(&form.model, &sol.values);
    if !violations.is_empty() {
        return Err(Error::SelfCheck(format!(
            "plan violates {} rows or bounds, first: {:?}",
            violations.len(),
            violations[0]
        )));
    }
    let stats = SolverStats::new(&form.model, &sol, time_limited);
    extract_plan(
        instance,
        scenarios,
        &form,
        &sol.values,
        sol.objective,
        stats,
        opts,
    )
}

fn extract_plan(
    instance: &Instance,
    scenarios: &ScenarioSet,
    form: &ExtensiveForm,
    values: &[f64],
    objective_scaled: f64,
    solver: SolverStats,
    opts: &MipOptions,
) -> Result<StageOnePlan> {
    let lay = &form.layout;
    let int = |v: Var| values[v.0].round();
    let (lambda, alpha) = (lay.lambda, lay.alpha);

    let mut staging = Staging::empty(instance);
    let mut shipments = Vec::new();
    let mut setup = 0.0;
    let mut transport = 0.0;
    for (d, h) in instance.hubs.iter().enumerate() {
        setup += lay.setup_cost[d] * int(lay.open[d]);
        for (l, t) in instance.fcm_types.iter().enumerate() {
            for (g, s) in instance.suppliers.iter().enumerate() {
                let units = int(lay.ship[l][d][g]);
                transport += lay.ship_cost[l][d][g] * units;
                if units > 0.0 {
                    staging.units[d][l] += units as u32;
                    shipments.push(Shipment {
                        fcm: t.id.clone(),
                        hub: h.id.clone(),
                        supplier: s.id.clone(),
                        units: units as u32,
                    });
                }
            }
        }
    }

    // Supplier inventory and hub capacity, exact on the rounded shipments.
    for (l, t) in instance.fcm_types.iter().enumerate() {
        for g in 0..instance.suppliers.len() {
            let out: f64 = (0..instance.hubs.len())
                .map(|d| int(lay.ship[l][d][g]))
                .sum();
            if out > instance.inventory(g, &t.id) as f64 {
                return Err(Error::SelfCheck(format!(
                    "supplier {} ships {out} units of {} beyond inventory",
                    instance.suppliers[g].id, t.id
                )));
            }
        }
    }
    for (d, h) in instance.hubs.iter().enumerate() {
        let held: u32 = staging.units[d].iter().sum();
        if f64::from(held) > h.capacity_units as f64 * int(lay.open[d]) {
            return Err(Error::SelfCheck(format!(
                "hub {} holds {held} units (open = {})",
                h.id,
                int(lay.open[d])
            )));
        }
    }

    for block in &lay.blocks {
        crate::dispatch::verify_block(instance, block, values, Some(&staging))?;
    }
    let block_scaled: Vec<f64> = lay
        .blocks
        .iter()
        .map(|b| {
            let (s, r) = b.cost_parts(values);
            s + r
        })
        .collect();

    for (s, (&q, &c)) in lay.recourse.iter().zip(&block_scaled).enumerate() {
        if (values[q.0] - c).abs() > 1e-6 * c.abs().max(1.0) {
            return Err(Error::SelfCheck(format!(
                "scenario {s}: recourse variable {} differs from its block cost {c}",
                values[q.0]
            )));
        }
    }

    // CVaR part as the extensive form carries it. With lambda = 0 the
    // threshold and excess variables are free of cost and arbitrary, so the
    // epigraph is re-solved on the block costs.
    let (epi_scaled, zeta_scaled, eta_scaled) = if lambda > 0.0 {
        let zeta = values[lay.threshold.0];
        let eta: Vec<f64> = lay.excess.iter().map(|v| values[v.0]).collect();
        let cvar = zeta + dot(&lay.probs, &eta) / (1.0 - alpha);
        (cvar, zeta, eta)
    } else {
        cvar_epigraph(&block_scaled, &lay.probs, alpha)?
    };

    let raw_total =
        setup + transport + (1.0 - lambda) * dot(&lay.probs, &block_scaled) + lambda * epi_scaled;
    if (raw_total - objective_scaled).abs() > 1e-6 * objective_scaled.abs().max(1.0) {
        return Err(Error::SelfCheck(format!(
            "breakdown {} does not reproduce the solver objective {}",
            unscale_cost(raw_total),
            solver.objective
        )));
    }

    let decisions = evaluate_plan_with(instance, &staging, scenarios, opts)?;
    let scenario_costs: Vec<f64> = decisions.iter().map(|d| d.recourse_cost).collect();
    let block_costs: Vec<f64> = block_scaled.iter().map(|&c| unscale_cost(c)).collect();
    let probs = &lay.probs;
    let expected = dot(probs, &scenario_costs);
    let (cvar, zeta) = cvar_discrete(&scenario_costs, probs, alpha)?;
    let setup = unscale_cost(setup);
    let transport = unscale_cost(transport);
    let total = setup + transport + (1.0 - lambda) * expected + lambda * cvar;
    let cvar_epi = unscale_cost(epi_scaled);

    if !solver.time_limited {
        for (s, (&fixed, &block)) in scenario_costs.iter().zip(&block_costs).enumerate() {
            if fixed > block + 1e-6 * block.abs().max(1.0) {
                return Err(Error::SelfCheck(format!(
                    "scenario {s}: re-solved recourse {fixed} exceeds the extensive form's {block}"
                )));
            }
        }
        if (cvar - cvar_epi).abs() > 1e-7 * cvar.abs().max(1.0) {
            return Err(Error::SelfCheck(format!(
                "linearized CVaR {cvar_epi} differs from the discrete CVaR {cvar}"
            )));
        }
        if (total - solver.objective).abs() > 1e-6 * solver.objective.abs().max(1.0) {
            return Err(Error::SelfCheck(format!(
                "plan total {total} differs from the solver objective {}",
                solver.objective
            )));
        }
    }

    Ok(StageOnePlan {
        hubs: instance
            .hubs
            .iter()
            .zip(&lay.open)
            .map(|(h, &z)| (h.id.clone(), int(z) == 1.0))
            .collect(),
        shipments,
        staging,
        breakdown: CostBreakdown {
            setup,
            transport,
            expected_recourse: expected,
            cvar,
            zeta,
            total,
            lambda,
            alpha,
        },
        scenario_costs,
        block_costs,
        cvar_epigraph: cvar_epi,
        zeta_epigraph: unscale_cost(zeta_scaled),
        eta: eta_scaled.iter().map(|&e| unscale_cost(e)).collect(),
        solver,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `min ζ + Σ p_s η_s / (1 − α)` subject to `η_s >= cost_s − ζ`, `η >= 0`,
/// solved by the kernel on fixed costs.
fn cvar_epigraph(costs: &[f64], probs: &[f64], alpha: f64) -> Result<(f64, f64, Vec<f64>)> {
    let mut m = MilpModel::new("cvar-epigraph");
    let zeta = m.continuous("zeta", f64::NEG_INFINITY, f64::INFINITY);
    m.set_objective_coef(zeta, 1.0);
    let eta: Vec<Var> = (0..costs.len())
        .map(|s| {
            let e = m.continuous(format!("eta[s{s}]"), 0.0, f64::INFINITY);
            m.set_objective_coef(e, probs[s] / (1.0 - alpha));
            m.add_constraint(
                format!("excess[s{s}]"),
                [(e, 1.0), (zeta, 1.0)],
                Sense::Ge,
                costs[s],
            );
            e
        })
        .collect();
    let sol = solve_lp(&m)?;
    if !sol.is_optimal() {
        return Err(Error::Infeasible(format!(
            "CVaR epigraph returned {:?}",
            sol.status
        )));
    }
    Ok((
        sol.objective,
        sol.value(zeta),
        eta.iter().map(|&e| sol.value(e)).collect(),
    ))
}

/// Fixes the staging and solves every scenario's dispatch independently.
pub fn evaluate_plan(
    instance: &Instance,
    plan: &StageOnePlan,
    scenarios: &ScenarioSet,
) -> Result<Vec<DispatchDecision>> {
    evaluate_plan_with(instance, &plan.staging, scenarios, &MipOptions::default())
}

/// Like [`evaluate_plan`] for an arbitrary staging. Scenarios are solved
/// in parallel on the current rayon pool; results keep scenario order.
pub fn evaluate_plan_with(
    instance: &Instance,
    staging: &Staging,
    scenarios: &ScenarioSet,
    opts: &MipOptions,
) -> Result<Vec<DispatchDecision>> {
    scenarios
        .scenarios
        .par_iter()
        .map(|sc| solve_stage2_with(instance, staging, sc, opts))
        .collect()
}
