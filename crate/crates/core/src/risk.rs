//! Energy not served, discrete CVaR, and the per-run resilience report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchDecision, TrackingResult};
use crate::error::{write_json, Error, Result};
use crate::instance::Instance;
use crate::planner::StageOnePlan;
use crate::scenario::ScenarioSet;

/// Energy not served (kWh) by a node with load `load_kw` over `hours` when
/// it is not stabilized.
pub fn ens(stabilized: bool, load_kw: f64, hours: f64) -> f64 {
    let u = if stabilized { 1.0 } else { 0.0 };
    (1.0 - u) * load_kw * hours
}

/// CVaR of a discrete cost distribution at level `alpha`, with the
/// threshold attaining it.
///
/// Minimizes `ζ + Σ p_s (c_s − ζ)⁺ / (1 − α)` over ζ. The function is
/// piecewise linear with breakpoints at the costs, so only those are tried;
/// ties go to the smallest ζ.
pub fn cvar_discrete(costs: &[f64], probs: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if costs.is_empty() {
        return Err(Error::Domain("no costs".into()));
    }
    if costs.len() != probs.len() {
        return Err(Error::Domain(format!(
            "{} costs but {} probabilities",
            costs.len(),
            probs.len()
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if probs.iter().any(|&p| p.is_nan() || p < 0.0) || costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain(
            "probabilities must be >= 0 and costs finite".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("probabilities sum to {total}")));
    }

    let mut candidates = costs.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let scale = 1.0 / (1.0 - alpha);
    let mut best: Option<(f64, f64)> = None;
    for zeta in candidates {
        let tail: f64 = costs
            .iter()
            .zip(probs)
            .map(|(&c, &p)| p * (c - zeta).max(0.0))
            .sum();
        let value = zeta + scale * tail;
        if best.is_none_or(|(b, _)| value < b) {
            best = Some((value, zeta));
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRisk {
    pub scenario_id: usize,
    pub probability: f64,
    pub recourse_cost: f64,
    /// kWh per shocked node.
    pub ens_kwh: BTreeMap<String, f64>,
    pub ens_total: f64,
    pub residual_kwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    pub scenarios: Vec<ScenarioRisk>,
    pub first_stage_cost: f64,
    pub expected_cost: f64,
    /// Threshold ζ* attaining the CVaR.
    pub var_threshold: f64,
    pub cvar: f64,
    pub expected_ens_kwh: f64,
    pub expected_residual_kwh: f64,
    pub total_residual_kwh: f64,
    pub plan_objective: f64,
}

impl RiskReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// One row per scenario: id, recourse cost, total ENS, tracking
    /// residual.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(e, path),
            other => Error::Shape(format!("{other:?}")),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["scenario_id", "Q_s", "ens_total", "residual_kwh"])
            .map_err(io)?;
        for s in &self.scenarios {
            w.write_record([
                s.scenario_id.to_string(),
                s.recourse_cost.to_string(),
                s.ens_total.to_string(),
                s.residual_kwh.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(e, path))
    }
}

/// Combines per-scenario dispatch and tracking into a report. The discrete
/// CVaR of the dispatch costs must agree with the plan's linearized CVaR.
pub fn aggregate_report(
    instance: &Instance,
    plan: &StageOnePlan,
    scenarios: &ScenarioSet,
    decisions: &[DispatchDecision],
    tracking: &[TrackingResult],
) -> Result<RiskReport> {
    let n = scenarios.len();
    if decisions.len() != n || tracking.len() != n {
        return Err(Error::Shape(format!(
            "{n} scenarios, {} dispatch results, {} tracking results",
            decisions.len(),
            tracking.len()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for ((sc, dec), tr) in scenarios.scenarios.iter().zip(decisions).zip(tracking) {
        if dec.scenario_id != sc.id || tr.scenario_id != sc.id {
            return Err(Error::Shape(format!(
                "scenario {} paired with dispatch {} and tracking {}",
                sc.id, dec.scenario_id, tr.scenario_id
            )));
        }
        let mut ens_kwh = BTreeMap::new();
        for nd in &dec.nodes {
            let load = instance
                .node(&nd.node)
                .map(|n| n.base_load)
                .ok_or_else(|| Error::Shape(format!("unknown node {}", nd.node)))?;
            ens_kwh.insert(nd.node.clone(), ens(nd.stabilized, load, nd.duration));
        }
        rows.push(ScenarioRisk {
            scenario_id: sc.id,
            probability: sc.probability,
            recourse_cost: dec.recourse_cost,
            ens_total: ens_kwh.values().sum(),
            ens_kwh,
            residual_kwh: tr.total_residual_kwh(),
        });
    }

    let probs: Vec<f64> = rows.iter().map(|r| r.probability).collect();
    let costs: Vec<f64> = rows.iter().map(|r| r.recourse_cost).collect();
    let alpha = plan.breakdown.alpha;
    let (cvar, zeta) = cvar_discrete(&costs, &probs, alpha)?;
    if !plan.solver.time_limited && (cvar - plan.cvar_epigraph).abs() > 1e-7 * cvar.abs().max(1.0) {
        return Err(Error::SelfCheck(format!(
            "dispatch CVaR {cvar} differs from the plan's linearized CVaR {}",
            plan.cvar_epigraph
        )));
    }
    let weighted =
        |f: fn(&ScenarioRisk) -> f64| rows.iter().map(|r| r.probability * f(r)).sum::<f64>();
    Ok(RiskReport {
        alpha,
        lambda: plan.breakdown.lambda,
        seed: scenarios.seed,
        first_stage_cost: plan.breakdown.setup + plan.breakdown.transport,
        expected_cost: weighted(|r| r.recourse_cost),
        var_threshold: zeta,
        cvar,
        expected_ens_kwh: weighted(|r| r.ens_total),
        expected_residual_kwh: weighted(|r| r.residual_kwh),
        total_residual_kwh: rows.iter().map(|r| r.residual_kwh).sum(),
        plan_objective: plan.breakdown.total,
        scenarios: rows,
    })
}
