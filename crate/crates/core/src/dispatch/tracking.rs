use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DispatchDecision;
use crate::instance::Instance;
use crate::scenario::DemandShockScenario;

/// Pooled ratings of all units dispatched to one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// kW from units without an energy limit (generators, demand response).
    /// They can only inject.
    pub unlimited_power: f64,
    /// kW of storage units, usable for discharge and charge.
    pub storage_power: f64,
    /// kWh of storage.
    pub energy: f64,
    /// kW per step across all units.
    pub ramp: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
}

impl Aggregate {
    pub fn max_power(&self) -> f64 {
        self.unlimited_power + self.storage_power
    }
}

/// Sums unit ratings per category. Storage efficiencies are weighted by
/// energy rating.
pub fn aggregate_units(instance: &Instance, units: &BTreeMap<String, u32>) -> Aggregate {
    let mut agg = Aggregate::default();
    let (mut w_ch, mut w_dis) = (0.0, 0.0);
    for (fcm, &n) in units {
        let Some(t) = instance.fcm(fcm) else { continue };
        let n = f64::from(n);
        agg.ramp += n * t.unit_ramp_limit;
        if t.category.is_storage() {
            let e = n * t.unit_energy_rating;
            agg.storage_power += n * t.unit_power_rating;
            agg.energy += e;
            w_ch += e * t.eta_ch;
            w_dis += e * t.eta_dis;
        } else {
            agg.unlimited_power += n * t.unit_power_rating;
        }
    }
    if agg.energy > 0.0 {
        agg.eta_ch = w_ch / agg.energy;
        agg.eta_dis = w_dis / agg.energy;
    } else {
        agg.eta_ch = 1.0;
        agg.eta_dis = 1.0;
    }
    agg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub node: String,
    pub aggregate: Aggregate,
    /// kW per step, signed like the ramp profile.
    pub required: Vec<f64>,
    /// kW per step; positive injects, negative absorbs.
    pub delivered: Vec<f64>,
    /// Storage charging power per step (kW, ≥ 0).
    pub charge: Vec<f64>,
    /// Storage discharging power per step (kW, ≥ 0).
    pub discharge: Vec<f64>,
    /// State of charge (kWh) at the start of each step plus the final value.
    pub soc: Vec<f64>,
    /// kWh of the profile not followed.
    pub residual_kwh: f64,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingResult {
    pub scenario_id: usize,
    pub step_hours: f64,
    pub nodes: Vec<NodeTrace>,
}

impl TrackingResult {
    pub fn total_residual_kwh(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual_kwh).sum()
    }

    pub fn violations(&self) -> impl Iterator<Item = &String> {
        self.nodes.iter().flat_map(|n| &n.violations)
    }
}

/// Energy drawn from storage if delivery starts at `p` and then falls by
/// `ramp` each step over `steps` steps.
fn drain_down(agg: &Aggregate, p: f64, steps: usize, dt: f64) -> f64 {
    (0..steps)
        .map(|k| (p - k as f64 * agg.ramp).max(0.0))
        .map(|q| (q - agg.unlimited_power).max(0.0) * dt / agg.eta_dis)
        .sum()
}

/// Energy pushed into storage if absorption starts at `q` and then falls by
/// `ramp` each step.
fn fill_down(agg: &Aggregate, q: f64, steps: usize, dt: f64) -> f64 {
    (0..steps)
        .map(|k| (q - k as f64 * agg.ramp).max(0.0))
        .map(|q| agg.eta_ch * q * dt)
        .sum()
}

/// Largest `p` in `[0, cap]` with `f(p) <= budget`, for nondecreasing `f`
/// with `f(0) = 0`.
fn largest_within(cap: f64, budget: f64, f: impl Fn(f64) -> f64) -> f64 {
    if cap <= 0.0 || f(cap) <= budget {
        return cap.max(0.0);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Greedy tracking of `profile` (kW per step of `dt` hours) by a pooled
/// aggregate whose storage starts at `soc0` kWh.
///
/// Each step delivers the requirement clamped to the power rating, the ramp
/// limit around the previous step, and the energy that still allows a
/// ramp-limited return to zero over the remaining steps. Storage follows
/// `soc' = soc + eta_ch·charge·dt − discharge·dt/eta_dis`.
pub fn track_profile(
    node: &str,
    agg: &Aggregate,
    profile: &[f64],
    dt: f64,
    soc0: f64,
) -> NodeTrace {
    let n = profile.len();
    let mut delivered = Vec::with_capacity(n);
    let mut charge = Vec::with_capacity(n);
    let mut discharge = Vec::with_capacity(n);
    let mut soc = Vec::with_capacity(n + 1);
    let mut residual = 0.0;
    let mut violations = Vec::new();
    let mut level = soc0;
    let mut prev = 0.0_f64;
    soc.push(level);

    for (t, &req) in profile.iter().enumerate() {
        let rem = n - t;
        let lo_power = (-agg.storage_power).max(prev - agg.ramp);
        let hi_power = agg.max_power().min(prev + agg.ramp);
        let want = req.max(lo_power).min(hi_power);
        let p = if want >= 0.0 {
            if drain_down(agg, want, rem, dt) <= level {
                want
            } else {
                largest_within(want, level, |p| drain_down(agg, p, rem, dt)).max(lo_power)
            }
        } else {
            let room = agg.energy - level;
            if fill_down(agg, -want, rem, dt) <= room {
                want
            } else {
                -largest_within(-want, room, |q| fill_down(agg, q, rem, dt)).max(-hi_power)
            }
        };

        let dis = (p - agg.unlimited_power).max(0.0);
        let ch = (-p).max(0.0);
        level = level + agg.eta_ch * ch * dt - dis * dt / agg.eta_dis;

        let unmet = if req >= 0.0 {
            (req - p).max(0.0)
        } else {
            (p - req).max(0.0)
        };
        residual += unmet * dt;

        let tol = 1e-9 * (1.0 + agg.max_power() + agg.energy);
        if (p - prev).abs() > agg.ramp + tol {
            violations.push(format!(
                "{node} step {t}: ramp {} exceeds {}",
                (p - prev).abs(),
                agg.ramp
            ));
        }
        if p > agg.max_power() + tol || -p > agg.storage_power + tol {
            violations.push(format!("{node} step {t}: power {p} outside rating"));
        }
        if level < -tol || level > agg.energy + tol {
            violations.push(format!(
                "{node} step {t}: state of charge {level} outside [0, {}]",
                agg.energy
            ));
        }

        delivered.push(p);
        charge.push(ch);
        discharge.push(dis);
        soc.push(level);
        prev = p;
    }

    NodeTrace {
        node: node.to_string(),
        aggregate: *agg,
        required: profile.to_vec(),
        delivered,
        charge,
        discharge,
        soc,
        residual_kwh: residual,
        violations,
    }
}

/// Tracks every shocked node of `scenario` with the units `decision` sent
/// to it.
pub fn simulate_tracking(
    decision: &DispatchDecision,
    scenario: &DemandShockScenario,
    instance: &Instance,
) -> TrackingResult {
    let dt = instance.time_step_hours();
    let nodes = scenario
        .shocks
        .iter()
        .map(|shock| {
            let mut units: BTreeMap<String, u32> = BTreeMap::new();
            for nd in decision.nodes.iter().filter(|n| n.node == shock.node) {
                for s in &nd.sent {
                    *units.entry(s.fcm.clone()).or_default() += s.units;
                }
            }
            let agg = aggregate_units(instance, &units);
            let soc0 = instance.initial_soc_fraction * agg.energy;
            track_profile(&shock.node, &agg, &shock.ramp_profile, dt, soc0)
        })
        .collect();
    TrackingResult {
        scenario_id: scenario.id,
        step_hours: dt,
        nodes,
    }
}

/// Residual unmet energy (kWh) per shocked node.
pub fn residual_to_metrics(tracking: &TrackingResult) -> BTreeMap<String, f64> {
    tracking
        .nodes
        .iter()
        .map(|n| (n.node.clone(), n.residual_kwh))
        .collect()
}
