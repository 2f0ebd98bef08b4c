//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance suite. The oracles work from the problem definition, not from
//! the MILP formulations they check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fcm_core::dispatch::{activation_minutes, scale_cost, Aggregate, NodeTrace, Staging};
use fcm_core::scenario::{trapezoid, Range};
use fcm_core::{
    distance_matrix, DemandShockScenario, DistanceMatrix, GenConfig, Instance, NodeShock,
    ScenarioSet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Two hubs on a three-bus line, one supplier, one storage type, one data
/// center.
pub fn toy_instance() -> Instance {
    Instance::from_json(
        &json!({
            "fcm_types": [{
                "id": "BESS", "category": "BESS",
                "unit_power_rating": 200.0, "unit_energy_rating": 400.0,
                "eta_ch": 0.95, "eta_dis": 0.95, "unit_ramp_limit": 100.0,
                "unit_transport_cost": 2.0, "activation_lead_time": 5.0
            }],
            "suppliers": [{ "id": "S1", "bus": 1, "inventory": { "BESS": 3 } }],
            "hubs": [
                { "id": "H1", "bus": 2, "setup_cost": 100.0, "capacity_units": 2 },
                { "id": "H2", "bus": 3, "setup_cost": 50.0, "capacity_units": 2 }
            ],
            "nodes": [{
                "id": "DC", "bus": 3, "base_load": 500.0, "is_data_center": true,
                "volatility_weight": 1.0, "stabilize_window": 30.0,
                "shortfall_penalty": { "BESS": 1000.0 }
            }],
            "network": {
                "buses": [1, 2, 3],
                "lines": [
                    { "from": 1, "to": 2, "length_km": 1.0 },
                    { "from": 2, "to": 3, "length_km": 2.0 }
                ]
            },
            "risk": { "alpha": 0.9, "lambda": 0.5, "gamma": 1.0, "travel_speed": 1.0 },
            "time_step_minutes": 5.0
        })
        .to_string(),
    )
    .expect("toy instance parses")
}

/// Generator settings matching `instance`, with an even type split.
pub fn gen_config(instance: &Instance, count: usize, seed: u64) -> GenConfig {
    let share = 1.0 / instance.fcm_types.len() as f64;
    GenConfig {
        scenario_count: count,
        seed,
        shocks_per_scenario: Range { low: 1, high: 1 },
        magnitude_fraction: Range {
            low: 0.3,
            high: 0.8,
        },
        ramp_step_fraction: Range {
            low: 0.2,
            high: 0.5,
        },
        sign_mix: 0.7,
        duration_hours: Range {
            low: 0.25,
            high: 1.0,
        },
        type_split: instance
            .fcm_types
            .iter()
            .map(|t| (t.id.clone(), share))
            .collect(),
    }
}

/// A shock on `node` with explicit requirements and a trapezoid profile of
/// `steps` steps peaking at `peak_kw`.
pub fn shock(
    instance: &Instance,
    node: &str,
    requirement: &[(&str, u32)],
    peak_kw: f64,
    steps: usize,
) -> NodeShock {
    let slew = (peak_kw.abs() / 2.0).max(1.0);
    NodeShock {
        node: node.to_string(),
        requirement: requirement
            .iter()
            .map(|&(f, r)| (f.to_string(), r))
            .collect(),
        ramp_profile: trapezoid(peak_kw, slew, steps),
        duration: steps as f64 * instance.time_step_minutes / 60.0,
    }
}

/// Equiprobable set over the given shock lists.
pub fn scenario_set(instance: &Instance, shocks: Vec<Vec<NodeShock>>) -> ScenarioSet {
    let n = shocks.len();
    ScenarioSet {
        config: gen_config(instance, n, 0),
        seed: 0,
        time_step_minutes: instance.time_step_minutes,
        scenarios: shocks
            .into_iter()
            .enumerate()
            .map(|(id, shocks)| DemandShockScenario {
                id,
                probability: 1.0 / n as f64,
                shocks,
            })
            .collect(),
    }
}

/// Random instance within the acceptance bounds: at most two suppliers,
/// hubs, FCM types and nodes, inventories of at most two units.
pub fn random_tiny_instance(rng: &mut ChaCha8Rng) -> Instance {
    let types = rng.gen_range(1..=2);
    let suppliers = rng.gen_range(1..=2);
    let hubs = rng.gen_range(1..=2);
    let nodes = rng.gen_range(1..=2);
    let buses: Vec<u32> = (1..=5).collect();
    let lines: Vec<_> = (1..5u32)
        .map(|b| json!({ "from": b, "to": b + 1, "length_km": 0.25 * f64::from(rng.gen_range(1..=12)) }))
        .collect();
    let type_ids: Vec<String> = (0..types).map(|l| format!("T{l}")).collect();
    let fcm_types: Vec<_> = type_ids
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let storage = l == 0;
            json!({
                "id": id,
                "category": if storage { "BESS" } else { "FAST_GEN" },
                "unit_power_rating": 100.0,
                "unit_energy_rating": if storage { 200.0 } else { 0.0 },
                "eta_ch": 0.9, "eta_dis": 0.9, "unit_ramp_limit": 50.0,
                "unit_transport_cost": f64::from(rng.gen_range(0..=4)),
                "activation_lead_time": f64::from(rng.gen_range(0..=10))
            })
        })
        .collect();
    let pick_bus = |rng: &mut ChaCha8Rng| buses[rng.gen_range(0..buses.len())];
    let suppliers: Vec<_> = (0..suppliers)
        .map(|g| {
            let inv: BTreeMap<&String, i64> =
                type_ids.iter().map(|t| (t, rng.gen_range(0..=2))).collect();
            json!({ "id": format!("G{g}"), "bus": pick_bus(rng), "inventory": inv })
        })
        .collect();
    let hubs: Vec<_> = (0..hubs)
        .map(|d| {
            json!({
                "id": format!("D{d}"), "bus": pick_bus(rng),
                "setup_cost": f64::from(rng.gen_range(0..=300)),
                "capacity_units": rng.gen_range(0..=3)
            })
        })
        .collect();
    let nodes: Vec<_> = (0..nodes)
        .map(|i| {
            let pen: BTreeMap<&String, f64> = type_ids
                .iter()
                .map(|t| (t, f64::from(rng.gen_range(0..=500))))
                .collect();
            json!({
                "id": format!("N{i}"), "bus": pick_bus(rng),
                "base_load": f64::from(rng.gen_range(0..=400)),
                "is_data_center": i == 0,
                "volatility_weight": 1.0,
                "stabilize_window": f64::from(rng.gen_range(5..=30)),
                "shortfall_penalty": pen
            })
        })
        .collect();
    let alpha = [0.0, 0.5, 0.9][rng.gen_range(0..3)];
    let lambda = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
    let risk = json!({
        "alpha": alpha,
        "lambda": lambda,
        "gamma": f64::from(rng.gen_range(0..=2)) * 0.5,
        "travel_speed": 0.5
    });
    Instance::from_json(
        &json!({
            "fcm_types": fcm_types, "suppliers": suppliers, "hubs": hubs, "nodes": nodes,
            "network": { "buses": buses, "lines": lines },
            "risk": risk, "time_step_minutes": 5.0
        })
        .to_string(),
    )
    .expect("random instance parses")
}

/// Random equiprobable scenarios, each shocking a nonempty subset of nodes
/// with requirements of at most `max_req` units per type.
pub fn random_scenarios(
    rng: &mut ChaCha8Rng,
    instance: &Instance,
    count: usize,
    max_req: u32,
) -> ScenarioSet {
    let shocks = (0..count)
        .map(|_| {
            let mut picked: Vec<usize> = (0..instance.nodes.len())
                .filter(|_| rng.gen_bool(0.6))
                .collect();
            if picked.is_empty() {
                picked.push(rng.gen_range(0..instance.nodes.len()));
            }
            picked
                .into_iter()
                .map(|i| {
                    let req: Vec<(&str, u32)> = instance
                        .fcm_types
                        .iter()
                        .map(|t| (t.id.as_str(), rng.gen_range(0..=max_req)))
                        .collect();
                    let peak = if rng.gen_bool(0.7) { 150.0 } else { -150.0 };
                    shock(
                        instance,
                        &instance.nodes[i].id,
                        &req,
                        peak,
                        rng.gen_range(1..=6),
                    )
                })
                .collect()
        })
        .collect();
    scenario_set(instance, shocks)
}

/// Random staging of up to `max_units` units per hub and type.
pub fn random_staging(rng: &mut ChaCha8Rng, instance: &Instance, max_units: u32) -> Staging {
    Staging {
        units: (0..instance.hubs.len())
            .map(|_| {
                (0..instance.fcm_types.len())
                    .map(|_| rng.gen_range(0..=max_units))
                    .collect()
            })
            .collect(),
    }
}

/// All-pairs shortest paths by Floyd–Warshall over the line list.
pub fn floyd_warshall(instance: &Instance) -> BTreeMap<(u32, u32), f64> {
    let buses = &instance.network.buses;
    let n = buses.len();
    let idx = |b: u32| buses.iter().position(|&x| x == b).unwrap();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in &instance.network.lines {
        let (a, b) = (idx(l.from), idx(l.to));
        d[a][b] = d[a][b].min(l.length_km);
        d[b][a] = d[b][a].min(l.length_km);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            out.insert((buses[i], buses[j]), d[i][j]);
        }
    }
    out
}

/// Every way to split at most `cap` units among `slots` slots, each slot
/// limited by `limits`.
fn splits(limits: &[u32], cap: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &lim in limits {
        let mut next = Vec::new();
        for p in &out {
            let used: u32 = p.iter().sum();
            for k in 0..=lim.min(cap - used) {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Brute-force recourse cost, in scaled currency units, of `scenario`
/// against fixed `staged` stock.
///
/// Enumerates the units every hub sends to every shocked node per type.
/// A node counts as stabilized when every required type is fully covered
/// and every hub sending to it activates within its window; the optimal
/// dispatch always stabilizes such a node since that only removes cost.
pub fn brute_force_recourse(
    instance: &Instance,
    dist: &DistanceMatrix,
    staged: &Staging,
    scenario: &DemandShockScenario,
) -> f64 {
    struct Pair {
        node: usize,
        fcm: usize,
        required: u32,
    }
    let hubs = instance.hubs.len();
    let mut pairs = Vec::new();
    for sh in &scenario.shocks {
        let i = instance.node_index(&sh.node).unwrap();
        for (l, t) in instance.fcm_types.iter().enumerate() {
            let r = sh.required(&t.id);
            if r > 0 {
                pairs.push(Pair {
                    node: i,
                    fcm: l,
                    required: r,
                });
            }
        }
    }
    let options: Vec<Vec<Vec<u32>>> = pairs
        .iter()
        .map(|p| splits(&vec![p.required; hubs], p.required))
        .collect();

    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; pairs.len()];
    loop {
        let mut used = vec![vec![0u32; instance.fcm_types.len()]; hubs];
        for (k, p) in pairs.iter().enumerate() {
            for d in 0..hubs {
                used[d][p.fcm] += options[k][choice[k]][d];
            }
        }
        let fits = (0..hubs)
            .all(|d| (0..instance.fcm_types.len()).all(|l| used[d][l] <= staged.units[d][l]));
        if fits {
            let mut cost = 0.0;
            for sh in &scenario.shocks {
                let i = instance.node_index(&sh.node).unwrap();
                let node = &instance.nodes[i];
                let mut covered = true;
                let mut in_time = true;
                for (k, p) in pairs.iter().enumerate().filter(|(_, p)| p.node == i) {
                    let split = &options[k][choice[k]];
                    let served: u32 = split.iter().sum();
                    cost += scale_cost(node.penalty(&instance.fcm_types[p.fcm].id))
                        * f64::from(p.required - served);
                    covered &= served == p.required;
                    for (d, &u) in split.iter().enumerate() {
                        if u > 0
                            && activation_minutes(instance, dist, d, i, p.fcm)
                                > node.stabilize_window
                        {
                            in_time = false;
                        }
                    }
                }
                if !(covered && in_time) {
                    cost += scale_cost(instance.risk.gamma * node.base_load * sh.duration);
                }
            }
            best = best.min(cost);
        }
        // Odometer step over all pair options.
        let mut k = 0;
        loop {
            if k == pairs.len() {
                return best;
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// CVaR by minimizing over every candidate threshold, written out
/// independently of the library.
pub fn cvar_by_candidates(costs: &[f64], probs: &[f64], alpha: f64) -> f64 {
    costs
        .iter()
        .map(|&z| {
            z + costs
                .iter()
                .zip(probs)
                .map(|(&c, &p)| p * (c - z).max(0.0))
                .sum::<f64>()
                / (1.0 - alpha)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Optimal extensive-form objective (scaled) by enumerating every hub
/// activation and shipment vector, pricing each scenario with
/// [`brute_force_recourse`].
pub fn decomposition_oracle(instance: &Instance, set: &ScenarioSet) -> f64 {
    let dist = distance_matrix(&instance.network).unwrap();
    let (hubs, types, sups) = (
        instance.hubs.len(),
        instance.fcm_types.len(),
        instance.suppliers.len(),
    );
    // Shipment slots in (type, hub, supplier) order.
    let mut limits = Vec::new();
    let mut prices = Vec::new();
    for t in &instance.fcm_types {
        for h in &instance.hubs {
            for (g, s) in instance.suppliers.iter().enumerate() {
                let inv = instance.inventory(g, &t.id).max(0);
                limits.push(inv.min(h.capacity_units.max(0)) as u32);
                prices.push(scale_cost(t.unit_transport_cost * dist.km(s.bus, h.bus)));
            }
        }
    }
    let slot = |l: usize, d: usize, g: usize| (l * hubs + d) * sups + g;
    let probs = set.probabilities();
    let (alpha, lambda) = (instance.risk.alpha, instance.risk.lambda);
    let mut cache: BTreeMap<Vec<Vec<u32>>, Vec<f64>> = BTreeMap::new();

    let mut best = f64::INFINITY;
    let mut y = vec![0u32; limits.len()];
    loop {
        let inventory_ok = (0..types).all(|l| {
            (0..sups).all(|g| {
                let shipped: u32 = (0..hubs).map(|d| y[slot(l, d, g)]).sum();
                i64::from(shipped) <= instance.inventory(g, &instance.fcm_types[l].id)
            })
        });
        let staged: Vec<Vec<u32>> = (0..hubs)
            .map(|d| {
                (0..types)
                    .map(|l| (0..sups).map(|g| y[slot(l, d, g)]).sum())
                    .collect()
            })
            .collect();
        let capacity_ok = (0..hubs)
            .all(|d| i64::from(staged[d].iter().sum::<u32>()) <= instance.hubs[d].capacity_units);
        if inventory_ok && capacity_ok {
            // A hub is opened exactly when it receives something.
            let setup: f64 = (0..hubs)
                .filter(|&d| staged[d].iter().any(|&u| u > 0))
                .map(|d| scale_cost(instance.hubs[d].setup_cost))
                .sum();
            let transport: f64 = y.iter().zip(&prices).map(|(&u, &c)| f64::from(u) * c).sum();
            let q = cache
                .entry(staged.clone())
                .or_insert_with(|| {
                    let staging = Staging {
                        units: staged.clone(),
                    };
                    set.scenarios
                        .iter()
                        .map(|s| brute_force_recourse(instance, &dist, &staging, s))
                        .collect()
                })
                .clone();
            let mean: f64 = q.iter().zip(&probs).map(|(a, p)| a * p).sum();
            let cvar = cvar_by_candidates(&q, &probs, alpha);
            best = best.min(setup + transport + (1.0 - lambda) * mean + lambda * cvar);
        }
        let mut k = 0;
        loop {
            if k == y.len() {
                return best;
            }
            y[k] += 1;
            if y[k] <= limits[k] {
                break;
            }
            y[k] = 0;
            k += 1;
        }
    }
}

/// Step-by-step re-simulation of a trace's delivered power: rebuilds the
/// storage split, the state-of-charge recursion and the residual energy.
pub struct Resimulated {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    pub soc: Vec<f64>,
    pub residual_kwh: f64,
}

pub fn resimulate(trace: &NodeTrace, dt: f64) -> Resimulated {
    let a = &trace.aggregate;
    let mut level = trace.soc[0];
    let mut out = Resimulated {
        charge: Vec::new(),
        discharge: Vec::new(),
        soc: vec![level],
        residual_kwh: 0.0,
    };
    for (&p, &req) in trace.delivered.iter().zip(&trace.required) {
        let discharge = if p > a.unlimited_power {
            p - a.unlimited_power
        } else {
            0.0
        };
        let charge = if p < 0.0 { -p } else { 0.0 };
        level = level + a.eta_ch * charge * dt - discharge * dt / a.eta_dis;
        let gap = if req >= 0.0 { req - p } else { p - req };
        let unmet = if gap > 0.0 { gap } else { 0.0 };
        out.residual_kwh += unmet * dt;
        out.charge.push(charge);
        out.discharge.push(discharge);
        out.soc.push(level);
    }
    out
}

/// Random pooled ratings and a one-signed random profile, with the storage
/// starting somewhere in `[0, energy]`. Half the cases are scaled so the
/// ratings comfortably cover the profile.
pub struct TrackingCase {
    pub aggregate: Aggregate,
    pub profile: Vec<f64>,
    pub dt: f64,
    pub soc0: f64,
}

pub fn random_tracking_case(rng: &mut ChaCha8Rng) -> TrackingCase {
    let storage = rng.gen_bool(0.8);
    let energy = if storage {
        rng.gen_range(10.0..400.0)
    } else {
        0.0
    };
    let mut aggregate = Aggregate {
        unlimited_power: if rng.gen_bool(0.4) {
            rng.gen_range(0.0..150.0)
        } else {
            0.0
        },
        storage_power: if storage {
            rng.gen_range(10.0..300.0)
        } else {
            0.0
        },
        energy,
        ramp: rng.gen_range(5.0..120.0),
        eta_ch: if storage {
            rng.gen_range(0.7..1.0)
        } else {
            1.0
        },
        eta_dis: if storage {
            rng.gen_range(0.7..1.0)
        } else {
            1.0
        },
    };
    let dt = [5.0, 15.0, 60.0][rng.gen_range(0..3)] / 60.0;
    let steps = rng.gen_range(1..=30);
    let sign = if rng.gen_bool(0.7) { 1.0 } else { -1.0 };
    // Random walk away from zero, clipped at zero.
    let mut level: f64 = 0.0;
    let mut profile: Vec<f64> = (0..steps)
        .map(|_| {
            level = (level + rng.gen_range(-40.0..80.0)).max(0.0);
            sign * level
        })
        .collect();
    let soc0 = energy * [0.0, 0.5, 1.0, rng.gen_range(0.0..1.0)][rng.gen_range(0..4)];

    if rng.gen_bool(0.5) {
        // Ratings with slack over the profile's peak, slew and energy.
        let peak = profile.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        let slew = max_slew(&profile);
        aggregate.ramp = aggregate.ramp.max(1.1 * slew);
        if sign > 0.0 {
            aggregate.unlimited_power = aggregate.unlimited_power.max(1.1 * peak);
        } else if storage {
            aggregate.storage_power = aggregate.storage_power.max(1.1 * peak);
            let need: f64 = profile.iter().map(|p| p.abs() * dt).sum::<f64>() * aggregate.eta_ch;
            aggregate.energy = aggregate.energy.max(soc0 + 1.1 * need);
        } else {
            profile.iter_mut().for_each(|p| *p = -*p);
            aggregate.unlimited_power = 1.1 * peak;
        }
    }
    TrackingCase {
        aggregate,
        profile,
        dt,
        soc0,
    }
}

/// Largest step change of a profile that starts from zero.
pub fn max_slew(profile: &[f64]) -> f64 {
    let mut prev = 0.0_f64;
    profile.iter().fold(0.0, |m: f64, &p| {
        let d = (p - prev).abs();
        prev = p;
        m.max(d)
    })
}

/// Sufficient conditions for following a one-signed profile exactly:
/// power covers the peak, the ramp covers every step change, and storage
/// holds enough energy (surges) or headroom (drops).
pub fn ratings_suffice(agg: &Aggregate, profile: &[f64], dt: f64, soc0: f64) -> bool {
    let peak = profile.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    if agg.ramp < max_slew(profile) {
        return false;
    }
    if profile.iter().all(|&p| p >= 0.0) {
        let from_storage: f64 = profile
            .iter()
            .map(|&p| (p - agg.unlimited_power).max(0.0) * dt)
            .sum();
        agg.max_power() >= peak && agg.eta_dis * soc0 >= from_storage
    } else if profile.iter().all(|&p| p <= 0.0) {
        let absorbed: f64 = profile.iter().map(|p| p.abs() * dt).sum();
        agg.storage_power >= peak && agg.eta_ch * absorbed <= agg.energy - soc0
    } else {
        false
    }
}

/// Checks a trace against the storage, ramp and conservation rules and the
/// independent re-simulation.
pub fn check_trace(trace: &NodeTrace, dt: f64) -> Result<(), String> {
    let a = &trace.aggregate;
    let tol = 1e-9 * (1.0 + a.energy + a.max_power());
    if !trace.violations.is_empty() {
        return Err(format!("violations: {:?}", trace.violations));
    }
    for (t, &s) in trace.soc.iter().enumerate() {
        if s < -tol || s > a.energy + tol {
            return Err(format!(
                "state of charge {s} outside [0, {}] at {t}",
                a.energy
            ));
        }
    }
    for (t, (&ch, &dis)) in trace.charge.iter().zip(&trace.discharge).enumerate() {
        if ch < 0.0 || dis < 0.0 || ch > a.storage_power + tol || dis > a.storage_power + tol {
            return Err(format!(
                "storage power ({ch}, {dis}) outside [0, {}] at {t}",
                a.storage_power
            ));
        }
    }
    let mut prev = 0.0;
    for (t, &p) in trace.delivered.iter().enumerate() {
        if (p - prev).abs() > a.ramp + tol {
            return Err(format!(
                "step change {} exceeds ramp {} at {t}",
                (p - prev).abs(),
                a.ramp
            ));
        }
        prev = p;
    }
    let sim = resimulate(trace, dt);
    if sim.soc != trace.soc || sim.charge != trace.charge || sim.discharge != trace.discharge {
        return Err("state of charge recursion differs from re-simulation".into());
    }
    if sim.residual_kwh != trace.residual_kwh {
        return Err(format!(
            "residual {} but re-simulated {}",
            trace.residual_kwh, sim.residual_kwh
        ));
    }
    let discharged: f64 = trace.discharge.iter().map(|d| d * dt).sum();
    let charged: f64 = trace.charge.iter().map(|c| c * dt).sum();
    if discharged > a.eta_dis * (trace.soc[0] + a.eta_ch * charged) + tol {
        return Err(format!(
            "discharged {discharged} kWh exceeds the stored energy"
        ));
    }
    Ok(())
}

/// Compares a currency objective with a scaled oracle value. Scaled costs
/// are integers; only the probability and tail weights of the blend can
/// leave float roundoff.
pub fn scaled_eq(objective: f64, scaled: f64) -> bool {
    (objective * 1e4 - scaled).abs() <= 1e-9 * scaled.abs().max(1.0)
}
