//! Second-stage variables and rows for one scenario, shared by the
//! standalone dispatch model and the extensive form.

use crate::instance::{DistanceMatrix, FcmCategory, Instance};
use crate::milp::{MilpModel, Sense, Var};
use crate::scenario::DemandShockScenario;

use super::scale_cost;

/// Where the per-hub stock available to a scenario comes from.
pub(crate) enum StagedSource<'a> {
    /// Fixed units, indexed `[hub][fcm type]`.
    Fixed(&'a [Vec<u32>]),
    /// Shipment variables of the first stage, indexed
    /// `[fcm type][hub][supplier]`.
    Shipments(&'a [Vec<Vec<Var>>]),
}

/// Decision variables of one shocked node.
#[derive(Clone, Debug)]
pub(crate) struct NodeVars {
    /// Index into `instance.nodes`.
    pub node: usize,
    /// FCM type indices with a positive requirement, ascending.
    pub types: Vec<usize>,
    /// Requirement per entry of `types`.
    pub required: Vec<u32>,
    /// Units sent, `[type position][hub]`.
    pub sent: Vec<Vec<Var>>,
    /// Hub `d` serves type `l` of this node, `[type position][hub]`.
    pub serves: Vec<Vec<Var>>,
    pub stabilized: Var,
    pub response: Var,
    /// Activation time (minutes) from each hub, `[type position][hub]`.
    pub activation: Vec<Vec<f64>>,
    /// Scaled penalty per unit short, per entry of `types`.
    pub penalty: Vec<f64>,
    /// Scaled restoration cost charged when the node is not stabilized.
    pub restoration: f64,
    /// Hours.
    pub duration: f64,
}

/// The recourse cost of one scenario is `offset + terms·x` in scaled
/// currency units.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub scenario: usize,
    pub nodes: Vec<NodeVars>,
    pub terms: Vec<(Var, f64)>,
    pub offset: f64,
}

/// Activation time (minutes) of type `fcm` at `node` when sent from `hub`.
/// Demand response is a contract rather than a shipment, so it pays the
/// lead time only.
pub fn activation_minutes(
    instance: &Instance,
    dist: &DistanceMatrix,
    hub: usize,
    node: usize,
    fcm: usize,
) -> f64 {
    let t = &instance.fcm_types[fcm];
    let travel = match t.category {
        FcmCategory::DemandResponse => 0.0,
        _ => dist.km(instance.hubs[hub].bus, instance.nodes[node].bus) / instance.risk.travel_speed,
    };
    travel + t.activation_lead_time
}

/// Appends the second-stage block of `scenario` to `model`.
///
/// Per shocked node `i`, type `l` with positive requirement `r` and hub `d`:
/// units sent `x` in `[0, r]` and a binary `w` with `x <= r·w`; a
/// stabilization binary `u` and response time `t` with `t >= a_dl·w`,
/// `sum_d x >= r·u` and `t + M·u <= window + M` where `M = max a_dl`.
/// Per hub and type, the units sent across nodes stay within the staged
/// stock. Hubs whose activation time exceeds the window additionally get
/// `w + u <= 1`, and coverage is also required from in-window hubs alone.
pub(crate) fn add_block(
    model: &mut MilpModel,
    instance: &Instance,
    dist: &DistanceMatrix,
    scenario: &DemandShockScenario,
    staged: StagedSource<'_>,
) -> Block {
    let hubs = instance.hubs.len();
    let s = scenario.id;
    let mut nodes = Vec::with_capacity(scenario.shocks.len());
    let mut terms = Vec::new();
    let mut offset = 0.0;

    for shock in &scenario.shocks {
        let i = instance
            .node_index(&shock.node)
            .expect("scenario validated against instance");
        let node = &instance.nodes[i];
        let types: Vec<usize> = (0..instance.fcm_types.len())
            .filter(|&l| shock.required(&instance.fcm_types[l].id) > 0)
            .collect();
        let required: Vec<u32> = types
            .iter()
            .map(|&l| shock.required(&instance.fcm_types[l].id))
            .collect();
        let activation: Vec<Vec<f64>> = types
            .iter()
            .map(|&l| {
                (0..hubs)
                    .map(|d| activation_minutes(instance, dist, d, i, l))
                    .collect()
            })
            .collect();
        let big_m = activation.iter().flatten().fold(0.0_f64, |m, &a| m.max(a));

        let mut sent = Vec::with_capacity(types.len());
        let mut serves = Vec::with_capacity(types.len());
        for (k, &l) in types.iter().enumerate() {
            let fcm = &instance.fcm_types[l].id;
            let r = f64::from(required[k]);
            let x: Vec<Var> = (0..hubs)
                .map(|d| {
                    model.integer(
                        format!("x[s{s},{},{},{fcm}]", node.id, instance.hubs[d].id),
                        0.0,
                        r,
                    )
                })
                .collect();
            let w: Vec<Var> = (0..hubs)
                .map(|d| model.binary(format!("w[s{s},{},{},{fcm}]", node.id, instance.hubs[d].id)))
                .collect();
            sent.push(x);
            serves.push(w);
        }
        let u = model.binary(format!("u[s{s},{}]", node.id));
        let t = model.continuous(format!("t[s{s},{}]", node.id), 0.0, big_m);

        for (k, &l) in types.iter().enumerate() {
            let fcm = &instance.fcm_types[l].id;
            let r = f64::from(required[k]);
            model.add_constraint(
                format!("demand_cap[s{s},{},{fcm}]", node.id),
                sent[k].iter().map(|&x| (x, 1.0)),
                Sense::Le,
                r,
            );
            model.add_constraint(
                format!("coverage[s{s},{},{fcm}]", node.id),
                sent[k].iter().map(|&x| (x, 1.0)).chain([(u, -r)]),
                Sense::Ge,
                0.0,
            );
            for d in 0..hubs {
                let hub = &instance.hubs[d].id;
                model.add_constraint(
                    format!("serve_link[s{s},{},{hub},{fcm}]", node.id),
                    [(sent[k][d], 1.0), (serves[k][d], -r)],
                    Sense::Le,
                    0.0,
                );
                model.add_constraint(
                    format!("response[s{s},{},{hub},{fcm}]", node.id),
                    [(t, 1.0), (serves[k][d], -activation[k][d])],
                    Sense::Ge,
                    0.0,
                );
            }
        }
        // Valid inequalities that tighten the big-M window row: a hub too far
        // away to meet the window cannot serve a stabilized node, so only
        // in-window hubs count towards coverage.
        let window = node.stabilize_window;
        for (k, &l) in types.iter().enumerate() {
            let fcm = &instance.fcm_types[l].id;
            let near: Vec<(Var, f64)> = (0..hubs)
                .filter(|&d| activation[k][d] <= window)
                .map(|d| (sent[k][d], 1.0))
                .collect();
            if near.len() < hubs {
                model.add_constraint(
                    format!("near_coverage[s{s},{},{fcm}]", node.id),
                    near.into_iter().chain([(u, -f64::from(required[k]))]),
                    Sense::Ge,
                    0.0,
                );
            }
            for d in (0..hubs).filter(|&d| activation[k][d] > window) {
                model.add_constraint(
                    format!("far[s{s},{},{},{fcm}]", node.id, instance.hubs[d].id),
                    [(serves[k][d], 1.0), (u, 1.0)],
                    Sense::Le,
                    1.0,
                );
            }
        }
        model.add_constraint(
            format!("window[s{s},{}]", node.id),
            [(t, 1.0), (u, big_m)],
            Sense::Le,
            node.stabilize_window + big_m,
        );

        let penalty: Vec<f64> = types
            .iter()
            .map(|&l| scale_cost(node.penalty(&instance.fcm_types[l].id)))
            .collect();
        let restoration = scale_cost(instance.risk.gamma * node.base_load * shock.duration);
        for (k, x) in sent.iter().enumerate() {
            offset += penalty[k] * f64::from(required[k]);
            terms.extend(x.iter().map(|&v| (v, -penalty[k])));
        }
        offset += restoration;
        terms.push((u, -restoration));

        nodes.push(NodeVars {
            node: i,
            types,
            required,
            sent,
            serves,
            stabilized: u,
            response: t,
            activation,
            penalty,
            restoration,
            duration: shock.duration,
        });
    }

    // Stock per hub and type, shared by all shocked nodes of the scenario.
    for d in 0..hubs {
        for l in 0..instance.fcm_types.len() {
            let used: Vec<(Var, f64)> = nodes
                .iter()
                .filter_map(|n| {
                    n.types
                        .iter()
                        .position(|&m| m == l)
                        .map(|k| (n.sent[k][d], 1.0))
                })
                .collect();
            if used.is_empty() {
                continue;
            }
            let name = format!(
                "stock[s{s},{},{}]",
                instance.hubs[d].id, instance.fcm_types[l].id
            );
            match &staged {
                StagedSource::Fixed(units) => {
                    model.add_constraint(name, used, Sense::Le, f64::from(units[d][l]));
                }
                StagedSource::Shipments(y) => {
                    let inflow = y[l][d].iter().map(|&v| (v, -1.0));
                    model.add_constraint(name, used.into_iter().chain(inflow), Sense::Le, 0.0);
                }
            }
        }
    }

    Block {
        scenario: s,
        nodes,
        terms,
        offset,
    }
}

impl Block {
    /// Recourse cost in scaled units, recomputed from raw values.
    pub fn cost(&self, values: &[f64]) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Shortfall and restoration parts (scaled) from rounded integer values.
    pub fn cost_parts(&self, values: &[f64]) -> (f64, f64) {
        let mut shortfall = 0.0;
        let mut restoration = 0.0;
        for n in &self.nodes {
            for (k, x) in n.sent.iter().enumerate() {
                let served: f64 = x.iter().map(|v| values[v.0].round()).sum();
                shortfall += n.penalty[k] * (f64::from(n.required[k]) - served);
            }
            restoration += n.restoration * (1.0 - values[n.stabilized.0].round());
        }
        (shortfall, restoration)
    }
}
