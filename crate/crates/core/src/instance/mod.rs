//! Static problem data for the supplier, staging hub and load node tiers.
//!
//! An [`Instance`] is parsed from JSON, then checked by
//! [`validate_instance`], which reports every broken invariant at once.

mod builtin;
mod network;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result, ValidationReport};

pub use builtin::{builtin_ieee33, IEEE33_GEN_CONFIG_JSON, IEEE33_INSTANCE_JSON};
pub use network::{distance_matrix, DistanceMatrix};

/// Identifier of an FCM type, used as the key of inventories, penalties,
/// requirements and type splits.
pub type FcmId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FcmCategory {
    Bess,
    FastGen,
    DemandResponse,
    Psh,
}

impl FcmCategory {
    pub fn is_storage(self) -> bool {
        matches!(self, FcmCategory::Bess | FcmCategory::Psh)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcmType {
    pub id: FcmId,
    pub category: FcmCategory,
    /// kW per unit.
    pub unit_power_rating: f64,
    /// kWh per unit; 0 for energy-unconstrained categories.
    pub unit_energy_rating: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// kW per time step per unit.
    pub unit_ramp_limit: f64,
    /// Currency per unit per km.
    pub unit_transport_cost: f64,
    /// Minutes from dispatch order until the unit delivers.
    pub activation_lead_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Supplier {
    pub id: String,
    pub bus: u32,
    /// Units available per FCM type.
    pub inventory: BTreeMap<FcmId, i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagingHub {
    pub id: String,
    pub bus: u32,
    pub setup_cost: f64,
    pub capacity_units: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadNode {
    pub id: String,
    pub bus: u32,
    /// kW.
    pub base_load: f64,
    pub is_data_center: bool,
    /// Relative weight of this node when shocked nodes are sampled.
    pub volatility_weight: f64,
    /// Minutes within which the node must be served to count as stabilized.
    pub stabilize_window: f64,
    /// Currency per unit of unmet requirement, per FCM type. Missing types
    /// carry no penalty.
    pub shortfall_penalty: BTreeMap<FcmId, f64>,
}

impl LoadNode {
    pub fn penalty(&self, fcm: &str) -> f64 {
        self.shortfall_penalty.get(fcm).copied().unwrap_or(0.0)
    }
}

fn one_km() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    #[serde(default = "one_km")]
    pub length_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub buses: Vec<u32>,
    pub lines: Vec<Line>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskParams {
    pub alpha: f64,
    pub lambda: f64,
    /// Currency per kWh of unserved energy.
    pub gamma: f64,
    /// km per minute.
    pub travel_speed: f64,
}

fn full_charge() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub fcm_types: Vec<FcmType>,
    pub suppliers: Vec<Supplier>,
    pub hubs: Vec<StagingHub>,
    pub nodes: Vec<LoadNode>,
    pub network: Network,
    pub risk: RiskParams,
    pub time_step_minutes: f64,
    /// Storage state of charge at the start of every event, as a fraction
    /// of the dispatched energy rating.
    #[serde(default = "full_charge")]
    pub initial_soc_fraction: f64,
}

impl Instance {
    pub fn fcm(&self, id: &str) -> Option<&FcmType> {
        self.fcm_types.iter().find(|t| t.id == id)
    }

    pub fn fcm_index(&self, id: &str) -> Option<usize> {
        self.fcm_types.iter().position(|t| t.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&LoadNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Units of `fcm` held by supplier `g`.
    pub fn inventory(&self, g: usize, fcm: &str) -> i64 {
        self.suppliers[g].inventory.get(fcm).copied().unwrap_or(0)
    }

    pub fn time_step_hours(&self) -> f64 {
        self.time_step_minutes / 60.0
    }

    /// Reads and validates an instance file.
    pub fn load(path: &Path) -> Result<Instance> {
        validate_instance(read_json(path)?)
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let raw = serde_json::from_str(text).map_err(|e| Error::parse(e, None))?;
        validate_instance(raw)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn finite_at_least(
    report: &mut ValidationReport,
    path: String,
    value: f64,
    min: f64,
    strict: bool,
) {
    let ok = value.is_finite() && if strict { value > min } else { value >= min };
    if !ok {
        let op = if strict { ">" } else { ">=" };
        report.push(path, format!("must be finite and {op} {min}, got {value}"));
    }
}

fn unit_interval(report: &mut ValidationReport, path: String, value: f64) {
    if !(value > 0.0 && value <= 1.0) {
        report.push(path, format!("must lie in (0, 1], got {value}"));
    }
}

fn unique_ids<'a>(report: &mut ValidationReport, list: &str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = BTreeSet::new();
    for (k, id) in ids.enumerate() {
        if id.is_empty() {
            report.push(format!("{list}[{k}].id"), "must not be empty");
        } else if !seen.insert(id) {
            report.push(format!("{list}[{k}].id"), format!("duplicate id '{id}'"));
        }
    }
}

/// Returns `raw` unchanged when every invariant holds, otherwise a report
/// listing all violations with their field paths.
pub fn validate_instance(raw: Instance) -> Result<Instance> {
    let mut r = ValidationReport::default();
    let fcm_ids: BTreeSet<&str> = raw.fcm_types.iter().map(|t| t.id.as_str()).collect();
    let buses: BTreeSet<u32> = raw.network.buses.iter().copied().collect();

    if raw.fcm_types.is_empty() {
        r.push("fcm_types", "at least one FCM type is required");
    }
    if raw.suppliers.is_empty() {
        r.push("suppliers", "at least one supplier is required");
    }
    if raw.hubs.is_empty() {
        r.push("hubs", "at least one staging hub is required");
    }
    if raw.nodes.is_empty() {
        r.push("nodes", "at least one load node is required");
    }
    unique_ids(
        &mut r,
        "fcm_types",
        raw.fcm_types.iter().map(|t| t.id.as_str()),
    );
    unique_ids(
        &mut r,
        "suppliers",
        raw.suppliers.iter().map(|s| s.id.as_str()),
    );
    unique_ids(&mut r, "hubs", raw.hubs.iter().map(|h| h.id.as_str()));
    unique_ids(&mut r, "nodes", raw.nodes.iter().map(|n| n.id.as_str()));

    for (k, t) in raw.fcm_types.iter().enumerate() {
        let p = |f: &str| format!("fcm_types[{k}].{f}");
        finite_at_least(
            &mut r,
            p("unit_power_rating"),
            t.unit_power_rating,
            0.0,
            true,
        );
        finite_at_least(
            &mut r,
            p("unit_energy_rating"),
            t.unit_energy_rating,
            0.0,
            false,
        );
        unit_interval(&mut r, p("eta_ch"), t.eta_ch);
        unit_interval(&mut r, p("eta_dis"), t.eta_dis);
        finite_at_least(&mut r, p("unit_ramp_limit"), t.unit_ramp_limit, 0.0, true);
        finite_at_least(
            &mut r,
            p("unit_transport_cost"),
            t.unit_transport_cost,
            0.0,
            false,
        );
        finite_at_least(
            &mut r,
            p("activation_lead_time"),
            t.activation_lead_time,
            0.0,
            false,
        );
        let has_energy = t.unit_energy_rating > 0.0;
        if t.category.is_storage() && !has_energy {
            r.push(
                p("unit_energy_rating"),
                format!(
                    "{:?} type '{}' needs a positive energy rating",
                    t.category, t.id
                ),
            );
        } else if !t.category.is_storage() && has_energy {
            r.push(
                p("unit_energy_rating"),
                format!("{:?} type '{}' must have energy rating 0", t.category, t.id),
            );
        }
    }

    let bus_ok = |r: &mut ValidationReport, path: String, bus: u32| {
        if !buses.contains(&bus) {
            r.push(path, format!("bus {bus} is not in network.buses"));
        }
    };

    for (k, s) in raw.suppliers.iter().enumerate() {
        bus_ok(&mut r, format!("suppliers[{k}].bus"), s.bus);
        for (fcm, &units) in &s.inventory {
            let path = format!("suppliers[{k}].inventory.{fcm}");
            if !fcm_ids.contains(fcm.as_str()) {
                r.push(path.clone(), format!("unknown FCM type '{fcm}'"));
            }
            if units < 0 {
                r.push(path, format!("must be >= 0, got {units}"));
            }
        }
    }

    for (k, h) in raw.hubs.iter().enumerate() {
        bus_ok(&mut r, format!("hubs[{k}].bus"), h.bus);
        finite_at_least(
            &mut r,
            format!("hubs[{k}].setup_cost"),
            h.setup_cost,
            0.0,
            false,
        );
        if h.capacity_units < 0 {
            r.push(
                format!("hubs[{k}].capacity_units"),
                format!(
                    "hub '{}' must have capacity >= 0, got {}",
                    h.id, h.capacity_units
                ),
            );
        }
    }

    for (k, n) in raw.nodes.iter().enumerate() {
        let p = |f: &str| format!("nodes[{k}].{f}");
        bus_ok(&mut r, p("bus"), n.bus);
        finite_at_least(&mut r, p("base_load"), n.base_load, 0.0, false);
        finite_at_least(
            &mut r,
            p("volatility_weight"),
            n.volatility_weight,
            0.0,
            false,
        );
        if n.is_data_center && (n.volatility_weight.is_nan() || n.volatility_weight <= 0.0) {
            r.push(
                p("volatility_weight"),
                "data-center nodes need a positive weight",
            );
        }
        finite_at_least(&mut r, p("stabilize_window"), n.stabilize_window, 0.0, true);
        for (fcm, &pen) in &n.shortfall_penalty {
            let path = format!("nodes[{k}].shortfall_penalty.{fcm}");
            if !fcm_ids.contains(fcm.as_str()) {
                r.push(path.clone(), format!("unknown FCM type '{fcm}'"));
            }
            finite_at_least(&mut r, path, pen, 0.0, false);
        }
    }

    if raw.network.buses.is_empty() {
        r.push("network.buses", "at least one bus is required");
    }
    if buses.len() != raw.network.buses.len() {
        r.push("network.buses", "bus ids must be unique");
    }
    for (k, l) in raw.network.lines.iter().enumerate() {
        bus_ok(&mut r, format!("network.lines[{k}].from"), l.from);
        bus_ok(&mut r, format!("network.lines[{k}].to"), l.to);
        finite_at_least(
            &mut r,
            format!("network.lines[{k}].length_km"),
            l.length_km,
            0.0,
            true,
        );
    }

    let risk = &raw.risk;
    if !(risk.alpha >= 0.0 && risk.alpha < 1.0) {
        r.push(
            "risk.alpha",
            format!("must lie in [0, 1), got {}", risk.alpha),
        );
    }
    if !(risk.lambda >= 0.0 && risk.lambda <= 1.0) {
        r.push(
            "risk.lambda",
            format!("must lie in [0, 1], got {}", risk.lambda),
        );
    }
    finite_at_least(&mut r, "risk.gamma".into(), risk.gamma, 0.0, false);
    finite_at_least(
        &mut r,
        "risk.travel_speed".into(),
        risk.travel_speed,
        0.0,
        true,
    );
    finite_at_least(
        &mut r,
        "time_step_minutes".into(),
        raw.time_step_minutes,
        0.0,
        true,
    );
    if !(raw.initial_soc_fraction >= 0.0 && raw.initial_soc_fraction <= 1.0) {
        r.push(
            "initial_soc_fraction",
            format!("must lie in [0, 1], got {}", raw.initial_soc_fraction),
        );
    }

    r.into_result(raw)
}
