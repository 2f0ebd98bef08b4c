//! Monte Carlo demand-shock scenarios.
//!
//! Each scenario picks a handful of load nodes (weighted by their
//! volatility), gives each a trapezoidal surge or drop profile, and sizes
//! the FCM units needed to cover the profile peak.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result, ValidationReport};
use crate::instance::{FcmId, FcmType, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range<T> {
    pub low: T,
    pub high: T,
}

impl<T: Copy> Range<T> {
    pub fn fixed(value: T) -> Self {
        Range {
            low: value,
            high: value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub scenario_count: usize,
    pub seed: u64,
    pub shocks_per_scenario: Range<usize>,
    /// Peak deviation as a multiple of the node's base load.
    pub magnitude_fraction: Range<f64>,
    /// Per-step slew as a fraction of the peak deviation.
    pub ramp_step_fraction: Range<f64>,
    /// Probability that a shock is a surge rather than a drop.
    pub sign_mix: f64,
    pub duration_hours: Range<f64>,
    /// Share of the peak deviation covered by each FCM type.
    pub type_split: BTreeMap<FcmId, f64>,
}

impl GenConfig {
    pub fn load(path: &Path) -> Result<GenConfig> {
        read_json(path)
    }

    pub fn from_json(text: &str) -> Result<GenConfig> {
        serde_json::from_str(text).map_err(|e| Error::parse(e, None))
    }

    /// Generator settings for the bundled 33-bus instance.
    pub fn builtin_ieee33() -> GenConfig {
        Self::from_json(crate::instance::IEEE33_GEN_CONFIG_JSON).expect("bundled config parses")
    }

    /// Checks the config on its own and against the instance catalog.
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let mut bad = Vec::new();
        if self.scenario_count == 0 {
            bad.push("scenario_count must be >= 1".to_string());
        }
        let ranges = [
            ("magnitude_fraction", self.magnitude_fraction, 0.0),
            (
                "ramp_step_fraction",
                self.ramp_step_fraction,
                f64::MIN_POSITIVE,
            ),
            ("duration_hours", self.duration_hours, f64::MIN_POSITIVE),
        ];
        for (name, r, min) in ranges {
            if !(r.low.is_finite() && r.high.is_finite() && min <= r.low && r.low <= r.high) {
                bad.push(format!(
                    "{name} needs {min} <= low <= high, got [{}, {}]",
                    r.low, r.high
                ));
            }
        }
        if self.ramp_step_fraction.high > 1.0 {
            bad.push("ramp_step_fraction.high must be <= 1".into());
        }
        let shocks = self.shocks_per_scenario;
        if shocks.low == 0 || shocks.low > shocks.high {
            bad.push(format!(
                "shocks_per_scenario needs 1 <= low <= high, got [{}, {}]",
                shocks.low, shocks.high
            ));
        }
        let eligible = instance
            .nodes
            .iter()
            .filter(|n| n.volatility_weight > 0.0)
            .count();
        if shocks.high > eligible {
            bad.push(format!(
                "shocks_per_scenario.high = {} exceeds the {} nodes with positive volatility weight",
                shocks.high, eligible
            ));
        }
        if !(0.0..=1.0).contains(&self.sign_mix) {
            bad.push(format!(
                "sign_mix must lie in [0, 1], got {}",
                self.sign_mix
            ));
        }
        let mut total = 0.0;
        for (fcm, &share) in &self.type_split {
            if instance.fcm(fcm).is_none() {
                bad.push(format!("type_split names unknown FCM type '{fcm}'"));
            }
            if !(share >= 0.0 && share.is_finite()) {
                bad.push(format!("type_split.{fcm} must be >= 0, got {share}"));
            }
            total += share;
        }
        if (total - 1.0).abs() > 1e-9 {
            bad.push(format!("type_split must sum to 1, got {total}"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeShock {
    pub node: String,
    /// Units needed per FCM type.
    pub requirement: BTreeMap<FcmId, u32>,
    /// kW deviation per time step; positive is a surge, negative a drop.
    pub ramp_profile: Vec<f64>,
    /// Hours.
    pub duration: f64,
}

impl NodeShock {
    pub fn required(&self, fcm: &str) -> u32 {
        self.requirement.get(fcm).copied().unwrap_or(0)
    }

    pub fn peak_kw(&self) -> f64 {
        self.ramp_profile.iter().fold(0.0, |m, p| m.max(p.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandShockScenario {
    pub id: usize,
    pub probability: f64,
    pub shocks: Vec<NodeShock>,
}

impl DemandShockScenario {
    /// Ids of the shocked nodes.
    pub fn affected(&self) -> impl Iterator<Item = &str> {
        self.shocks.iter().map(|s| s.node.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    pub config: GenConfig,
    pub seed: u64,
    pub time_step_minutes: f64,
    pub scenarios: Vec<DemandShockScenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    /// Checks every scenario invariant, including consistency with the
    /// instance the set will be solved against.
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let mut r = ValidationReport::default();
        if self.scenarios.is_empty() {
            r.push("scenarios", "at least one scenario is required");
        }
        if self.time_step_minutes != instance.time_step_minutes {
            r.push(
                "time_step_minutes",
                format!(
                    "set uses {} min steps but the instance uses {}",
                    self.time_step_minutes, instance.time_step_minutes
                ),
            );
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if !self.scenarios.is_empty() && (total - 1.0).abs() > 1e-9 {
            r.push("scenarios", format!("probabilities sum to {total}, not 1"));
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            if s.id != k {
                r.push(
                    format!("scenarios[{k}].id"),
                    format!("expected {k}, got {}", s.id),
                );
            }
            if !(s.probability > 0.0 && s.probability <= 1.0) {
                r.push(
                    format!("scenarios[{k}].probability"),
                    format!("must lie in (0, 1], got {}", s.probability),
                );
            }
            if s.shocks.is_empty() {
                r.push(format!("scenarios[{k}].shocks"), "no affected node");
            }
            let mut seen = BTreeSet::new();
            for (j, sh) in s.shocks.iter().enumerate() {
                let p = |f: &str| format!("scenarios[{k}].shocks[{j}].{f}");
                if instance.node(&sh.node).is_none() {
                    r.push(p("node"), format!("unknown node '{}'", sh.node));
                }
                if !seen.insert(sh.node.as_str()) {
                    r.push(p("node"), format!("node '{}' shocked twice", sh.node));
                }
                if !(sh.duration > 0.0 && sh.duration.is_finite()) {
                    r.push(p("duration"), format!("must be > 0, got {}", sh.duration));
                } else if sh.ramp_profile.len() != profile_len(sh.duration, self.time_step_minutes)
                {
                    r.push(
                        p("ramp_profile"),
                        format!(
                            "{} steps, expected {} for {} h",
                            sh.ramp_profile.len(),
                            profile_len(sh.duration, self.time_step_minutes),
                            sh.duration
                        ),
                    );
                }
                if sh.ramp_profile.iter().any(|v| !v.is_finite()) {
                    r.push(p("ramp_profile"), "non-finite value");
                }
                for fcm in sh.requirement.keys() {
                    if instance.fcm(fcm).is_none() {
                        r.push(format!("{}.{fcm}", p("requirement")), "unknown FCM type");
                    }
                }
            }
        }
        r.into_result(())
    }
}

/// Steps needed to cover `duration_h` hours.
pub fn profile_len(duration_h: f64, step_minutes: f64) -> usize {
    (duration_h * 60.0 / step_minutes - 1e-9).ceil().max(0.0) as usize
}

/// Units per type needed to cover the profile peak: the peak times the
/// type's share, divided by the unit power rating, rounded up. Every catalog
/// type appears in the result.
pub fn profile_to_requirements(
    profile: &[f64],
    catalog: &[FcmType],
    split: &BTreeMap<FcmId, f64>,
) -> BTreeMap<FcmId, u32> {
    let peak = profile.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    catalog
        .iter()
        .map(|t| {
            let share = split.get(&t.id).copied().unwrap_or(0.0);
            let units = peak * share / t.unit_power_rating;
            // Products like 0.6 * 1000 / 200 land a hair above the integer.
            let units = (units - 1e-9 * units.max(1.0)).ceil().max(0.0);
            (t.id.clone(), units as u32)
        })
        .collect()
}

/// Trapezoid of `steps` samples: slews by `slew` kW per step up to `peak`,
/// holds, and slews back down so the last sample is one slew from zero.
pub fn trapezoid(peak: f64, slew: f64, steps: usize) -> Vec<f64> {
    let mag = peak.abs();
    let sign = if peak < 0.0 { -1.0 } else { 1.0 };
    (0..steps)
        .map(|t| {
            let up = (t + 1) as f64 * slew;
            let down = (steps - t) as f64 * slew;
            sign * mag.min(up).min(down)
        })
        .collect()
}

/// Draws `config.scenario_count` equiprobable scenarios. The result is a
/// pure function of the instance and the config.
pub fn generate_scenarios(instance: &Instance, config: &GenConfig) -> Result<ScenarioSet> {
    config.validate(instance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dt = instance.time_step_minutes;
    let eligible: Vec<usize> = (0..instance.nodes.len())
        .filter(|&i| instance.nodes[i].volatility_weight > 0.0)
        .collect();
    let prob = 1.0 / config.scenario_count as f64;

    let mut scenarios = Vec::with_capacity(config.scenario_count);
    for id in 0..config.scenario_count {
        let count = rng.gen_range(config.shocks_per_scenario.low..=config.shocks_per_scenario.high);
        let mut picked: Vec<usize> = eligible
            .choose_multiple_weighted(&mut rng, count, |&i| instance.nodes[i].volatility_weight)
            .expect("weights validated positive")
            .copied()
            .collect();
        picked.sort_unstable();

        let shocks = picked
            .into_iter()
            .map(|i| {
                let node = &instance.nodes[i];
                let magnitude = sample(&mut rng, config.magnitude_fraction);
                let surge = rng.gen_bool(config.sign_mix);
                let hours = sample(&mut rng, config.duration_hours);
                let slew_fraction = sample(&mut rng, config.ramp_step_fraction);

                // Durations are whole time steps, and every profile reaches
                // its peak: the slew is raised within its range to fit the
                // drawn duration, and the duration is stretched only when
                // even the steepest allowed slew cannot fit.
                let drawn = ((hours * 60.0 / dt).round() as usize).max(1);
                let fraction = slew_fraction
                    .max(1.0 / drawn.div_ceil(2) as f64)
                    .min(config.ramp_step_fraction.high);
                let rise = (1.0 / fraction - 1e-9).ceil() as usize;
                let steps = drawn.max(2 * rise - 1);
                let duration = steps as f64 * dt / 60.0;
                let peak = magnitude * node.base_load * if surge { 1.0 } else { -1.0 };
                let ramp_profile = trapezoid(peak, fraction * peak.abs(), steps);
                NodeShock {
                    node: node.id.clone(),
                    requirement: profile_to_requirements(
                        &ramp_profile,
                        &instance.fcm_types,
                        &config.type_split,
                    ),
                    ramp_profile,
                    duration,
                }
            })
            .collect();
        scenarios.push(DemandShockScenario {
            id,
            probability: prob,
            shocks,
        });
    }
    Ok(ScenarioSet {
        config: config.clone(),
        seed: config.seed,
        time_step_minutes: dt,
        scenarios,
    })
}

fn sample(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.low == r.high {
        r.low
    } else {
        rng.gen_range(r.low..=r.high)
    }
}

pub fn save_set(path: &Path, set: &ScenarioSet) -> Result<()> {
    write_json(path, set)
}

pub fn load_set(path: &Path) -> Result<ScenarioSet> {
    read_json(path)
}

pub fn set_from_json(text: &str) -> Result<ScenarioSet> {
    serde_json::from_str(text).map_err(|e| Error::parse(e, None))
}

pub fn set_to_json(set: &ScenarioSet) -> String {
    serde_json::to_string_pretty(set).expect("plain data serializes") + "\n"
}
