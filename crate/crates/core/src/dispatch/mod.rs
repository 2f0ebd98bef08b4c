//! Second stage: dispatch of staged FCM units to shocked nodes, and the
//! time-domain tracking of each node's ramp profile by the dispatched units.

mod block;
mod stage2;
mod tracking;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Result};
use crate::instance::Instance;

pub use block::activation_minutes;
pub(crate) use block::{add_block, Block, StagedSource};
pub(crate) use stage2::verify_block;
pub use stage2::{
    build_stage2_model, solve_stage2, solve_stage2_with, DispatchDecision, NodeDispatch, Sent,
    SolverStats, Stage2Model,
};
pub use tracking::{
    aggregate_units, residual_to_metrics, simulate_tracking, track_profile, Aggregate, NodeTrace,
    TrackingResult,
};

/// Currency amounts enter every model multiplied by this factor and rounded
/// to integers.
pub const COST_SCALE: f64 = 1e4;

pub fn scale_cost(amount: f64) -> f64 {
    (amount * COST_SCALE).round()
}

pub fn unscale_cost(scaled: f64) -> f64 {
    scaled / COST_SCALE
}

/// Units of each FCM type available at each hub, `units[hub][fcm type]` in
/// instance order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staging {
    pub units: Vec<Vec<u32>>,
}

impl Staging {
    pub fn empty(instance: &Instance) -> Staging {
        Staging {
            units: vec![vec![0; instance.fcm_types.len()]; instance.hubs.len()],
        }
    }

    pub fn get(&self, hub: usize, fcm: usize) -> u32 {
        self.units[hub][fcm]
    }

    pub fn total(&self) -> u64 {
        self.units.iter().flatten().map(|&u| u64::from(u)).sum()
    }

    pub fn fits(&self, instance: &Instance) -> bool {
        self.units.len() == instance.hubs.len()
            && self
                .units
                .iter()
                .all(|row| row.len() == instance.fcm_types.len())
    }
}

/// One scenario's dispatch decision with its tracking traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchReport {
    pub decision: DispatchDecision,
    pub tracking: TrackingResult,
}

impl DispatchReport {
    pub fn load(path: &Path) -> Result<DispatchReport> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
