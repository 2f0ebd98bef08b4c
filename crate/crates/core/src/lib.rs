//! Two-stage, risk-averse pre-positioning and dispatch of flexible capacity
//! modules (FCMs) under Monte Carlo demand-shock scenarios.
//!
//! The first stage activates staging hubs and ships FCM units from
//! suppliers; the second stage dispatches staged units to shocked load
//! nodes. Both stages are mixed-integer programs solved exactly by the
//! in-crate [`milp`] kernel, and the first stage blends expected recourse
//! cost with its conditional value-at-risk.

pub mod dispatch;
pub mod error;
pub mod instance;
pub mod milp;
pub mod planner;
pub mod risk;
pub mod scenario;

pub use dispatch::{
    build_stage2_model, residual_to_metrics, simulate_tracking, solve_stage2, DispatchDecision,
    Staging, TrackingResult,
};
pub use error::{Error, FieldViolation, Result, ValidationReport};
pub use instance::{
    builtin_ieee33, distance_matrix, validate_instance, DistanceMatrix, FcmCategory, FcmType,
    Instance, LoadNode, Network, RiskParams, StagingHub, Supplier,
};
pub use planner::{build_extensive_form, evaluate_plan, solve_plan, solve_plan_with, StageOnePlan};
pub use risk::{aggregate_report, cvar_discrete, ens, RiskReport};
pub use scenario::{
    generate_scenarios, load_set, profile_to_requirements, save_set, DemandShockScenario,
    GenConfig, NodeShock, ScenarioSet,
};
