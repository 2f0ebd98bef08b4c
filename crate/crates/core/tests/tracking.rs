mod common;

use std::collections::BTreeMap;

use fcm_core::dispatch::{
    aggregate_units, track_profile, Aggregate, NodeDispatch, Sent, SolverStats,
};
use fcm_core::milp::SolveStatus;
use fcm_core::{residual_to_metrics, simulate_tracking, DispatchDecision};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn decision_sending(node: &str, hub: &str, fcm: &str, units: u32) -> DispatchDecision {
    DispatchDecision {
        scenario_id: 0,
        nodes: vec![NodeDispatch {
            node: node.into(),
            sent: vec![Sent {
                hub: hub.into(),
                fcm: fcm.into(),
                units,
            }],
            stabilized: true,
            response_minutes: 0.0,
            shortfall: BTreeMap::new(),
            shortfall_cost: 0.0,
            restoration_cost: 0.0,
            duration: 0.5,
        }],
        recourse_cost: 0.0,
        shortfall_cost: 0.0,
        restoration_cost: 0.0,
        values: Vec::new(),
        solver: SolverStats {
            status: SolveStatus::Optimal,
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

#[test]
fn ample_units_leave_no_residual() {
    let inst = common::toy_instance();
    let set = common::scenario_set(
        &inst,
        vec![vec![common::shock(&inst, "DC", &[("BESS", 2)], 150.0, 6)]],
    );
    let decision = decision_sending("DC", "H2", "BESS", 2);
    let result = simulate_tracking(&decision, &set.scenarios[0], &inst);
    assert_eq!(result.total_residual_kwh(), 0.0);
    assert_eq!(residual_to_metrics(&result)["DC"], 0.0);
    common::check_trace(&result.nodes[0], result.step_hours).unwrap();
}

#[test]
fn nothing_dispatched_leaves_the_whole_profile() {
    let inst = common::toy_instance();
    let shock = common::shock(&inst, "DC", &[("BESS", 1)], 120.0, 5);
    let energy: f64 =
        shock.ramp_profile.iter().map(|p| p.max(0.0)).sum::<f64>() * inst.time_step_hours();
    let set = common::scenario_set(&inst, vec![vec![shock]]);
    let decision = decision_sending("DC", "H2", "BESS", 0);
    let result = simulate_tracking(&decision, &set.scenarios[0], &inst);
    assert_eq!(residual_to_metrics(&result)["DC"], energy);
}

#[test]
fn units_pool_by_category() {
    let inst = common::toy_instance();
    let agg = aggregate_units(&inst, &BTreeMap::from([("BESS".to_string(), 3)]));
    assert_eq!(agg.storage_power, 600.0);
    assert_eq!(agg.energy, 1200.0);
    assert_eq!(agg.ramp, 300.0);
    assert_eq!(agg.unlimited_power, 0.0);
}

#[test]
fn one_hour_of_charging() {
    let agg = Aggregate {
        unlimited_power: 0.0,
        storage_power: 10.0,
        energy: 100.0,
        ramp: 10.0,
        eta_ch: 0.9,
        eta_dis: 0.9,
    };
    let tr = track_profile("n", &agg, &[-10.0], 1.0, 50.0);
    assert!((tr.soc[1] - 59.0).abs() < 1e-12);
    common::check_trace(&tr, 1.0).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn traces_respect_storage_and_ramp_limits(seed in any::<u64>()) {
        let case = common::random_tracking_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let tr = track_profile("n", &case.aggregate, &case.profile, case.dt, case.soc0);
        prop_assert_eq!(tr.soc[0], case.soc0);
        if let Err(e) = common::check_trace(&tr, case.dt) {
            return Err(TestCaseError::fail(e));
        }
        if common::ratings_suffice(&case.aggregate, &case.profile, case.dt, case.soc0) {
            prop_assert_eq!(tr.residual_kwh, 0.0);
        }
    }
}
