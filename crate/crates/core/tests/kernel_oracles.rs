//! Cross-checks of the MILP kernel against independent brute-force oracles.

use fcm_core::milp::{
    check_solution, enumerate_oracle_with, solve_lp, solve_mip, MilpModel, Sense, SolveStatus, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Minimum over all basic feasible solutions of a box-bounded LP. Every
/// candidate vertex makes `n` of the hyperplanes (rows and bounds) tight.
fn vertex_enumeration(model: &MilpModel) -> Option<f64> {
    let n = model.num_vars();
    // Hyperplanes: each row, then x_j = lb_j, then x_j = ub_j.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &model.constraints {
        let mut a = vec![0.0; n];
        for &(v, coef) in &c.terms {
            a[v.0] += coef;
        }
        planes.push((a, c.rhs));
    }
    for (bound_of, j) in (0..2).flat_map(|s| (0..n).map(move |j| (s, j))) {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        let v = &model.vars[j];
        planes.push((a, if bound_of == 0 { v.lb } else { v.ub }));
    }
    let eq_rows: Vec<usize> = model
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.sense == Sense::Eq)
        .map(|(i, _)| i)
        .collect();

    let mut best: Option<f64> = None;
    for_each_combination(planes.len(), n, &mut |idx| {
        if !eq_rows.iter().all(|r| idx.contains(r)) {
            return;
        }
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_square(a, b) else { return };
        if check_solution(model, &x).is_empty() {
            let obj = model.objective_value(&x);
            if best.is_none_or(|b| obj < b) {
                best = Some(obj);
            }
        }
    });
    best
}

fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MilpModel {
    let mut model = MilpModel::new("random-lp");
    let vars: Vec<Var> = (0..n)
        .map(|j| model.continuous(format!("x{j}"), 0.0, rng.gen_range(1.0..6.0)))
        .collect();
    // Rows are built around an interior point so the LP is feasible.
    let x0: Vec<f64> = vars
        .iter()
        .map(|v| model.var(*v).ub * rng.gen_range(0.2..0.8))
        .collect();
    for i in 0..m {
        let terms: Vec<(Var, f64)> = vars
            .iter()
            .map(|&v| (v, f64::from(rng.gen_range(-4i32..=4))))
            .collect();
        let act: f64 = terms.iter().map(|&(v, a)| a * x0[v.0]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (Sense::Eq, act),
            1 | 2 => (Sense::Le, act + rng.gen_range(0.0..3.0)),
            _ => (Sense::Ge, act - rng.gen_range(0.0..3.0)),
        };
        model.add_constraint(format!("r{i}"), terms, sense, rhs);
    }
    for &v in &vars {
        model.set_objective_coef(v, f64::from(rng.gen_range(-5i32..=5)));
    }
    model
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..12 {
        let model = random_lp(&mut rng, 8, 6);
        let lp = solve_lp(&model).unwrap();
        assert_eq!(lp.status, SolveStatus::Optimal, "trial {trial}");
        let oracle = vertex_enumeration(&model).expect("feasible by construction");
        assert!(
            (lp.objective - oracle).abs() <= 1e-7 * oracle.abs().max(1.0),
            "trial {trial}: simplex {} vs vertices {}",
            lp.objective,
            oracle
        );
        assert!(check_solution(&model, &lp.values).is_empty());
    }
}

#[test]
fn knapsack_matches_subset_enumeration() {
    let values = [10.0, 13.0, 7.0, 8.0, 4.0];
    let weights = [5.0, 6.0, 3.0, 4.0, 2.0];
    let capacity = 11.0;

    let mut model = MilpModel::new("knapsack");
    let picks: Vec<Var> = (0..5).map(|i| model.binary(format!("pick{i}"))).collect();
    for (i, &p) in picks.iter().enumerate() {
        model.set_objective_coef(p, -values[i]);
    }
    model.add_constraint(
        "weight",
        picks.iter().zip(weights).map(|(&p, w)| (p, w)),
        Sense::Le,
        capacity,
    );

    let mut best = 0.0_f64;
    for mask in 0u32..32 {
        let (v, w) = (0..5)
            .filter(|i| mask & (1 << i) != 0)
            .fold((0.0, 0.0), |(v, w), i| (v + values[i], w + weights[i]));
        if w <= capacity {
            best = best.max(v);
        }
    }

    let s = solve_mip(&model).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert_eq!(-s.objective, best);
    assert_eq!(best, 24.0);
}

fn random_milp(rng: &mut ChaCha8Rng) -> MilpModel {
    let mut model = MilpModel::new("random-milp");
    let n_int = rng.gen_range(1..=4);
    let n_cont = rng.gen_range(0..=2);
    let mut vars = Vec::new();
    for j in 0..n_int {
        if rng.gen_bool(0.4) {
            vars.push(model.binary(format!("b{j}")));
        } else {
            vars.push(model.integer(format!("i{j}"), 0.0, f64::from(rng.gen_range(1..=4))));
        }
    }
    for j in 0..n_cont {
        vars.push(model.continuous(format!("c{j}"), 0.0, rng.gen_range(1.0..5.0)));
    }
    for i in 0..rng.gen_range(1..=4) {
        let terms: Vec<(Var, f64)> = vars
            .iter()
            .map(|&v| (v, f64::from(rng.gen_range(-3i32..=5))))
            .collect();
        let sense = if rng.gen_bool(0.7) {
            Sense::Le
        } else {
            Sense::Ge
        };
        let rhs = f64::from(rng.gen_range(-2i32..=8));
        model.add_constraint(format!("r{i}"), terms, sense, rhs);
    }
    for &v in &vars {
        model.set_objective_coef(v, f64::from(rng.gen_range(-6i32..=6)));
    }
    model
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut optimal = 0;
    for trial in 0..60 {
        let model = random_milp(&mut rng);
        let bb = solve_mip(&model).unwrap();
        let oracle = enumerate_oracle_with(&model, 1_000_000).unwrap().solution;
        assert_eq!(
            bb.status,
            oracle.status,
            "trial {trial}\n{}",
            model.to_lp_string()
        );
        if bb.status == SolveStatus::Optimal {
            optimal += 1;
            assert!(
                (bb.objective - oracle.objective).abs() < 1e-9,
                "trial {trial}: b&b {} vs oracle {}\n{}",
                bb.objective,
                oracle.objective,
                model.to_lp_string()
            );
            assert!(check_solution(&model, &bb.values).is_empty());
            // LP relaxation bounds the MIP from below.
            let lp = solve_lp(&model).unwrap();
            assert!(lp.objective <= bb.objective + 1e-9);
        }
    }
    assert!(optimal >= 20, "only {optimal} feasible trials");
}

#[test]
fn identical_models_give_identical_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let model = random_milp(&mut rng);
        let a = solve_mip(&model).unwrap();
        let b = solve_mip(&model.clone()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.nodes, b.nodes);
    }
}

#[test]
fn branching_priorities_keep_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..40 {
        let mut model = random_milp(&mut rng);
        let ints: Vec<Var> = model.integer_vars().collect();
        for v in ints {
            let p = rng.gen_range(0..3);
            model.set_branch_priority(v, p);
        }
        let bb = solve_mip(&model).unwrap();
        let oracle = enumerate_oracle_with(&model, 1_000_000).unwrap().solution;
        assert_eq!(bb.status, oracle.status, "trial {trial}");
        if bb.status == SolveStatus::Optimal {
            assert!(
                (bb.objective - oracle.objective).abs() < 1e-9,
                "trial {trial}"
            );
        }
    }
}
