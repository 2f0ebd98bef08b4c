use serde::{Deserialize, Serialize};

use super::{MilpModel, Sense, FEAS_TOL, INT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Shape,
    LowerBound,
    UpperBound,
    Integrality,
    Row,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Variable or row name.
    pub name: String,
    /// How far outside the feasible region the point is.
    pub amount: f64,
}

/// Lists every bound, integrality and row violation of `values`.
///
/// Row tolerance is `FEAS_TOL` scaled by the row magnitude (the larger of
/// |rhs| and the largest |a_j x_j|, at least 1), since stage models carry
/// cost-scaled coefficients.
pub fn check_solution(model: &MilpModel, values: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    if values.len() != model.num_vars() {
        out.push(Violation {
            kind: ViolationKind::Shape,
            name: format!("{} values for {} variables", values.len(), model.num_vars()),
            amount: (values.len() as f64 - model.num_vars() as f64).abs(),
        });
        return out;
    }
    for (v, &x) in model.vars.iter().zip(values) {
        if x < v.lb - FEAS_TOL * v.lb.abs().max(1.0) {
            out.push(Violation {
                kind: ViolationKind::LowerBound,
                name: v.name.clone(),
                amount: v.lb - x,
            });
        }
        if x > v.ub + FEAS_TOL * v.ub.abs().max(1.0) {
            out.push(Violation {
                kind: ViolationKind::UpperBound,
                name: v.name.clone(),
                amount: x - v.ub,
            });
        }
        if v.kind.is_integral() && (x - x.round()).abs() > INT_TOL {
            out.push(Violation {
                kind: ViolationKind::Integrality,
                name: v.name.clone(),
                amount: (x - x.round()).abs(),
            });
        }
    }
    for c in &model.constraints {
        let act = c.activity(values);
        let scale = c
            .terms
            .iter()
            .map(|&(v, a)| (a * values[v.0]).abs())
            .fold(c.rhs.abs(), f64::max)
            .max(1.0);
        let tol = FEAS_TOL * scale;
        let excess = match c.sense {
            Sense::Le => act - c.rhs,
            Sense::Ge => c.rhs - act,
            Sense::Eq => (act - c.rhs).abs(),
        };
        if excess > tol {
            out.push(Violation {
                kind: ViolationKind::Row,
                name: c.name.clone(),
                amount: excess,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_mip, MilpModel, Sense};

    fn toy() -> MilpModel {
        let mut m = MilpModel::new("t");
        let x = m.integer("x", 0.0, 5.0);
        let y = m.continuous("y", 0.0, 2.0);
        m.set_objective_coef(x, -1.0);
        m.set_objective_coef(y, -1.0);
        m.add_constraint("c", [(x, 1.0), (y, 1.0)], Sense::Le, 4.5);
        m
    }

    #[test]
    fn feasible_point_is_clean() {
        assert!(check_solution(&toy(), &[2.0, 1.0]).is_empty());
    }

    #[test]
    fn bound_violation_names_the_variable() {
        let r = check_solution(&toy(), &[2.0, 2.9]);
        assert_eq!(r.len(), 2, "{r:?}");
        assert!(r
            .iter()
            .any(|v| v.kind == ViolationKind::UpperBound && v.name == "y"));
        let r = check_solution(&toy(), &[1.0, 3.0]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].name, "y");
    }

    #[test]
    fn integrality_and_shape() {
        let r = check_solution(&toy(), &[1.5, 0.0]);
        assert_eq!(r[0].kind, ViolationKind::Integrality);
        let r = check_solution(&toy(), &[1.0]);
        assert_eq!(r[0].kind, ViolationKind::Shape);
    }

    #[test]
    fn solver_output_passes() {
        let s = solve_mip(&toy()).unwrap();
        assert!(check_solution(&toy(), &s.values).is_empty());
    }
}
