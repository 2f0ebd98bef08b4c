use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::KernelError;

/// Handle to a declared variable; the index into `MilpModel::vars`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var(pub usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
    /// Branch-and-bound branches on fractional variables of the highest
    /// priority class first.
    #[serde(default)]
    pub branch_priority: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }
}

/// A minimization MILP: `min c·x + offset` subject to linear rows and
/// per-variable bounds and integrality.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Dense objective, one coefficient per variable.
    pub objective: Vec<f64>,
    pub objective_offset: f64,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64, kind: VarKind) -> Var {
        let (lb, ub) = match kind {
            VarKind::Binary => (lb.max(0.0), ub.min(1.0)),
            _ => (lb, ub),
        };
        self.vars.push(Variable {
            name: name.into(),
            lb,
            ub,
            kind,
            branch_priority: 0,
        });
        self.objective.push(0.0);
        Var(self.vars.len() - 1)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Var {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn integer(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.add_var(name, lb, ub, VarKind::Integer)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.add_var(name, lb, ub, VarKind::Continuous)
    }

    /// Adds a row. Repeated variables in `terms` are merged and zero
    /// coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (Var, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut merged: Vec<(Var, f64)> = Vec::new();
        for (v, a) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(entry) => entry.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            name: name.into(),
            terms: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective_coef(&mut self, var: Var, coef: f64) {
        self.objective[var.0] = coef;
    }

    pub fn add_objective_coef(&mut self, var: Var, coef: f64) {
        self.objective[var.0] += coef;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_branch_priority(&mut self, v: Var, priority: u32) {
        self.vars[v.0].branch_priority = priority;
    }

    pub fn var(&self, v: Var) -> &Variable {
        &self.vars[v.0]
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind.is_integral())
            .map(|(i, _)| Var(i))
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Copy with every integrality requirement dropped.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.objective.len() != self.vars.len() {
            return Err(KernelError::InvalidModel(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.vars.len()
            )));
        }
        for v in &self.vars {
            if v.lb.is_nan() || v.ub.is_nan() || v.lb > v.ub {
                return Err(KernelError::InvalidModel(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lb, v.ub
                )));
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(KernelError::InvalidModel(format!(
                    "binary variable {} has bounds [{}, {}]",
                    v.name, v.lb, v.ub
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(KernelError::InvalidModel(format!(
                    "constraint {} has non-finite rhs",
                    c.name
                )));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.vars.len() {
                    return Err(KernelError::InvalidModel(format!(
                        "constraint {} references undeclared variable #{}",
                        c.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(KernelError::InvalidModel(format!(
                        "constraint {} has non-finite coefficient on {}",
                        c.name, self.vars[v.0].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Renders the model in a CPLEX-LP-like text form for debugging.
    ///
    /// Grammar (one item per line, sections in this order):
    ///
    /// ```text
    /// \ <model name>
    /// minimize
    ///  obj: <coef> <var> + <coef> <var> ... + <offset>
    /// subject to
    ///  <row name>: <coef> <var> + ... (<=|=|>=) <rhs>
    /// bounds
    ///  <lb> <= <var> <= <ub>          (infinite bounds printed as -inf / +inf)
    /// general
    ///  <integer var>
    /// binary
    ///  <binary var>
    /// end
    /// ```
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ {}", self.name);
        let _ = writeln!(out, "minimize");
        let mut obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| format!("{} {}", fmt_num(*c), self.vars[i].name))
            .collect();
        if self.objective_offset != 0.0 || obj.is_empty() {
            obj.push(fmt_num(self.objective_offset));
        }
        let _ = writeln!(out, " obj: {}", obj.join(" + "));
        let _ = writeln!(out, "subject to");
        for c in &self.constraints {
            let lhs: Vec<String> = c
                .terms
                .iter()
                .map(|&(v, a)| format!("{} {}", fmt_num(a), self.vars[v.0].name))
                .collect();
            let lhs = if lhs.is_empty() {
                "0".to_string()
            } else {
                lhs.join(" + ")
            };
            let _ = writeln!(
                out,
                " {}: {} {} {}",
                c.name,
                lhs,
                c.sense.symbol(),
                fmt_num(c.rhs)
            );
        }
        let _ = writeln!(out, "bounds");
        for v in &self.vars {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lb), v.name, fmt_num(v.ub));
        }
        let _ = writeln!(out, "general");
        for v in self.vars.iter().filter(|v| v.kind == VarKind::Integer) {
            let _ = writeln!(out, " {}", v.name);
        }
        let _ = writeln!(out, "binary");
        for v in self.vars.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(out, " {}", v.name);
        }
        let _ = writeln!(out, "end");
        out
    }
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}
