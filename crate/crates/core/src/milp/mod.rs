//! Generic mixed-integer linear programming: model container, a dense
//! bounded-variable simplex for the LP relaxation, and best-first branch and
//! bound. No domain knowledge lives here.

mod branch;
mod simplex;

pub use branch::{
    solve_milp, solve_milp_with_hooks, MilpError, MilpParams, MilpSolution, MilpStatus,
    SolveHooks, SolveStats,
};
pub use simplex::{
    solve_lp, solve_lp_with_bounds, InfeasibilityCertificate, LpError, LpOptions, LpOutcome,
    LpSolution, UnboundedRay,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Handle to a variable of a [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub up: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Sparse linear row `sum(coeff * var) sense rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variable {0} referenced but model has {1} variables")]
    UnknownVariable(usize, usize),
    #[error("non-finite coefficient on variable {var} in {place}")]
    NonFinite { var: usize, place: &'static str },
    #[error("binary variable {0} has bounds outside [0,1]")]
    BadBinaryBounds(usize),
    #[error("variable {0} has lower bound above upper bound")]
    EmptyBounds(usize),
    #[error("{0}")]
    Parameter(String),
}

/// Minimization MILP over bounded continuous and binary variables.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Sparse objective, sense = minimize.
    pub objective: Vec<(VarId, f64)>,
    pub objective_offset: f64,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, up: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lo,
            up,
            kind: VarKind::Continuous,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lo: 0.0,
            up: 1.0,
            kind: VarKind::Binary,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_row(&mut self, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { terms, sense, rhs });
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) {
        self.objective = terms;
    }

    pub fn add_objective_term(&mut self, var: VarId, coeff: f64) {
        self.objective.push((var, coeff));
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Fixes a variable to a constant by collapsing its bounds.
    pub fn fix_var(&mut self, var: VarId, value: f64) {
        self.variables[var.0].lo = value;
        self.variables[var.0].up = value;
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let nv = self.variables.len();
        for (idx, v) in self.variables.iter().enumerate() {
            if v.lo > v.up {
                return Err(ModelError::EmptyBounds(idx));
            }
            if v.kind == VarKind::Binary && (v.lo < -1e-12 || v.up > 1.0 + 1e-12) {
                return Err(ModelError::BadBinaryBounds(idx));
            }
        }
        let check_terms = |terms: &[(VarId, f64)], place: &'static str| {
            for &(VarId(j), coeff) in terms {
                if j >= nv {
                    return Err(ModelError::UnknownVariable(j, nv));
                }
                if !coeff.is_finite() {
                    return Err(ModelError::NonFinite { var: j, place });
                }
            }
            Ok(())
        };
        check_terms(&self.objective, "objective")?;
        for row in &self.constraints {
            check_terms(&row.terms, "constraint")?;
            if !row.rhs.is_finite() {
                return Err(ModelError::NonFinite {
                    var: usize::MAX,
                    place: "rhs",
                });
            }
        }
        Ok(())
    }

    /// Objective value of an assignment (includes the constant offset).
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .map(|&(VarId(j), coeff)| coeff * x[j])
                .sum::<f64>()
    }

    /// Maximum constraint/bound violation of an assignment (integrality not
    /// included; see [`MilpModel::max_integrality_violation`]).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, v) in self.variables.iter().enumerate() {
            worst = worst.max(v.lo - x[j]).max(x[j] - v.up);
        }
        for row in &self.constraints {
            let lhs: f64 = row.terms.iter().map(|&(VarId(j), c)| c * x[j]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Largest distance of any binary variable from {0, 1}.
    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(j, _)| x[j].abs().min((1.0 - x[j]).abs()))
            .fold(0.0, f64::max)
    }

    /// Adds `t >= |x|` via `t >= x`, `t >= -x`, `t <= bound`. In any optimum
    /// where `t` carries positive cost, `t = |x|`.
    pub fn encode_abs(&mut self, x: VarId, bound: f64) -> VarId {
        let name = format!("abs_{}", self.variables[x.0].name);
        let t = self.add_var(name, 0.0, bound);
        self.add_row(vec![(t, 1.0), (x, -1.0)], Sense::Ge, 0.0);
        self.add_row(vec![(t, 1.0), (x, 1.0)], Sense::Ge, 0.0);
        t
    }

    /// Dump in LP text format, for cross-checking against external solvers.
    pub fn to_lp_format(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "Minimize");
        let mut obj = String::from(" obj:");
        if self.objective.is_empty() {
            obj.push_str(" 0");
        }
        for &(VarId(j), coeff) in &self.objective {
            let _ = write!(obj, " {} {}", fmt_signed(coeff), self.variables[j].name);
        }
        let _ = writeln!(out, "{obj}");
        let _ = writeln!(out, "Subject To");
        for (i, row) in self.constraints.iter().enumerate() {
            let mut line = format!(" r{i}:");
            for &(VarId(j), coeff) in &row.terms {
                let _ = write!(line, " {} {}", fmt_signed(coeff), self.variables[j].name);
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, "{line} {op} {}", row.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for v in &self.variables {
            let lo = if v.lo == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{}", v.lo)
            };
            let up = if v.up == f64::INFINITY {
                "+inf".to_string()
            } else {
                format!("{}", v.up)
            };
            let _ = writeln!(out, " {lo} <= {} <= {up}", v.name);
        }
        let binaries: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            let _ = writeln!(out, "Binaries");
            let _ = writeln!(out, " {}", binaries.join(" "));
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn fmt_signed(v: f64) -> String {
    if v >= 0.0 {
        format!("+ {v}")
    } else {
        format!("- {}", -v)
    }
}
