//! MIP data model shared by every other module.
//!
//! Rows are stored in ranged form `lhs <= a.x <= rhs`; either side may be
//! infinite but not both. Variable indices are dense `0..n`.

mod io;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{from_json_str, read_instance, to_json_string, write_instance};

use crate::error::{Error, Result};

/// Absolute tolerance on row and bound violations.
pub const FEAS_TOL: f64 = 1e-6;
/// Absolute tolerance on distance to the nearest integer.
pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Binary,
    Integer,
    Continuous,
}

impl VarType {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarType::Continuous)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VarType::Binary => "binary",
            VarType::Integer => "integer",
            VarType::Continuous => "continuous",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub vtype: VarType,
    pub lb: f64,
    pub ub: f64,
}

impl Variable {
    pub fn binary(name: impl Into<String>) -> Self {
        Variable { name: name.into(), vtype: VarType::Binary, lb: 0.0, ub: 1.0 }
    }

    pub fn continuous(name: impl Into<String>, lb: f64, ub: f64) -> Self {
        Variable { name: name.into(), vtype: VarType::Continuous, lb, ub }
    }

    pub fn integer(name: impl Into<String>, lb: f64, ub: f64) -> Self {
        Variable { name: name.into(), vtype: VarType::Integer, lb, ub }
    }
}

/// One ranged row. `coeffs` is kept sorted by variable index.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Constraint {
    /// Builds a row, sorting the coefficients by variable index.
    pub fn new(name: impl Into<String>, mut coeffs: Vec<(usize, f64)>, lhs: f64, rhs: f64) -> Self {
        coeffs.sort_by_key(|&(j, _)| j);
        Constraint { name: name.into(), coeffs, lhs, rhs }
    }

    pub fn le(name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(name, coeffs, f64::NEG_INFINITY, rhs)
    }

    pub fn ge(name: impl Into<String>, coeffs: Vec<(usize, f64)>, lhs: f64) -> Self {
        Self::new(name, coeffs, lhs, f64::INFINITY)
    }

    pub fn eq(name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(name, coeffs, rhs, rhs)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn is_equality(&self) -> bool {
        self.lhs == self.rhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipInstance {
    pub name: String,
    pub sense: Sense,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Dense objective, one entry per variable.
    pub objective: Vec<f64>,
}

impl MipInstance {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        MipInstance {
            name: name.into(),
            sense,
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
        }
    }

    /// Appends a variable with objective coefficient `cost`; returns its index.
    pub fn add_var(&mut self, var: Variable, cost: f64) -> usize {
        self.variables.push(var);
        self.objective.push(cost);
        self.variables.len() - 1
    }

    pub fn add_row(&mut self, row: Constraint) -> usize {
        self.constraints.push(row);
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Indices of binary variables, ascending.
    pub fn binaries(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.vtype == VarType::Binary)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.variables.get(j).is_some_and(|v| v.vtype == VarType::Binary)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn nonzeros(&self) -> usize {
        self.constraints.iter().map(|r| r.coeffs.len()).sum()
    }
}

/// A broken instance invariant, naming the offending entity.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ObjectiveLength { expected: usize, found: usize },
    DuplicateVariableName { name: String },
    InvertedBounds { variable: String },
    BinaryBounds { variable: String },
    NonFiniteValue { entity: String },
    DanglingIndex { constraint: String, index: usize },
    DuplicateEntry { constraint: String, index: usize },
    EmptyRow { constraint: String },
    FreeRow { constraint: String },
    InvertedSides { constraint: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ObjectiveLength { expected, found } => {
                write!(f, "objective has {found} entries, expected {expected}")
            }
            Violation::DuplicateVariableName { name } => write!(f, "duplicate variable name `{name}`"),
            Violation::InvertedBounds { variable } => write!(f, "variable `{variable}`: lb > ub"),
            Violation::BinaryBounds { variable } => {
                write!(f, "binary bound: variable `{variable}` has bounds outside [0, 1]")
            }
            Violation::NonFiniteValue { entity } => write!(f, "{entity}: NaN or misplaced infinity"),
            Violation::DanglingIndex { constraint, index } => {
                write!(f, "dangling index: constraint `{constraint}` references variable {index}")
            }
            Violation::DuplicateEntry { constraint, index } => {
                write!(f, "constraint `{constraint}` has duplicate entries for variable {index}")
            }
            Violation::EmptyRow { constraint } => write!(f, "constraint `{constraint}` has no coefficients"),
            Violation::FreeRow { constraint } => write!(f, "constraint `{constraint}` has no finite side"),
            Violation::InvertedSides { constraint } => write!(f, "constraint `{constraint}`: lhs > rhs"),
        }
    }
}

/// Checks every instance invariant. Returns an empty list for a valid instance.
pub fn validate_instance(inst: &MipInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.variables.len();
    if inst.objective.len() != n {
        out.push(Violation::ObjectiveLength { expected: n, found: inst.objective.len() });
    }
    if inst.objective.iter().any(|c| !c.is_finite()) {
        out.push(Violation::NonFiniteValue { entity: "objective".into() });
    }
    let mut names = HashSet::new();
    for v in &inst.variables {
        if !names.insert(v.name.as_str()) {
            out.push(Violation::DuplicateVariableName { name: v.name.clone() });
        }
        if v.lb.is_nan() || v.ub.is_nan() || v.lb == f64::INFINITY || v.ub == f64::NEG_INFINITY {
            out.push(Violation::NonFiniteValue { entity: format!("variable `{}`", v.name) });
            continue;
        }
        if v.lb > v.ub {
            out.push(Violation::InvertedBounds { variable: v.name.clone() });
        }
        if v.vtype == VarType::Binary && (v.lb < 0.0 || v.ub > 1.0) {
            out.push(Violation::BinaryBounds { variable: v.name.clone() });
        }
    }
    for row in &inst.constraints {
        if row.coeffs.is_empty() {
            out.push(Violation::EmptyRow { constraint: row.name.clone() });
        }
        let mut seen = HashSet::new();
        for &(j, a) in &row.coeffs {
            if j >= n {
                out.push(Violation::DanglingIndex { constraint: row.name.clone(), index: j });
            }
            if !seen.insert(j) {
                out.push(Violation::DuplicateEntry { constraint: row.name.clone(), index: j });
            }
            if !a.is_finite() {
                out.push(Violation::NonFiniteValue { entity: format!("constraint `{}`", row.name) });
            }
        }
        if row.lhs.is_nan() || row.rhs.is_nan() || row.lhs == f64::INFINITY || row.rhs == f64::NEG_INFINITY {
            out.push(Violation::NonFiniteValue { entity: format!("constraint `{}` sides", row.name) });
            continue;
        }
        if !row.lhs.is_finite() && !row.rhs.is_finite() {
            out.push(Violation::FreeRow { constraint: row.name.clone() });
        }
        if row.lhs > row.rhs {
            out.push(Violation::InvertedSides { constraint: row.name.clone() });
        }
    }
    out
}

pub(crate) fn ensure_valid(inst: &MipInstance) -> Result<()> {
    let violations = validate_instance(inst);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(
            violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        ))
    }
}

/// A minimize-sense copy of an instance plus the flag needed to report
/// objectives in the original sense.
#[derive(Clone, Debug, PartialEq)]
pub struct Canonical {
    pub instance: MipInstance,
    pub sense_flipped: bool,
}

impl Canonical {
    /// Maps an objective of the canonical instance back to the original sense.
    pub fn original_objective(&self, value: f64) -> f64 {
        if self.sense_flipped {
            -value
        } else {
            value
        }
    }
}

/// Rewrites the instance in minimize sense. Rows are left untouched.
pub fn canonicalize(inst: &MipInstance) -> Result<Canonical> {
    ensure_valid(inst)?;
    let mut instance = inst.clone();
    let sense_flipped = inst.sense == Sense::Maximize;
    if sense_flipped {
        instance.sense = Sense::Minimize;
        for c in &mut instance.objective {
            *c = if *c == 0.0 { 0.0 } else { -*c };
        }
    }
    Ok(Canonical { instance, sense_flipped })
}

/// A point together with its objective and feasibility verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// `c.x` in the instance's own sense.
    pub objective: f64,
    pub feasible: bool,
    pub max_violation: f64,
}

/// Evaluates `x` against every row, bound and integrality requirement.
pub fn evaluate_solution(inst: &MipInstance, x: &[f64]) -> Result<Solution> {
    if x.len() != inst.num_vars() {
        return Err(Error::DimensionMismatch { expected: inst.num_vars(), found: x.len() });
    }
    let mut viol: f64 = 0.0;
    for (v, &xj) in inst.variables.iter().zip(x) {
        viol = viol.max(v.lb - xj).max(xj - v.ub);
        if v.vtype.is_integral() {
            viol = viol.max((xj - xj.round()).abs());
        }
    }
    for row in &inst.constraints {
        let act = row.activity(x);
        viol = viol.max(row.lhs - act).max(act - row.rhs);
    }
    let viol = if viol.is_nan() { f64::INFINITY } else { viol.max(0.0) };
    Ok(Solution {
        values: x.to_vec(),
        objective: inst.objective_value(x),
        feasible: viol <= FEAS_TOL.max(INT_TOL),
        max_violation: viol,
    })
}
