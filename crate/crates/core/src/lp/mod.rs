//! LP relaxation solver.
//!
//! [`solve_lp`] is the one-shot entry point. Branch-and-bound keeps a
//! [`LpRelaxation`] alive across nodes and only changes column bounds, which
//! lets every node start from its parent's basis.

mod simplex;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mip::{Constraint, MipInstance, Sense};
pub(crate) use simplex::{Basis, ColState};
use simplex::{Outcome, Simplex, SparseCols};

pub use simplex::{PRIMAL_TOL, REFACTOR_EVERY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit hit even after the anti-cycling fallback.
    NumericalFailure,
}

/// Status of a column or row logical in the final basis. Nonbasic free
/// columns (value 0) are reported as `AtLower`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
}

impl From<ColState> for BasisStatus {
    fn from(s: ColState) -> Self {
        match s {
            ColState::Basic => BasisStatus::Basic,
            ColState::Upper => BasisStatus::AtUpper,
            ColState::Lower | ColState::Free => BasisStatus::AtLower,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual per row (instance rows first, then extra rows). Positive
    /// values price the row's lower side, negative values its upper side.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub var_basis: Vec<BasisStatus>,
    pub row_basis: Vec<BasisStatus>,
    pub iterations: usize,
}

/// Per-variable bound override `(lb, ub)`.
pub type BoundOverrides = BTreeMap<usize, (f64, f64)>;

/// Solves the LP relaxation of a minimize-sense instance. Integrality is
/// ignored; `bound_overrides` replace variable bounds and `extra_rows` are
/// appended after the instance rows.
pub fn solve_lp(inst: &MipInstance, bound_overrides: &BoundOverrides, extra_rows: &[Constraint]) -> LpSolution {
    debug_assert_eq!(inst.sense, Sense::Minimize, "solve_lp expects a canonicalized instance");
    let mut lp = LpRelaxation::new(inst, extra_rows);
    for (&j, &(lo, up)) in bound_overrides {
        lp.set_bounds(j, lo, up);
    }
    lp.solve()
}

/// A reusable LP relaxation whose column bounds can be changed between
/// solves. Each solve starts from the basis left by the previous one unless
/// another basis is loaded.
#[derive(Clone, Debug)]
pub struct LpRelaxation {
    engine: Simplex,
    num_rows: usize,
}

impl LpRelaxation {
    pub fn new(inst: &MipInstance, extra_rows: &[Constraint]) -> Self {
        let n = inst.num_vars();
        let rows: Vec<&Constraint> = inst.constraints.iter().chain(extra_rows).collect();
        let coeffs: Vec<Vec<(usize, f64)>> = rows.iter().map(|r| r.coeffs.clone()).collect();
        let cols = SparseCols::from_rows(n, &coeffs);
        let mut lo: Vec<f64> = inst.variables.iter().map(|v| v.lb).collect();
        let mut up: Vec<f64> = inst.variables.iter().map(|v| v.ub).collect();
        lo.extend(rows.iter().map(|r| r.lhs));
        up.extend(rows.iter().map(|r| r.rhs));
        LpRelaxation { engine: Simplex::new(cols, inst.objective.clone(), lo, up), num_rows: rows.len() }
    }

    pub fn set_bounds(&mut self, j: usize, lb: f64, ub: f64) {
        self.engine.set_col_bounds(j, lb, ub);
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        self.engine.col_bounds(j)
    }

    pub(crate) fn basis(&self) -> Basis {
        self.engine.basis()
    }

    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        self.engine.load_basis(basis);
    }

    pub fn solve(&mut self) -> LpSolution {
        let outcome = self.engine.solve();
        let status = match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Infeasible => LpStatus::Infeasible,
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit => LpStatus::NumericalFailure,
        };
        let n = self.engine.num_structural();
        let (duals, mut reduced) = self.engine.dual_solution();
        reduced.truncate(n);
        LpSolution {
            status,
            x: self.engine.primal().to_vec(),
            objective: self.engine.objective(),
            duals,
            reduced_costs: reduced,
            var_basis: (0..n).map(|k| self.engine.state(k).into()).collect(),
            row_basis: (0..self.num_rows).map(|i| self.engine.state(n + i).into()).collect(),
            iterations: self.engine.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::Variable;

    fn inf() -> f64 {
        f64::INFINITY
    }

    #[test]
    fn one_variable_lp() {
        let mut m = MipInstance::new("one", Sense::Minimize);
        m.add_var(Variable::continuous("x", 0.0, inf()), 1.0);
        m.add_row(Constraint::ge("r", vec![(0, 1.0)], 1.0));
        let s = solve_lp(&m, &BoundOverrides::new(), &[]);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn box_lp() {
        let mut m = MipInstance::new("box", Sense::Minimize);
        m.add_var(Variable::continuous("x1", 0.0, 1.0), -1.0);
        m.add_var(Variable::continuous("x2", 0.0, 1.0), -1.0);
        m.add_row(Constraint::le("r", vec![(0, 1.0), (1, 1.0)], 1.0));
        let s = solve_lp(&m, &BoundOverrides::new(), &[]);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_row() {
        let mut m = MipInstance::new("inf", Sense::Minimize);
        m.add_var(Variable::continuous("x", 0.0, inf()), 1.0);
        m.add_row(Constraint::le("r", vec![(0, 1.0)], -1.0));
        assert_eq!(solve_lp(&m, &BoundOverrides::new(), &[]).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded() {
        let mut m = MipInstance::new("unb", Sense::Minimize);
        m.add_var(Variable::continuous("x", 0.0, inf()), -1.0);
        m.add_var(Variable::continuous("y", 0.0, inf()), 0.0);
        m.add_row(Constraint::ge("r", vec![(0, 1.0), (1, -1.0)], 0.0));
        assert_eq!(solve_lp(&m, &BoundOverrides::new(), &[]).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_equality() {
        // min x + 2y  s.t. x + y = 3, x - y >= -1, x free, y in [0, 10]
        let mut m = MipInstance::new("free", Sense::Minimize);
        m.add_var(Variable::continuous("x", f64::NEG_INFINITY, inf()), 1.0);
        m.add_var(Variable::continuous("y", 0.0, 10.0), 2.0);
        m.add_row(Constraint::eq("e", vec![(0, 1.0), (1, 1.0)], 3.0));
        m.add_row(Constraint::ge("g", vec![(0, 1.0), (1, -1.0)], -1.0));
        let s = solve_lp(&m, &BoundOverrides::new(), &[]);
        assert_eq!(s.status, LpStatus::Optimal);
        // y as small as possible: y = 0, x = 3
        assert!((s.objective - 3.0).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn overrides_and_extra_rows() {
        let mut m = MipInstance::new("o", Sense::Minimize);
        m.add_var(Variable::continuous("x1", 0.0, 1.0), -1.0);
        m.add_var(Variable::continuous("x2", 0.0, 1.0), -1.0);
        let mut ov = BoundOverrides::new();
        ov.insert(0, (0.0, 0.25));
        let extra = [Constraint::le("cut", vec![(1, 1.0)], 0.5)];
        let s = solve_lp(&m, &ov, &extra);
        assert!((s.objective + 0.75).abs() < 1e-9);
        assert_eq!(s.duals.len(), 1);
        assert_eq!(s.row_basis.len(), 1);
    }

    #[test]
    fn warm_resolve_after_bound_change() {
        let mut m = MipInstance::new("w", Sense::Minimize);
        for j in 0..4 {
            m.add_var(Variable::continuous(format!("x{j}"), 0.0, 1.0), -(j as f64 + 1.0));
        }
        m.add_row(Constraint::le("r", (0..4).map(|j| (j, 1.0 + j as f64)).collect(), 3.5));
        let mut lp = LpRelaxation::new(&m, &[]);
        let first = lp.solve();
        lp.set_bounds(3, 0.0, 0.0);
        let warm = lp.solve();
        let mut ov = BoundOverrides::new();
        ov.insert(3, (0.0, 0.0));
        let cold = solve_lp(&m, &ov, &[]);
        assert_eq!(warm.status, LpStatus::Optimal);
        assert!((warm.objective - cold.objective).abs() < 1e-9);
        assert!(warm.objective >= first.objective - 1e-9);
    }
}
