//! Applying predictions: pick the confident binaries, round them, and
//! either add a local branching cut (approximate) or branch on it at the
//! root (exact).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{apply_local_branching_cut, presolve, root_branch_solve, solve, BnbConfig, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::gen::Problem;
use crate::metrics::primal_gap;
use crate::mip::{MipInstance, Sense};

pub const PHI_GRID: [u32; 5] = [0, 5, 10, 15, 20];
pub const ETA_GRID: [f64; 5] = [0.8, 0.9, 0.95, 0.99, 1.0];

/// Primal gap charged to a grid cell whose run found no solution.
pub const FAILED_RUN_GAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplyMode {
    Approximate,
    Exact,
}

impl ApplyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ApplyMode::Approximate => "approx",
            ApplyMode::Exact => "exact",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApplyConfig {
    pub phi: u32,
    pub eta: f64,
    pub solver: BnbConfig,
    pub mode: ApplyMode,
}

impl ApplyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        self.solver.validate()
    }
}

/// Tuned `(phi, eta)` per problem class used when no grid search was run.
pub fn default_phi_eta(problem: Problem) -> (u32, f64) {
    match problem {
        Problem::Fcnf => (0, 0.80),
        Problem::Cfl => (0, 0.95),
        Problem::Ga => (5, 0.99),
        Problem::Mis => (10, 0.90),
        Problem::Mk => (10, 0.80),
        Problem::Sc => (0, 0.90),
        Problem::Tsp => (0, 0.90),
        Problem::Vrp => (5, 0.95),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Chosen variables, most confident first.
    pub s: Vec<usize>,
    /// Rounded value per position of `s`.
    pub x_hat: Vec<f64>,
}

/// Sorts candidates by `min(z, 1 - z)` ascending, ties by position, and
/// keeps the first `floor(eta * len)`. Rounds with `z >= 0.5` to 1.
///
/// ```
/// use solpred::predict::select_s;
/// let sel = select_s(&[0.99, 0.45, 0.02], 2.0 / 3.0).unwrap();
/// assert_eq!(sel.s, vec![0, 2]);
/// assert_eq!(sel.x_hat, vec![1.0, 0.0]);
/// ```
pub fn select_s(z: &[f64], eta: f64) -> Result<Selection> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("predictions must lie in [0, 1]".into()));
    }
    let key = |i: usize| z[i].min(1.0 - z[i]);
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    // slack so that e.g. 0.9 * 10 keeps 9
    let k = ((eta * z.len() as f64 + 1e-9).floor() as usize).min(z.len());
    idx.truncate(k);
    let x_hat = idx.iter().map(|&i| if z[i] >= 0.5 { 1.0 } else { 0.0 }).collect();
    Ok(Selection { s: idx, x_hat })
}

/// Prediction per variable of `inst`, looked up by name. Binaries missing
/// from `by_name` take their presolve value when presolve fixes them and
/// 0.5 otherwise. Non-binary entries are 0.5 and never used.
pub fn align_predictions(inst: &MipInstance, by_name: &HashMap<String, f64>) -> Vec<f64> {
    let mut z = vec![0.5; inst.num_vars()];
    for &(j, v) in &presolve(inst).fixed {
        z[j] = v;
    }
    for j in inst.binaries() {
        if let Some(&v) = by_name.get(&inst.variables[j].name) {
            z[j] = v;
        }
    }
    z
}

/// Selection over the binaries of `inst`, mapped to instance indices, with
/// `x_hat` expanded to a full-length vector.
pub fn select_for_instance(inst: &MipInstance, z: &[f64], eta: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    if z.len() != inst.num_vars() {
        return Err(Error::DimensionMismatch { expected: inst.num_vars(), found: z.len() });
    }
    let b = inst.binaries();
    let zb: Vec<f64> = b.iter().map(|&j| z[j]).collect();
    let sel = select_s(&zb, eta)?;
    let mut x_hat = vec![0.0; inst.num_vars()];
    let s: Vec<usize> = sel.s.iter().map(|&k| b[k]).collect();
    for (&j, &v) in s.iter().zip(&sel.x_hat) {
        x_hat[j] = v;
    }
    Ok((s, x_hat))
}

/// Solves with the local branching cut added as a hard constraint. The
/// bound of the result holds only for the restricted instance.
pub fn approximate_solve(inst: &MipInstance, z: &[f64], cfg: &ApplyConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (s, x_hat) = select_for_instance(inst, z, cfg.eta)?;
    let cut = apply_local_branching_cut(inst, &x_hat, &s, cfg.phi)?;
    solve(&cut, &cfg.solver)
}

/// Solves both sides of the root disjunction; the result is exact.
pub fn exact_solve(inst: &MipInstance, z: &[f64], cfg: &ApplyConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (s, x_hat) = select_for_instance(inst, z, cfg.eta)?;
    root_branch_solve(inst, &x_hat, &s, cfg.phi, &cfg.solver)
}

pub fn apply(inst: &MipInstance, z: &[f64], cfg: &ApplyConfig) -> Result<SolveResult> {
    match cfg.mode {
        ApplyMode::Approximate => approximate_solve(inst, z, cfg),
        ApplyMode::Exact => exact_solve(inst, z, cfg),
    }
}

/// Validation instance with its full-length predictions and the reference
/// objective the primal gap is measured against.
#[derive(Clone, Debug)]
pub struct ValidationCase {
    pub instance: MipInstance,
    pub z: Vec<f64>,
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub phi: u32,
    pub eta: f64,
    pub mean_primal_gap: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub phi: u32,
    pub eta: f64,
    pub cells: Vec<GridCell>,
}

/// Runs the approximate solve for every `(phi, eta)` pair on every case and
/// picks the pair with the smallest mean primal gap, ties to smaller `phi`
/// then larger `eta`. Gaps are measured against the better of the case's
/// reference and the best objective any run found. Runs without a solution
/// count as [`FAILED_RUN_GAP`].
pub fn grid_search(cases: &[ValidationCase], phis: &[u32], etas: &[f64], solver: &BnbConfig) -> Result<GridResult> {
    if cases.is_empty() || phis.is_empty() || etas.is_empty() {
        return Err(Error::InvalidArgument("grid search needs validation cases and nonempty grids".into()));
    }
    let pairs: Vec<(u32, f64)> = phis.iter().flat_map(|&p| etas.iter().map(move |&e| (p, e))).collect();
    let jobs: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..cases.len()).map(move |c| (p, c))).collect();
    let objs: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(p, c)| {
            let (phi, eta) = pairs[p];
            let cfg = ApplyConfig { phi, eta, solver: solver.clone(), mode: ApplyMode::Approximate };
            let case = &cases[c];
            let res = approximate_solve(&case.instance, &case.z, &cfg)?;
            Ok(res.objective().filter(|_| res.status != SolveStatus::Infeasible))
        })
        .collect::<Result<_>>()?;
    // A run may beat the given reference; gaps are taken against the best
    // objective known for the case.
    let best_known: Vec<f64> = cases
        .iter()
        .enumerate()
        .map(|(c, case)| {
            let max = case.instance.sense == Sense::Maximize;
            (0..pairs.len()).filter_map(|p| objs[p * cases.len() + c]).fold(case.reference, |a, b| {
                if (b > a) == max {
                    b
                } else {
                    a
                }
            })
        })
        .collect();
    let gaps: Vec<f64> = jobs
        .iter()
        .zip(&objs)
        .map(|(&(_, c), o)| o.map_or(FAILED_RUN_GAP, |v| primal_gap(v, best_known[c])))
        .collect();
    let cells: Vec<GridCell> = pairs
        .iter()
        .enumerate()
        .map(|(p, &(phi, eta))| {
            let g = &gaps[p * cases.len()..(p + 1) * cases.len()];
            GridCell { phi, eta, mean_primal_gap: g.iter().sum::<f64>() / g.len() as f64, runs: g.len() }
        })
        .collect();
    let best = cells
        .iter()
        .min_by(|a, b| {
            a.mean_primal_gap
                .total_cmp(&b.mean_primal_gap)
                .then(a.phi.cmp(&b.phi))
                .then(b.eta.total_cmp(&a.eta))
        })
        .expect("nonempty grid");
    Ok(GridResult { phi: best.phi, eta: best.eta, cells })
}

/// One row of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub mode: String,
    pub phi: Option<u32>,
    pub eta: Option<f64>,
    pub status: String,
    pub objective: Option<f64>,
    pub lower_bound: Option<f64>,
    pub nodes: usize,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn new(instance: &str, mode: &str, phi_eta: Option<(u32, f64)>, res: &SolveResult) -> Self {
        ResultRow {
            instance: instance.to_string(),
            mode: mode.to_string(),
            phi: phi_eta.map(|p| p.0),
            eta: phi_eta.map(|p| p.1),
            status: status_str(res.status).to_string(),
            objective: res.objective(),
            lower_bound: res.lower_bound.is_finite().then_some(res.lower_bound),
            nodes: res.nodes,
            wall_time_s: res.wall_time_s,
        }
    }
}

pub fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::LimitReached => "limit",
    }
}
