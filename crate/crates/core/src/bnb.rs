//! LP-based branch and bound.
//!
//! Branching picks the most fractional integer variable (lowest index on
//! ties). Nodes are explored best bound first, but after branching the
//! child in the rounding direction is solved immediately, so the search
//! plunges depth first until that path is pruned. In first-feasible mode
//! the plunge instead follows the direction with fewer locks, which cannot
//! break as many rows. Every node keeps only the
//! bound changes on its path from the root, and the deferred sibling keeps
//! a shared handle on its parent's basis for a warm start.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, Basis, BoundOverrides, LpRelaxation, LpSolution, LpStatus};
use crate::mip::{canonicalize, ensure_valid, evaluate_solution, Constraint, MipInstance, Solution, INT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    Optimize,
    /// Stop at the first integer-feasible point.
    FirstFeasible,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    #[default]
    MostFractional,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    #[default]
    BestBoundWithPlunging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub time_limit_s: f64,
    pub node_limit: usize,
    /// Relative gap at which a node is pruned and optimality is declared.
    pub gap_limit: f64,
    pub mode: SolveMode,
    pub branching: Branching,
    pub node_selection: NodeSelection,
    /// Kept for reproducibility records; the search itself is deterministic.
    pub seed: u64,
    /// If set, only solutions strictly better than this objective (in the
    /// instance's sense) are sought.
    pub cutoff: Option<f64>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            time_limit_s: 3600.0,
            node_limit: 1_000_000,
            gap_limit: 1e-9,
            mode: SolveMode::Optimize,
            branching: Branching::MostFractional,
            node_selection: NodeSelection::BestBoundWithPlunging,
            seed: 0,
            cutoff: None,
        }
    }
}

impl BnbConfig {
    pub fn first_feasible(time_limit_s: f64) -> Self {
        BnbConfig { time_limit_s, mode: SolveMode::FirstFeasible, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit_s > 0.0) || self.node_limit == 0 {
            return Err(Error::InvalidArgument("time and node limits must be positive".into()));
        }
        if !(self.gap_limit >= 0.0) || !self.gap_limit.is_finite() {
            return Err(Error::InvalidArgument("gap_limit must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// An incumbent exists but optimality was not proven.
    Feasible,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    LimitReached,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best point found, evaluated on the original instance.
    pub incumbent: Option<Solution>,
    /// Proven bound in the instance's own sense (an upper bound when
    /// maximizing). `+inf`/`-inf` when no finite bound is known.
    pub lower_bound: f64,
    pub nodes: usize,
    pub wall_time_s: f64,
    /// Bound after each node, in minimize sense. Never decreases.
    pub bound_trace: Vec<f64>,
}

impl SolveResult {
    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|s| s.objective)
    }
}

type Changes = Rc<Vec<(usize, f64, f64)>>;

struct Node {
    bound: f64,
    seq: u64,
    changes: Changes,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the maximum: smallest bound, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

fn gap_tol(gap: f64, value: f64) -> f64 {
    gap * (1.0 + value.abs())
}

/// Solves `inst` by branch and bound.
pub fn solve(inst: &MipInstance, cfg: &BnbConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let canon = canonicalize(inst)?;
    let start = Instant::now();
    let m = &canon.instance;
    let flip = |v: f64| canon.original_objective(v);
    let cutoff = cfg.cutoff.map(flip);

    let ints: Vec<usize> = (0..m.num_vars()).filter(|&j| m.variables[j].vtype.is_integral()).collect();
    let root_bounds: Vec<(f64, f64)> = m.variables.iter().map(|v| (v.lb, v.ub)).collect();
    let (up_locks, down_locks) = locks(m);
    let mut lp = LpRelaxation::new(m, &[]);
    let mut active: Vec<usize> = Vec::new();

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut next = Some(Node { bound: f64::NEG_INFINITY, seq, changes: Rc::new(Vec::new()), basis: None });
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lost = f64::INFINITY;
    let mut nodes = 0usize;
    let mut stopped = false;
    let mut trace = Vec::new();
    let mut prev_lb = f64::NEG_INFINITY;

    let threshold = |best: &Option<(f64, Vec<f64>)>| {
        let a = best.as_ref().map_or(f64::INFINITY, |(v, _)| v - gap_tol(cfg.gap_limit, *v));
        let b = cutoff.map_or(f64::INFINITY, |c| c - gap_tol(cfg.gap_limit, c));
        a.min(b)
    };

    loop {
        let node = match next.take().or_else(|| heap.pop()) {
            Some(n) => n,
            None => break,
        };
        if node.bound >= threshold(&best) {
            continue;
        }
        if nodes >= cfg.node_limit || start.elapsed().as_secs_f64() >= cfg.time_limit_s {
            heap.push(node);
            stopped = true;
            break;
        }
        nodes += 1;

        for &j in &active {
            lp.set_bounds(j, root_bounds[j].0, root_bounds[j].1);
        }
        active.clear();
        for &(j, l, u) in node.changes.iter() {
            lp.set_bounds(j, l, u);
            active.push(j);
        }
        if let Some(b) = &node.basis {
            lp.load_basis(b);
        }
        let sol = lp.solve();
        match sol.status {
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => lost = f64::NEG_INFINITY,
            LpStatus::NumericalFailure => lost = lost.min(node.bound),
            LpStatus::Optimal => {
                let bound = sol.objective.max(node.bound);
                if bound < threshold(&best) {
                    match most_fractional(&sol.x, &ints) {
                        None => {
                            if let Some((obj, x)) = integral_point(m, &sol.x, &ints) {
                                if obj < threshold(&best) {
                                    best = Some((obj, x));
                                    if cfg.mode == SolveMode::FirstFeasible {
                                        stopped = true;
                                    }
                                }
                            } else {
                                lost = lost.min(bound);
                            }
                        }
                        Some((j, v)) => {
                            let (l, u) = lp.bounds(j);
                            let basis = Rc::new(lp.basis());
                            let child = |seq: u64, lo: f64, up: f64, basis: Option<Rc<Basis>>| {
                                let mut ch = (*node.changes).clone();
                                ch.push((j, lo, up));
                                Node { bound, seq, changes: Rc::new(ch), basis }
                            };
                            let down = (l, v.floor());
                            let up = (v.ceil(), u);
                            let go_up = if cfg.mode == SolveMode::FirstFeasible && up_locks[j] != down_locks[j] {
                                up_locks[j] < down_locks[j]
                            } else {
                                v - v.floor() >= 0.5
                            };
                            let (first, second) = if go_up { (up, down) } else { (down, up) };
                            seq += 1;
                            next = Some(child(seq, first.0, first.1, None));
                            seq += 1;
                            heap.push(child(seq, second.0, second.1, Some(basis)));
                        }
                    }
                }
            }
        }

        let lb = open_bound(&next, &heap, lost, &best).max(prev_lb);
        trace.push(lb);
        prev_lb = lb;
        if stopped {
            break;
        }
        if let Some((v, _)) = &best {
            if v - lb <= gap_tol(cfg.gap_limit, *v) {
                heap.clear();
                next = None;
            }
        }
    }

    let lb = open_bound(&next, &heap, lost, &best).max(prev_lb);
    let complete = next.is_none() && heap.iter().all(|n| n.bound >= threshold(&best)) && lost == f64::INFINITY;
    let status = match &best {
        Some((v, _)) if complete || v - lb <= gap_tol(cfg.gap_limit, *v) => SolveStatus::Optimal,
        Some(_) => SolveStatus::Feasible,
        None if complete && !stopped => SolveStatus::Infeasible,
        None if complete && lb == f64::INFINITY => SolveStatus::Infeasible,
        None => SolveStatus::LimitReached,
    };
    let incumbent = match best {
        Some((_, x)) => Some(evaluate_solution(inst, &x)?),
        None => None,
    };
    Ok(SolveResult {
        status,
        incumbent,
        lower_bound: flip(lb),
        nodes,
        wall_time_s: start.elapsed().as_secs_f64(),
        bound_trace: trace,
    })
}

fn open_bound(next: &Option<Node>, heap: &BinaryHeap<Node>, lost: f64, best: &Option<(f64, Vec<f64>)>) -> f64 {
    let mut lb = best.as_ref().map_or(f64::INFINITY, |(v, _)| *v).min(lost);
    if let Some(n) = next {
        lb = lb.min(n.bound);
    }
    if let Some(n) = heap.peek() {
        lb = lb.min(n.bound);
    }
    lb
}

fn most_fractional(x: &[f64], ints: &[usize]) -> Option<(usize, f64)> {
    let mut pick: Option<(usize, f64, f64)> = None;
    for &j in ints {
        let f = x[j] - x[j].floor();
        let frac = f.min(1.0 - f);
        if frac > INT_TOL && pick.map_or(true, |(_, _, best)| frac > best) {
            pick = Some((j, x[j], frac));
        }
    }
    pick.map(|(j, v, _)| (j, v))
}

/// Rounds the integer components of an integral LP point and checks it.
fn integral_point(m: &MipInstance, x: &[f64], ints: &[usize]) -> Option<(f64, Vec<f64>)> {
    let mut rounded = x.to_vec();
    for &j in ints {
        rounded[j] = rounded[j].round();
    }
    [rounded, x.to_vec()].into_iter().find_map(|p| {
        let s = evaluate_solution(m, &p).ok()?;
        s.feasible.then_some((s.objective, p))
    })
}

/// Coefficients and constant of the Hamming distance to `x_hat` over `s`:
/// `dist(x) = sum(coeffs . x) + ones`.
fn distance_terms(inst: &MipInstance, x_hat: &[f64], s: &[usize]) -> Result<(Vec<(usize, f64)>, usize)> {
    if x_hat.len() != inst.num_vars() {
        return Err(Error::DimensionMismatch { expected: inst.num_vars(), found: x_hat.len() });
    }
    let mut seen = vec![false; inst.num_vars()];
    let mut coeffs = Vec::with_capacity(s.len());
    let mut ones = 0;
    for &j in s {
        if j >= inst.num_vars() || !inst.is_binary(j) {
            return Err(Error::NotBinary(j));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!("index {j} repeated in S")));
        }
        let v = x_hat[j];
        if (v - 1.0).abs() <= INT_TOL {
            coeffs.push((j, -1.0));
            ones += 1;
        } else if v.abs() <= INT_TOL {
            coeffs.push((j, 1.0));
        } else {
            return Err(Error::InvalidArgument(format!("x_hat[{j}] = {v} is not 0 or 1")));
        }
    }
    Ok((coeffs, ones))
}

/// Returns a copy of `inst` with the local branching row `dist(x, x_hat, S) <= phi`.
///
/// `x_hat` is indexed like the instance's variables; only entries in `s`
/// are read. With an empty `s` the row would be `0 <= phi`, so the
/// instance is returned unchanged.
pub fn apply_local_branching_cut(inst: &MipInstance, x_hat: &[f64], s: &[usize], phi: u32) -> Result<MipInstance> {
    let (coeffs, ones) = distance_terms(inst, x_hat, s)?;
    let mut out = inst.clone();
    if !coeffs.is_empty() {
        let rhs = phi as f64 - ones as f64;
        out.add_row(Constraint::new("local_branching", coeffs, f64::NEG_INFINITY, rhs));
    }
    Ok(out)
}

/// The far side of the disjunction, `dist(x, x_hat, S) >= phi + 1`, or
/// `None` when that side is empty because the distance cannot exceed `|S|`.
fn far_side(inst: &MipInstance, x_hat: &[f64], s: &[usize], phi: u32) -> Result<Option<MipInstance>> {
    let (coeffs, ones) = distance_terms(inst, x_hat, s)?;
    if phi as usize >= coeffs.len() {
        return Ok(None);
    }
    let mut out = inst.clone();
    let lhs = phi as f64 + 1.0 - ones as f64;
    out.add_row(Constraint::new("local_branching_far", coeffs, lhs, f64::INFINITY));
    Ok(Some(out))
}

/// Splits the root into `dist <= phi` and `dist >= phi + 1`, solves the
/// near side first and passes its objective to the far side as a cutoff.
/// Returns the merged result: best incumbent, weakest bound.
pub fn root_branch_solve(
    inst: &MipInstance,
    x_hat: &[f64],
    s: &[usize],
    phi: u32,
    cfg: &BnbConfig,
) -> Result<SolveResult> {
    let near_inst = apply_local_branching_cut(inst, x_hat, s, phi)?;
    let far_inst = far_side(inst, x_hat, s, phi)?;
    let near = solve(&near_inst, cfg)?;
    let mut merged = near.clone();
    let Some(far_inst) = far_inst else {
        return Ok(merged);
    };

    let maximize = inst.sense == crate::mip::Sense::Maximize;
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut far_cfg = cfg.clone();
    if let Some(v) = merged.objective() {
        far_cfg.cutoff = Some(match cfg.cutoff {
            Some(c) if better(c, v) => c,
            _ => v,
        });
    }
    let far = solve(&far_inst, &far_cfg)?;

    let near_done = matches!(near.status, SolveStatus::Optimal | SolveStatus::Infeasible);
    let far_done = matches!(far.status, SolveStatus::Optimal | SolveStatus::Infeasible);
    if let Some(f) = far.incumbent {
        if merged.objective().map_or(true, |v| better(f.objective, v)) {
            merged.incumbent = Some(f);
        }
    }
    // The far side only looked for points beating the near incumbent, so
    // its bound is the weaker of its own and that incumbent.
    let far_bound = match (far.status, merged.objective()) {
        (SolveStatus::Infeasible, Some(v)) => v,
        _ => far.lower_bound,
    };
    merged.lower_bound = if maximize { near.lower_bound.max(far_bound) } else { near.lower_bound.min(far_bound) };
    merged.nodes += far.nodes;
    merged.wall_time_s += far.wall_time_s;
    let near_final = near.bound_trace.last().copied().unwrap_or(f64::INFINITY);
    let mut prev = near.bound_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
    for b in far.bound_trace {
        prev = prev.max(b.min(near_final));
        merged.bound_trace.push(prev);
    }
    merged.status = match (&merged.incumbent, near_done && far_done) {
        (Some(_), true) => SolveStatus::Optimal,
        (Some(_), false) => SolveStatus::Feasible,
        (None, true) => SolveStatus::Infeasible,
        (None, false) => SolveStatus::LimitReached,
    };
    Ok(merged)
}

/// Result of the light presolve: fixed variables substituted out, rows
/// left without coefficients dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Presolved {
    pub instance: MipInstance,
    /// Original index of each remaining variable.
    pub var_map: Vec<usize>,
    /// Original index of each remaining row.
    pub row_map: Vec<usize>,
    /// Removed variables and their values.
    pub fixed: Vec<(usize, f64)>,
    /// Objective contribution of the fixed variables.
    pub objective_offset: f64,
    /// A dropped row was violated by the fixed values.
    pub infeasible: bool,
}

impl Presolved {
    /// Expands a point of the reduced instance to the original variables.
    pub fn expand(&self, x: &[f64], num_original: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_original];
        for &(j, v) in &self.fixed {
            out[j] = v;
        }
        for (k, &j) in self.var_map.iter().enumerate() {
            out[j] = x[k];
        }
        out
    }
}

pub fn presolve(inst: &MipInstance) -> Presolved {
    let n = inst.num_vars();
    let mut new_index = vec![usize::MAX; n];
    let mut var_map = Vec::new();
    let mut fixed = Vec::new();
    let mut out = MipInstance::new(inst.name.clone(), inst.sense);
    let mut offset = 0.0;
    for (j, v) in inst.variables.iter().enumerate() {
        if v.lb == v.ub {
            fixed.push((j, v.lb));
            offset += inst.objective[j] * v.lb;
        } else {
            new_index[j] = out.add_var(v.clone(), inst.objective[j]);
            var_map.push(j);
        }
    }
    let mut row_map = Vec::new();
    let mut infeasible = false;
    for (i, row) in inst.constraints.iter().enumerate() {
        let mut shift = 0.0;
        let mut coeffs = Vec::with_capacity(row.coeffs.len());
        for &(j, a) in &row.coeffs {
            if a == 0.0 {
                continue;
            }
            if new_index[j] == usize::MAX {
                shift += a * inst.variables[j].lb;
            } else {
                coeffs.push((new_index[j], a));
            }
        }
        if coeffs.is_empty() {
            infeasible |= shift < row.lhs - crate::mip::FEAS_TOL || shift > row.rhs + crate::mip::FEAS_TOL;
            continue;
        }
        out.add_row(Constraint::new(row.name.clone(), coeffs, row.lhs - shift, row.rhs - shift));
        row_map.push(i);
    }
    Presolved { instance: out, var_map, row_map, fixed, objective_offset: offset, infeasible }
}

/// Up and down lock counts of every variable.
pub fn locks(inst: &MipInstance) -> (Vec<usize>, Vec<usize>) {
    let mut up = vec![0; inst.num_vars()];
    let mut down = vec![0; inst.num_vars()];
    for row in &inst.constraints {
        let (lo, hi) = (row.lhs.is_finite(), row.rhs.is_finite());
        for &(j, a) in &row.coeffs {
            if (a > 0.0 && hi) || (a < 0.0 && lo) {
                up[j] += 1;
            }
            if (a > 0.0 && lo) || (a < 0.0 && hi) {
                down[j] += 1;
            }
        }
    }
    (up, down)
}

/// State of the root node before the first branching decision. All
/// vectors refer to the presolved instance.
#[derive(Clone, Debug)]
pub struct RootInfo {
    /// Root LP of the presolved instance in minimize sense.
    pub lp: LpSolution,
    pub up_locks: Vec<usize>,
    pub down_locks: Vec<usize>,
    /// `(up, down)` pseudocosts; zero because no branching has happened yet.
    pub pseudocosts: Vec<(f64, f64)>,
    pub presolved: Presolved,
    pub sense_flipped: bool,
}

pub fn collect_root_info(inst: &MipInstance) -> Result<RootInfo> {
    ensure_valid(inst)?;
    let presolved = presolve(inst);
    if presolved.infeasible {
        return Err(Error::Lp(format!("{}: presolve found a violated row", inst.name)));
    }
    let canon = canonicalize(&presolved.instance)?;
    let lp = solve_lp(&canon.instance, &BoundOverrides::new(), &[]);
    if lp.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("{}: root LP is {:?}", inst.name, lp.status)));
    }
    let (up_locks, down_locks) = locks(&presolved.instance);
    let n = presolved.instance.num_vars();
    Ok(RootInfo {
        lp,
        up_locks,
        down_locks,
        pseudocosts: vec![(0.0, 0.0); n],
        presolved,
        sense_flipped: canon.sense_flipped,
    })
}
