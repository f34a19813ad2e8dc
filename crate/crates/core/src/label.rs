//! Stable-variable labels from iterated proximity search.
//!
//! Starting from a first feasible point, each step looks for the feasible
//! point closest in Hamming distance to the current one whose objective is
//! better by at least `delta`. A binary variable is stable when it keeps the
//! same value in every point of the resulting trace.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bnb::{solve, BnbConfig, SolveStatus};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, BoundOverrides, LpStatus};
use crate::mip::{canonicalize, evaluate_solution, Constraint, MipInstance, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Stable0,
    Stable1,
    Unstable,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stable0 => "stable0",
            Label::Stable1 => "stable1",
            Label::Unstable => "unstable",
        }
    }

    /// Training target, or `None` for unstable variables.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Stable0 => Some(0.0),
            Label::Stable1 => Some(1.0),
            Label::Unstable => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub max_iters: usize,
    pub base_time_limit_s: f64,
    /// How many times the first-solution time limit may double.
    pub max_doublings: u32,
    /// Node limit for each first-feasible solve.
    pub node_limit: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { max_iters: 40, base_time_limit_s: 5.0, max_doublings: 5, node_limit: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub instance: String,
    /// Binary variable indices, in increasing order.
    pub binaries: Vec<usize>,
    /// One label per entry of `binaries`.
    pub labels: Vec<Label>,
    /// The trace, first point first.
    pub solutions: Vec<Solution>,
    pub delta: f64,
    pub iterations: usize,
}

impl LabelSet {
    /// Labels keyed by variable name.
    pub fn by_name(&self, inst: &MipInstance) -> HashMap<String, Label> {
        self.binaries.iter().zip(&self.labels).map(|(&j, &l)| (inst.variables[j].name.clone(), l)).collect()
    }

    pub fn trace(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.objective).collect()
    }
}

fn first_feasible_cfg(time_limit_s: f64, node_limit: usize) -> BnbConfig {
    BnbConfig { node_limit, ..BnbConfig::first_feasible(time_limit_s) }
}

/// First feasible point, doubling the time limit up to `max_doublings`
/// times. A proven infeasible instance fails immediately.
pub fn initial_solution(inst: &MipInstance, cfg: &LabelConfig) -> Result<Solution> {
    let mut limit = cfg.base_time_limit_s;
    for _ in 0..=cfg.max_doublings {
        let r = solve(inst, &first_feasible_cfg(limit, cfg.node_limit))?;
        if let Some(s) = r.incumbent {
            return Ok(s);
        }
        if r.status == SolveStatus::Infeasible {
            return Err(Error::NoFeasibleSolution(format!("{} is infeasible", inst.name)));
        }
        limit *= 2.0;
    }
    Err(Error::NoFeasibleSolution(format!("{}: no feasible point within {limit} s", inst.name)))
}

/// One proximity step: the first feasible point found for
/// `min dist(x, x_bar)` subject to the original rows and
/// `c.x <= c.x_bar - delta` (minimize sense). Returns `None` when that
/// problem is infeasible or no point is found within the limits.
pub fn proximity_step(inst: &MipInstance, x_bar: &Solution, delta: f64, cfg: &LabelConfig) -> Result<Option<Solution>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let canon = canonicalize(inst)?;
    let mut aux = canon.instance.clone();
    let x = &x_bar.values;
    if x.len() != aux.num_vars() {
        return Err(Error::DimensionMismatch { expected: aux.num_vars(), found: x.len() });
    }
    let cost: Vec<(usize, f64)> =
        aux.objective.iter().copied().enumerate().filter(|&(_, c)| c != 0.0).collect();
    if cost.is_empty() {
        return Ok(None);
    }
    let current = aux.objective_value(x);
    for j in 0..aux.num_vars() {
        aux.objective[j] = if aux.is_binary(j) {
            if x[j] > 0.5 {
                -1.0
            } else {
                1.0
            }
        } else {
            0.0
        };
    }
    aux.add_row(Constraint::le("improvement_cutoff", cost, current - delta));
    let r = solve(&aux, &first_feasible_cfg(cfg.base_time_limit_s, cfg.node_limit))?;
    match r.incumbent {
        Some(s) => Ok(Some(evaluate_solution(inst, &s.values)?)),
        None => Ok(None),
    }
}

/// Root LP bound in minimize sense, or `None` if the LP is not optimal.
fn root_bound(inst: &MipInstance) -> Result<Option<f64>> {
    let canon = canonicalize(inst)?;
    let lp = solve_lp(&canon.instance, &BoundOverrides::new(), &[]);
    Ok((lp.status == LpStatus::Optimal).then_some(lp.objective))
}

/// Runs proximity search and labels the binaries.
///
/// `delta` is one percent of the gap between the first point and the root
/// LP bound, floored at `1e-6 (1 + |c.x0|)`.
pub fn generate_labels(inst: &MipInstance, cfg: &LabelConfig) -> Result<LabelSet> {
    let x0 = initial_solution(inst, cfg)?;
    let sign = if inst.sense == crate::mip::Sense::Maximize { -1.0 } else { 1.0 };
    let obj0 = sign * x0.objective;
    let lb = root_bound(inst)?.unwrap_or(obj0);
    let floor = 1e-6 * (1.0 + obj0.abs());
    let delta = (0.01 * (obj0 - lb)).max(floor);

    let mut solutions = vec![x0];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        match proximity_step(inst, solutions.last().unwrap(), delta, cfg)? {
            Some(s) => solutions.push(s),
            None => break,
        }
    }
    Ok(label_solutions(inst, solutions, delta, iterations))
}

/// Labels from a single optimal solution; for oracle checks on small
/// instances.
pub fn optimal_labels(inst: &MipInstance, cfg: &BnbConfig) -> Result<LabelSet> {
    let r = solve(inst, cfg)?;
    let s = r.incumbent.ok_or_else(|| Error::NoFeasibleSolution(inst.name.clone()))?;
    Ok(label_solutions(inst, vec![s], 0.0, 1))
}

pub fn label_solutions(inst: &MipInstance, solutions: Vec<Solution>, delta: f64, iterations: usize) -> LabelSet {
    let binaries = inst.binaries();
    let labels = binaries.iter().map(|&j| stability(solutions.iter().map(|s| s.values[j]))).collect();
    LabelSet { instance: inst.name.clone(), binaries, labels, solutions, delta, iterations }
}

/// Stable when every value rounds to the same bit.
pub fn stability(values: impl IntoIterator<Item = f64>) -> Label {
    let mut seen = [false; 2];
    for v in values {
        seen[(v > 0.5) as usize] = true;
    }
    match seen {
        [true, false] => Label::Stable0,
        [false, true] => Label::Stable1,
        _ => Label::Unstable,
    }
}

/// Label file contents, keyed by variable name in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelFile {
    pub instance: String,
    pub delta: f64,
    pub iterations: usize,
    pub labels: Vec<(String, Label)>,
    pub trace: Vec<f64>,
}

impl LabelFile {
    pub fn from_set(inst: &MipInstance, set: &LabelSet) -> Self {
        LabelFile {
            instance: set.instance.clone(),
            delta: set.delta,
            iterations: set.iterations,
            labels: set.binaries.iter().zip(&set.labels).map(|(&j, &l)| (inst.variables[j].name.clone(), l)).collect(),
            trace: set.trace(),
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut labels = Map::new();
        for (name, l) in &self.labels {
            labels.insert(name.clone(), Value::String(l.as_str().into()));
        }
        let num = |x: f64| serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        let mut root = Map::new();
        root.insert("instance".into(), Value::String(self.instance.clone()));
        root.insert("delta".into(), num(self.delta));
        root.insert("iterations".into(), Value::from(self.iterations));
        root.insert("labels".into(), Value::Object(labels));
        root.insert("trace".into(), Value::Array(self.trace.iter().map(|&t| num(t)).collect()));
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            instance: String,
            delta: f64,
            iterations: usize,
            labels: Map<String, Value>,
            trace: Vec<f64>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::parse("label file", e.to_string()))?;
        let labels = raw
            .labels
            .into_iter()
            .map(|(k, v)| {
                let l = serde_json::from_value::<Label>(v)
                    .map_err(|e| Error::parse(format!("labels.{k}"), e.to_string()))?;
                Ok((k, l))
            })
            .collect::<Result<_>>()?;
        Ok(LabelFile { instance: raw.instance, delta: raw.delta, iterations: raw.iterations, labels, trace: raw.trace })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Sense, Variable};

    fn two_items() -> MipInstance {
        let mut m = MipInstance::new("t", Sense::Minimize);
        m.add_var(Variable::binary("x1"), -5.0);
        m.add_var(Variable::binary("x2"), -4.0);
        m.add_row(Constraint::le("r", vec![(0, 1.0), (1, 1.0)], 1.0));
        m
    }

    fn point(inst: &MipInstance, x: &[f64]) -> Solution {
        evaluate_solution(inst, x).unwrap()
    }

    #[test]
    fn proximity_finds_better_point() {
        let m = two_items();
        let s = proximity_step(&m, &point(&m, &[0.0, 1.0]), 0.5, &LabelConfig::default()).unwrap().unwrap();
        assert_eq!(s.values, vec![1.0, 0.0]);
        assert_eq!(s.objective, -5.0);
    }

    #[test]
    fn proximity_stops_at_optimum() {
        let m = two_items();
        let r = proximity_step(&m, &point(&m, &[1.0, 0.0]), 0.1, &LabelConfig::default()).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn zero_delta_rejected() {
        let m = two_items();
        assert!(proximity_step(&m, &point(&m, &[1.0, 0.0]), 0.0, &LabelConfig::default()).is_err());
    }

    #[test]
    fn stability_rule() {
        let mut m = MipInstance::new("s", Sense::Minimize);
        for j in 0..3 {
            m.add_var(Variable::binary(format!("x{j}")), 0.0);
        }
        let sols = vec![point(&m, &[1.0, 0.0, 1.0]), point(&m, &[1.0, 1.0, 1.0])];
        let set = label_solutions(&m, sols, 1.0, 2);
        assert_eq!(set.labels, vec![Label::Stable1, Label::Unstable, Label::Stable1]);
    }

    #[test]
    fn single_solution_is_all_stable() {
        let m = two_items();
        let set = label_solutions(&m, vec![point(&m, &[1.0, 0.0])], 1.0, 1);
        assert_eq!(set.labels, vec![Label::Stable1, Label::Stable0]);
    }

    #[test]
    fn trace_strictly_improves() {
        let m = two_items();
        let set = generate_labels(&m, &LabelConfig::default()).unwrap();
        let t = set.trace();
        assert!(t.windows(2).all(|w| w[1] <= w[0] - set.delta + 1e-9));
        assert!(set.solutions.iter().all(|s| s.feasible));
        assert_eq!(*t.last().unwrap(), -5.0);
    }

    #[test]
    fn infeasible_instance_errors() {
        let mut m = MipInstance::new("inf", Sense::Minimize);
        m.add_var(Variable::binary("x"), 1.0);
        m.add_row(Constraint::ge("a", vec![(0, 1.0)], 2.0));
        assert!(matches!(initial_solution(&m, &LabelConfig::default()), Err(Error::NoFeasibleSolution(_))));
    }

    #[test]
    fn label_file_round_trip() {
        let m = two_items();
        let set = generate_labels(&m, &LabelConfig::default()).unwrap();
        let file = LabelFile::from_set(&m, &set);
        let text = file.to_json_string();
        assert!(text.contains("\"x1\": \"stable"));
        assert_eq!(LabelFile::from_json_str(&text).unwrap(), file);
        assert!(LabelFile::from_json_str("{\"instance\": 1}").is_err());
    }
}
