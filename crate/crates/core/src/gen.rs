//! Seeded generators for eight combinatorial problem classes.
//!
//! Every generator is a pure function of its [`GenSpec`]: the same spec
//! always produces the same instance, byte for byte once serialized.
//! Integer data (costs, profits, weights, demands) is drawn uniformly from
//! `[1, 100]` unless a problem notes otherwise; routing problems place nodes
//! uniformly in the unit square and use Euclidean distances scaled by 100
//! and rounded.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{Constraint, MipInstance, Sense, Variable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Problem {
    Fcnf,
    Cfl,
    Ga,
    Mis,
    Mk,
    Sc,
    Tsp,
    Vrp,
}

impl Problem {
    pub const ALL: [Problem; 8] =
        [Problem::Fcnf, Problem::Cfl, Problem::Ga, Problem::Mis, Problem::Mk, Problem::Sc, Problem::Tsp, Problem::Vrp];

    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Fcnf => "FCNF",
            Problem::Cfl => "CFL",
            Problem::Ga => "GA",
            Problem::Mis => "MIS",
            Problem::Mk => "MK",
            Problem::Sc => "SC",
            Problem::Tsp => "TSP",
            Problem::Vrp => "VRP",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// At most 16 binaries, small enough for exhaustive enumeration.
    Tiny,
    /// Slightly larger than `Tiny` (roughly 30 binaries).
    TinyPlus,
    Small,
    Large,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::TinyPlus => "tinyplus",
            Preset::Small => "small",
            Preset::Large => "large",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Preset::Tiny),
            "tinyplus" | "tiny-plus" | "tiny_plus" => Ok(Preset::TinyPlus),
            "small" => Ok(Preset::Small),
            "large" => Ok(Preset::Large),
            "custom" => Ok(Preset::Custom),
            _ => Err(Error::InvalidArgument(format!("unknown preset `{s}`"))),
        }
    }
}

/// Inclusive integer range; sizes are drawn uniformly from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Span { lo, hi }
    }

    pub const fn fixed(v: usize) -> Self {
        Span { lo: v, hi: v }
    }

    fn draw(self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.lo..=self.hi)
    }
}

/// Size and distribution parameters, one variant per problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "UPPERCASE")]
pub enum Params {
    /// Layered digraph: source, `layers` x `width` transit nodes, sink. Each
    /// transit node outside the last layer has `out_degree` arcs forward.
    Fcnf { layers: usize, width: usize, out_degree: Span },
    Cfl { facilities: usize, customers: usize },
    Ga { agents: usize, tasks: usize },
    Mis { nodes: usize, edges: Span },
    Mk { items: Span, dims: Span },
    Sc { sets: usize, elements: usize, density: f64 },
    Tsp { cities: Span },
    Vrp { customers: usize, capacity: usize },
}

impl Params {
    pub fn problem(&self) -> Problem {
        match self {
            Params::Fcnf { .. } => Problem::Fcnf,
            Params::Cfl { .. } => Problem::Cfl,
            Params::Ga { .. } => Problem::Ga,
            Params::Mis { .. } => Problem::Mis,
            Params::Mk { .. } => Problem::Mk,
            Params::Sc { .. } => Problem::Sc,
            Params::Tsp { .. } => Problem::Tsp,
            Params::Vrp { .. } => Problem::Vrp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("{}: {msg}", self.problem())));
        let span_ok = |s: &Span| s.lo >= 1 && s.lo <= s.hi;
        match *self {
            Params::Fcnf { layers, width, out_degree } => {
                if layers < 1 || width < 2 || !span_ok(&out_degree) {
                    return bad("need layers >= 1, width >= 2, 1 <= out_degree.lo <= out_degree.hi");
                }
                if out_degree.hi > width {
                    return bad("out_degree cannot exceed width");
                }
            }
            Params::Cfl { facilities, customers } | Params::Ga { agents: facilities, tasks: customers } => {
                if facilities < 1 || customers < 1 {
                    return bad("sizes must be >= 1");
                }
            }
            Params::Mis { nodes, edges } => {
                if nodes < 2 || edges.lo > edges.hi || edges.hi > nodes * (nodes - 1) / 2 {
                    return bad("need nodes >= 2 and an edge range within the complete graph");
                }
            }
            Params::Mk { items, dims } => {
                if !span_ok(&items) || !span_ok(&dims) {
                    return bad("sizes must be >= 1");
                }
            }
            Params::Sc { sets, elements, density } => {
                if sets < 1 || elements < 1 || !(0.0..=1.0).contains(&density) {
                    return bad("sizes must be >= 1 and density in [0, 1]");
                }
            }
            Params::Tsp { cities } => {
                if cities.lo < 3 || cities.lo > cities.hi {
                    return bad("need at least 3 cities");
                }
            }
            Params::Vrp { customers, capacity } => {
                if customers < 1 || capacity < MAX_VRP_DEMAND {
                    return bad("need customers >= 1 and capacity >= the largest demand");
                }
            }
        }
        Ok(())
    }

    /// Exact variable and row counts the generator produces, as inclusive
    /// ranges when sizes are randomized.
    pub fn counts(&self) -> (Span, Span) {
        match *self {
            Params::Fcnf { layers, width, out_degree } => {
                let nodes = layers * width + 2;
                let inner = (layers - 1) * width;
                let arcs = |k: usize| 2 * width + inner * k;
                let (lo, hi) = (arcs(out_degree.lo), arcs(out_degree.hi));
                (Span::new(2 * lo, 2 * hi), Span::new(nodes + lo, nodes + hi))
            }
            Params::Cfl { facilities: m, customers: n } => (Span::fixed(m + m * n), Span::fixed(m + n)),
            Params::Ga { agents: m, tasks: n } => (Span::fixed(m * n), Span::fixed(m + n)),
            Params::Mis { nodes, edges } => (Span::fixed(nodes), edges),
            Params::Mk { items, dims } => (items, dims),
            Params::Sc { sets, elements, .. } => (Span::fixed(sets), Span::fixed(elements)),
            Params::Tsp { cities } => {
                let vars = |n: usize| n * (n - 1) + (n - 1);
                let rows = |n: usize| 2 * n + (n - 1) * (n - 2);
                (Span::new(vars(cities.lo), vars(cities.hi)), Span::new(rows(cities.lo), rows(cities.hi)))
            }
            Params::Vrp { customers: n, .. } => {
                let arcs = (n + 2) * (n + 1);
                (Span::fixed(arcs + n + 2), Span::fixed(2 * n + 1 + arcs))
            }
        }
    }
}

const MAX_VRP_DEMAND: usize = 10;

/// Parameters for a named preset.
pub fn preset_params(problem: Problem, preset: Preset) -> Result<Params> {
    use Preset::*;
    let p = match (problem, preset) {
        (_, Custom) => return Err(Error::InvalidArgument("custom preset has no default parameters".into())),
        (Problem::Fcnf, Tiny) => Params::Fcnf { layers: 2, width: 3, out_degree: Span::new(1, 2) },
        (Problem::Fcnf, TinyPlus) => Params::Fcnf { layers: 3, width: 4, out_degree: Span::new(1, 2) },
        (Problem::Fcnf, Small) => Params::Fcnf { layers: 12, width: 14, out_degree: Span::new(6, 8) },
        (Problem::Fcnf, Large) => Params::Fcnf { layers: 16, width: 15, out_degree: Span::new(5, 8) },
        (Problem::Cfl, Tiny) => Params::Cfl { facilities: 8, customers: 10 },
        (Problem::Cfl, TinyPlus) => Params::Cfl { facilities: 14, customers: 20 },
        (Problem::Cfl, Small) => Params::Cfl { facilities: 12, customers: 100 },
        (Problem::Cfl, Large) => Params::Cfl { facilities: 76, customers: 380 },
        (Problem::Ga, Tiny) => Params::Ga { agents: 3, tasks: 5 },
        (Problem::Ga, TinyPlus) => Params::Ga { agents: 3, tasks: 10 },
        (Problem::Ga, Small) => Params::Ga { agents: 12, tasks: 96 },
        (Problem::Ga, Large) => Params::Ga { agents: 40, tasks: 560 },
        (Problem::Mis, Tiny) => Params::Mis { nodes: 15, edges: Span::new(20, 30) },
        (Problem::Mis, TinyPlus) => Params::Mis { nodes: 30, edges: Span::new(90, 115) },
        (Problem::Mis, Small) => Params::Mis { nodes: 125, edges: Span::new(1734, 1929) },
        (Problem::Mis, Large) => Params::Mis { nodes: 400, edges: Span::new(19153, 19713) },
        (Problem::Mk, Tiny) => Params::Mk { items: Span::fixed(12), dims: Span::fixed(2) },
        (Problem::Mk, TinyPlus) => Params::Mk { items: Span::fixed(30), dims: Span::fixed(3) },
        (Problem::Mk, Small) => Params::Mk { items: Span::new(315, 350), dims: Span::new(19, 21) },
        (Problem::Mk, Large) => Params::Mk { items: Span::new(765, 842), dims: Span::new(46, 51) },
        (Problem::Sc, Tiny) => Params::Sc { sets: 16, elements: 12, density: 0.2 },
        (Problem::Sc, TinyPlus) => Params::Sc { sets: 30, elements: 24, density: 0.12 },
        (Problem::Sc, Small) => Params::Sc { sets: 750, elements: 550, density: 0.05 },
        (Problem::Sc, Large) => Params::Sc { sets: 4500, elements: 3500, density: 0.03 },
        (Problem::Tsp, Tiny) => Params::Tsp { cities: Span::fixed(4) },
        (Problem::Tsp, TinyPlus) => Params::Tsp { cities: Span::fixed(6) },
        (Problem::Tsp, Small) => Params::Tsp { cities: Span::new(36, 40) },
        (Problem::Tsp, Large) => Params::Tsp { cities: Span::new(133, 140) },
        (Problem::Vrp, Tiny) => Params::Vrp { customers: 2, capacity: 20 },
        (Problem::Vrp, TinyPlus) => Params::Vrp { customers: 4, capacity: 20 },
        (Problem::Vrp, Small) => Params::Vrp { customers: 12, capacity: 30 },
        (Problem::Vrp, Large) => Params::Vrp { customers: 40, capacity: 30 },
    };
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub problem: Problem,
    pub preset: Preset,
    pub params: Params,
    pub seed: u64,
}

impl GenSpec {
    pub fn preset(problem: Problem, preset: Preset, seed: u64) -> Result<Self> {
        Ok(GenSpec { problem, preset, params: preset_params(problem, preset)?, seed })
    }

    pub fn custom(params: Params, seed: u64) -> Self {
        GenSpec { problem: params.problem(), preset: Preset::Custom, params, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.problem() != self.problem {
            return Err(Error::InvalidArgument(format!(
                "parameters for {} given for problem {}",
                self.params.problem(),
                self.problem
            )));
        }
        self.params.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresetInfo {
    pub preset: Preset,
    pub params: Params,
    pub variables: Span,
    pub constraints: Span,
}

/// Named presets of a problem together with the counts they produce.
pub fn list_presets(problem: Problem) -> Vec<PresetInfo> {
    [Preset::Tiny, Preset::TinyPlus, Preset::Small, Preset::Large]
        .into_iter()
        .map(|preset| {
            let params = preset_params(problem, preset).expect("named preset");
            let (variables, constraints) = params.counts();
            PresetInfo { preset, params, variables, constraints }
        })
        .collect()
}

/// Generates the instance described by `spec`.
pub fn generate(spec: &GenSpec) -> Result<MipInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let name = format!("{}-{}-{}", spec.problem.as_str().to_lowercase(), spec.preset, spec.seed);
    let inst = match spec.params {
        Params::Fcnf { layers, width, out_degree } => fcnf(&mut rng, name, layers, width, out_degree),
        Params::Cfl { facilities, customers } => cfl(&mut rng, name, facilities, customers),
        Params::Ga { agents, tasks } => ga(&mut rng, name, agents, tasks),
        Params::Mis { nodes, edges } => mis(&mut rng, name, nodes, edges),
        Params::Mk { items, dims } => mk(&mut rng, name, items, dims),
        Params::Sc { sets, elements, density } => sc(&mut rng, name, sets, elements, density),
        Params::Tsp { cities } => tsp(&mut rng, name, cities),
        Params::Vrp { customers, capacity } => vrp(&mut rng, name, customers, capacity),
    };
    debug_assert!(crate::mip::validate_instance(&inst).is_empty());
    Ok(inst)
}

fn uniform(rng: &mut impl Rng) -> f64 {
    rng.gen_range(1..=100) as f64
}

/// Fixed charge network flow. A single source ships `D` units to a single
/// sink; `width` node-disjoint backbone paths with capacity at least `D/2`
/// each guarantee feasibility.
fn fcnf(rng: &mut impl Rng, name: String, layers: usize, width: usize, out_degree: Span) -> MipInstance {
    let source = 0;
    let sink = layers * width + 1;
    let node = |l: usize, w: usize| 1 + l * width + w;
    let mut arcs: Vec<(usize, usize)> = Vec::new();
    for w in 0..width {
        arcs.push((source, node(0, w)));
    }
    for l in 0..layers - 1 {
        for w in 0..width {
            let k = out_degree.draw(rng);
            let mut targets: Vec<usize> = (0..width).filter(|&t| t != w).collect();
            targets.shuffle(rng);
            targets.truncate(k - 1);
            targets.push(w);
            targets.sort_unstable();
            arcs.extend(targets.into_iter().map(|t| (node(l, w), node(l + 1, t))));
        }
    }
    for w in 0..width {
        arcs.push((node(layers - 1, w), sink));
    }

    let demand = rng.gen_range(10..=30) as f64;
    let mut m = MipInstance::new(name, Sense::Minimize);
    let mut flow = Vec::with_capacity(arcs.len());
    let mut open = Vec::with_capacity(arcs.len());
    let mut caps = Vec::with_capacity(arcs.len());
    for &(u, v) in &arcs {
        let cap = rng.gen_range((demand / 2.0).ceil() as usize..=(2.0 * demand) as usize) as f64;
        let fixed = uniform(rng);
        let unit = uniform(rng);
        flow.push(m.add_var(Variable::continuous(format!("x_{u}_{v}"), 0.0, f64::INFINITY), unit));
        open.push(m.add_var(Variable::binary(format!("y_{u}_{v}")), fixed));
        caps.push(cap);
    }
    for v in 0..=sink {
        let mut coeffs = Vec::new();
        for (e, &(a, b)) in arcs.iter().enumerate() {
            if b == v {
                coeffs.push((flow[e], 1.0));
            } else if a == v {
                coeffs.push((flow[e], -1.0));
            }
        }
        let d = if v == source {
            -demand
        } else if v == sink {
            demand
        } else {
            0.0
        };
        m.add_row(Constraint::eq(format!("balance_{v}"), coeffs, d));
    }
    for (e, &(a, b)) in arcs.iter().enumerate() {
        m.add_row(Constraint::le(format!("link_{a}_{b}"), vec![(flow[e], 1.0), (open[e], -caps[e])], 0.0));
    }
    m
}

/// Capacitated facility location; total capacity is about 1.5x total demand.
fn cfl(rng: &mut impl Rng, name: String, fac: usize, cust: usize) -> MipInstance {
    let fixed: Vec<f64> = (0..fac).map(|_| uniform(rng)).collect();
    let ship: Vec<Vec<f64>> = (0..fac).map(|_| (0..cust).map(|_| uniform(rng)).collect()).collect();
    let demand: Vec<f64> = (0..cust).map(|_| uniform(rng)).collect();
    let total: f64 = demand.iter().sum();
    let shares: Vec<f64> = (0..fac).map(|_| uniform(rng)).collect();
    let share_sum: f64 = shares.iter().sum();
    let cap: Vec<f64> = shares.iter().map(|s| (1.5 * total * s / share_sum).ceil()).collect();

    let mut m = MipInstance::new(name, Sense::Minimize);
    let open: Vec<usize> = (0..fac).map(|i| m.add_var(Variable::binary(format!("x_{i}")), fixed[i])).collect();
    let assign: Vec<Vec<usize>> = (0..fac)
        .map(|i| {
            (0..cust)
                .map(|j| m.add_var(Variable::continuous(format!("y_{i}_{j}"), 0.0, f64::INFINITY), ship[i][j]))
                .collect()
        })
        .collect();
    for j in 0..cust {
        m.add_row(Constraint::eq(format!("demand_{j}"), (0..fac).map(|i| (assign[i][j], 1.0)).collect(), 1.0));
    }
    for i in 0..fac {
        let mut coeffs: Vec<(usize, f64)> = (0..cust).map(|j| (assign[i][j], demand[j])).collect();
        coeffs.push((open[i], -cap[i]));
        m.add_row(Constraint::le(format!("capacity_{i}"), coeffs, 0.0));
    }
    m
}

/// Generalized assignment (maximize revenue). Agent budgets cover a hidden
/// random assignment so at least one feasible point exists.
fn ga(rng: &mut impl Rng, name: String, agents: usize, tasks: usize) -> MipInstance {
    let profit: Vec<Vec<f64>> = (0..agents).map(|_| (0..tasks).map(|_| uniform(rng)).collect()).collect();
    let weight: Vec<Vec<f64>> = (0..agents).map(|_| (0..tasks).map(|_| uniform(rng)).collect()).collect();
    let mut load = vec![0.0; agents];
    for j in 0..tasks {
        let i = rng.gen_range(0..agents);
        load[i] += weight[i][j];
    }
    let mut m = MipInstance::new(name, Sense::Maximize);
    let x: Vec<Vec<usize>> = (0..agents)
        .map(|i| (0..tasks).map(|j| m.add_var(Variable::binary(format!("x_{i}_{j}")), profit[i][j])).collect())
        .collect();
    for i in 0..agents {
        let budget = (0.8 * weight[i].iter().sum::<f64>() / agents as f64).floor().max(load[i]);
        m.add_row(Constraint::le(format!("budget_{i}"), (0..tasks).map(|j| (x[i][j], weight[i][j])).collect(), budget));
    }
    for j in 0..tasks {
        m.add_row(Constraint::eq(format!("assign_{j}"), (0..agents).map(|i| (x[i][j], 1.0)).collect(), 1.0));
    }
    m
}

/// Maximum independent set on a uniformly random graph with an edge count
/// drawn from `edges`.
fn mis(rng: &mut impl Rng, name: String, nodes: usize, edges: Span) -> MipInstance {
    let pairs: Vec<(usize, usize)> = (0..nodes).flat_map(|u| (u + 1..nodes).map(move |v| (u, v))).collect();
    let count = edges.draw(rng);
    let mut picked: Vec<usize> = sample(rng, pairs.len(), count).into_vec();
    picked.sort_unstable();
    let mut m = MipInstance::new(name, Sense::Maximize);
    for v in 0..nodes {
        m.add_var(Variable::binary(format!("x_{v}")), 1.0);
    }
    for k in picked {
        let (u, v) = pairs[k];
        m.add_row(Constraint::le(format!("edge_{u}_{v}"), vec![(u, 1.0), (v, 1.0)], 1.0));
    }
    m
}

/// Multidimensional knapsack; each capacity is half the dimension's total weight.
fn mk(rng: &mut impl Rng, name: String, items: Span, dims: Span) -> MipInstance {
    let n = items.draw(rng);
    let d = dims.draw(rng);
    let profit: Vec<f64> = (0..n).map(|_| uniform(rng)).collect();
    let weight: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| uniform(rng)).collect()).collect();
    let mut m = MipInstance::new(name, Sense::Maximize);
    for (j, &p) in profit.iter().enumerate() {
        m.add_var(Variable::binary(format!("x_{j}")), p);
    }
    for (i, w) in weight.iter().enumerate() {
        let cap = (0.5 * w.iter().sum::<f64>()).floor();
        m.add_row(Constraint::le(format!("dim_{i}"), w.iter().copied().enumerate().collect(), cap));
    }
    m
}

/// Set covering with unit costs. Each (element, set) pair is included with
/// probability `density`; uncovered elements get one random set.
fn sc(rng: &mut impl Rng, name: String, sets: usize, elements: usize, density: f64) -> MipInstance {
    let mut m = MipInstance::new(name, Sense::Minimize);
    for j in 0..sets {
        m.add_var(Variable::binary(format!("x_{j}")), 1.0);
    }
    for e in 0..elements {
        let mut members: Vec<usize> = (0..sets).filter(|_| rng.gen_bool(density)).collect();
        if members.is_empty() {
            members.push(rng.gen_range(0..sets));
        }
        m.add_row(Constraint::ge(format!("cover_{e}"), members.into_iter().map(|j| (j, 1.0)).collect(), 1.0));
    }
    m
}

fn points(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (100.0 * ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).round()
}

/// Asymmetric-form TSP with Miller-Tucker-Zemlin ordering variables.
fn tsp(rng: &mut impl Rng, name: String, cities: Span) -> MipInstance {
    let n = cities.draw(rng);
    let pts = points(rng, n);
    let mut m = MipInstance::new(name, Sense::Minimize);
    let mut x = vec![vec![usize::MAX; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                x[i][j] = m.add_var(Variable::binary(format!("x_{i}_{j}")), dist(pts[i], pts[j]));
            }
        }
    }
    // u_i for cities 2..n (index 1..n here); city 0 is the origin.
    let u: Vec<usize> = (1..n)
        .map(|i| m.add_var(Variable::continuous(format!("u_{i}"), 0.0, (n - 1) as f64), 0.0))
        .collect();
    for j in 0..n {
        m.add_row(Constraint::eq(format!("in_{j}"), (0..n).filter(|&i| i != j).map(|i| (x[i][j], 1.0)).collect(), 1.0));
    }
    for i in 0..n {
        m.add_row(Constraint::eq(format!("out_{i}"), (0..n).filter(|&j| j != i).map(|j| (x[i][j], 1.0)).collect(), 1.0));
    }
    let nf = n as f64;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                m.add_row(Constraint::le(
                    format!("mtz_{i}_{j}"),
                    vec![(u[i - 1], 1.0), (u[j - 1], -1.0), (x[i][j], nf)],
                    nf - 1.0,
                ));
            }
        }
    }
    m
}

/// Capacitated VRP over nodes `0..=n+1`, where `0` and `n+1` are the start
/// and end copies of the depot. The fleet size is the bin count of a
/// first-fit-decreasing packing of the demands, so the instance is feasible.
fn vrp(rng: &mut impl Rng, name: String, n: usize, capacity: usize) -> MipInstance {
    let depot = (rng.gen::<f64>(), rng.gen::<f64>());
    let mut pts = vec![depot];
    pts.extend(points(rng, n));
    pts.push(depot);
    let mut q = vec![0.0; n + 2];
    for qj in q.iter_mut().take(n + 1).skip(1) {
        *qj = rng.gen_range(1..=MAX_VRP_DEMAND) as f64;
    }
    let cap = capacity as f64;
    let mut sorted: Vec<f64> = q[1..=n].to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut bins: Vec<f64> = Vec::new();
    for d in sorted {
        match bins.iter_mut().find(|b| **b + d <= cap) {
            Some(b) => *b += d,
            None => bins.push(d),
        }
    }
    let fleet = bins.len() as f64;

    let nn = n + 2;
    let mut m = MipInstance::new(name, Sense::Minimize);
    let mut x = vec![vec![usize::MAX; nn]; nn];
    for i in 0..nn {
        for j in 0..nn {
            if i != j {
                x[i][j] = m.add_var(Variable::binary(format!("x_{i}_{j}")), dist(pts[i], pts[j]));
            }
        }
    }
    let y: Vec<usize> = (0..nn).map(|i| m.add_var(Variable::continuous(format!("y_{i}"), 0.0, cap), 0.0)).collect();
    for i in 1..=n {
        m.add_row(Constraint::eq(
            format!("leave_{i}"),
            (1..nn).filter(|&j| j != i).map(|j| (x[i][j], 1.0)).collect(),
            1.0,
        ));
    }
    for h in 1..=n {
        let mut coeffs: Vec<(usize, f64)> = (0..=n).filter(|&i| i != h).map(|i| (x[i][h], 1.0)).collect();
        coeffs.extend((1..nn).filter(|&j| j != h).map(|j| (x[h][j], -1.0)));
        m.add_row(Constraint::eq(format!("flow_{h}"), coeffs, 0.0));
    }
    m.add_row(Constraint::le(format!("fleet"), (1..=n).map(|j| (x[0][j], 1.0)).collect(), fleet));
    // y_j >= y_i + q_j x_ij - Q (1 - x_ij)
    for i in 0..nn {
        for j in 0..nn {
            if i != j {
                m.add_row(Constraint::ge(
                    format!("load_{i}_{j}"),
                    vec![(y[j], 1.0), (y[i], -1.0), (x[i][j], -(q[j] + cap))],
                    -cap,
                ));
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{to_json_string, validate_instance};

    #[test]
    fn ga_small_counts() {
        let inst = generate(&GenSpec::preset(Problem::Ga, Preset::Small, 1).unwrap()).unwrap();
        assert_eq!(inst.num_vars(), 1152);
        assert_eq!(inst.num_rows(), 108);
        assert_eq!(inst.binaries().len(), 1152);
    }

    #[test]
    fn mis_small_counts() {
        for seed in 0..5 {
            let inst = generate(&GenSpec::preset(Problem::Mis, Preset::Small, seed).unwrap()).unwrap();
            assert_eq!(inst.num_vars(), 125);
            assert!((1734..=1929).contains(&inst.num_rows()));
        }
    }

    #[test]
    fn sc_small_counts() {
        let inst = generate(&GenSpec::preset(Problem::Sc, Preset::Small, 3).unwrap()).unwrap();
        assert_eq!(inst.num_vars(), 750);
        assert_eq!(inst.num_rows(), 550);
        let density = inst.nonzeros() as f64 / (750.0 * 550.0);
        assert!((density - 0.05).abs() < 0.005, "{density}");
    }

    #[test]
    fn tsp_six_cities_counts() {
        let inst = generate(&GenSpec::custom(Params::Tsp { cities: Span::fixed(6) }, 0)).unwrap();
        assert_eq!(inst.binaries().len(), 30);
        assert_eq!(inst.num_vars() - 30, 5);
        let assignment = inst.constraints.iter().filter(|r| r.is_equality()).count();
        assert_eq!(assignment, 12);
        assert_eq!(inst.num_rows() - assignment, 20);
    }

    #[test]
    fn preset_listing() {
        let mk = list_presets(Problem::Mk);
        let small = mk.iter().find(|p| p.preset == Preset::Small).unwrap();
        assert_eq!(small.params, Params::Mk { items: Span::new(315, 350), dims: Span::new(19, 21) });
        let vrp = list_presets(Problem::Vrp);
        let small = vrp.iter().find(|p| p.preset == Preset::Small).unwrap();
        assert!(matches!(small.params, Params::Vrp { customers: 12, .. }));
        assert_eq!(small.variables, Span::fixed(196));
    }

    #[test]
    fn counts_match_generated_instances() {
        for problem in Problem::ALL {
            for preset in [Preset::Tiny, Preset::TinyPlus] {
                let spec = GenSpec::preset(problem, preset, 11).unwrap();
                let inst = generate(&spec).unwrap();
                let (v, r) = spec.params.counts();
                assert!((v.lo..=v.hi).contains(&inst.num_vars()), "{problem} {preset}");
                assert!((r.lo..=r.hi).contains(&inst.num_rows()), "{problem} {preset}");
            }
        }
    }

    #[test]
    fn tiny_presets_are_enumerable_and_valid() {
        for problem in Problem::ALL {
            for seed in 0..10 {
                let inst = generate(&GenSpec::preset(problem, Preset::Tiny, seed).unwrap()).unwrap();
                assert!(validate_instance(&inst).is_empty());
                assert!(inst.binaries().len() <= 16, "{problem}: {}", inst.binaries().len());
            }
        }
    }

    #[test]
    fn determinism() {
        for problem in Problem::ALL {
            let spec = GenSpec::preset(problem, Preset::Tiny, 42).unwrap();
            let a = to_json_string(&generate(&spec).unwrap()).unwrap();
            let b = to_json_string(&generate(&spec).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&GenSpec::custom(Params::Sc { sets: 0, elements: 3, density: 0.5 }, 0)).is_err());
        assert!(generate(&GenSpec::custom(Params::Sc { sets: 3, elements: 3, density: 1.5 }, 0)).is_err());
        let mut spec = GenSpec::preset(Problem::Sc, Preset::Tiny, 0).unwrap();
        spec.problem = Problem::Mk;
        assert!(generate(&spec).is_err());
        assert!("knapsack".parse::<Problem>().is_err());
    }
}
