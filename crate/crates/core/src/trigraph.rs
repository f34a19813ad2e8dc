//! Tripartite graph of variables, constraints and the objective, with the
//! node and edge features collected at the root.
//!
//! Variable nodes exist for binaries only. Every constraint of the
//! presolved instance gets a node. Features are computed on the presolved
//! instance in minimize sense.
//!
//! Variable feature layout (57):
//!
//! | index | feature |
//! |---|---|
//! | 0-1 | is binary, is general integer |
//! | 2-4 | objective coefficient, its positive part, its negative part |
//! | 5 | number of rows with a nonzero coefficient |
//! | 6-7 | up locks, down locks |
//! | 8-10 | LP value `x`, `x - floor(x)`, `ceil(x) - x` |
//! | 11 | LP value is fractional |
//! | 12-16 | pseudocosts: up, down, `up / (down + 1)`, sum, product |
//! | 17-18 | lower and upper bound |
//! | 19 | reduced cost |
//! | 20-23 | degree of the rows containing the variable: mean, stdev, min, max |
//! | 24-31 | side / coefficient ratios: for lhs then rhs, positive max, positive min, negative max, negative min |
//! | 32-36 | positive column coefficients: count, mean, stdev, min, max |
//! | 37-41 | negative column coefficients: count, mean, stdev, min, max |
//! | 42-56 | weighted column coefficients (sum, mean, stdev, max, min) under unit, dual and inverse row-sum weights |
//!
//! Constraint feature layout (26):
//!
//! | index | feature |
//! |---|---|
//! | 0-11 | type one-hot: singleton, aggregation, precedence, knapsack, logicor, general linear, AND, OR, XOR, linking, cardinality, variable bound |
//! | 12-13 | lhs, rhs (infinite sides as `-1e10` / `1e10`) |
//! | 14-16 | nonzero, positive, negative entry counts |
//! | 17 | dual value |
//! | 18 | basis status of the row logical: basic 0, at lower -1, at upper 1 |
//! | 19-21 | sum of absolute, positive, and absolute negative coefficients |
//! | 22-25 | coefficient mean, stdev, min, max |
//!
//! Empty statistics are 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bnb::RootInfo;
use crate::error::{Error, Result};
use crate::lp::BasisStatus;
use crate::mip::{MipInstance, VarType};

pub const VAR_FEATURES: usize = 57;
pub const CONS_FEATURES: usize = 26;
pub const OBJ_FEATURES: usize = 2;
pub const EDGE_FEATURES: usize = 2;
pub const INF_SENTINEL: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsType {
    Singleton = 0,
    Aggregation,
    Precedence,
    Knapsack,
    Logicor,
    GeneralLinear,
    And,
    Or,
    Xor,
    Linking,
    Cardinality,
    VariableBound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriGraph {
    pub instance: String,
    pub var_names: Vec<String>,
    pub var_features: Vec<Vec<f64>>,
    pub cons_names: Vec<String>,
    pub cons_features: Vec<Vec<f64>>,
    pub obj_features: Vec<f64>,
    /// `(variable node, constraint node, features)`.
    pub vc_edges: Vec<(usize, usize, [f64; 2])>,
    /// Features of the edge from each variable node to the objective.
    pub vo_features: Vec<[f64; 2]>,
    /// Features of the edge from each constraint node to the objective.
    pub co_features: Vec<[f64; 2]>,
}

impl TriGraph {
    pub fn num_vars(&self) -> usize {
        self.var_features.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons_features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.vc_edges.len() + self.vo_features.len() + self.co_features.len()
    }

    /// Reorders variable nodes so that new node `k` is old node `perm[k]`.
    pub fn permute_vars(&self, perm: &[usize]) -> TriGraph {
        let mut inv = vec![0; perm.len()];
        for (k, &old) in perm.iter().enumerate() {
            inv[old] = k;
        }
        let mut g = self.clone();
        g.var_names = perm.iter().map(|&o| self.var_names[o].clone()).collect();
        g.var_features = perm.iter().map(|&o| self.var_features[o].clone()).collect();
        g.vo_features = perm.iter().map(|&o| self.vo_features[o]).collect();
        g.vc_edges = self.vc_edges.iter().map(|&(v, c, f)| (inv[v], c, f)).collect();
        g
    }
}

#[derive(Default)]
struct Stats {
    count: f64,
    sum: f64,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn stats(xs: &[f64]) -> Stats {
    if xs.is_empty() {
        return Stats::default();
    }
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Stats {
        count: n,
        sum,
        mean,
        std: var.sqrt(),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn clip(x: f64) -> f64 {
    x.clamp(-INF_SENTINEL, INF_SENTINEL)
}

fn basis_code(s: BasisStatus) -> f64 {
    match s {
        BasisStatus::Basic => 0.0,
        BasisStatus::AtLower => -1.0,
        BasisStatus::AtUpper => 1.0,
    }
}

/// Column view of an instance: `(row, coefficient)` per variable.
fn columns(inst: &MipInstance) -> Vec<Vec<(usize, f64)>> {
    let mut cols = vec![Vec::new(); inst.num_vars()];
    for (i, row) in inst.constraints.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                cols[j].push((i, a));
            }
        }
    }
    cols
}

fn row_max_abs(inst: &MipInstance, i: usize) -> f64 {
    inst.constraints[i].coeffs.iter().fold(0.0, |m, &(_, a)| m.max(a.abs()))
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn constraint_type(inst: &MipInstance, i: usize) -> ConsType {
    let row = &inst.constraints[i];
    let nz: Vec<(usize, f64)> = row.coeffs.iter().copied().filter(|&(_, a)| a != 0.0).collect();
    let all_binary = nz.iter().all(|&(j, _)| inst.is_binary(j));
    let all_pos = nz.iter().all(|&(_, a)| a > 0.0);
    if nz.len() == 1 {
        ConsType::Singleton
    } else if all_binary && nz.iter().all(|&(_, a)| a == 1.0) && row.lhs == 1.0 && row.rhs == f64::INFINITY {
        ConsType::Logicor
    } else if all_binary && all_pos && row.rhs.is_finite() && row.lhs == f64::NEG_INFINITY {
        ConsType::Knapsack
    } else if nz.len() == 2 && nz.iter().filter(|&&(j, _)| inst.variables[j].vtype == VarType::Continuous).count() == 1
    {
        ConsType::VariableBound
    } else {
        ConsType::GeneralLinear
    }
}

/// Work instance (presolved, minimize sense) plus cached views.
struct Ctx<'a> {
    inst: MipInstance,
    root: &'a RootInfo,
    cols: Vec<Vec<(usize, f64)>>,
    row_abs_sum: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(root: &'a RootInfo) -> Self {
        let mut inst = root.presolved.instance.clone();
        if root.sense_flipped {
            for c in &mut inst.objective {
                *c = -*c;
            }
        }
        let cols = columns(&inst);
        let row_abs_sum = inst.constraints.iter().map(|r| r.coeffs.iter().map(|&(_, a)| a.abs()).sum()).collect();
        Ctx { inst, root, cols, row_abs_sum }
    }
}

fn variable_features_ctx(ctx: &Ctx, j: usize) -> Vec<f64> {
    let inst = &ctx.inst;
    let var = &inst.variables[j];
    let lp = &ctx.root.lp;
    let col = &ctx.cols[j];
    let c = inst.objective[j];
    let mut f = Vec::with_capacity(VAR_FEATURES);

    f.push((var.vtype == VarType::Binary) as u8 as f64);
    f.push((var.vtype == VarType::Integer) as u8 as f64);
    f.extend([c, c.max(0.0), c.min(0.0)]);
    f.push(col.len() as f64);
    f.push(ctx.root.up_locks[j] as f64);
    f.push(ctx.root.down_locks[j] as f64);

    let x = lp.x[j];
    let down = x - x.floor();
    let up = x.ceil() - x;
    f.extend([x, down, up]);
    f.push((down.min(up) > crate::mip::INT_TOL) as u8 as f64);
    let (pu, pd) = ctx.root.pseudocosts[j];
    f.extend([pu, pd, pu / (pd + 1.0), pu + pd, pu * pd]);
    f.extend([clip(var.lb), clip(var.ub)]);
    f.push(lp.reduced_costs[j]);

    let degrees: Vec<f64> = col.iter().map(|&(i, _)| inst.constraints[i].coeffs.len() as f64).collect();
    let s = stats(&degrees);
    f.extend([s.mean, s.std, s.min, s.max]);

    for side in [0, 1] {
        let ratios: Vec<f64> = col
            .iter()
            .filter_map(|&(i, a)| {
                let r = &inst.constraints[i];
                let b = if side == 0 { r.lhs } else { r.rhs };
                b.is_finite().then_some(b / a)
            })
            .collect();
        let pos: Vec<f64> = ratios.iter().copied().filter(|&r| r > 0.0).collect();
        let neg: Vec<f64> = ratios.iter().copied().filter(|&r| r < 0.0).collect();
        let (sp, sn) = (stats(&pos), stats(&neg));
        f.extend([sp.max, sp.min, sn.max, sn.min]);
    }

    let coeffs: Vec<f64> = col.iter().map(|&(_, a)| a).collect();
    for keep in [|a: f64| a > 0.0, |a: f64| a < 0.0] {
        let part: Vec<f64> = coeffs.iter().copied().filter(|&a| keep(a)).collect();
        let s = stats(&part);
        f.extend([s.count, s.mean, s.std, s.min, s.max]);
    }

    let weights: [&dyn Fn(usize) -> f64; 3] = [
        &|_| 1.0,
        &|i| lp.duals[i],
        &|i| safe_div(1.0, ctx.row_abs_sum[i]),
    ];
    for w in weights {
        let vals: Vec<f64> = col.iter().map(|&(i, a)| w(i) * a).collect();
        let s = stats(&vals);
        f.extend([s.sum, s.mean, s.std, s.max, s.min]);
    }
    debug_assert_eq!(f.len(), VAR_FEATURES);
    f
}

fn constraint_features_ctx(ctx: &Ctx, i: usize) -> Vec<f64> {
    let inst = &ctx.inst;
    let row = &inst.constraints[i];
    let mut f = vec![0.0; 12];
    f[constraint_type(inst, i) as usize] = 1.0;
    f.extend([clip(row.lhs), clip(row.rhs)]);
    let coeffs: Vec<f64> = row.coeffs.iter().map(|&(_, a)| a).filter(|&a| a != 0.0).collect();
    let pos: Vec<f64> = coeffs.iter().copied().filter(|&a| a > 0.0).collect();
    let neg: Vec<f64> = coeffs.iter().copied().filter(|&a| a < 0.0).collect();
    f.extend([coeffs.len() as f64, pos.len() as f64, neg.len() as f64]);
    f.push(ctx.root.lp.duals[i]);
    f.push(basis_code(ctx.root.lp.row_basis[i]));
    f.extend([ctx.row_abs_sum[i], pos.iter().sum(), -neg.iter().sum::<f64>()]);
    let s = stats(&coeffs);
    f.extend([s.mean, s.std, s.min, s.max]);
    debug_assert_eq!(f.len(), CONS_FEATURES);
    f
}

/// Features of binary variable `j` of the presolved instance.
pub fn variable_features(root: &RootInfo, j: usize) -> Result<Vec<f64>> {
    let ctx = Ctx::new(root);
    if j >= ctx.inst.num_vars() || !ctx.inst.is_binary(j) {
        return Err(Error::NotBinary(j));
    }
    Ok(variable_features_ctx(&ctx, j))
}

/// Features of row `i` of the presolved instance.
pub fn constraint_features(root: &RootInfo, i: usize) -> Result<Vec<f64>> {
    let ctx = Ctx::new(root);
    if i >= ctx.inst.num_rows() {
        return Err(Error::InvalidArgument(format!("row {i} out of range")));
    }
    Ok(constraint_features_ctx(&ctx, i))
}

/// Edges of the graph, identified by their endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    /// Variable `j` and row `i` of the presolved instance.
    VarCons { var: usize, cons: usize },
    VarObj { var: usize },
    ConsObj { cons: usize },
}

/// `(original coefficient, coefficient over the largest magnitude in its row
/// or objective)`.
pub fn edge_features(inst: &MipInstance, edge: Edge) -> [f64; 2] {
    match edge {
        Edge::VarCons { var, cons } => {
            let a = inst.constraints[cons].coeffs.iter().find(|&&(j, _)| j == var).map_or(0.0, |&(_, a)| a);
            [a, safe_div(a, row_max_abs(inst, cons))]
        }
        Edge::VarObj { var } => {
            let c = inst.objective[var];
            let m = inst.objective.iter().fold(0.0, |m: f64, c| m.max(c.abs()));
            [c, safe_div(c, m)]
        }
        Edge::ConsObj { cons } => {
            let r = &inst.constraints[cons];
            let b = if r.rhs.is_finite() { r.rhs } else { r.lhs };
            let b = clip(b);
            [b, safe_div(b, row_max_abs(inst, cons))]
        }
    }
}

/// Builds the graph for `inst` from the root information collected on it.
pub fn build_trigraph(inst: &MipInstance, root: &RootInfo) -> Result<TriGraph> {
    if root.presolved.var_map.iter().any(|&j| j >= inst.num_vars()) {
        return Err(Error::InvalidArgument("root information belongs to another instance".into()));
    }
    let ctx = Ctx::new(root);
    let p = &ctx.inst;
    let bins = p.binaries();
    let mut node_of = vec![usize::MAX; p.num_vars()];
    for (k, &j) in bins.iter().enumerate() {
        node_of[j] = k;
    }
    let mut vc_edges = Vec::new();
    for (i, row) in p.constraints.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 && node_of[j] != usize::MAX {
                vc_edges.push((node_of[j], i, edge_features(p, Edge::VarCons { var: j, cons: i })));
            }
        }
    }
    vc_edges.sort_by_key(|&(v, c, _)| (v, c));
    let obj_l1: f64 = bins.iter().map(|&j| p.objective[j].abs()).sum();
    Ok(TriGraph {
        instance: inst.name.clone(),
        var_names: bins.iter().map(|&j| p.variables[j].name.clone()).collect(),
        var_features: bins.iter().map(|&j| variable_features_ctx(&ctx, j)).collect(),
        cons_names: p.constraints.iter().map(|r| r.name.clone()).collect(),
        cons_features: (0..p.num_rows()).map(|i| constraint_features_ctx(&ctx, i)).collect(),
        obj_features: vec![obj_l1, bins.len() as f64],
        vc_edges,
        vo_features: bins.iter().map(|&j| edge_features(p, Edge::VarObj { var: j })).collect(),
        co_features: (0..p.num_rows()).map(|i| edge_features(p, Edge::ConsObj { cons: i })).collect(),
    })
}

/// Per-feature `(x - shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            n += 1.0;
            for k in 0..dim {
                sum[k] += r[k];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if n > 0.0 { s / n } else { 0.0 }).collect();
        for r in &rows {
            for k in 0..dim {
                sq[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let mut shift = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for k in 0..dim {
            let sd = if n > 0.0 { (sq[k] / n).sqrt() } else { 0.0 };
            if sd > 1e-12 * (1.0 + mean[k].abs()) {
                shift.push(mean[k]);
                scale.push(sd);
            } else {
                shift.push(mean[k]);
                scale.push(1.0);
            }
        }
        Standardizer { shift, scale }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = (*v - self.shift[k]) / self.scale[k];
        }
    }
}

/// Standardization fitted on training graphs, one block per node and edge
/// type. Features constant over the training set are only centered, so a
/// constant infinity sentinel becomes 0 rather than 1e10.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub var: Standardizer,
    pub cons: Standardizer,
    pub obj: Standardizer,
    pub vc_edge: Standardizer,
    pub vo_edge: Standardizer,
    pub co_edge: Standardizer,
}

pub fn fit_scaler(graphs: &[TriGraph]) -> Result<FeatureScaler> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a scaler on zero graphs".into()));
    }
    Ok(FeatureScaler {
        var: Standardizer::fit(VAR_FEATURES, graphs.iter().flat_map(|g| g.var_features.iter().map(|r| r.as_slice()))),
        cons: Standardizer::fit(CONS_FEATURES, graphs.iter().flat_map(|g| g.cons_features.iter().map(|r| r.as_slice()))),
        obj: Standardizer::fit(OBJ_FEATURES, graphs.iter().map(|g| g.obj_features.as_slice())),
        vc_edge: Standardizer::fit(EDGE_FEATURES, graphs.iter().flat_map(|g| g.vc_edges.iter().map(|e| &e.2[..]))),
        vo_edge: Standardizer::fit(EDGE_FEATURES, graphs.iter().flat_map(|g| g.vo_features.iter().map(|e| &e[..]))),
        co_edge: Standardizer::fit(EDGE_FEATURES, graphs.iter().flat_map(|g| g.co_features.iter().map(|e| &e[..]))),
    })
}

pub fn apply_scaler(graph: &TriGraph, scaler: &FeatureScaler) -> TriGraph {
    let mut g = graph.clone();
    g.var_features.iter_mut().for_each(|r| scaler.var.apply(r));
    g.cons_features.iter_mut().for_each(|r| scaler.cons.apply(r));
    scaler.obj.apply(&mut g.obj_features);
    g.vc_edges.iter_mut().for_each(|e| scaler.vc_edge.apply(&mut e.2));
    g.vo_features.iter_mut().for_each(|e| scaler.vo_edge.apply(e));
    g.co_features.iter_mut().for_each(|e| scaler.co_edge.apply(e));
    g
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    name: String,
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    #[serde(rename = "type")]
    kind: String,
    from: usize,
    to: usize,
    features: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    instance: String,
    var_nodes: Vec<NodeRecord>,
    cons_nodes: Vec<NodeRecord>,
    obj_features: Vec<f64>,
    edges: Vec<EdgeRecord>,
}

impl TriGraph {
    /// Graph file; `v-c` edges go from variable node to constraint node,
    /// `v-o` and `c-o` edges point at the single objective node `0`.
    pub fn to_json_string(&self) -> String {
        let nodes = |names: &[String], feats: &[Vec<f64>]| {
            names.iter().zip(feats).map(|(n, f)| NodeRecord { name: n.clone(), features: f.clone() }).collect()
        };
        let mut edges: Vec<EdgeRecord> = self
            .vc_edges
            .iter()
            .map(|&(v, c, f)| EdgeRecord { kind: "v-c".into(), from: v, to: c, features: f })
            .collect();
        edges.extend(self.vo_features.iter().enumerate().map(|(v, &f)| EdgeRecord {
            kind: "v-o".into(),
            from: v,
            to: 0,
            features: f,
        }));
        edges.extend(self.co_features.iter().enumerate().map(|(c, &f)| EdgeRecord {
            kind: "c-o".into(),
            from: c,
            to: 0,
            features: f,
        }));
        let file = GraphFile {
            instance: self.instance.clone(),
            var_nodes: nodes(&self.var_names, &self.var_features),
            cons_nodes: nodes(&self.cons_names, &self.cons_features),
            obj_features: self.obj_features.clone(),
            edges,
        };
        let mut s = serde_json::to_string(&file).expect("finite features");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::parse("graph file", e.to_string()))?;
        let (nv, nc) = (file.var_nodes.len(), file.cons_nodes.len());
        let check = |ctx: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: want, found: got }).map_err(|e| Error::parse(ctx, e.to_string()))
            }
        };
        for n in &file.var_nodes {
            check(&format!("var_nodes.{}", n.name), n.features.len(), VAR_FEATURES)?;
        }
        for n in &file.cons_nodes {
            check(&format!("cons_nodes.{}", n.name), n.features.len(), CONS_FEATURES)?;
        }
        check("obj_features", file.obj_features.len(), OBJ_FEATURES)?;
        let mut vc_edges = Vec::new();
        let mut vo: Vec<Option<[f64; 2]>> = vec![None; nv];
        let mut co: Vec<Option<[f64; 2]>> = vec![None; nc];
        for (k, e) in file.edges.iter().enumerate() {
            let ctx = format!("edges[{k}]");
            match e.kind.as_str() {
                "v-c" if e.from < nv && e.to < nc => vc_edges.push((e.from, e.to, e.features)),
                "v-o" if e.from < nv && e.to == 0 => vo[e.from] = Some(e.features),
                "c-o" if e.from < nc && e.to == 0 => co[e.from] = Some(e.features),
                _ => return Err(Error::parse(ctx, format!("bad edge `{}` {} -> {}", e.kind, e.from, e.to))),
            }
        }
        let collect = |v: Vec<Option<[f64; 2]>>, what: &str| {
            v.into_iter()
                .enumerate()
                .map(|(k, f)| f.ok_or_else(|| Error::parse("edges", format!("missing {what} edge for node {k}"))))
                .collect::<Result<Vec<_>>>()
        };
        Ok(TriGraph {
            instance: file.instance,
            var_names: file.var_nodes.iter().map(|n| n.name.clone()).collect(),
            var_features: file.var_nodes.into_iter().map(|n| n.features).collect(),
            cons_names: file.cons_nodes.iter().map(|n| n.name.clone()).collect(),
            cons_features: file.cons_nodes.into_iter().map(|n| n.features).collect(),
            obj_features: file.obj_features,
            vc_edges,
            vo_features: collect(vo, "v-o")?,
            co_features: collect(co, "c-o")?,
        })
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
