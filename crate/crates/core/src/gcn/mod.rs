//! Graph network over the tripartite graph.
//!
//! Each node type has its own embedding layer (linear, bias, ReLU). A
//! transition runs four steps: variables to objective, objective and
//! variables to constraints, constraints to objective, objective and
//! constraints to variables. Neighbor sums are weighted by attention
//! coefficients, a sigmoid of a linear map of the two endpoint embeddings
//! and the raw edge features, normalized by a softmax over each receiving
//! node's neighbors. After `T` transitions two dense layers map the initial
//! and final variable embeddings to a probability.
//!
//! Steps two and four also refresh the objective embedding. In the default
//! [`Aggregation::Mean`] mode this happens once, from the mean of the
//! previous constraint (variable) embeddings, so the output does not depend
//! on node order. [`Aggregation::Literal`] refreshes it once per node in
//! index order instead.

pub mod tape;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::trigraph::{TriGraph, CONS_FEATURES, EDGE_FEATURES, OBJ_FEATURES, VAR_FEATURES};
pub use tape::Matrix;
use tape::{Id, Segments, Tape};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnHyper {
    pub hidden: usize,
    pub transitions: usize,
    pub out_hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub attention: bool,
    pub aggregation: Aggregation,
}

impl Default for GcnHyper {
    fn default() -> Self {
        GcnHyper {
            hidden: 64,
            transitions: 2,
            out_hidden: 64,
            learning_rate: 1e-3,
            epochs: 200,
            seed: 0,
            attention: true,
            aggregation: Aggregation::Mean,
        }
    }
}

impl GcnHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.transitions == 0 || self.out_hidden == 0 {
            return Err(Error::InvalidArgument("hidden, transitions and out_hidden must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Name and shape of every parameter matrix, in a fixed order.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let (d, h) = (self.hidden, self.out_hidden);
        let mut s = vec![
            ("emb_var_w".to_string(), VAR_FEATURES, d),
            ("emb_var_b".to_string(), 1, d),
            ("emb_cons_w".to_string(), CONS_FEATURES, d),
            ("emb_cons_b".to_string(), 1, d),
            ("emb_obj_w".to_string(), OBJ_FEATURES, d),
            ("emb_obj_b".to_string(), 1, d),
        ];
        for t in 1..=self.transitions {
            for role in ROLES {
                s.push((format!("t{t}_{role}"), 2 * d, d));
            }
        }
        for pair in ATTENTION {
            s.push((format!("att_{pair}"), 2 * d + EDGE_FEATURES, 1));
        }
        s.extend([
            ("out1_w".to_string(), 2 * d, h),
            ("out1_b".to_string(), 1, h),
            ("out2_w".to_string(), h, 1),
            ("out2_b".to_string(), 1, 1),
        ]);
        s
    }
}

const ROLES: [&str; 6] = ["Vo", "oC", "Vc", "Co", "oV", "Cv"];
const ATTENTION: [&str; 4] = ["Vo", "Vc", "Co", "Cv"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GcnParams {
    pub mats: BTreeMap<String, Matrix>,
}

impl GcnParams {
    fn zeros_like(&self) -> Self {
        GcnParams { mats: self.mats.iter().map(|(k, m)| (k.clone(), Matrix::zeros(m.rows, m.cols))).collect() }
    }

    pub fn check_shapes(&self, hyper: &GcnHyper) -> Result<()> {
        let shapes = hyper.shapes();
        if shapes.len() != self.mats.len() {
            return Err(Error::DimensionMismatch { expected: shapes.len(), found: self.mats.len() });
        }
        for (name, r, c) in shapes {
            let m = self.mats.get(&name).ok_or_else(|| Error::InvalidArgument(format!("missing matrix `{name}`")))?;
            if m.rows != r || m.cols != c || m.data.len() != r * c {
                return Err(Error::DimensionMismatch { expected: r * c, found: m.rows * m.cols });
            }
            if m.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("matrix `{name}` has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(hyper: &GcnHyper, seed: u64) -> Result<GcnParams> {
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mats = BTreeMap::new();
    for (name, r, c) in hyper.shapes() {
        let mut m = Matrix::zeros(r, c);
        if !name.ends_with("_b") {
            let bound = glorot_bound(r, c);
            m.data.iter_mut().for_each(|x| *x = rng.gen_range(-bound..=bound));
        }
        mats.insert(name, m);
    }
    Ok(GcnParams { mats })
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Dense inputs of one graph.
struct Inputs {
    n: usize,
    m: usize,
    xv: Matrix,
    xc: Matrix,
    xo: Matrix,
    evc: Matrix,
    evo: Matrix,
    eco: Matrix,
    vc_v: Rc<Vec<usize>>,
    vc_c: Rc<Vec<usize>>,
}

impl Inputs {
    fn new(g: &TriGraph) -> Result<Self> {
        let (n, m) = (g.num_vars(), g.num_cons());
        if g.var_features.iter().any(|r| r.len() != VAR_FEATURES) {
            return Err(Error::DimensionMismatch { expected: VAR_FEATURES, found: 0 });
        }
        if g.cons_features.iter().any(|r| r.len() != CONS_FEATURES) || g.obj_features.len() != OBJ_FEATURES {
            return Err(Error::DimensionMismatch { expected: CONS_FEATURES, found: 0 });
        }
        if g.vo_features.len() != n || g.co_features.len() != m || g.vc_edges.iter().any(|&(v, c, _)| v >= n || c >= m)
        {
            return Err(Error::InvalidArgument("graph edges do not match its nodes".into()));
        }
        let edges = |f: &[[f64; 2]]| Matrix { rows: f.len(), cols: 2, data: f.iter().flatten().copied().collect() };
        let evc: Vec<[f64; 2]> = g.vc_edges.iter().map(|e| e.2).collect();
        Ok(Inputs {
            n,
            m,
            xv: Matrix::from_rows(&g.var_features, VAR_FEATURES),
            xc: Matrix::from_rows(&g.cons_features, CONS_FEATURES),
            xo: Matrix { rows: 1, cols: OBJ_FEATURES, data: g.obj_features.clone() },
            evc: edges(&evc),
            evo: edges(&g.vo_features),
            eco: edges(&g.co_features),
            vc_v: Rc::new(g.vc_edges.iter().map(|e| e.0).collect()),
            vc_c: Rc::new(g.vc_edges.iter().map(|e| e.1).collect()),
        })
    }
}

struct Net<'a> {
    t: Tape,
    p: HashMap<&'a str, Id>,
    hyper: &'a GcnHyper,
}

impl<'a> Net<'a> {
    fn new(params: &'a GcnParams, hyper: &'a GcnHyper) -> Self {
        let mut t = Tape::new();
        let p = params.mats.iter().map(|(k, m)| (k.as_str(), t.leaf(m.clone()))).collect();
        Net { t, p, hyper }
    }

    fn param(&self, name: &str) -> Id {
        self.p[name]
    }

    fn dense_relu(&mut self, x: Id, w: &str, b: Option<&str>) -> Id {
        let mut y = self.t.matmul(x, self.param(w));
        if let Some(b) = b {
            y = self.t.add_bias(y, self.param(b));
        }
        self.t.relu(y)
    }

    /// `relu([a, b] W)`
    fn transition(&mut self, a: Id, b: Id, w: &str) -> Id {
        let cat = self.t.concat_cols(a, b);
        self.dense_relu(cat, w, None)
    }

    /// Attention-weighted sum of source rows into each target.
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &mut self,
        pair: &str,
        h_tgt: Id,
        h_src: Id,
        tgt: Rc<Vec<usize>>,
        src: Rc<Vec<usize>>,
        edge: Id,
        count: usize,
    ) -> Id {
        let d = self.hyper.hidden;
        let seg = Segments { of: tgt.clone(), count };
        let alpha = if self.hyper.attention {
            let w = self.param(&format!("att_{pair}"));
            let wt = self.t.slice_rows(w, 0, d);
            let we = self.t.slice_rows(w, d, d + EDGE_FEATURES);
            let ws = self.t.slice_rows(w, d + EDGE_FEATURES, 2 * d + EDGE_FEATURES);
            let st = self.t.matmul(h_tgt, wt);
            let st = self.t.gather(st, tgt.clone());
            let ss = self.t.matmul(h_src, ws);
            let ss = self.t.gather(ss, src.clone());
            let se = self.t.matmul(edge, we);
            let raw = self.t.add(st, se);
            let raw = self.t.add(raw, ss);
            let raw = self.t.sigmoid(raw);
            self.t.seg_softmax(raw, seg.clone())
        } else {
            let mut deg = vec![0.0; count];
            tgt.iter().for_each(|&s| deg[s] += 1.0);
            let w = tgt.iter().map(|&s| 1.0 / deg[s]).collect();
            self.t.leaf(Matrix { rows: tgt.len(), cols: 1, data: w })
        };
        let hs = self.t.gather(h_src, src);
        self.t.seg_sum(alpha, hs, seg)
    }

    /// Builds the forward pass; returns the `n x 1` prediction node.
    fn forward(&mut self, g: &Inputs) -> Id {
        let (n, m, d) = (g.n, g.m, self.hyper.hidden);
        let xv = self.t.leaf(g.xv.clone());
        let xc = self.t.leaf(g.xc.clone());
        let xo = self.t.leaf(g.xo.clone());
        let evc = self.t.leaf(g.evc.clone());
        let evo = self.t.leaf(g.evo.clone());
        let eco = self.t.leaf(g.eco.clone());
        let all_v = Rc::new((0..n).collect::<Vec<_>>());
        let all_c = Rc::new((0..m).collect::<Vec<_>>());
        let obj_v = Rc::new(vec![0; n]);
        let obj_c = Rc::new(vec![0; m]);

        let hv0 = self.dense_relu(xv, "emb_var_w", Some("emb_var_b"));
        let hc0 = self.dense_relu(xc, "emb_cons_w", Some("emb_cons_b"));
        let mut ho = self.dense_relu(xo, "emb_obj_w", Some("emb_obj_b"));
        let (mut hv, mut hc) = (hv0, hc0);
        let literal = self.hyper.aggregation == Aggregation::Literal;

        for t in 1..=self.hyper.transitions {
            let w = |role: &str| format!("t{t}_{role}");

            let agg = self.attend("Vo", ho, hv, obj_v.clone(), all_v.clone(), evo, 1);
            ho = self.transition(ho, agg, &w("Vo"));

            let agg_c = self.attend("Vc", hc, hv, g.vc_c.clone(), g.vc_v.clone(), evc, m);
            let hc_new = if literal {
                let mut rows = Vec::with_capacity(m);
                for c in 0..m {
                    let prev = self.t.gather(hc, Rc::new(vec![c]));
                    ho = self.transition(ho, prev, &w("oC"));
                    let a = self.t.gather(agg_c, Rc::new(vec![c]));
                    rows.push(self.transition(ho, a, &w("Vc")));
                }
                self.t.stack(rows, d)
            } else {
                let mean = self.t.mean_rows(hc);
                ho = self.transition(ho, mean, &w("oC"));
                let hb = self.t.broadcast(ho, m);
                self.transition(hb, agg_c, &w("Vc"))
            };

            let agg = self.attend("Co", ho, hc_new, obj_c.clone(), all_c.clone(), eco, 1);
            ho = self.transition(ho, agg, &w("Co"));

            let agg_v = self.attend("Cv", hv, hc_new, g.vc_v.clone(), g.vc_c.clone(), evc, n);
            let hv_new = if literal {
                let mut rows = Vec::with_capacity(n);
                for v in 0..n {
                    let prev = self.t.gather(hv, Rc::new(vec![v]));
                    ho = self.transition(ho, prev, &w("oV"));
                    let a = self.t.gather(agg_v, Rc::new(vec![v]));
                    rows.push(self.transition(ho, a, &w("Cv")));
                }
                self.t.stack(rows, d)
            } else {
                let mean = self.t.mean_rows(hv);
                ho = self.transition(ho, mean, &w("oV"));
                let hb = self.t.broadcast(ho, n);
                self.transition(hb, agg_v, &w("Cv"))
            };
            hv = hv_new;
            hc = hc_new;
        }

        let cat = self.t.concat_cols(hv0, hv);
        let h = self.dense_relu(cat, "out1_w", Some("out1_b"));
        let z = self.t.matmul(h, self.param("out2_w"));
        let z = self.t.add_bias(z, self.param("out2_b"));
        self.t.sigmoid(z)
    }
}

fn check(params: &GcnParams, hyper: &GcnHyper) -> Result<()> {
    hyper.validate()?;
    params.check_shapes(hyper)
}

/// Predicted probability of value 1 for every variable node.
pub fn forward(graph: &TriGraph, params: &GcnParams, hyper: &GcnHyper) -> Result<Vec<f64>> {
    check(params, hyper)?;
    let inputs = Inputs::new(graph)?;
    let mut net = Net::new(params, hyper);
    let z = net.forward(&inputs);
    Ok(net.t.value(z).data.clone())
}

/// Per-node targets from labels keyed by variable name; unstable and
/// unlabeled variables get `None`.
pub fn targets_from_labels(graph: &TriGraph, labels: &HashMap<String, Label>) -> Vec<Option<f64>> {
    graph.var_names.iter().map(|n| labels.get(n).and_then(|l| l.target())).collect()
}

fn stable_pairs(targets: &[Option<f64>]) -> Rc<Vec<(usize, f64)>> {
    Rc::new(targets.iter().enumerate().filter_map(|(i, t)| t.map(|y| (i, y))).collect())
}

/// Mean binary cross-entropy over stable variables.
pub fn bce_loss(z: &[f64], targets: &[Option<f64>]) -> Result<f64> {
    if z.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: targets.len(), found: z.len() });
    }
    let pairs = stable_pairs(targets);
    if pairs.is_empty() {
        return Err(Error::NoStableLabels);
    }
    let mut t = Tape::new();
    let zi = t.leaf(Matrix { rows: z.len(), cols: 1, data: z.to_vec() });
    let l = t.bce(zi, pairs);
    Ok(t.value(l).data[0])
}

/// Loss and its exact gradient with respect to every parameter matrix.
pub fn gradients(
    graph: &TriGraph,
    params: &GcnParams,
    hyper: &GcnHyper,
    targets: &[Option<f64>],
) -> Result<(f64, GcnParams)> {
    check(params, hyper)?;
    if targets.len() != graph.num_vars() {
        return Err(Error::DimensionMismatch { expected: graph.num_vars(), found: targets.len() });
    }
    let pairs = stable_pairs(targets);
    if pairs.is_empty() {
        return Err(Error::NoStableLabels);
    }
    let inputs = Inputs::new(graph)?;
    let mut net = Net::new(params, hyper);
    let z = net.forward(&inputs);
    let loss = net.t.bce(z, pairs);
    let value = net.t.value(loss).data[0];
    let mut grads = net.t.backward(loss);
    let mut out = params.zeros_like();
    for (name, m) in out.mats.iter_mut() {
        if let Some(g) = grads[net.p[name.as_str()]].take() {
            *m = g;
        }
    }
    Ok((value, out))
}

/// Sum of per-graph losses and gradients, reduced in input order.
pub fn batch_gradients(
    batch: &[(TriGraph, Vec<Option<f64>>)],
    params: &GcnParams,
    hyper: &GcnHyper,
) -> Result<(f64, GcnParams)> {
    let parts: Vec<(f64, GcnParams)> =
        batch.par_iter().map(|(g, y)| gradients(g, params, hyper, y)).collect::<Result<_>>()?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (name, m) in total.mats.iter_mut() {
            for (a, b) in m.data.iter_mut().zip(&g.mats[name].data) {
                *a += b;
            }
        }
    }
    Ok((loss, total))
}

struct Adam {
    m: GcnParams,
    v: GcnParams,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &GcnParams) -> Self {
        Adam { m: p.zeros_like(), v: p.zeros_like(), step: 0 }
    }

    fn update(&mut self, params: &mut GcnParams, grads: &GcnParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for (name, p) in params.mats.iter_mut() {
            let g = &grads.mats[name].data;
            let m = &mut self.m.mats.get_mut(name).unwrap().data;
            let v = &mut self.v.mats.get_mut(name).unwrap().data;
            for k in 0..p.data.len() {
                m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * g[k];
                v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * g[k] * g[k];
                p.data[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

/// Trains from seeded initial parameters with one Adam step per graph,
/// visiting graphs in a seeded random order each epoch. Graphs without
/// stable labels are skipped.
pub fn train(
    dataset: &[(TriGraph, Vec<Option<f64>>)],
    hyper: &GcnHyper,
) -> Result<(GcnParams, Vec<EpochStats>)> {
    train_with_validation(dataset, &[], hyper)
}

pub fn train_with_validation(
    dataset: &[(TriGraph, Vec<Option<f64>>)],
    validation: &[(TriGraph, Vec<Option<f64>>)],
    hyper: &GcnHyper,
) -> Result<(GcnParams, Vec<EpochStats>)> {
    hyper.validate()?;
    let usable: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].1.iter().any(Option::is_some)).collect();
    if usable.is_empty() {
        return Err(Error::NoStableLabels);
    }
    let mut params = init_params(hyper, hyper.seed)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed);
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order = usable.clone();
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (g, y) = &dataset[i];
            let (loss, grads) = gradients(g, &params, hyper, y)?;
            total += loss;
            adam.update(&mut params, &grads, hyper.learning_rate);
        }
        let valid_loss = mean_loss(validation, &params, hyper)?;
        history.push(EpochStats { epoch, train_loss: total / order.len() as f64, valid_loss });
    }
    Ok((params, history))
}

/// Mean loss over graphs that have stable labels, or `None` if none do.
pub fn mean_loss(data: &[(TriGraph, Vec<Option<f64>>)], params: &GcnParams, hyper: &GcnHyper) -> Result<Option<f64>> {
    let losses: Vec<f64> = data
        .par_iter()
        .filter(|(_, y)| y.iter().any(Option::is_some))
        .map(|(g, y)| bce_loss(&forward(g, params, hyper)?, y))
        .collect::<Result<_>>()?;
    Ok((!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    hyper: GcnHyper,
    params: GcnParams,
}

pub fn params_to_json(params: &GcnParams, hyper: &GcnHyper) -> String {
    let file = ModelFile { format_version: FORMAT_VERSION, hyper: hyper.clone(), params: params.clone() };
    let mut s = serde_json::to_string(&file).expect("finite parameters");
    s.push('\n');
    s
}

pub fn params_from_json(text: &str) -> Result<(GcnParams, GcnHyper)> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("model file", e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            "model file",
            format!("format_version {} is not supported (expected {FORMAT_VERSION})", file.format_version),
        ));
    }
    check(&file.params, &file.hyper)?;
    Ok((file.params, file.hyper))
}

pub fn save_params(params: &GcnParams, hyper: &GcnHyper, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params_to_json(params, hyper)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(GcnParams, GcnHyper)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}
