//! Reverse-mode differentiation over dense row-major matrices.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self * other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &b) in o.iter_mut().zip(other.row(k)) {
                    *x += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other`
    fn tmatmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &bv) in out.data[i * other.cols..(i + 1) * other.cols].iter_mut().zip(b) {
                    *x += a * bv;
                }
            }
        }
        out
    }

    /// `self * other^T`
    fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    fn col_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (x, &v) in out.data.iter_mut().zip(self.row(i)) {
                *x += v;
            }
        }
        out
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

pub type Id = usize;

/// Segment membership of each row of an edge-indexed matrix.
#[derive(Clone, Debug)]
pub struct Segments {
    pub of: Rc<Vec<usize>>,
    pub count: usize,
}

enum Op {
    Leaf,
    MatMul(Id, Id),
    AddBias(Id, Id),
    Add(Id, Id),
    Relu(Id),
    Sigmoid(Id),
    ConcatCols(Id, Id),
    Broadcast(Id),
    Gather(Id, Rc<Vec<usize>>),
    SliceRows(Id, usize),
    SegSoftmax(Id, Segments),
    SegSum(Id, Id, Segments),
    MeanRows(Id),
    Stack(Vec<Id>),
    Bce(Id, Rc<Vec<(usize, f64)>>),
}

pub const BCE_CLIP: f64 = 1e-7;

#[derive(Default)]
pub struct Tape {
    vals: Vec<Matrix>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: Id) -> &Matrix {
        &self.vals[id]
    }

    fn push(&mut self, v: Matrix, op: Op) -> Id {
        self.vals.push(v);
        self.ops.push(op);
        self.vals.len() - 1
    }

    pub fn leaf(&mut self, v: Matrix) -> Id {
        self.push(v, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Id, b: Id) -> Id {
        let v = self.vals[a].matmul(&self.vals[b]);
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 x k` row to every row of `a`.
    pub fn add_bias(&mut self, a: Id, b: Id) -> Id {
        let mut v = self.vals[a].clone();
        let bias = &self.vals[b];
        assert_eq!((bias.rows, bias.cols), (1, v.cols), "bias shape");
        for i in 0..v.rows {
            for (x, &bv) in v.row_mut(i).iter_mut().zip(&bias.data) {
                *x += bv;
            }
        }
        self.push(v, Op::AddBias(a, b))
    }

    pub fn add(&mut self, a: Id, b: Id) -> Id {
        let mut v = self.vals[a].clone();
        v.add_assign(&self.vals[b]);
        self.push(v, Op::Add(a, b))
    }

    pub fn relu(&mut self, a: Id) -> Id {
        let v = self.vals[a].map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Id) -> Id {
        let v = self.vals[a].map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, a: Id, b: Id) -> Id {
        let (x, y) = (&self.vals[a], &self.vals[b]);
        assert_eq!(x.rows, y.rows, "concat rows");
        let mut v = Matrix::zeros(x.rows, x.cols + y.cols);
        for i in 0..x.rows {
            let r = v.row_mut(i);
            r[..x.cols].copy_from_slice(x.row(i));
            r[x.cols..].copy_from_slice(y.row(i));
        }
        self.push(v, Op::ConcatCols(a, b))
    }

    /// Repeats a `1 x k` row `n` times.
    pub fn broadcast(&mut self, a: Id, n: usize) -> Id {
        let x = &self.vals[a];
        assert_eq!(x.rows, 1);
        let mut v = Matrix::zeros(n, x.cols);
        for i in 0..n {
            v.row_mut(i).copy_from_slice(&x.data);
        }
        self.push(v, Op::Broadcast(a))
    }

    pub fn gather(&mut self, a: Id, idx: Rc<Vec<usize>>) -> Id {
        let x = &self.vals[a];
        let mut v = Matrix::zeros(idx.len(), x.cols);
        for (e, &i) in idx.iter().enumerate() {
            v.row_mut(e).copy_from_slice(x.row(i));
        }
        self.push(v, Op::Gather(a, idx))
    }

    pub fn slice_rows(&mut self, a: Id, start: usize, end: usize) -> Id {
        let x = &self.vals[a];
        let v = Matrix { rows: end - start, cols: x.cols, data: x.data[start * x.cols..end * x.cols].to_vec() };
        self.push(v, Op::SliceRows(a, start))
    }

    /// Softmax of a column vector within each segment.
    pub fn seg_softmax(&mut self, a: Id, seg: Segments) -> Id {
        let x = &self.vals[a];
        assert_eq!(x.cols, 1);
        let mut max = vec![f64::NEG_INFINITY; seg.count];
        for (e, &s) in seg.of.iter().enumerate() {
            max[s] = max[s].max(x.data[e]);
        }
        let mut v = Matrix::zeros(x.rows, 1);
        let mut sum = vec![0.0; seg.count];
        for (e, &s) in seg.of.iter().enumerate() {
            v.data[e] = (x.data[e] - max[s]).exp();
            sum[s] += v.data[e];
        }
        for (e, &s) in seg.of.iter().enumerate() {
            v.data[e] /= sum[s];
        }
        self.push(v, Op::SegSoftmax(a, seg))
    }

    /// Row `s` of the result is the sum of `w_e * values_e` over the rows `e`
    /// in segment `s`; empty segments give zero rows.
    pub fn seg_sum(&mut self, w: Id, values: Id, seg: Segments) -> Id {
        let (wv, x) = (&self.vals[w], &self.vals[values]);
        assert_eq!((wv.rows, wv.cols), (x.rows, 1));
        let mut v = Matrix::zeros(seg.count, x.cols);
        for (e, &s) in seg.of.iter().enumerate() {
            let we = wv.data[e];
            for (o, &xv) in v.row_mut(s).iter_mut().zip(x.row(e)) {
                *o += we * xv;
            }
        }
        self.push(v, Op::SegSum(w, values, seg))
    }

    /// Column means as a `1 x k` row; zero when there are no rows.
    pub fn mean_rows(&mut self, a: Id) -> Id {
        let x = &self.vals[a];
        let mut v = x.col_sums();
        if x.rows > 0 {
            let n = x.rows as f64;
            v.data.iter_mut().for_each(|s| *s /= n);
        }
        self.push(v, Op::MeanRows(a))
    }

    /// Stacks `1 x k` rows.
    pub fn stack(&mut self, rows: Vec<Id>, cols: usize) -> Id {
        let mut v = Matrix::zeros(rows.len(), cols);
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).copy_from_slice(&self.vals[r].data);
        }
        self.push(v, Op::Stack(rows))
    }

    /// Mean binary cross-entropy of column vector `z` over `(row, target)`
    /// pairs; `z` is clipped to `[1e-7, 1 - 1e-7]` inside the logarithm.
    pub fn bce(&mut self, z: Id, targets: Rc<Vec<(usize, f64)>>) -> Id {
        let zv = &self.vals[z];
        let n = targets.len() as f64;
        let loss = targets
            .iter()
            .map(|&(i, y)| {
                let p = zv.data[i].clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        self.push(Matrix { rows: 1, cols: 1, data: vec![loss] }, Op::Bce(z, targets))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Id) -> Vec<Option<Matrix>> {
        let mut grads: Vec<Option<Matrix>> = vec![None; self.vals.len()];
        grads[out] = Some(Matrix { rows: 1, cols: 1, data: vec![1.0] });
        for id in (0..=out).rev() {
            let Some(g) = grads[id].take() else { continue };
            let acc = |grads: &mut Vec<Option<Matrix>>, k: Id, d: Matrix| match &mut grads[k] {
                Some(m) => m.add_assign(&d),
                slot => *slot = Some(d),
            };
            match &self.ops[id] {
                Op::Leaf => {}
                &Op::MatMul(a, b) => {
                    acc(&mut grads, a, g.matmul_t(&self.vals[b]));
                    acc(&mut grads, b, self.vals[a].tmatmul(&g));
                }
                &Op::AddBias(a, b) => {
                    acc(&mut grads, b, g.col_sums());
                    acc(&mut grads, a, g.clone());
                }
                &Op::Add(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g.clone());
                }
                &Op::Relu(a) => {
                    let y = &self.vals[id];
                    let d = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&y.data).map(|(&gv, &yv)| if yv > 0.0 { gv } else { 0.0 }).collect(),
                    };
                    acc(&mut grads, a, d);
                }
                &Op::Sigmoid(a) => {
                    let y = &self.vals[id];
                    let d = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&y.data).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect(),
                    };
                    acc(&mut grads, a, d);
                }
                &Op::ConcatCols(a, b) => {
                    let (p, q) = (self.vals[a].cols, self.vals[b].cols);
                    let mut da = Matrix::zeros(g.rows, p);
                    let mut db = Matrix::zeros(g.rows, q);
                    for i in 0..g.rows {
                        da.row_mut(i).copy_from_slice(&g.row(i)[..p]);
                        db.row_mut(i).copy_from_slice(&g.row(i)[p..]);
                    }
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                &Op::Broadcast(a) => acc(&mut grads, a, g.col_sums()),
                Op::Gather(a, idx) => {
                    let x = &self.vals[*a];
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for (e, &i) in idx.iter().enumerate() {
                        for (o, &gv) in d.row_mut(i).iter_mut().zip(g.row(e)) {
                            *o += gv;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                &Op::SliceRows(a, start) => {
                    let x = &self.vals[a];
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    d.data[start * x.cols..start * x.cols + g.data.len()].copy_from_slice(&g.data);
                    acc(&mut grads, a, d);
                }
                Op::SegSoftmax(a, seg) => {
                    let y = &self.vals[id];
                    let mut dot = vec![0.0; seg.count];
                    for (e, &s) in seg.of.iter().enumerate() {
                        dot[s] += y.data[e] * g.data[e];
                    }
                    let mut d = Matrix::zeros(y.rows, 1);
                    for (e, &s) in seg.of.iter().enumerate() {
                        d.data[e] = y.data[e] * (g.data[e] - dot[s]);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SegSum(w, values, seg) => {
                    let (wv, x) = (&self.vals[*w], &self.vals[*values]);
                    let mut dw = Matrix::zeros(wv.rows, 1);
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    for (e, &s) in seg.of.iter().enumerate() {
                        let gs = g.row(s);
                        dw.data[e] = gs.iter().zip(x.row(e)).map(|(a, b)| a * b).sum();
                        for (o, &gv) in dx.row_mut(e).iter_mut().zip(gs) {
                            *o = wv.data[e] * gv;
                        }
                    }
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *values, dx);
                }
                &Op::MeanRows(a) => {
                    let x = &self.vals[a];
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    if x.rows > 0 {
                        let n = x.rows as f64;
                        for i in 0..x.rows {
                            for (o, &gv) in d.row_mut(i).iter_mut().zip(&g.data) {
                                *o = gv / n;
                            }
                        }
                    }
                    acc(&mut grads, a, d);
                }
                Op::Stack(rows) => {
                    for (i, &r) in rows.iter().enumerate() {
                        acc(&mut grads, r, Matrix { rows: 1, cols: g.cols, data: g.row(i).to_vec() });
                    }
                }
                Op::Bce(z, targets) => {
                    let zv = &self.vals[*z];
                    let n = targets.len() as f64;
                    let mut d = Matrix::zeros(zv.rows, zv.cols);
                    for &(i, y) in targets.iter() {
                        let p = zv.data[i];
                        if p > BCE_CLIP && p < 1.0 - BCE_CLIP {
                            d.data[i] += g.data[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n;
                        }
                    }
                    acc(&mut grads, *z, d);
                }
            }
            grads[id] = Some(g);
        }
        grads
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix { rows, cols, data: data.to_vec() }
    }

    fn t_half(t: &mut Tape) -> Id {
        t.leaf(m(4, 1, &[0.5, -0.25, 0.25, 0.5]))
    }

    /// Central differences of `f` at `x`.
    fn numeric(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Vec<f64> {
        (0..x.data.len())
            .map(|k| {
                let mut p = x.clone();
                p.data[k] += 1e-6;
                let mut q = x.clone();
                q.data[k] -= 1e-6;
                (f(&p) - f(&q)) / 2e-6
            })
            .collect()
    }

    #[test]
    fn matmul_and_segments_gradient() {
        let a0 = m(3, 2, &[0.5, -1.0, 2.0, 0.3, -0.7, 1.1]);
        let b0 = m(2, 2, &[0.2, 0.4, -0.6, 0.9]);
        let seg = Segments { of: Rc::new(vec![0, 1, 0]), count: 2 };
        let run = |a: &Matrix, b: &Matrix| {
            let mut t = Tape::new();
            let ia = t.leaf(a.clone());
            let ib = t.leaf(b.clone());
            let h = t.matmul(ia, ib);
            let s = t.slice_rows(ib, 0, 2);
            let col = t.gather(s, Rc::new(vec![1, 0]));
            let w1 = t.matmul(h, col);
            let w1 = t.gather(w1, Rc::new(vec![0, 1, 2]));
            let wide = t.concat_cols(w1, h);
            let wide = t.relu(wide);
            let half = t_half(&mut t);
            let w1 = t.matmul(wide, half);
            let score = t.matmul(h, ib);
            let score = t.mean_rows(score);
            let score = t.broadcast(score, 3);
            let e = t.leaf(m(2, 1, &[1.0, -1.0]));
            let score = t.matmul(score, e);
            let score = t.add(score, w1);
            let score = t.sigmoid(score);
            let alpha = t.seg_softmax(score, seg.clone());
            let agg = t.seg_sum(alpha, h, seg.clone());
            let agg = t.relu(agg);
            let bias = t.leaf(m(1, 2, &[0.1, -0.2]));
            let agg = t.add_bias(agg, bias);
            let r0 = t.gather(agg, Rc::new(vec![0]));
            let r1 = t.gather(agg, Rc::new(vec![1]));
            let st = t.stack(vec![r1, r0], 2);
            let wout = t.leaf(m(2, 1, &[0.7, -0.4]));
            let z = t.matmul(st, wout);
            let z = t.sigmoid(z);
            let loss = t.bce(z, Rc::new(vec![(0, 1.0), (1, 0.0)]));
            (t, ia, ib, loss)
        };
        let (t, ia, ib, loss) = run(&a0, &b0);
        let g = t.backward(loss);
        let ga = g[ia].clone().unwrap();
        let gb = g[ib].clone().unwrap();
        let eval = |a: &Matrix, b: &Matrix| {
            let (t, _, _, l) = run(a, b);
            t.value(l).data[0]
        };
        let na = numeric(&a0, |a| eval(a, &b0));
        let nb = numeric(&b0, |b| eval(&a0, b));
        for (x, y) in ga.data.iter().zip(&na).chain(gb.data.iter().zip(&nb)) {
            assert!((x - y).abs() <= 1e-6 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn softmax_sums_to_one_per_segment() {
        let mut t = Tape::new();
        let x = t.leaf(m(4, 1, &[0.1, 0.9, 0.3, 0.3]));
        let y = t.seg_softmax(x, Segments { of: Rc::new(vec![0, 0, 1, 1]), count: 3 });
        let v = &t.value(y).data;
        assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
        assert_eq!(v[2], 0.5);
        let ones = t.leaf(m(4, 1, &[1.0; 4]));
        let s = t.seg_sum(y, ones, Segments { of: Rc::new(vec![0, 0, 1, 1]), count: 3 });
        assert_eq!(t.value(s).data[2], 0.0);
    }
}
