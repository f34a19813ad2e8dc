//! Bounded-variable primal simplex on the computational form
//!
//! ```text
//! min c.x   s.t.   A x - r = 0,   lo <= (x, r) <= up
//! ```
//!
//! where `r` holds one logical variable per row carrying the row's
//! `[lhs, rhs]` range. The basis inverse is kept dense and refactorized
//! every [`REFACTOR_EVERY`] pivots, or every `m` pivots on larger bases.
//! A basis that is dual feasible but not primal feasible (the usual state
//! after a bound change) is repaired by dual simplex first. Phase 1 minimizes the sum of bound
//! infeasibilities of the basic variables, so the engine can start from any
//! basis (this is what branch-and-bound relies on for warm starts).

pub(crate) const PIVOT_TOL: f64 = 1e-9;
pub const PRIMAL_TOL: f64 = 1e-7;
pub(crate) const DUAL_TOL: f64 = 1e-9;
pub const REFACTOR_EVERY: usize = 100;
const HARRIS_TOL: f64 = 1e-9;
const DUAL_FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ColState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column parked at zero.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Column-compressed structural part of the matrix.
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseCols {
    start: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseCols {
    /// Builds from row-wise triplets `(row, col, value)`.
    pub(crate) fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for row in rows {
            for &(j, _) in row {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut fill = counts.clone();
        let mut out_rows = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in row {
                let k = fill[j];
                out_rows[k] = i;
                vals[k] = a;
                fill[j] += 1;
            }
        }
        SparseCols { start: counts, rows: out_rows, vals }
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.start[j]..self.start[j + 1];
        self.rows[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }
}

/// Saved basis: a status per column plus the basic column of every row slot.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Basis {
    pub(crate) state: Vec<ColState>,
    pub(crate) head: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    cols: SparseCols,
    cost: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    state: Vec<ColState>,
    head: Vec<usize>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    degenerate: usize,
    bland: bool,
    dirty: bool,
    pub(crate) iterations: usize,
}

impl Simplex {
    /// `lo`/`up` cover structural columns followed by one entry per row.
    pub(crate) fn new(cols: SparseCols, cost: Vec<f64>, lo: Vec<f64>, up: Vec<f64>) -> Self {
        let n = cost.len();
        let m = lo.len() - n;
        let mut cost = cost;
        cost.resize(n + m, 0.0);
        let mut s = Simplex {
            m,
            n,
            cols,
            cost,
            lo,
            up,
            state: vec![ColState::Lower; n + m],
            head: Vec::new(),
            x: vec![0.0; n + m],
            binv: Vec::new(),
            since_refactor: 0,
            degenerate: 0,
            bland: false,
            dirty: true,
            iterations: 0,
        };
        s.slack_basis();
        s
    }

    pub(crate) fn num_structural(&self) -> usize {
        self.n
    }

    fn slack_basis(&mut self) {
        for k in 0..self.n {
            self.state[k] = self.nonbasic_state(k, ColState::Lower);
        }
        self.head = (self.n..self.n + self.m).collect();
        for k in self.n..self.n + self.m {
            self.state[k] = ColState::Basic;
        }
        // B = -I
        self.binv = vec![0.0; self.m * self.m];
        for i in 0..self.m {
            self.binv[i * self.m + i] = -1.0;
        }
        self.since_refactor = 0;
        self.dirty = true;
    }

    /// Picks a valid nonbasic status for column `k`, preferring `want`.
    fn nonbasic_state(&self, k: usize, want: ColState) -> ColState {
        let (lo, up) = (self.lo[k], self.up[k]);
        match want {
            ColState::Upper if up.is_finite() => ColState::Upper,
            _ if lo.is_finite() => ColState::Lower,
            _ if up.is_finite() => ColState::Upper,
            _ => ColState::Free,
        }
    }

    fn nonbasic_value(&self, k: usize) -> f64 {
        match self.state[k] {
            ColState::Lower => self.lo[k],
            ColState::Upper => self.up[k],
            ColState::Free => 0.0,
            ColState::Basic => self.x[k],
        }
    }

    pub(crate) fn set_col_bounds(&mut self, k: usize, lo: f64, up: f64) {
        self.lo[k] = lo;
        self.up[k] = up;
        if self.state[k] != ColState::Basic {
            self.state[k] = self.nonbasic_state(k, self.state[k]);
        }
        self.dirty = true;
    }

    pub(crate) fn col_bounds(&self, k: usize) -> (f64, f64) {
        (self.lo[k], self.up[k])
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis { state: self.state.clone(), head: self.head.clone() }
    }

    /// Installs a saved basis; falls back to the slack basis if it is
    /// malformed or singular.
    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        let ok = basis.state.len() == self.n + self.m
            && basis.head.len() == self.m
            && basis.head.iter().all(|&k| k < self.n + self.m && basis.state[k] == ColState::Basic)
            && basis.state.iter().filter(|s| **s == ColState::Basic).count() == self.m;
        if !ok {
            self.slack_basis();
            return;
        }
        self.state = basis.state.clone();
        self.head = basis.head.clone();
        for k in 0..self.n + self.m {
            if self.state[k] != ColState::Basic {
                self.state[k] = self.nonbasic_state(k, self.state[k]);
            }
        }
        if !self.refactor() {
            self.slack_basis();
        }
        self.dirty = true;
    }

    fn for_col(&self, k: usize, mut f: impl FnMut(usize, f64)) {
        if k < self.n {
            for (i, a) in self.cols.col(k) {
                f(i, a);
            }
        } else {
            f(k - self.n, -1.0);
        }
    }

    /// Recomputes the dense inverse of the current basis. Logical columns
    /// are unit vectors, so only the block of basic structural columns on
    /// the rows without a basic logical is inverted (Gauss-Jordan with
    /// partial pivoting). Returns false if singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut slot_of_row = vec![usize::MAX; m];
        let mut structural = Vec::new();
        for (p, &k) in self.head.iter().enumerate() {
            if k >= self.n {
                slot_of_row[k - self.n] = p;
            } else {
                structural.push(p);
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| slot_of_row[i] == usize::MAX).collect();
        let s = structural.len();
        if free_rows.len() != s {
            return false;
        }
        let mut local = vec![usize::MAX; m];
        for (r, &i) in free_rows.iter().enumerate() {
            local[i] = r;
        }
        // block M = A[free_rows, structural]
        let mut b = vec![0.0; s * s];
        for (c, &p) in structural.iter().enumerate() {
            for (i, a) in self.cols.col(self.head[p]) {
                if local[i] != usize::MAX {
                    b[local[i] * s + c] = a;
                }
            }
        }
        let mut inv = vec![0.0; s * s];
        for i in 0..s {
            inv[i * s + i] = 1.0;
        }
        for c in 0..s {
            let mut piv = c;
            let mut best = b[c * s + c].abs();
            for r in c + 1..s {
                let v = b[r * s + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return false;
            }
            if piv != c {
                for j in 0..s {
                    b.swap(c * s + j, piv * s + j);
                    inv.swap(c * s + j, piv * s + j);
                }
            }
            let d = 1.0 / b[c * s + c];
            for j in c..s {
                b[c * s + j] *= d;
            }
            for v in &mut inv[c * s..(c + 1) * s] {
                *v *= d;
            }
            let brow: Vec<f64> = b[c * s + c..(c + 1) * s].to_vec();
            let irow: Vec<f64> = inv[c * s..(c + 1) * s].to_vec();
            for r in 0..s {
                if r == c {
                    continue;
                }
                let f = b[r * s + c];
                if f == 0.0 {
                    continue;
                }
                for (x, y) in b[r * s + c..(r + 1) * s].iter_mut().zip(&brow) {
                    *x -= f * y;
                }
                for (x, y) in inv[r * s..(r + 1) * s].iter_mut().zip(&irow) {
                    *x -= f * y;
                }
            }
        }
        // M^{-1} row c gives slot structural[c] on the free rows; each
        // logical slot of row i is A[i, structural] z_S - e_i.
        let mut binv = vec![0.0; m * m];
        for (c, &p) in structural.iter().enumerate() {
            for (r, &i) in free_rows.iter().enumerate() {
                binv[p * m + i] = inv[c * s + r];
            }
        }
        for i in 0..m {
            let p = slot_of_row[i];
            if p != usize::MAX {
                binv[p * m + i] = -1.0;
            }
        }
        for (c, &p) in structural.iter().enumerate() {
            for (i, a) in self.cols.col(self.head[p]) {
                let q = slot_of_row[i];
                if q == usize::MAX {
                    continue;
                }
                for (r, &j) in free_rows.iter().enumerate() {
                    binv[q * m + j] += a * inv[c * s + r];
                }
            }
        }
        self.binv = binv;
        self.since_refactor = 0;
        true
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for k in 0..self.n + self.m {
            if self.state[k] == ColState::Basic {
                continue;
            }
            let v = self.nonbasic_value(k);
            self.x[k] = v;
            if v != 0.0 {
                self.for_col(k, |i, a| rhs[i] -= a * v);
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.head[p]] = v;
        }
    }

    fn infeasibility(&self, k: usize) -> f64 {
        let v = self.x[k];
        if v < self.lo[k] - PRIMAL_TOL {
            -1.0
        } else if v > self.up[k] + PRIMAL_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn duals(&self, phase1: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let k = self.head[p];
            let c = if phase1 { self.infeasibility(k) } else { self.cost[k] };
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[p * m..(p + 1) * m];
            for (yi, b) in y.iter_mut().zip(row) {
                *yi += c * b;
            }
        }
        y
    }

    fn reduced_cost(&self, k: usize, y: &[f64], phase1: bool) -> f64 {
        let mut d = if phase1 { 0.0 } else { self.cost[k] };
        self.for_col(k, |i, a| d -= y[i] * a);
        d
    }

    fn price(&self, y: &[f64], phase1: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..self.n + self.m {
            let st = self.state[k];
            if st == ColState::Basic || self.lo[k] == self.up[k] {
                continue;
            }
            let d = self.reduced_cost(k, y, phase1);
            let eligible = match st {
                ColState::Lower => d < -DUAL_TOL,
                ColState::Upper => d > DUAL_TOL,
                ColState::Free => d.abs() > DUAL_TOL,
                ColState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if self.bland {
                return Some((k, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((k, d));
            }
        }
        best
    }

    fn column(&self, k: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(k, |i, a| {
            for (p, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[p * m + i] * a;
            }
        });
        alpha
    }

    /// Step limit imposed by basic slot `p` when it moves at `rate` per unit
    /// step; `slack` relaxes the bounds (Harris pass 1). Returns the limit and
    /// the bound state the variable would leave at.
    fn slot_limit(&self, p: usize, rate: f64, phase1: bool, slack: f64) -> Option<(f64, ColState)> {
        let k = self.head[p];
        let v = self.x[k];
        let (lo, up) = (self.lo[k], self.up[k]);
        if phase1 && v < lo - PRIMAL_TOL {
            return (rate > 0.0).then(|| ((lo - v + slack) / rate, ColState::Lower));
        }
        if phase1 && v > up + PRIMAL_TOL {
            return (rate < 0.0).then(|| ((v - up + slack) / -rate, ColState::Upper));
        }
        if rate > 0.0 && up.is_finite() {
            Some((((up - v + slack) / rate).max(0.0), ColState::Upper))
        } else if rate < 0.0 && lo.is_finite() {
            Some((((v - lo + slack) / -rate).max(0.0), ColState::Lower))
        } else {
            None
        }
    }

    fn ratio_test(&self, alpha: &[f64], dir: f64, phase1: bool) -> Option<(usize, f64, ColState)> {
        let rates = alpha.iter().map(|a| -dir * a);
        if self.bland {
            let mut best: Option<(usize, f64, ColState)> = None;
            for (p, rate) in rates.enumerate() {
                if alpha[p].abs() <= PIVOT_TOL {
                    continue;
                }
                if let Some((t, st)) = self.slot_limit(p, rate, phase1, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bp, bt, _)) => {
                            t < bt - 1e-12 || (t <= bt + 1e-12 && self.head[p] < self.head[bp])
                        }
                    };
                    if better {
                        best = Some((p, t, st));
                    }
                }
            }
            return best;
        }
        // Harris two-pass: bound the step with relaxed limits, then take the
        // largest pivot among slots blocking within that bound.
        let mut tmax = f64::INFINITY;
        for (p, rate) in rates.clone().enumerate() {
            if alpha[p].abs() <= PIVOT_TOL {
                continue;
            }
            if let Some((t, _)) = self.slot_limit(p, rate, phase1, HARRIS_TOL) {
                tmax = tmax.min(t);
            }
        }
        if !tmax.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, ColState)> = None;
        let mut best_piv = 0.0;
        for (p, rate) in rates.enumerate() {
            if alpha[p].abs() <= PIVOT_TOL {
                continue;
            }
            if let Some((t, st)) = self.slot_limit(p, rate, phase1, 0.0) {
                if t <= tmax && alpha[p].abs() > best_piv {
                    best_piv = alpha[p].abs();
                    best = Some((p, t, st));
                }
            }
        }
        best
    }

    fn pivot_inverse(&mut self, alpha: &[f64], p: usize) {
        let m = self.m;
        let d = 1.0 / alpha[p];
        for j in 0..m {
            self.binv[p * m + j] *= d;
        }
        let (before, rest) = self.binv.split_at_mut(p * m);
        let (prow, after) = rest.split_at_mut(m);
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                for (r, pv) in row.iter_mut().zip(prow.iter()) {
                    *r -= f * pv;
                }
            }
        }
        for (off, row) in after.chunks_exact_mut(m).enumerate() {
            let f = alpha[p + 1 + off];
            if f != 0.0 {
                for (r, pv) in row.iter_mut().zip(prow.iter()) {
                    *r -= f * pv;
                }
            }
        }
    }

    fn any_infeasible(&self) -> bool {
        self.head.iter().any(|&k| self.infeasibility(k) != 0.0)
    }

    /// Flips boxed nonbasic columns whose reduced cost has the wrong sign and
    /// reports whether the basis is then dual feasible.
    fn make_dual_feasible(&mut self) -> bool {
        let y = self.duals(false);
        let mut flipped = false;
        let mut feasible = true;
        for k in 0..self.n + self.m {
            let st = self.state[k];
            if st == ColState::Basic || self.lo[k] == self.up[k] {
                continue;
            }
            let d = self.reduced_cost(k, &y, false);
            match st {
                ColState::Lower if d < -DUAL_FEAS_TOL => {
                    if self.up[k].is_finite() {
                        self.state[k] = ColState::Upper;
                        flipped = true;
                    } else {
                        feasible = false;
                    }
                }
                ColState::Upper if d > DUAL_FEAS_TOL => {
                    if self.lo[k].is_finite() {
                        self.state[k] = ColState::Lower;
                        flipped = true;
                    } else {
                        feasible = false;
                    }
                }
                ColState::Free if d.abs() > DUAL_FEAS_TOL => feasible = false,
                _ => {}
            }
        }
        if flipped {
            self.recompute_basics();
        }
        feasible
    }

    /// Dual simplex from a dual feasible basis. Returns `Some(Infeasible)`
    /// when a dual ray proves primal infeasibility, `None` once the basis is
    /// primal feasible or the phase gives up.
    fn dual_phase(&mut self, max_iter: usize) -> Option<Outcome> {
        let (m, n) = (self.m, self.n);
        let mut verified = false;
        while self.iterations < max_iter {
            // leaving slot: dual steepest edge, with exact row norms of the
            // dense inverse as weights
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                let k = self.head[p];
                let v = self.x[k];
                let viol = if v < self.lo[k] - PRIMAL_TOL {
                    self.lo[k] - v
                } else if v > self.up[k] + PRIMAL_TOL {
                    v - self.up[k]
                } else {
                    continue;
                };
                let w: f64 = self.binv[p * m..(p + 1) * m].iter().map(|b| b * b).sum();
                let viol = viol * viol / w.max(1e-12);
                if leave.is_none_or(|(_, b)| viol > b) {
                    leave = Some((p, viol));
                }
            }
            let (p, _) = leave?;
            let out = self.head[p];
            let raise = self.x[out] < self.lo[out];
            let y = self.duals(false);
            let rho = &self.binv[p * m..(p + 1) * m];
            let mut cand: Vec<(usize, f64, f64)> = Vec::new();
            for k in 0..n + m {
                let st = self.state[k];
                if st == ColState::Basic || self.lo[k] == self.up[k] {
                    continue;
                }
                let mut ar = 0.0;
                self.for_col(k, |i, a| ar += rho[i] * a);
                if ar.abs() <= PIVOT_TOL {
                    continue;
                }
                // moving x_k by dir changes x_out by -dir * ar
                let dir = match st {
                    ColState::Lower => 1.0,
                    ColState::Upper => -1.0,
                    _ => {
                        if (ar < 0.0) == raise {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                if (-dir * ar > 0.0) != raise {
                    continue;
                }
                let d = self.reduced_cost(k, &y, false);
                let slack = (dir * d).max(0.0);
                cand.push((k, slack, ar.abs()));
            }
            if cand.is_empty() {
                if !verified && self.since_refactor > 0 {
                    verified = true;
                    if !self.refactor() {
                        return None;
                    }
                    self.recompute_basics();
                    continue;
                }
                return Some(Outcome::Infeasible);
            }
            // Bound flipping ratio test: walk the breakpoints in ratio order
            // and flip boxed columns while the leaving row stays violated.
            cand.sort_by(|a, b| (a.1 / a.2).total_cmp(&(b.1 / b.2)).then(b.2.total_cmp(&a.2)));
            let mut slope = if raise { self.lo[out] - self.x[out] } else { self.x[out] - self.up[out] };
            let mut pos = 0;
            while pos + 1 < cand.len() {
                let (j, _, a) = cand[pos];
                let range = self.up[j] - self.lo[j];
                if !range.is_finite() || slope - a * range <= PRIMAL_TOL {
                    break;
                }
                slope -= a * range;
                pos += 1;
            }
            let ratio = cand[pos].1 / cand[pos].2;
            let k = cand[pos..]
                .iter()
                .take_while(|c| c.1 / c.2 <= ratio + 1e-12)
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
                .map(|c| c.0)
                .expect("nonempty");
            if pos > 0 {
                let mut rhs = vec![0.0; m];
                for &(j, _, _) in &cand[..pos] {
                    let (from, to, st) = match self.state[j] {
                        ColState::Lower => (self.lo[j], self.up[j], ColState::Upper),
                        _ => (self.up[j], self.lo[j], ColState::Lower),
                    };
                    self.state[j] = st;
                    self.x[j] = to;
                    self.for_col(j, |i, a| rhs[i] += a * (to - from));
                }
                for q in 0..m {
                    let row = &self.binv[q * m..(q + 1) * m];
                    let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
                    self.x[self.head[q]] -= v;
                }
            }
            self.iterations += 1;
            let alpha = self.column(k);
            if alpha[p].abs() <= PIVOT_TOL {
                // row and column disagree: the inverse has drifted
                if !self.refactor() {
                    return None;
                }
                self.recompute_basics();
                continue;
            }
            let target = if raise { self.lo[out] } else { self.up[out] };
            let dir = match self.state[k] {
                ColState::Lower => 1.0,
                ColState::Upper => -1.0,
                _ => {
                    if (-alpha[p] > 0.0) == raise {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let rate = -dir * alpha[p];
            let step = ((target - self.x[out]) / rate).max(0.0);
            self.x[k] += dir * step;
            for q in 0..m {
                let r = -dir * alpha[q];
                if r != 0.0 {
                    self.x[self.head[q]] += r * step;
                }
            }
            self.x[out] = target;
            self.state[out] = if raise { ColState::Lower } else { ColState::Upper };
            self.state[k] = ColState::Basic;
            self.head[p] = k;
            self.pivot_inverse(&alpha, p);
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY.max(self.m) {
                if !self.refactor() {
                    return None;
                }
                self.recompute_basics();
            }
        }
        None
    }

    pub(crate) fn solve(&mut self) -> Outcome {
        let (m, n) = (self.m, self.n);
        let max_iter = 20 * (m + n) + 10_000;
        self.degenerate = 0;
        self.bland = false;
        self.iterations = 0;
        if self.dirty {
            self.recompute_basics();
            self.dirty = false;
        }
        if self.any_infeasible() && self.make_dual_feasible() {
            if let Some(out) = self.dual_phase(max_iter / 2) {
                return out;
            }
        }
        let mut verifications = 0;
        loop {
            if self.iterations >= max_iter {
                return Outcome::IterationLimit;
            }
            let phase1 = self.any_infeasible();
            let y = self.duals(phase1);
            let Some((k, d)) = self.price(&y, phase1) else {
                // Re-verify on a fresh factorization before declaring.
                if self.since_refactor > 0 && verifications < 3 {
                    verifications += 1;
                    if !self.refactor() {
                        self.slack_basis();
                    }
                    self.recompute_basics();
                    continue;
                }
                return if phase1 { Outcome::Infeasible } else { Outcome::Optimal };
            };
            self.iterations += 1;
            let dir = if d < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.column(k);
            let flip = self.up[k] - self.lo[k];
            let block = self.ratio_test(&alpha, dir, phase1);
            let step = match block {
                Some((_, t, _)) if t < flip => t,
                _ if flip.is_finite() => flip,
                _ => {
                    if phase1 {
                        // cannot happen in exact arithmetic; refresh and retry
                        if !self.refactor() {
                            self.slack_basis();
                        }
                        self.recompute_basics();
                        self.bland = true;
                        continue;
                    }
                    return Outcome::Unbounded;
                }
            };
            if step <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > 10 * (m + n) {
                    self.bland = true;
                }
            }
            self.x[k] += dir * step;
            for p in 0..m {
                let rate = -dir * alpha[p];
                if rate != 0.0 {
                    self.x[self.head[p]] += rate * step;
                }
            }
            match block {
                Some((p, t, leave)) if t < flip => {
                    let out = self.head[p];
                    self.x[out] = if leave == ColState::Lower { self.lo[out] } else { self.up[out] };
                    self.state[out] = leave;
                    self.state[k] = ColState::Basic;
                    self.head[p] = k;
                    self.pivot_inverse(&alpha, p);
                    self.since_refactor += 1;
                    if self.since_refactor >= REFACTOR_EVERY.max(self.m) {
                        if !self.refactor() {
                            self.slack_basis();
                        }
                        self.recompute_basics();
                    }
                }
                _ => {
                    self.state[k] = if dir > 0.0 { ColState::Upper } else { ColState::Lower };
                    self.x[k] = if dir > 0.0 { self.up[k] } else { self.lo[k] };
                }
            }
        }
    }

    /// Structural values.
    pub(crate) fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub(crate) fn state(&self, k: usize) -> ColState {
        self.state[k]
    }

    /// Row duals and reduced costs of every column for the true costs.
    pub(crate) fn dual_solution(&self) -> (Vec<f64>, Vec<f64>) {
        let y = self.duals(false);
        let d = (0..self.n + self.m)
            .map(|k| if self.state[k] == ColState::Basic { 0.0 } else { self.reduced_cost(k, &y, false) })
            .collect();
        (y, d)
    }

    pub(crate) fn objective(&self) -> f64 {
        self.cost[..self.n].iter().zip(&self.x[..self.n]).map(|(c, x)| c * x).sum()
    }
}

