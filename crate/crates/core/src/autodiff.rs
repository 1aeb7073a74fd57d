//! Eager reverse-mode differentiation over dense matrices.
//!
//! Every primitive computes its value immediately and records the inputs it
//! needs for the adjoint pass. Parameters enter through [`Tape::param`] or
//! [`Tape::param_rows`]; their gradients come back in [`Gradients`], keyed by
//! [`ParamId`], with embedding tables accumulated row-sparsely.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

/// Index of a tensor in a [`crate::params::ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

enum Op {
    Const,
    /// Value produced outside the tape with no recorded adjoint.
    Opaque,
    Param(ParamId),
    ParamRows(ParamId, Vec<usize>),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Linear(Var, Var, Option<Var>),
    RowDot(Var, Var),
    SegmentSoftmax(Var, Vec<usize>),
    ScaleRows(Var, Var),
    SegmentSumRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>, Var),
    Axpby(Var, f64, Var, f64),
    Mul(Var, Var),
    LeakyRelu(Var, f64),
    TimeEncode(Var, Var, Vec<f64>),
    Sum(Var),
    NormalizedBce(Var, Vec<f64>, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-parameter gradient storage.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum GradSlot {
    #[default]
    Empty,
    Dense(Tensor),
    /// Row index -> gradient row, for large embedding tables.
    Rows(BTreeMap<usize, Vec<f64>>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub slots: Vec<GradSlot>,
}

impl Gradients {
    pub fn new(num_params: usize) -> Self {
        Self {
            slots: vec![GradSlot::Empty; num_params],
        }
    }

    fn slot(&mut self, id: ParamId) -> &mut GradSlot {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, GradSlot::Empty);
        }
        &mut self.slots[id.0]
    }

    fn add_dense(&mut self, id: ParamId, g: &Tensor) {
        match self.slot(id) {
            s @ GradSlot::Empty => *s = GradSlot::Dense(g.clone()),
            GradSlot::Dense(t) => t.add_assign(g),
            GradSlot::Rows(rows) => {
                for r in 0..g.rows {
                    add_row(rows, r, g.row(r));
                }
            }
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        match self.slot(id) {
            s @ GradSlot::Empty => {
                let mut m = BTreeMap::new();
                m.insert(row, g.to_vec());
                *s = GradSlot::Rows(m);
            }
            GradSlot::Dense(t) => {
                for (a, b) in t.row_mut(row).iter_mut().zip(g) {
                    *a += b;
                }
            }
            GradSlot::Rows(rows) => add_row(rows, row, g),
        }
    }

    /// Adds another set of gradients into this one.
    pub fn merge(&mut self, other: &Gradients) {
        for (i, s) in other.slots.iter().enumerate() {
            match s {
                GradSlot::Empty => {}
                GradSlot::Dense(t) => self.add_dense(ParamId(i), t),
                GradSlot::Rows(rows) => {
                    for (r, g) in rows {
                        self.add_row(ParamId(i), *r, g);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for s in &mut self.slots {
            match s {
                GradSlot::Empty => {}
                GradSlot::Dense(t) => t.data.iter_mut().for_each(|v| *v *= c),
                GradSlot::Rows(rows) => rows.values_mut().flatten().for_each(|v| *v *= c),
            }
        }
    }

    /// Dense gradient for a parameter of the given shape (zeros if untouched).
    pub fn dense(&self, id: ParamId, rows: usize, cols: usize) -> Tensor {
        let mut out = Tensor::zeros(rows, cols);
        match self.slots.get(id.0) {
            None | Some(GradSlot::Empty) => {}
            Some(GradSlot::Dense(t)) => out = t.clone(),
            Some(GradSlot::Rows(m)) => {
                for (r, g) in m {
                    out.row_mut(*r).copy_from_slice(g);
                }
            }
        }
        out
    }

    pub fn is_touched(&self, id: ParamId) -> bool {
        !matches!(self.slots.get(id.0), None | Some(GradSlot::Empty))
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| match s {
            GradSlot::Empty => true,
            GradSlot::Dense(t) => t.all_finite(),
            GradSlot::Rows(m) => m.values().flatten().all(|v| v.is_finite()),
        })
    }
}

fn add_row(rows: &mut BTreeMap<usize, Vec<f64>>, r: usize, g: &[f64]) {
    let e = rows.entry(r).or_insert_with(|| vec![0.0; g.len()]);
    for (a, b) in e.iter_mut().zip(g) {
        *a += b;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.check(v);
        self.nodes.borrow()[v.idx].value.clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        self.check(v);
        f(&self.nodes.borrow()[v.idx].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.with_value(v, |t| t.shape())
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Const)
    }

    /// Injects a value whose dependence on parameters was not recorded.
    /// Backpropagating into it is an error.
    pub fn opaque(&self, value: Tensor) -> Var {
        self.push(value, Op::Opaque)
    }

    pub fn param(&self, id: ParamId, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Param(id))
    }

    /// Selected rows of a parameter table.
    pub fn param_rows(&self, id: ParamId, table: &Tensor, rows: &[usize]) -> Var {
        let mut out = Tensor::zeros(rows.len(), table.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        self.push(out, Op::ParamRows(id, rows.to_vec()))
    }

    pub fn gather(&self, x: Var, rows: &[usize]) -> Var {
        let out = self.with_value(x, |t| {
            let mut out = Tensor::zeros(rows.len(), t.cols);
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(i).copy_from_slice(t.row(r));
            }
            out
        });
        self.push(out, Op::Gather(x, rows.to_vec()))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor> = parts.iter().map(|v| {
                self.check(*v);
                &nodes[v.idx].value
            }).collect();
            let rows = vals.first().map_or(0, |t| t.rows);
            if vals.iter().any(|t| t.rows != rows) {
                return Err(shape_err("concat_cols", format!("row counts {:?}", vals.iter().map(|t| t.rows).collect::<Vec<_>>())));
            }
            let cols: usize = vals.iter().map(|t| t.cols).sum();
            let mut out = Tensor::zeros(rows, cols);
            for r in 0..rows {
                let mut c0 = 0;
                for t in &vals {
                    out.row_mut(r)[c0..c0 + t.cols].copy_from_slice(t.row(r));
                    c0 += t.cols;
                }
            }
            out
        };
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor> = parts.iter().map(|v| {
                self.check(*v);
                &nodes[v.idx].value
            }).collect();
            let cols = vals.first().map_or(0, |t| t.cols);
            if vals.iter().any(|t| t.cols != cols) {
                return Err(shape_err("concat_rows", "column counts differ".into()));
            }
            let rows: usize = vals.iter().map(|t| t.rows).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for t in &vals {
                data.extend_from_slice(&t.data);
            }
            Tensor::from_vec(rows, cols, data)
        };
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// `x · Wᵀ + b` for `x: n × in`, `W: out × in`, `b: 1 × out`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        for v in [Some(x), Some(w), b].into_iter().flatten() {
            self.check(v);
        }
        let out = {
            let nodes = self.nodes.borrow();
            let (xv, wv) = (&nodes[x.idx].value, &nodes[w.idx].value);
            if xv.cols != wv.cols {
                return Err(shape_err("linear", format!("x {:?} vs W {:?}", xv.shape(), wv.shape())));
            }
            let mut out = Tensor::zeros(xv.rows, wv.rows);
            for r in 0..xv.rows {
                let xr = xv.row(r);
                let orow = out.row_mut(r);
                for (o, k) in orow.iter_mut().zip(0..wv.rows) {
                    *o = dot(wv.row(k), xr);
                }
            }
            if let Some(b) = b {
                let bv = &nodes[b.idx].value;
                if bv.len() != wv.rows {
                    return Err(shape_err("linear", format!("bias {:?} vs W {:?}", bv.shape(), wv.shape())));
                }
                for r in 0..out.rows {
                    for (o, bb) in out.row_mut(r).iter_mut().zip(&bv.data) {
                        *o += bb;
                    }
                }
            }
            out
        };
        Ok(self.push(out, Op::Linear(x, w, b)))
    }

    /// Per-row inner product, `n × 1`.
    pub fn row_dot(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a);
        self.check(b);

        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
            if av.shape() != bv.shape() {
                return Err(shape_err("row_dot", format!("{:?} vs {:?}", av.shape(), bv.shape())));
            }
            Tensor::column((0..av.rows).map(|r| dot(av.row(r), bv.row(r))).collect())
        };
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    /// Softmax of an `n × 1` column within each segment.
    pub fn segment_softmax(&self, x: Var, segments: &[usize], n: usize) -> Result<Var> {
        let out = self.with_value(x, |t| {
            crate::segment::SegmentedVector::new(&t.data, segments)
                .and_then(|sv| crate::segment::segment_softmax(sv, n))
        })?;
        Ok(self.push(Tensor::column(out), Op::SegmentSoftmax(x, segments.to_vec())))
    }

    /// Multiplies row `i` of `x` by `s[i]` (`s: n × 1`).
    pub fn scale_rows(&self, x: Var, s: Var) -> Result<Var> {
        self.check(x);
        self.check(s);

        let out = {
            let nodes = self.nodes.borrow();
            let (xv, sv) = (&nodes[x.idx].value, &nodes[s.idx].value);
            if sv.len() != xv.rows {
                return Err(shape_err("scale_rows", format!("{:?} vs {:?}", xv.shape(), sv.shape())));
            }
            let mut out = xv.clone();
            for r in 0..out.rows {
                let c = sv.data[r];
                out.row_mut(r).iter_mut().for_each(|v| *v *= c);
            }
            out
        };
        Ok(self.push(out, Op::ScaleRows(x, s)))
    }

    /// Row-wise segment sum into `n` rows.
    pub fn segment_sum_rows(&self, x: Var, segments: &[usize], n: usize) -> Result<Var> {
        let (data, cols) = self.with_value(x, |t| {
            crate::segment::segment_sum_rows(&t.data, t.cols, segments, n).map(|d| (d, t.cols))
        })?;
        Ok(self.push(Tensor::from_vec(n, cols, data), Op::SegmentSumRows(x, segments.to_vec())))
    }

    /// Copy of `base` with `base[idx[i]] = rows[i]`. Indices must be distinct.
    pub fn scatter_rows(&self, base: Var, idx: &[usize], rows: Var) -> Result<Var> {
        self.check(base);
        self.check(rows);

        let out = {
            let nodes = self.nodes.borrow();
            let (bv, rv) = (&nodes[base.idx].value, &nodes[rows.idx].value);
            if rv.rows != idx.len() || rv.cols != bv.cols {
                return Err(shape_err("scatter_rows", format!("{:?} into {:?}", rv.shape(), bv.shape())));
            }
            let mut out = bv.clone();
            for (i, &r) in idx.iter().enumerate() {
                out.row_mut(r).copy_from_slice(rv.row(i));
            }
            out
        };
        Ok(self.push(out, Op::ScatterRows(base, idx.to_vec(), rows)))
    }

    /// `alpha · a + beta · b`.
    pub fn axpby(&self, a: Var, alpha: f64, b: Var, beta: f64) -> Result<Var> {
        self.check(a);
        self.check(b);

        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
            if av.shape() != bv.shape() {
                return Err(shape_err("axpby", format!("{:?} vs {:?}", av.shape(), bv.shape())));
            }
            let data = av.data.iter().zip(&bv.data).map(|(x, y)| alpha * x + beta * y).collect();
            Tensor::from_vec(av.rows, av.cols, data)
        };
        Ok(self.push(out, Op::Axpby(a, alpha, b, beta)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.axpby(a, 1.0, b, 1.0)
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a);
        self.check(b);

        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
            if av.shape() != bv.shape() {
                return Err(shape_err("mul", format!("{:?} vs {:?}", av.shape(), bv.shape())));
            }
            let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
            Tensor::from_vec(av.rows, av.cols, data)
        };
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn leaky_relu(&self, x: Var, slope: f64) -> Var {
        let out = self.with_value(x, |t| {
            let data = t.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
            Tensor::from_vec(t.rows, t.cols, data)
        });
        self.push(out, Op::LeakyRelu(x, slope))
    }

    /// `out[i, j] = √(1/d) · cos(freq[j] · t[i] + phase[j])`.
    pub fn time_encode(&self, freq: Var, phase: Var, times: &[f64]) -> Result<Var> {
        self.check(freq);
        self.check(phase);

        let out = {
            let nodes = self.nodes.borrow();
            let (fv, pv) = (&nodes[freq.idx].value, &nodes[phase.idx].value);
            if fv.len() != pv.len() {
                return Err(shape_err("time_encode", "frequency/phase length".into()));
            }
            let d = fv.len();
            let c = (1.0 / d as f64).sqrt();
            let mut out = Tensor::zeros(times.len(), d);
            for (i, &t) in times.iter().enumerate() {
                for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                    *o = c * (fv.data[j] * t + pv.data[j]).cos();
                }
            }
            out
        };
        Ok(self.push(out, Op::TimeEncode(freq, phase, times.to_vec())))
    }

    pub fn sum(&self, x: Var) -> Var {
        let s = self.with_value(x, |t| t.data.iter().sum());
        self.push(Tensor::from_vec(1, 1, vec![s]), Op::Sum(x))
    }

    /// Binary cross-entropy over scores normalized by their sum, averaged over
    /// entries. Normalized scores are clamped to `[eps, 1 - eps]`.
    pub fn normalized_bce(&self, scores: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let loss = self.with_value(scores, |t| {
            if t.len() != labels.len() {
                return Err(shape_err("normalized_bce", format!("{} scores vs {} labels", t.len(), labels.len())));
            }
            Ok(crate::trainer::bce_from_scores(&t.data, labels, eps))
        })?;
        Ok(self.push(Tensor::from_vec(1, 1, vec![loss]), Op::NormalizedBce(scores, labels.to_vec(), eps)))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var, num_params: usize) -> Result<Gradients> {
        if output.tape != self.id {
            return Err(Error::Autodiff("output variable belongs to a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[output.idx].value.len() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar output, got {:?}",
                nodes[output.idx].value.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=output.idx).map(|_| None).collect();
        adj[output.idx] = Some(Tensor::from_vec(1, 1, vec![1.0]));
        let mut grads = Gradients::new(num_params);

        for i in (0..=output.idx).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            let mut acc = |v: Var, t: Tensor| match &mut adj[v.idx] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Const => {}
                Op::Opaque => {
                    if g.data.iter().any(|&v| v != 0.0) {
                        return Err(Error::Autodiff(format!(
                            "gradient reached value #{i}, which has no recorded adjoint"
                        )));
                    }
                }
                Op::Param(id) => grads.add_dense(*id, &g),
                Op::ParamRows(id, rows) => {
                    for (k, &r) in rows.iter().enumerate() {
                        grads.add_row(*id, r, g.row(k));
                    }
                }
                Op::Gather(x, rows) => {
                    let (xr, xc) = nodes[x.idx].value.shape();
                    let mut gx = Tensor::zeros(xr, xc);
                    for (k, &r) in rows.iter().enumerate() {
                        for (a, b) in gx.row_mut(r).iter_mut().zip(g.row(k)) {
                            *a += b;
                        }
                    }
                    acc(*x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let (pr, pc) = nodes[p.idx].value.shape();
                        let mut gp = Tensor::zeros(pr, pc);
                        for r in 0..pr {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + pc]);
                        }
                        c0 += pc;
                        acc(*p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (pr, pc) = nodes[p.idx].value.shape();
                        let gp = Tensor::from_vec(pr, pc, g.data[off..off + pr * pc].to_vec());
                        off += pr * pc;
                        acc(*p, gp);
                    }
                }
                Op::Linear(x, w, b) => {
                    let (xv, wv) = (&nodes[x.idx].value, &nodes[w.idx].value);
                    let mut gx = Tensor::zeros(xv.rows, xv.cols);
                    let mut gw = Tensor::zeros(wv.rows, wv.cols);
                    for r in 0..xv.rows {
                        let gr = g.row(r);
                        let xr = xv.row(r);
                        let gxr = gx.row_mut(r);
                        for (k, &gk) in gr.iter().enumerate() {
                            if gk == 0.0 {
                                continue;
                            }
                            let wk = wv.row(k);
                            for (a, w) in gxr.iter_mut().zip(wk) {
                                *a += gk * w;
                            }
                        }
                        for (k, &gk) in gr.iter().enumerate() {
                            if gk == 0.0 {
                                continue;
                            }
                            for (a, xx) in gw.row_mut(k).iter_mut().zip(xr) {
                                *a += gk * xx;
                            }
                        }
                    }
                    if let Some(b) = b {
                        let bshape = nodes[b.idx].value.shape();
                        let mut gb = vec![0.0; wv.rows];
                        for r in 0..g.rows {
                            for (a, v) in gb.iter_mut().zip(g.row(r)) {
                                *a += v;
                            }
                        }
                        acc(*b, Tensor::from_vec(bshape.0, bshape.1, gb));
                    }
                    acc(*x, gx);
                    acc(*w, gw);
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
                    let mut ga = bv.clone();
                    let mut gb = av.clone();
                    for r in 0..av.rows {
                        let c = g.data[r];
                        ga.row_mut(r).iter_mut().for_each(|v| *v *= c);
                        gb.row_mut(r).iter_mut().for_each(|v| *v *= c);
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::SegmentSoftmax(x, seg) => {
                    let y = &node.value.data;
                    let n = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dotg = vec![0.0; n];
                    for ((&yi, &gi), &s) in y.iter().zip(&g.data).zip(seg) {
                        dotg[s] += yi * gi;
                    }
                    let gx = y
                        .iter()
                        .zip(&g.data)
                        .zip(seg)
                        .map(|((&yi, &gi), &s)| yi * (gi - dotg[s]))
                        .collect();
                    acc(*x, Tensor::column(gx));
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (&nodes[x.idx].value, &nodes[s.idx].value);
                    let mut gx = g.clone();
                    let mut gs = vec![0.0; sv.len()];
                    for r in 0..xv.rows {
                        let c = sv.data[r];
                        gs[r] = dot(g.row(r), xv.row(r));
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= c);
                    }
                    let (sr, sc) = sv.shape();
                    acc(*x, gx);
                    acc(*s, Tensor::from_vec(sr, sc, gs));
                }
                Op::SegmentSumRows(x, seg) => {
                    let (xr, xc) = nodes[x.idx].value.shape();
                    let mut gx = Tensor::zeros(xr, xc);
                    for (r, &s) in seg.iter().enumerate() {
                        gx.row_mut(r).copy_from_slice(g.row(s));
                    }
                    acc(*x, gx);
                }
                Op::ScatterRows(base, idx, rows) => {
                    let mut gb = g.clone();
                    let (rr, rc) = nodes[rows.idx].value.shape();
                    let mut gr = Tensor::zeros(rr, rc);
                    for (k, &r) in idx.iter().enumerate() {
                        gr.row_mut(k).copy_from_slice(g.row(r));
                        gb.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
                    }
                    acc(*base, gb);
                    acc(*rows, gr);
                }
                Op::Axpby(a, alpha, b, beta) => {
                    let scaled = |c: f64| Tensor::from_vec(g.rows, g.cols, g.data.iter().map(|v| c * v).collect());
                    acc(*a, scaled(*alpha));
                    acc(*b, scaled(*beta));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
                    let ga = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                    let gb = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::from_vec(g.rows, g.cols, ga));
                    acc(*b, Tensor::from_vec(g.rows, g.cols, gb));
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = &nodes[x.idx].value;
                    let gx = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { slope * gi })
                        .collect();
                    acc(*x, Tensor::from_vec(g.rows, g.cols, gx));
                }
                Op::TimeEncode(freq, phase, times) => {
                    let (fv, pv) = (&nodes[freq.idx].value, &nodes[phase.idx].value);
                    let d = fv.len();
                    let c = (1.0 / d as f64).sqrt();
                    let mut gf = vec![0.0; d];
                    let mut gp = vec![0.0; d];
                    for (i, &t) in times.iter().enumerate() {
                        for j in 0..d {
                            let ds = -c * (fv.data[j] * t + pv.data[j]).sin() * g.data[i * d + j];
                            gf[j] += ds * t;
                            gp[j] += ds;
                        }
                    }
                    let (fr, fc) = fv.shape();
                    let (pr, pc) = pv.shape();
                    acc(*freq, Tensor::from_vec(fr, fc, gf));
                    acc(*phase, Tensor::from_vec(pr, pc, gp));
                }
                Op::Sum(x) => {
                    let (xr, xc) = nodes[x.idx].value.shape();
                    acc(*x, Tensor::from_vec(xr, xc, vec![g.data[0]; xr * xc]));
                }
                Op::NormalizedBce(x, labels, eps) => {
                    let xv = &nodes[x.idx].value;
                    let gx = crate::trainer::bce_from_scores_grad(&xv.data, labels, *eps)
                        .into_iter()
                        .map(|v| v * g.data[0])
                        .collect();
                    acc(*x, Tensor::from_vec(xv.rows, xv.cols, gx));
                }
            }
        }
        Ok(grads)
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
