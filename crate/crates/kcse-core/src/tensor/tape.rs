//! Wengert-list reverse-mode differentiation.
//!
//! Forward values are computed eagerly as operations are recorded; a single
//! [`Tape::backward`] sweep accumulates dLoss/dParam into the [`ParamStore`]
//! for every parameter bound with [`Tape::param`]. Shape violations are
//! programmer errors and panic; user-facing dimension checks happen when
//! models are constructed.

use std::sync::Arc;

use super::{relu_scalar, sigmoid_scalar, Matrix, ParamStore, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeId(usize);

enum Op {
    /// Constant or parameter; parameters are additionally listed in
    /// `Tape::params`.
    Leaf,
    /// y = x * w^T + 1 b^T
    Linear { x: TapeId, w: TapeId, b: Option<TapeId> },
    /// y = a * b^T
    MatMulNT { a: TapeId, b: TapeId },
    Relu { x: TapeId },
    Sigmoid { x: TapeId },
    Add { a: TapeId, b: TapeId },
    MulElem { a: TapeId, b: TapeId },
    RowSum { x: TapeId },
    Sum { x: TapeId },
    Scale { x: TapeId, k: f64 },
    ConcatCols { a: TapeId, b: TapeId },
    ConcatRows { parts: Vec<TapeId> },
    GatherRows { x: TapeId, idx: Vec<usize> },
    SparseMM { s: Arc<SparseMatrix>, x: TapeId },
    /// Mean over entries of max(z,0) - z y + ln(1 + exp(-|z|)).
    BceWithLogits { logits: TapeId, labels: Matrix },
    /// sum((pred - target)^2) / divisor
    SqErrSum { pred: TapeId, target: Matrix, divisor: f64 },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records one forward pass; create a fresh tape per training step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(TapeId, String)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> TapeId {
        self.nodes.push(Node { value, op });
        TapeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: TapeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: TapeId) -> f64 {
        let m = self.value(id);
        assert_eq!(m.len(), 1, "expected a scalar node");
        m.data()[0]
    }

    pub fn constant(&mut self, value: Matrix) -> TapeId {
        self.push(value, Op::Leaf)
    }

    /// Bind a named parameter from the store onto the tape. Its gradient is
    /// routed back under the same name by [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> TapeId {
        let value = store.expect(name).clone();
        let id = self.push(value, Op::Leaf);
        self.params.push((id, name.to_string()));
        id
    }

    pub fn linear(&mut self, x: TapeId, w: TapeId, b: Option<TapeId>) -> TapeId {
        let (xm, wm) = (self.value(x), self.value(w));
        assert_eq!(xm.cols(), wm.cols(), "linear: input vs weight columns");
        let mut out = xm.matmul_nt(wm);
        if let Some(b) = b {
            let bm = self.value(b);
            assert_eq!(bm.rows(), 1, "linear: bias must be a row vector");
            assert_eq!(bm.cols(), out.cols(), "linear: bias width");
            out.add_row_broadcast(&bm.clone());
        }
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn matmul_nt(&mut self, a: TapeId, b: TapeId) -> TapeId {
        let out = {
            let (am, bm) = (self.value(a), self.value(b));
            assert_eq!(am.cols(), bm.cols(), "matmul_nt inner dims");
            am.matmul_nt(bm)
        };
        self.push(out, Op::MatMulNT { a, b })
    }

    pub fn relu(&mut self, x: TapeId) -> TapeId {
        let mut out = self.value(x).clone();
        out.map_inplace(relu_scalar);
        self.push(out, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: TapeId) -> TapeId {
        let mut out = self.value(x).clone();
        out.map_inplace(sigmoid_scalar);
        self.push(out, Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: TapeId, b: TapeId) -> TapeId {
        let out = {
            let (am, bm) = (self.value(a), self.value(b));
            assert_eq!((am.rows(), am.cols()), (bm.rows(), bm.cols()), "add shapes");
            let mut out = am.clone();
            out.add_assign(bm);
            out
        };
        self.push(out, Op::Add { a, b })
    }

    pub fn mul_elem(&mut self, a: TapeId, b: TapeId) -> TapeId {
        let out = {
            let (am, bm) = (self.value(a), self.value(b));
            assert_eq!((am.rows(), am.cols()), (bm.rows(), bm.cols()), "mul shapes");
            let mut out = am.clone();
            for (o, &v) in out.data_mut().iter_mut().zip(bm.data()) {
                *o *= v;
            }
            out
        };
        self.push(out, Op::MulElem { a, b })
    }

    pub fn row_sum(&mut self, x: TapeId) -> TapeId {
        let xm = self.value(x);
        let mut out = Matrix::zeros(xm.rows(), 1);
        for i in 0..xm.rows() {
            out.set(i, 0, xm.row(i).iter().sum());
        }
        self.push(out, Op::RowSum { x })
    }

    pub fn sum(&mut self, x: TapeId) -> TapeId {
        let total = self.value(x).sum();
        self.push(Matrix::scalar(total), Op::Sum { x })
    }

    pub fn scale(&mut self, x: TapeId, k: f64) -> TapeId {
        let mut out = self.value(x).clone();
        out.scale_inplace(k);
        self.push(out, Op::Scale { x, k })
    }

    pub fn concat_cols(&mut self, a: TapeId, b: TapeId) -> TapeId {
        let out = {
            let (am, bm) = (self.value(a), self.value(b));
            assert_eq!(am.rows(), bm.rows(), "concat_cols row counts");
            let mut out = Matrix::zeros(am.rows(), am.cols() + bm.cols());
            for i in 0..am.rows() {
                out.row_mut(i)[..am.cols()].copy_from_slice(am.row(i));
                out.row_mut(i)[am.cols()..].copy_from_slice(bm.row(i));
            }
            out
        };
        self.push(out, Op::ConcatCols { a, b })
    }

    pub fn concat_rows(&mut self, parts: &[TapeId]) -> TapeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Matrix::zeros(total, cols);
        let mut at = 0;
        for &p in parts {
            let pm = self.value(p);
            assert_eq!(pm.cols(), cols, "concat_rows column counts");
            for i in 0..pm.rows() {
                out.row_mut(at).copy_from_slice(pm.row(i));
                at += 1;
            }
        }
        self.push(out, Op::ConcatRows { parts: parts.to_vec() })
    }

    pub fn gather_rows(&mut self, x: TapeId, idx: Vec<usize>) -> TapeId {
        let xm = self.value(x);
        let mut out = Matrix::zeros(idx.len(), xm.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xm.row(i));
        }
        self.push(out, Op::GatherRows { x, idx })
    }

    pub fn sparse_mm(&mut self, s: Arc<SparseMatrix>, x: TapeId) -> TapeId {
        let out = s.mul_dense(self.value(x));
        self.push(out, Op::SparseMM { s, x })
    }

    /// Numerically stable binary cross-entropy on raw logits, averaged over
    /// all entries. `labels` must be 0/1 and shaped like `logits`.
    pub fn bce_with_logits(&mut self, logits: TapeId, labels: Matrix) -> TapeId {
        let zm = self.value(logits);
        assert_eq!(
            (zm.rows(), zm.cols()),
            (labels.rows(), labels.cols()),
            "bce shapes"
        );
        assert!(!zm.is_empty(), "bce on empty batch");
        let mut total = 0.0;
        for (&z, &y) in zm.data().iter().zip(labels.data()) {
            total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        }
        let mean = total / zm.len() as f64;
        self.push(Matrix::scalar(mean), Op::BceWithLogits { logits, labels })
    }

    /// sum((pred - target)^2) / divisor; the shared form of both MSE-style
    /// objectives in this crate.
    pub fn sq_err_sum(&mut self, pred: TapeId, target: Matrix, divisor: f64) -> TapeId {
        let pm = self.value(pred);
        assert_eq!(
            (pm.rows(), pm.cols()),
            (target.rows(), target.cols()),
            "sq_err shapes"
        );
        assert!(divisor > 0.0, "divisor must be positive");
        let mut total = 0.0;
        for (&p, &t) in pm.data().iter().zip(target.data()) {
            let d = p - t;
            total += d * d;
        }
        self.push(
            Matrix::scalar(total / divisor),
            Op::SqErrSum { pred, target, divisor },
        )
    }

    /// Reverse sweep from a scalar loss; accumulates gradients for every
    /// bound parameter into the store (additively across calls).
    pub fn backward(&mut self, loss: TapeId, store: &mut ParamStore) {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward requires a scalar loss"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(gy);
                }
                Op::Linear { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let dx = gy.matmul_nn(&self.nodes[w.0].value);
                    let dw = gy.matmul_tn(&self.nodes[x.0].value);
                    accum(&mut grads, x, dx);
                    accum(&mut grads, w, dw);
                    if let Some(b) = b {
                        accum(&mut grads, b, gy.col_sum());
                    }
                }
                Op::MatMulNT { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = gy.matmul_nn(&self.nodes[b.0].value);
                    let db = gy.matmul_tn(&self.nodes[a.0].value);
                    accum(&mut grads, a, da);
                    accum(&mut grads, b, db);
                }
                Op::Relu { x } => {
                    let x = *x;
                    let mut dx = gy;
                    for (g, &v) in dx.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accum(&mut grads, x, dx);
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let mut dx = gy;
                    for (g, &s) in dx.data_mut().iter_mut().zip(self.nodes[i].value.data()) {
                        *g *= s * (1.0 - s);
                    }
                    accum(&mut grads, x, dx);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accum(&mut grads, a, gy.clone());
                    accum(&mut grads, b, gy);
                }
                Op::MulElem { a, b } => {
                    let (a, b) = (*a, *b);
                    let mut da = gy.clone();
                    for (g, &v) in da.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
                        *g *= v;
                    }
                    let mut db = gy;
                    for (g, &v) in db.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        *g *= v;
                    }
                    accum(&mut grads, a, da);
                    accum(&mut grads, b, db);
                }
                Op::RowSum { x } => {
                    let x = *x;
                    let xm = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                    for r in 0..xm.rows() {
                        let g = gy.get(r, 0);
                        for v in dx.row_mut(r) {
                            *v = g;
                        }
                    }
                    accum(&mut grads, x, dx);
                }
                Op::Sum { x } => {
                    let x = *x;
                    let xm = &self.nodes[x.0].value;
                    let g = gy.data()[0];
                    let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                    dx.map_inplace(|_| g);
                    accum(&mut grads, x, dx);
                }
                Op::Scale { x, k } => {
                    let (x, k) = (*x, *k);
                    let mut dx = gy;
                    dx.scale_inplace(k);
                    accum(&mut grads, x, dx);
                }
                Op::ConcatCols { a, b } => {
                    let (a, b) = (*a, *b);
                    let ac = self.nodes[a.0].value.cols();
                    let bc = self.nodes[b.0].value.cols();
                    let rows = gy.rows();
                    let mut da = Matrix::zeros(rows, ac);
                    let mut db = Matrix::zeros(rows, bc);
                    for r in 0..rows {
                        da.row_mut(r).copy_from_slice(&gy.row(r)[..ac]);
                        db.row_mut(r).copy_from_slice(&gy.row(r)[ac..]);
                    }
                    accum(&mut grads, a, da);
                    accum(&mut grads, b, db);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let pm_rows = self.nodes[p.0].value.rows();
                        let cols = gy.cols();
                        let mut dp = Matrix::zeros(pm_rows, cols);
                        for r in 0..pm_rows {
                            dp.row_mut(r).copy_from_slice(gy.row(at + r));
                        }
                        at += pm_rows;
                        accum(&mut grads, p, dp);
                    }
                }
                Op::GatherRows { x, idx } => {
                    let x = *x;
                    let idx = idx.clone();
                    let xm = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        let src = gy.row(r);
                        for (o, &v) in dx.row_mut(i).iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                    accum(&mut grads, x, dx);
                }
                Op::SparseMM { s, x } => {
                    let x = *x;
                    let dx = s.transpose_mul_dense(&gy);
                    accum(&mut grads, x, dx);
                }
                Op::BceWithLogits { logits, labels } => {
                    let logits = *logits;
                    let zm = &self.nodes[logits.0].value;
                    let g = gy.data()[0] / zm.len() as f64;
                    let mut dz = Matrix::zeros(zm.rows(), zm.cols());
                    for ((d, &z), &y) in
                        dz.data_mut().iter_mut().zip(zm.data()).zip(labels.data())
                    {
                        *d = g * (sigmoid_scalar(z) - y);
                    }
                    accum(&mut grads, logits, dz);
                }
                Op::SqErrSum { pred, target, divisor } => {
                    let pred = *pred;
                    let pm = &self.nodes[pred.0].value;
                    let g = 2.0 * gy.data()[0] / divisor;
                    let mut dp = Matrix::zeros(pm.rows(), pm.cols());
                    for ((d, &p), &t) in
                        dp.data_mut().iter_mut().zip(pm.data()).zip(target.data())
                    {
                        *d = g * (p - t);
                    }
                    accum(&mut grads, pred, dp);
                }
            }
        }

        for (id, name) in &self.params {
            if let Some(g) = &grads[id.0] {
                store.accumulate_grad(name, g);
            }
        }
    }
}

fn accum(grads: &mut [Option<Matrix>], id: TapeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
