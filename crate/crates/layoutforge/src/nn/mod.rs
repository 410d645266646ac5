//! A small tape-based reverse-mode autodiff engine over dense `f64`
//! matrices, plus the Adam optimizer. Nodes only ever reference earlier
//! nodes, so creation order is a topological order and one reverse sweep
//! computes all gradients.
//!
//! Leaf values are reference-counted: trainable parameters are shared into
//! the tape without copying, so rebuilding the graph per batch stays cheap.

pub mod adam;
pub mod params;
pub mod store;

use std::sync::Arc;

use crate::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// [m, n] + [1, n]
    AddRowBroadcast(usize, usize),
    /// [m, n] * [1, n]
    MulRowBroadcast(usize, usize),
    Scale(usize, f64),
    Silu(usize),
    SoftmaxRows(usize),
    LayerNormRows(usize),
    Transpose(usize),
    GatherRows(usize, Vec<usize>),
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    /// (source, start column)
    SliceCols(usize, usize),
    Reshape(usize),
    SumAll(usize),
    /// a * s with s a [1, 1] node
    MulScalar(usize, usize),
    Recip(usize),
    /// ln(max(x, floor))
    LnClamped(usize, f64),
    Detach,
}

struct Node {
    op: Op,
    value: Arc<Mat>,
}

pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(1024) }
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value: Arc::new(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Share an existing matrix into the tape without copying its data.
    pub fn leaf_shared(&mut self, value: Arc<Mat>) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(Op::MatMul(a.0, b.0), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.data.len(), vb.data.len());
        let mut out = Mat::clone(va);
        for (o, &x) in out.data.iter_mut().zip(vb.data.iter()) {
            *o += x;
        }
        self.push(Op::Add(a.0, b.0), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.data.len(), vb.data.len());
        let mut out = Mat::clone(va);
        for (o, &x) in out.data.iter_mut().zip(vb.data.iter()) {
            *o -= x;
        }
        self.push(Op::Sub(a.0, b.0), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.data.len(), vb.data.len());
        let mut out = Mat::clone(va);
        for (o, &x) in out.data.iter_mut().zip(vb.data.iter()) {
            *o *= x;
        }
        self.push(Op::Mul(a.0, b.0), out)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        assert_eq!(vr.rows, 1);
        assert_eq!(va.cols, vr.cols);
        let mut out = Mat::clone(va);
        for i in 0..out.rows {
            for j in 0..out.cols {
                out.data[i * out.cols + j] += vr.data[j];
            }
        }
        self.push(Op::AddRowBroadcast(a.0, row.0), out)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        assert_eq!(vr.rows, 1);
        assert_eq!(va.cols, vr.cols);
        let mut out = Mat::clone(va);
        for i in 0..out.rows {
            for j in 0..out.cols {
                out.data[i * out.cols + j] *= vr.data[j];
            }
        }
        self.push(Op::MulRowBroadcast(a.0, row.0), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = Mat::clone(&self.nodes[a.0].value);
        for v in &mut out.data {
            *v *= c;
        }
        self.push(Op::Scale(a.0, c), out)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let mut out = Mat::clone(&self.nodes[a.0].value);
        for v in &mut out.data {
            *v = *v / (1.0 + (-*v).exp());
        }
        self.push(Op::Silu(a.0), out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let mut out = Mat::clone(va);
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.push(Op::SoftmaxRows(a.0), out)
    }

    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let mut out = Mat::clone(va);
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        self.push(Op::LayerNormRows(a.0), out)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose(a.0), value)
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let va = &self.nodes[a.0].value;
        let mut out = Mat::zeros(indices.len(), va.cols);
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).copy_from_slice(va.row(i));
        }
        self.push(Op::GatherRows(a.0, indices.to_vec()), out)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.rows, vb.rows);
        let mut out = Mat::zeros(va.rows, va.cols + vb.cols);
        for i in 0..va.rows {
            out.row_mut(i)[..va.cols].copy_from_slice(va.row(i));
            out.row_mut(i)[va.cols..].copy_from_slice(vb.row(i));
        }
        self.push(Op::ConcatCols(a.0, b.0), out)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.cols, vb.cols);
        let mut data = va.data.clone();
        data.extend_from_slice(&vb.data);
        let out = Mat::from_vec(va.rows + vb.rows, va.cols, data);
        self.push(Op::ConcatRows(a.0, b.0), out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = &self.nodes[a.0].value;
        assert!(start + len <= va.cols);
        let mut out = Mat::zeros(va.rows, len);
        for i in 0..va.rows {
            out.row_mut(i).copy_from_slice(&va.row(i)[start..start + len]);
        }
        self.push(Op::SliceCols(a.0, start), out)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let va = &self.nodes[a.0].value;
        assert_eq!(va.data.len(), rows * cols);
        let out = Mat::from_vec(rows, cols, va.data.clone());
        self.push(Op::Reshape(a.0), out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        self.push(Op::SumAll(a.0), Mat::from_vec(1, 1, vec![s]))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.data.len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.nodes[s.0].value.data[0];
        let mut out = Mat::clone(&self.nodes[a.0].value);
        for v in &mut out.data {
            *v *= sv;
        }
        self.push(Op::MulScalar(a.0, s.0), out)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let mut out = Mat::clone(&self.nodes[a.0].value);
        for v in &mut out.data {
            *v = 1.0 / *v;
        }
        self.push(Op::Recip(a.0), out)
    }

    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let mut out = Mat::clone(&self.nodes[a.0].value);
        for v in &mut out.data {
            *v = v.max(floor).ln();
        }
        self.push(Op::LnClamped(a.0, floor), out)
    }

    pub fn detach(&mut self, a: Var) -> Var {
        let value = Arc::clone(&self.nodes[a.0].value);
        self.nodes.push(Node { op: Op::Detach, value });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar node; returns one gradient per node.
    pub fn backward(&self, loss: Var) -> Vec<Mat> {
        assert_eq!(self.nodes[loss.0].value.data.len(), 1, "loss must be scalar");
        let mut grads: Vec<Mat> = self
            .nodes
            .iter()
            .map(|n| Mat::zeros(n.value.rows, n.value.cols))
            .collect();
        let mut touched = vec![false; self.nodes.len()];
        grads[loss.0].data[0] = 1.0;
        touched[loss.0] = true;

        for id in (0..self.nodes.len()).rev() {
            if !touched[id] {
                continue;
            }
            let g = grads[id].clone();
            let touch = |t: &mut Vec<bool>, i: usize| t[i] = true;
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    // dA[i,k] += sum_j g[i,j] B[k,j]; dB[k,j] += sum_i A[i,k] g[i,j]
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let (m, kdim, n) = (va.rows, va.cols, vb.cols);
                    {
                        let da = &mut grads[*a];
                        for i in 0..m {
                            let grow = &g.data[i * n..(i + 1) * n];
                            let darow = &mut da.data[i * kdim..(i + 1) * kdim];
                            for (k, dv) in darow.iter_mut().enumerate() {
                                let brow = &vb.data[k * n..(k + 1) * n];
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += grow[j] * brow[j];
                                }
                                *dv += acc;
                            }
                        }
                    }
                    {
                        let db = &mut grads[*b];
                        for i in 0..m {
                            let arow = &va.data[i * kdim..(i + 1) * kdim];
                            let grow = &g.data[i * n..(i + 1) * n];
                            for (k, &aik) in arow.iter().enumerate() {
                                if aik == 0.0 {
                                    continue;
                                }
                                let dbrow = &mut db.data[k * n..(k + 1) * n];
                                for j in 0..n {
                                    dbrow[j] += aik * grow[j];
                                }
                            }
                        }
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    for (gb, &gv) in grads[*b].data.iter_mut().zip(g.data.iter()) {
                        *gb -= gv;
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    for i in 0..g.data.len() {
                        grads[*a].data[i] += g.data[i] * vb.data[i];
                    }
                    for i in 0..g.data.len() {
                        grads[*b].data[i] += g.data[i] * va.data[i];
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::AddRowBroadcast(a, r) => {
                    accumulate(&mut grads[*a], &g);
                    let cols = g.cols;
                    for i in 0..g.rows {
                        for j in 0..cols {
                            grads[*r].data[j] += g.data[i * cols + j];
                        }
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *r);
                }
                Op::MulRowBroadcast(a, r) => {
                    let (va, vr) = (&self.nodes[*a].value, &self.nodes[*r].value);
                    let cols = g.cols;
                    for i in 0..g.rows {
                        for j in 0..cols {
                            grads[*a].data[i * cols + j] += g.data[i * cols + j] * vr.data[j];
                        }
                    }
                    for i in 0..g.rows {
                        for j in 0..cols {
                            grads[*r].data[j] += g.data[i * cols + j] * va.data[i * cols + j];
                        }
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *r);
                }
                Op::Scale(a, c) => {
                    for (ga, &gv) in grads[*a].data.iter_mut().zip(g.data.iter()) {
                        *ga += gv * c;
                    }
                    touch(&mut touched, *a);
                }
                Op::Silu(a) => {
                    let va = &self.nodes[*a].value;
                    for i in 0..g.data.len() {
                        let x = va.data[i];
                        let s = 1.0 / (1.0 + (-x).exp());
                        grads[*a].data[i] += g.data[i] * (s * (1.0 + x * (1.0 - s)));
                    }
                    touch(&mut touched, *a);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let cols = y.cols;
                    for i in 0..y.rows {
                        let dot: f64 = (0..cols)
                            .map(|j| g.data[i * cols + j] * y.data[i * cols + j])
                            .sum();
                        for j in 0..cols {
                            grads[*a].data[i * cols + j] +=
                                y.data[i * cols + j] * (g.data[i * cols + j] - dot);
                        }
                    }
                    touch(&mut touched, *a);
                }
                Op::LayerNormRows(a) => {
                    let va = &self.nodes[*a].value;
                    let y = &self.nodes[id].value;
                    let cols = va.cols;
                    for i in 0..va.rows {
                        let row = va.row(i);
                        let n = cols as f64;
                        let mean = row.iter().sum::<f64>() / n;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let g_mean: f64 =
                            (0..cols).map(|j| g.data[i * cols + j]).sum::<f64>() / n;
                        let gy_mean: f64 = (0..cols)
                            .map(|j| g.data[i * cols + j] * y.data[i * cols + j])
                            .sum::<f64>()
                            / n;
                        for j in 0..cols {
                            grads[*a].data[i * cols + j] += inv
                                * (g.data[i * cols + j]
                                    - g_mean
                                    - y.data[i * cols + j] * gy_mean);
                        }
                    }
                    touch(&mut touched, *a);
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    accumulate(&mut grads[*a], &gt);
                    touch(&mut touched, *a);
                }
                Op::GatherRows(a, indices) => {
                    let cols = g.cols;
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..cols {
                            grads[*a].data[i * cols + j] += g.data[k * cols + j];
                        }
                    }
                    touch(&mut touched, *a);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.cols;
                    let cb = self.nodes[*b].value.cols;
                    for i in 0..g.rows {
                        for j in 0..ca {
                            grads[*a].data[i * ca + j] += g.data[i * (ca + cb) + j];
                        }
                        for j in 0..cb {
                            grads[*b].data[i * cb + j] += g.data[i * (ca + cb) + ca + j];
                        }
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::ConcatRows(a, b) => {
                    let na = self.nodes[*a].value.data.len();
                    for i in 0..na {
                        grads[*a].data[i] += g.data[i];
                    }
                    for i in 0..self.nodes[*b].value.data.len() {
                        grads[*b].data[i] += g.data[na + i];
                    }
                    touch(&mut touched, *a);
                    touch(&mut touched, *b);
                }
                Op::SliceCols(a, start) => {
                    let src_cols = self.nodes[*a].value.cols;
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            grads[*a].data[i * src_cols + start + j] += g.data[i * g.cols + j];
                        }
                    }
                    touch(&mut touched, *a);
                }
                Op::Reshape(a) => {
                    for i in 0..g.data.len() {
                        grads[*a].data[i] += g.data[i];
                    }
                    touch(&mut touched, *a);
                }
                Op::SumAll(a) => {
                    let gv = g.data[0];
                    for ga in grads[*a].data.iter_mut() {
                        *ga += gv;
                    }
                    touch(&mut touched, *a);
                }
                Op::MulScalar(a, s) => {
                    let sv = self.nodes[*s].value.data[0];
                    let va = &self.nodes[*a].value;
                    for i in 0..g.data.len() {
                        grads[*a].data[i] += g.data[i] * sv;
                    }
                    let mut ds = 0.0;
                    for i in 0..g.data.len() {
                        ds += g.data[i] * va.data[i];
                    }
                    grads[*s].data[0] += ds;
                    touch(&mut touched, *a);
                    touch(&mut touched, *s);
                }
                Op::Recip(a) => {
                    let y = &self.nodes[id].value;
                    for i in 0..g.data.len() {
                        grads[*a].data[i] -= g.data[i] * y.data[i] * y.data[i];
                    }
                    touch(&mut touched, *a);
                }
                Op::LnClamped(a, floor) => {
                    let va = &self.nodes[*a].value;
                    for i in 0..g.data.len() {
                        if va.data[i] > *floor {
                            grads[*a].data[i] += g.data[i] / va.data[i];
                        }
                    }
                    touch(&mut touched, *a);
                }
                Op::Detach => {}
            }
        }
        grads
    }
}

fn accumulate(dst: &mut Mat, src: &Mat) {
    debug_assert_eq!(dst.data.len(), src.data.len());
    for (d, &s) in dst.data.iter_mut().zip(src.data.iter()) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{normal_vec, rng_from_seed};

    /// Central finite difference of `f` at `x`, one coordinate at a time.
    fn finite_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            out.push((up - down) / (2.0 * h));
        }
        out
    }

    fn check_op(build: &dyn Fn(&mut Tape, Var) -> Var, dim: (usize, usize), seed: u64) {
        let mut rng = rng_from_seed(seed);
        let x = normal_vec(&mut rng, dim.0 * dim.1);
        let loss_of = |xs: &[f64]| {
            let mut tape = Tape::new();
            let v = tape.leaf(Mat::from_vec(dim.0, dim.1, xs.to_vec()));
            let out = build(&mut tape, v);
            let l = tape.sum_all(out);
            tape.value(l).data[0]
        };
        let mut tape = Tape::new();
        let v = tape.leaf(Mat::from_vec(dim.0, dim.1, x.clone()));
        let out = build(&mut tape, v);
        let l = tape.sum_all(out);
        let grads = tape.backward(l);
        let numeric = finite_diff(&loss_of, &x, 1e-5);
        for i in 0..x.len() {
            let a = grads[v.0].data[i];
            let n = numeric[i];
            let denom = a.abs().max(n.abs()).max(1e-4);
            assert!(
                (a - n).abs() / denom < 1e-5,
                "coord {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn grad_silu() {
        check_op(&|t, v| t.silu(v), (3, 4), 1);
    }

    #[test]
    fn grad_softmax_rows() {
        check_op(
            &|t, v| {
                let s = t.softmax_rows(v);
                // weight the outputs so the row-sum constraint is visible
                let w = t.leaf(Mat::from_vec(
                    3,
                    4,
                    (0..12).map(|i| (i as f64) * 0.37 - 1.0).collect(),
                ));
                t.mul(s, w)
            },
            (3, 4),
            2,
        );
    }

    #[test]
    fn grad_layer_norm() {
        check_op(
            &|t, v| {
                let y = t.layer_norm_rows(v);
                let w = t.leaf(Mat::from_vec(
                    2,
                    6,
                    (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect(),
                ));
                t.mul(y, w)
            },
            (2, 6),
            3,
        );
    }

    #[test]
    fn grad_matmul_chain() {
        let mut rng = rng_from_seed(4);
        let w = Mat::from_vec(4, 3, normal_vec(&mut rng, 12));
        check_op(
            &move |t, v| {
                let wv = t.leaf(w.clone());
                let y = t.matmul(v, wv);
                t.silu(y)
            },
            (2, 4),
            5,
        );
    }

    #[test]
    fn grad_gather_concat_slice() {
        check_op(
            &|t, v| {
                let g = t.gather_rows(v, &[2, 0, 2, 1]);
                let c = t.concat_cols(g, g);
                t.slice_cols(c, 1, 4)
            },
            (3, 3),
            6,
        );
    }

    #[test]
    fn grad_mixture_path() {
        // mirrors the posterior-mixture computation used by the prior loss
        check_op(
            &|t, v| {
                let s = t.softmax_rows(v);
                let p = t.leaf(Mat::from_vec(
                    4,
                    5,
                    (0..20).map(|i| 0.05 * (i as f64) + 0.01).collect(),
                ));
                let mix = t.matmul(s, p);
                t.ln_clamped(mix, 1e-30)
            },
            (2, 4),
            7,
        );
    }

    #[test]
    fn grad_scalar_normalization() {
        check_op(
            &|t, v| {
                let e = t.silu(v);
                let total = t.sum_all(e);
                let inv = t.recip(total);
                t.mul_scalar(e, inv)
            },
            (2, 3),
            8,
        );
    }

    #[test]
    fn detach_blocks_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Mat::from_vec(1, 2, vec![1.5, -0.5]));
        let d = tape.detach(x);
        let y = tape.mul(d, d);
        let l = tape.sum_all(y);
        let grads = tape.backward(l);
        assert!(grads[x.0].data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn straight_through_composition() {
        // z + detach(e - z) evaluates to e but passes gradient to z
        let mut tape = Tape::new();
        let z = tape.leaf(Mat::from_vec(1, 2, vec![0.2, 0.8]));
        let e = tape.leaf(Mat::from_vec(1, 2, vec![1.0, -1.0]));
        let diff = tape.sub(e, z);
        let d = tape.detach(diff);
        let zq = tape.add(z, d);
        assert_eq!(tape.value(zq).data, vec![1.0, -1.0]);
        let w = tape.leaf(Mat::from_vec(1, 2, vec![3.0, 4.0]));
        let y = tape.mul(zq, w);
        let l = tape.sum_all(y);
        let grads = tape.backward(l);
        assert_eq!(grads[z.0].data, vec![3.0, 4.0]);
        assert!(grads[e.0].data.iter().all(|&g| g == 0.0));
    }
}
