//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records a computation as it runs; node ids are handed out in
//! topological order, so the backward pass is a single reverse sweep that
//! visits every node exactly once. Gradients accumulate additively, which is
//! what shared parameters (weight matrices reused across all nodes and
//! edges) require. The op set is exactly what the policy network needs —
//! no broadcasting rules beyond the row-bias case, no higher-order
//! derivatives. Shape mismatches are programming errors and fail fast.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Batch statistics produced by a train-mode batchnorm, to be folded into
/// EMA state by the caller in a deterministic order.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Normalization mode for batchnorm nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics (and report them to the caller).
    Train,
    /// Deterministic affine map using EMA statistics.
    Eval,
}

const BN_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Concat(NodeId, NodeId),
    LeakyRelu(NodeId, f64),
    Scale(NodeId, f64),
    GatherRows(NodeId, Vec<usize>),
    SegmentSum(NodeId, Vec<usize>),
    SegmentMean(NodeId, Vec<usize>, usize),
    GaussianLogProb {
        mu: NodeId,
        actions: Array2<f64>,
        alpha: f64,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        x_hat: Array2<f64>,
        inv_std: Array1<f64>,
        training: bool,
    },
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Differentiable leaf (a parameter).
    pub fn var(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf (an input).
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient of the backward output w.r.t. this node. Panics if backward
    /// has not run or the node does not require grad.
    pub fn grad(&self, id: NodeId) -> &Array2<f64> {
        self.nodes[id.0]
            .grad
            .as_ref()
            .expect("gradient not populated; run backward first")
    }

    /// Whether backward populated a gradient for this node (false for nodes
    /// an output never depended on).
    pub fn has_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].grad.is_some()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let (rb, cb) = self.nodes[b.0].value.dim();
        assert_eq!(ca, rb, "matmul shape mismatch: {ra}x{ca} . {rb}x{cb}");
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let req = self.requires(a) || self.requires(b);
        self.push(value, Op::MatMul(a, b), req)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.nodes[a.0].value.dim(),
            self.nodes[b.0].value.dim(),
            "add shape mismatch"
        );
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let req = self.requires(a) || self.requires(b);
        self.push(value, Op::Add(a, b), req)
    }

    /// Broadcast a 1xN row (bias) over every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (_, ca) = self.nodes[a.0].value.dim();
        let (rr, cr) = self.nodes[row.0].value.dim();
        assert_eq!((rr, cr), (1, ca), "add_row needs a 1x{ca} bias, got {rr}x{cr}");
        let value = &self.nodes[a.0].value + &self.nodes[row.0].value.row(0);
        let req = self.requires(a) || self.requires(row);
        self.push(value, Op::AddRow(a, row), req)
    }

    /// Concatenate along the feature axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let (rb, cb) = self.nodes[b.0].value.dim();
        assert_eq!(ra, rb, "concat row mismatch: {ra} vs {rb}");
        let mut value = Array2::zeros((ra, ca + cb));
        value
            .slice_mut(ndarray::s![.., ..ca])
            .assign(&self.nodes[a.0].value);
        value
            .slice_mut(ndarray::s![.., ca..])
            .assign(&self.nodes[b.0].value);
        let req = self.requires(a) || self.requires(b);
        self.push(value, Op::Concat(a, b), req)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[a.0]
            .value
            .mapv(|x| if x > 0.0 { x } else { slope * x });
        let req = self.requires(a);
        self.push(value, Op::LeakyRelu(a, slope), req)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a.0].value.mapv(|x| c * x);
        let req = self.requires(a);
        self.push(value, Op::Scale(a, c), req)
    }

    /// Rows of `a` selected by `indices` (with repetition allowed).
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let mut value = Array2::zeros((indices.len(), ca));
        for (out, &i) in indices.iter().enumerate() {
            assert!(i < ra, "gather index {i} out of range ({ra} rows)");
            value.row_mut(out).assign(&self.nodes[a.0].value.row(i));
        }
        let req = self.requires(a);
        self.push(value, Op::GatherRows(a, indices.to_vec()), req)
    }

    pub fn segment_sum(&mut self, a: NodeId, segments: &[usize], n_segments: usize) -> NodeId {
        let value = segment_reduce(&self.nodes[a.0].value, segments, n_segments, false);
        let req = self.requires(a);
        self.push(value, Op::SegmentSum(a, segments.to_vec()), req)
    }

    /// Per-segment mean; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: NodeId, segments: &[usize], n_segments: usize) -> NodeId {
        let value = segment_reduce(&self.nodes[a.0].value, segments, n_segments, true);
        let req = self.requires(a);
        self.push(value, Op::SegmentMean(a, segments.to_vec(), n_segments), req)
    }

    /// Joint log-density of `actions` under row-wise isotropic Gaussians
    /// centered at `mu` with covariance alpha * I, reduced to a 1x1 scalar.
    pub fn gaussian_log_prob(&mut self, mu: NodeId, actions: &Array2<f64>, alpha: f64) -> NodeId {
        assert!(alpha > 0.0, "gaussian_log_prob requires alpha > 0");
        let m = &self.nodes[mu.0].value;
        assert_eq!(m.dim(), actions.dim(), "gaussian_log_prob shape mismatch");
        let (n, d) = m.dim();
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..d {
                let diff = actions[[i, j]] - m[[i, j]];
                sq += diff * diff;
            }
        }
        let d = d as f64;
        let lp = n as f64 * (-0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * d * alpha.ln())
            - sq / (2.0 * alpha);
        let value = Array2::from_elem((1, 1), lp);
        let req = self.requires(mu);
        self.push(
            value,
            Op::GaussianLogProb {
                mu,
                actions: actions.clone(),
                alpha,
            },
            req,
        )
    }

    /// Per-feature batch normalization over the row axis.
    ///
    /// Train mode normalizes with (biased) batch statistics and returns them
    /// so the caller can update EMA state; eval mode is a deterministic
    /// affine map using the supplied EMA statistics.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: BnMode,
        ema_mean: &Array1<f64>,
        ema_var: &Array1<f64>,
    ) -> (NodeId, Option<BnBatchStats>) {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = xv.dim();
        assert!(rows > 0, "batch_norm on empty batch");
        assert_eq!(self.nodes[gamma.0].value.dim(), (1, cols));
        assert_eq!(self.nodes[beta.0].value.dim(), (1, cols));

        let (mean, var, stats) = match mode {
            BnMode::Train => {
                let mean = xv.mean_axis(Axis(0)).unwrap();
                let mut var = Array1::zeros(cols);
                for i in 0..rows {
                    for j in 0..cols {
                        let d = xv[[i, j]] - mean[j];
                        var[j] += d * d;
                    }
                }
                var /= rows as f64;
                let stats = BnBatchStats {
                    mean: mean.clone(),
                    var: var.clone(),
                };
                (mean, var, Some(stats))
            }
            BnMode::Eval => (ema_mean.clone(), ema_var.clone(), None),
        };

        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut x_hat = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                x_hat[[i, j]] = (xv[[i, j]] - mean[j]) * inv_std[j];
            }
        }
        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        let mut value = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                value[[i, j]] = g[[0, j]] * x_hat[[i, j]] + b[[0, j]];
            }
        }
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        let id = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                training: matches!(mode, BnMode::Train),
            },
            req,
        );
        (id, stats)
    }

    /// Reverse sweep from a scalar output. Leaf gradients land in `grad()`.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::InvalidParameter(
                "backward already ran on this tape".into(),
            ));
        }
        let dim = self.nodes[output.0].value.dim();
        if dim != (1, 1) {
            return Err(Error::ShapeMismatch(format!(
                "backward requires a scalar output, got {dim:?}"
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::from_elem((1, 1), 1.0));

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf => {
                    self.nodes[id].grad = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.requires(a) {
                        let da = g.dot(&self.nodes[b.0].value.t());
                        accumulate(&mut grads[a.0], da);
                    }
                    if self.requires(b) {
                        let db = self.nodes[a.0].value.t().dot(&g);
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.requires(a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.requires(b) {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::AddRow(a, row) => {
                    let (a, row) = (*a, *row);
                    if self.requires(row) {
                        let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads[row.0], dr);
                    }
                    if self.requires(a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Concat(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a.0].value.ncols();
                    if self.requires(a) {
                        accumulate(&mut grads[a.0], g.slice(ndarray::s![.., ..ca]).to_owned());
                    }
                    if self.requires(b) {
                        accumulate(&mut grads[b.0], g.slice(ndarray::s![.., ca..]).to_owned());
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let (a, slope) = (*a, *slope);
                    if self.requires(a) {
                        let mut da = g;
                        for (dv, &x) in da.iter_mut().zip(self.nodes[a.0].value.iter()) {
                            if x <= 0.0 {
                                *dv *= slope;
                            }
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    if self.requires(a) {
                        accumulate(&mut grads[a.0], g.mapv(|v| c * v));
                    }
                }
                Op::GatherRows(a, indices) => {
                    let a = *a;
                    if self.requires(a) {
                        let mut da: Array2<f64> = Array2::zeros(self.nodes[a.0].value.dim());
                        for (out, &i) in indices.iter().enumerate() {
                            let mut row = da.row_mut(i);
                            row += &g.row(out);
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::SegmentSum(a, segments) => {
                    let a = *a;
                    if self.requires(a) {
                        let mut da: Array2<f64> = Array2::zeros(self.nodes[a.0].value.dim());
                        for (row, &s) in segments.iter().enumerate() {
                            da.row_mut(row).assign(&g.row(s));
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::SegmentMean(a, segments, n_segments) => {
                    let a = *a;
                    if self.requires(a) {
                        let mut counts = vec![0usize; *n_segments];
                        for &s in segments {
                            counts[s] += 1;
                        }
                        let mut da: Array2<f64> = Array2::zeros(self.nodes[a.0].value.dim());
                        for (row, &s) in segments.iter().enumerate() {
                            let scale = 1.0 / counts[s] as f64;
                            let mut r = da.row_mut(row);
                            r.assign(&g.row(s));
                            r *= scale;
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::GaussianLogProb { mu, actions, alpha } => {
                    let mu = *mu;
                    if self.requires(mu) {
                        let upstream = g[[0, 0]];
                        let dmu =
                            (actions - &self.nodes[mu.0].value).mapv(|d| upstream * d / *alpha);
                        accumulate(&mut grads[mu.0], dmu);
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    x_hat,
                    inv_std,
                    training,
                } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let (rows, cols) = g.dim();
                    let m = rows as f64;
                    let gamma_val = self.nodes[gamma.0].value.clone();

                    if self.requires(beta) {
                        let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads[beta.0], db);
                    }
                    if self.requires(gamma) {
                        let dg = (&g * x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads[gamma.0], dg);
                    }
                    if self.requires(x) {
                        let mut dx = Array2::zeros((rows, cols));
                        if *training {
                            let sum_g = g.sum_axis(Axis(0));
                            let sum_gx = (&g * x_hat).sum_axis(Axis(0));
                            for i in 0..rows {
                                for j in 0..cols {
                                    dx[[i, j]] = gamma_val[[0, j]] * inv_std[j] / m
                                        * (m * g[[i, j]] - sum_g[j] - x_hat[[i, j]] * sum_gx[j]);
                                }
                            }
                        } else {
                            for i in 0..rows {
                                for j in 0..cols {
                                    dx[[i, j]] = gamma_val[[0, j]] * inv_std[j] * g[[i, j]];
                                }
                            }
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &delta,
        None => *slot = Some(delta),
    }
}

fn segment_reduce(
    data: &Array2<f64>,
    segments: &[usize],
    n_segments: usize,
    mean: bool,
) -> Array2<f64> {
    assert_eq!(data.nrows(), segments.len(), "segment index length mismatch");
    let mut out = Array2::zeros((n_segments, data.ncols()));
    let mut counts = vec![0usize; n_segments];
    for (row, &s) in segments.iter().enumerate() {
        assert!(s < n_segments, "segment id {s} out of range ({n_segments})");
        let mut o = out.row_mut(s);
        o += &data.row(row);
        counts[s] += 1;
    }
    if mean {
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                let mut o = out.row_mut(s);
                o /= c as f64;
            }
        }
    }
    out
}
