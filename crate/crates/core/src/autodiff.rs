//! Minimal tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value on the tape is a 2-D array; scalars are `1×1`. A forward pass
//! records operations, [`Tape::backward`] walks the tape in reverse and
//! accumulates adjoints into every node that transitively depends on a
//! trainable leaf. Nodes that only depend on constants never receive
//! gradients, so constant inputs (features, propagation matrices) cost nothing
//! on the way back.

use std::borrow::Cow;
use std::rc::Rc;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::sparse::CsrMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMatMul(Rc<CsrMatrix>, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    /// Weighted sum over rows: `out[0][c] = Σ_r w[r] · a[r][c]`.
    WeightedRowSum(Var, Rc<Vec<f64>>),
    StackRows(Vec<Var>),
    /// Each row is an `n×n` block laid out row-major; output `(L + Lᵀ)/2` per row.
    SymmetrizeBlocks(Var, usize),
    WeightedSquaredError {
        pred: Var,
        target: Rc<Array2<f64>>,
        weights: Rc<Array2<f64>>,
    },
    WeightedBceWithLogits {
        logits: Var,
        target: Rc<Array2<f64>>,
        weights: Rc<Array2<f64>>,
    },
    /// `Σ w_r · −ln(clamp(p_r))` for a column of probabilities.
    NegLogClamped {
        probs: Var,
        weights: Rc<Vec<f64>>,
        eps: f64,
    },
    /// `Σ w_r · −ln(1 − clamp(p_r))`.
    NegLogOneMinusClamped {
        probs: Var,
        weights: Rc<Vec<f64>>,
        eps: f64,
    },
    /// Mean softmax cross-entropy of row logits against class labels.
    SoftmaxCrossEntropy { logits: Var, labels: Rc<Vec<usize>> },
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation. Leaves may borrow their data for the lifetime `'a`.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Array2<f64>>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowing `value`.
    pub fn param(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn constant_owned(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    /// Leaf with an explicit trainable flag.
    pub fn leaf(&mut self, value: &'a Array2<f64>, trainable: bool) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, trainable)
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value[[0, 0]]
    }

    fn ng(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(value), Op::MatMul(a, b), ng)
    }

    /// Constant sparse matrix times a tape value.
    pub fn spmatmul(&mut self, m: Rc<CsrMatrix>, b: Var) -> Var {
        let value = m.dot(self.value(b).view());
        let ng = self.ng(b);
        self.push(Cow::Owned(value), Op::SpMatMul(m, b), ng)
    }

    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Var {
        let value = self.value(a) + self.value(bias);
        let ng = self.ng(a) || self.ng(bias);
        self.push(Cow::Owned(value), Op::AddRowBias(a, bias), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(value), Op::Add(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.ng(a);
        self.push(Cow::Owned(value), Op::Scale(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(Cow::Owned(value), Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(Cow::Owned(value), Op::Sigmoid(a), ng)
    }

    pub fn weighted_row_sum(&mut self, a: Var, weights: Rc<Vec<f64>>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), weights.len(), "row weight length");
        let mut out = Array2::zeros((1, src.ncols()));
        for (row, &w) in src.outer_iter().zip(weights.iter()) {
            if w != 0.0 {
                out.row_mut(0).scaled_add(w, &row);
            }
        }
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::WeightedRowSum(a, weights), ng)
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let cols = self.value(rows[0]).ncols();
        let mut out = Array2::zeros((rows.len(), cols));
        for (i, &r) in rows.iter().enumerate() {
            let v = self.value(r);
            assert_eq!(v.dim(), (1, cols), "stack_rows expects 1×c inputs");
            out.row_mut(i).assign(&v.row(0));
        }
        let ng = rows.iter().any(|&r| self.ng(r));
        self.push(Cow::Owned(out), Op::StackRows(rows.to_vec()), ng)
    }

    pub fn symmetrize_blocks(&mut self, a: Var, n: usize) -> Var {
        let value = symmetrize_rows(self.value(a).view(), n);
        let ng = self.ng(a);
        self.push(Cow::Owned(value), Op::SymmetrizeBlocks(a, n), ng)
    }

    pub fn weighted_squared_error(
        &mut self,
        pred: Var,
        target: Rc<Array2<f64>>,
        weights: Rc<Array2<f64>>,
    ) -> Var {
        let p = self.value(pred);
        assert_eq!(p.dim(), target.dim());
        assert_eq!(p.dim(), weights.dim());
        let mut acc = 0.0;
        Zip::from(p).and(&*target).and(&*weights).for_each(|&p, &t, &w| {
            if w != 0.0 {
                acc += w * (p - t) * (p - t);
            }
        });
        let ng = self.ng(pred);
        self.push(
            Cow::Owned(Array2::from_elem((1, 1), acc)),
            Op::WeightedSquaredError {
                pred,
                target,
                weights,
            },
            ng,
        )
    }

    pub fn weighted_bce_with_logits(
        &mut self,
        logits: Var,
        target: Rc<Array2<f64>>,
        weights: Rc<Array2<f64>>,
    ) -> Var {
        let l = self.value(logits);
        assert_eq!(l.dim(), target.dim());
        assert_eq!(l.dim(), weights.dim());
        let mut acc = 0.0;
        Zip::from(l).and(&*target).and(&*weights).for_each(|&l, &t, &w| {
            if w != 0.0 {
                acc += w * bce_with_logits(l, t);
            }
        });
        let ng = self.ng(logits);
        self.push(
            Cow::Owned(Array2::from_elem((1, 1), acc)),
            Op::WeightedBceWithLogits {
                logits,
                target,
                weights,
            },
            ng,
        )
    }

    pub fn neg_log_clamped(&mut self, probs: Var, weights: Rc<Vec<f64>>, eps: f64) -> Var {
        let p = self.value(probs);
        assert_eq!(p.ncols(), 1);
        assert_eq!(p.nrows(), weights.len());
        let acc: f64 = p
            .column(0)
            .iter()
            .zip(weights.iter())
            .map(|(&p, &w)| -w * clamp_prob(p, eps).ln())
            .sum();
        let ng = self.ng(probs);
        self.push(
            Cow::Owned(Array2::from_elem((1, 1), acc)),
            Op::NegLogClamped {
                probs,
                weights,
                eps,
            },
            ng,
        )
    }

    pub fn neg_log_one_minus_clamped(
        &mut self,
        probs: Var,
        weights: Rc<Vec<f64>>,
        eps: f64,
    ) -> Var {
        let p = self.value(probs);
        assert_eq!(p.ncols(), 1);
        assert_eq!(p.nrows(), weights.len());
        let acc: f64 = p
            .column(0)
            .iter()
            .zip(weights.iter())
            .map(|(&p, &w)| -w * (1.0 - clamp_prob(p, eps)).ln())
            .sum();
        let ng = self.ng(probs);
        self.push(
            Cow::Owned(Array2::from_elem((1, 1), acc)),
            Op::NegLogOneMinusClamped {
                probs,
                weights,
                eps,
            },
            ng,
        )
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Rc<Vec<usize>>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.nrows(), labels.len());
        let probs = softmax_rows(l.view());
        let n = labels.len().max(1) as f64;
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &c)| -probs[[r, c]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n;
        let ng = self.ng(logits);
        self.push(
            Cow::Owned(Array2::from_elem((1, 1), loss)),
            Op::SoftmaxCrossEntropy { logits, labels },
            ng,
        )
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.ng(output) {
            return Gradients { grads };
        }
        grads[output.0] = Some(Array2::from_elem((1, 1), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.ng(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::SpMatMul(m, b) => {
                    accumulate(&mut grads, *b, m.transpose_dot(g.view()));
                }
                Op::AddRowBias(a, bias) => {
                    if self.ng(*bias) {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) && self.ng(*b) {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g);
                    } else if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    } else {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&*node.value)
                        .for_each(|g, &y| {
                            if y <= 0.0 {
                                *g = 0.0
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&*node.value)
                        .for_each(|g, &y| *g *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedRowSum(a, w) => {
                    let src = self.value(*a);
                    let mut ga = Array2::zeros(src.dim());
                    for (mut row, &wr) in ga.outer_iter_mut().zip(w.iter()) {
                        if wr != 0.0 {
                            row.scaled_add(wr, &g.row(0));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::StackRows(rows) => {
                    for (i, &r) in rows.iter().enumerate() {
                        if self.ng(r) {
                            let gi = g.slice(s![i..i + 1, ..]).to_owned();
                            accumulate(&mut grads, r, gi);
                        }
                    }
                }
                Op::SymmetrizeBlocks(a, n) => {
                    // The map is self-adjoint.
                    accumulate(&mut grads, *a, symmetrize_rows(g.view(), *n));
                }
                Op::WeightedSquaredError {
                    pred,
                    target,
                    weights,
                } => {
                    let go = g[[0, 0]];
                    let mut gp = Array2::zeros(target.dim());
                    Zip::from(&mut gp)
                        .and(self.value(*pred))
                        .and(&**target)
                        .and(&**weights)
                        .for_each(|gp, &p, &t, &w| *gp = go * 2.0 * w * (p - t));
                    accumulate(&mut grads, *pred, gp);
                }
                Op::WeightedBceWithLogits {
                    logits,
                    target,
                    weights,
                } => {
                    let go = g[[0, 0]];
                    let mut gl = Array2::zeros(target.dim());
                    Zip::from(&mut gl)
                        .and(self.value(*logits))
                        .and(&**target)
                        .and(&**weights)
                        .for_each(|gl, &l, &t, &w| {
                            if w != 0.0 {
                                *gl = go * w * (sigmoid(l) - t)
                            }
                        });
                    accumulate(&mut grads, *logits, gl);
                }
                Op::NegLogClamped {
                    probs,
                    weights,
                    eps,
                } => {
                    let go = g[[0, 0]];
                    let p = self.value(*probs);
                    let mut gp = Array2::zeros(p.dim());
                    for (r, &w) in weights.iter().enumerate() {
                        let pr = p[[r, 0]];
                        if pr > *eps && pr < 1.0 - *eps {
                            gp[[r, 0]] = -go * w / pr;
                        }
                    }
                    accumulate(&mut grads, *probs, gp);
                }
                Op::NegLogOneMinusClamped {
                    probs,
                    weights,
                    eps,
                } => {
                    let go = g[[0, 0]];
                    let p = self.value(*probs);
                    let mut gp = Array2::zeros(p.dim());
                    for (r, &w) in weights.iter().enumerate() {
                        let pr = p[[r, 0]];
                        if pr > *eps && pr < 1.0 - *eps {
                            gp[[r, 0]] = go * w / (1.0 - pr);
                        }
                    }
                    accumulate(&mut grads, *probs, gp);
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let go = g[[0, 0]];
                    let mut gl = softmax_rows(self.value(*logits).view());
                    for (r, &c) in labels.iter().enumerate() {
                        gl[[r, c]] -= 1.0;
                    }
                    let n = labels.len().max(1) as f64;
                    gl *= go / n;
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], var: Var, g: Array2<f64>) {
    match &mut grads[var.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
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

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

pub fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Treat each row as a row-major `n×n` block and return `(L + Lᵀ)/2` per row.
pub fn symmetrize_rows(a: ArrayView2<f64>, n: usize) -> Array2<f64> {
    assert_eq!(a.ncols(), n * n, "row length must be n²");
    let mut out = Array2::zeros(a.dim());
    for (src, mut dst) in a.outer_iter().zip(out.outer_iter_mut()) {
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (src[i * n + j] + src[j * n + i]);
                dst[i * n + j] = v;
                dst[j * n + i] = v;
            }
        }
    }
    out
}
