use std::sync::Arc;

use super::{LabelAdjacency, Matrix, ParamId, ParamStore, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SpmmMean(Var, Arc<LabelAdjacency>),
    GatherRows(Var, Arc<[usize]>),
    Mul(Var, Var),
    MulRow(Var, Var),
    RowSum(Var),
    Sum(Var),
    BceWithLogits(Var, Arc<[f64]>),
    SoftmaxCrossEntropy(Var, Arc<[usize]>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Probabilities are clipped into `[CLIP, 1 - CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Reverse-mode recording of matrix operations.
///
/// Every primitive appends one node; [`Tape::backward`] walks the nodes in
/// exact reverse order and accumulates parameter gradients additively into
/// the [`ParamStore`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn spmm_mean(&mut self, adj: &Arc<LabelAdjacency>, x: Var) -> Result<Var, TensorError> {
        let value = adj.spmm_mean(self.value(x))?;
        Ok(self.push(value, Op::SpmmMean(x, Arc::clone(adj))))
    }

    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let value = self.value(x).gather_rows(&index)?;
        Ok(self.push(value, Op::GatherRows(x, index)))
    }

    /// Elementwise product of equal-shaped operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::shape("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Multiplies every row of `a` elementwise by the `1 x cols` row `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(TensorError::shape("mul_row", va.shape(), vr.shape()));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            for (v, d) in value.row_mut(r).iter_mut().zip(vr.data()) {
                *v *= d;
            }
        }
        Ok(self.push(value, Op::MulRow(a, row)))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(va.rows(), 1, data).expect("row_sum shape");
        self.push(value, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Matrix::scalar(total), Op::Sum(a))
    }

    /// Summed binary cross-entropy of `sigmoid(logits)` against `targets`.
    ///
    /// `logits` must be a column (`n x 1`). Probabilities are clipped to
    /// `[PROB_CLIP, 1 - PROB_CLIP]`; the gradient is `sigmoid(x) - y` inside
    /// that range and zero where the probability is clipped.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<[f64]>) -> Result<Var, TensorError> {
        let v = self.value(logits);
        if v.cols() != 1 || v.rows() != targets.len() {
            return Err(TensorError::shape("bce_with_logits", v.shape(), (targets.len(), 1)));
        }
        let loss = v
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| {
                let (ln_f, ln_not_f) = clipped_log_probs(x);
                -(y * ln_f + (1.0 - y) * ln_not_f)
            })
            .sum();
        Ok(self.push(Matrix::scalar(loss), Op::BceWithLogits(logits, targets)))
    }

    /// Summed `-ln softmax(logits)[i, class_i]` over rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        classes: Arc<[usize]>,
    ) -> Result<Var, TensorError> {
        let v = self.value(logits);
        if v.rows() != classes.len() {
            return Err(TensorError::shape(
                "softmax_cross_entropy",
                v.shape(),
                (classes.len(), v.cols()),
            ));
        }
        let mut loss = 0.0;
        for (r, &a) in classes.iter().enumerate() {
            if a >= v.cols() {
                return Err(TensorError::IndexOutOfRange {
                    index: a,
                    bound: v.cols(),
                });
            }
            let row = v.row(r);
            loss += log_sum_exp(row) - row[a];
        }
        Ok(self.push(Matrix::scalar(loss), Op::SoftmaxCrossEntropy(logits, classes)))
    }

    /// Back-propagates from the scalar `loss`, adding into `store` gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(TensorError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate_grad(*id, &g)?,
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Scale(a, factor) => accumulate(&mut grads, *a, g.scale(*factor))?,
                Op::Relu(a) => {
                    let mut ga = g;
                    for (gv, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    for (gv, &s) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *gv *= s * (1.0 - s);
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::SoftmaxRows(a) => {
                    let p = &node.value;
                    let mut ga = Matrix::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let (pr, gr) = (p.row(r), g.row(r));
                        let dot: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                        for (o, (&pv, &gv)) in ga.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
                            *o = pv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let (ga, gb) = g.split_cols(self.value(*a).cols())?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::SpmmMean(x, adj) => accumulate(&mut grads, *x, adj.spmm_mean_transpose(&g))?,
                Op::GatherRows(x, index) => {
                    let mut gx = Matrix::zeros(self.value(*x).rows(), g.cols());
                    for (o, &i) in index.iter().enumerate() {
                        for (dst, &src) in gx.row_mut(i).iter_mut().zip(g.row(o)) {
                            *dst += src;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    for ((x, y), (gx, gy)) in va
                        .data()
                        .iter()
                        .zip(vb.data())
                        .zip(ga.data_mut().iter_mut().zip(gb.data_mut().iter_mut()))
                    {
                        *gx *= y;
                        *gy *= x;
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MulRow(a, row) => {
                    let (va, vr) = (self.value(*a), self.value(*row));
                    let mut ga = g.clone();
                    let mut gr = Matrix::zeros(1, vr.cols());
                    for r in 0..ga.rows() {
                        let gvals = g.row(r);
                        for (k, gv) in ga.row_mut(r).iter_mut().enumerate() {
                            *gv *= vr.data()[k];
                        }
                        for (k, acc) in gr.data_mut().iter_mut().enumerate() {
                            *acc += gvals[k] * va.get(r, k);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *row, gr)?;
                }
                Op::RowSum(a) => {
                    let va = self.value(*a);
                    let mut ga = Matrix::zeros(va.rows(), va.cols());
                    for r in 0..va.rows() {
                        let gv = g.get(r, 0);
                        ga.row_mut(r).iter_mut().for_each(|v| *v = gv);
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]))?;
                }
                Op::BceWithLogits(logits, targets) => {
                    let scale = g.data()[0];
                    let v = self.value(*logits);
                    let data = v
                        .data()
                        .iter()
                        .zip(targets.iter())
                        .map(|(&x, &y)| if is_clipped(x) { 0.0 } else { scale * (sigmoid(x) - y) })
                        .collect();
                    accumulate(&mut grads, *logits, Matrix::from_vec(v.rows(), 1, data)?)?;
                }
                Op::SoftmaxCrossEntropy(logits, classes) => {
                    let scale = g.data()[0];
                    let mut gl = softmax_rows(self.value(*logits));
                    for (r, &a) in classes.iter().enumerate() {
                        let row = gl.row_mut(r);
                        row[a] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                    accumulate(&mut grads, *logits, gl)?;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<(), TensorError> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn is_clipped(x: f64) -> bool {
    let floor = PROB_CLIP.ln();
    -softplus(-x) < floor || -softplus(x) < floor
}

/// `(ln f, ln(1 - f))` for `f = sigmoid(x)` clipped to
/// `[PROB_CLIP, 1 - PROB_CLIP]`, without forming `1 - f`.
fn clipped_log_probs(x: f64) -> (f64, f64) {
    let (lo, hi) = (PROB_CLIP.ln(), (-PROB_CLIP).ln_1p());
    ((-softplus(-x)).clamp(lo, hi), (-softplus(x)).clamp(lo, hi))
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}
