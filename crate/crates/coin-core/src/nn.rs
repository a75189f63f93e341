//! Layers, losses, and optimizers with hand-coded reverse-mode gradients.
//!
//! The computation graph is fixed (see [`crate::coin`]), so each op is a
//! forward/backward function pair. Backward passes ACCUMULATE into
//! `Param::grad` (`+=`), which is what makes the two paths of a residual
//! connection sum correctly; call [`Param::zero_grad`] before each pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{CsrFeatures, Param, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("mask is empty")]
    EmptyMask,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropoutRate(f64),
    #[error("non-finite value in {layer}")]
    NonFinite { layer: &'static str },
    #[error("mask index {index} out of range for {rows} rows")]
    MaskOutOfRange { index: usize, rows: usize },
    #[error("label {label} out of range for {classes} classes at row {row}")]
    LabelOutOfRange { label: usize, classes: usize, row: usize },
}

#[cfg(debug_assertions)]
fn debug_check_finite(t: &Tensor, layer: &'static str) -> Result<(), NnError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(NnError::NonFinite { layer })
    }
}

#[cfg(not(debug_assertions))]
fn debug_check_finite(_t: &Tensor, _layer: &'static str) -> Result<(), NnError> {
    Ok(())
}

// ---- linear ----

/// `X W + b` with the bias broadcast over rows.
pub fn linear_forward(x: &Tensor, w: &Param, b: &Param) -> Result<Tensor, NnError> {
    let mut out = x.matmul(&w.value)?;
    let bias = b.value.row(0);
    for i in 0..out.rows() {
        for (o, &bv) in out.row_mut(i).iter_mut().zip(bias) {
            *o += bv;
        }
    }
    debug_check_finite(&out, "linear")?;
    Ok(out)
}

/// Transpose chain rule: accumulates `dW += X^T dOut`, `db += colsum(dOut)`,
/// returns `dX = dOut W^T`.
pub fn linear_backward(
    x: &Tensor,
    d_out: &Tensor,
    w: &mut Param,
    b: &mut Param,
) -> Result<Tensor, NnError> {
    accumulate_linear_grads(x, d_out, w, b)?;
    Ok(d_out.matmul_nt(&w.value)?)
}

/// Like [`linear_backward`] but skips `dX`; use at the input layer where the
/// features are constants.
pub fn linear_backward_no_dx(
    x: &Tensor,
    d_out: &Tensor,
    w: &mut Param,
    b: &mut Param,
) -> Result<(), NnError> {
    accumulate_linear_grads(x, d_out, w, b)
}

fn accumulate_linear_grads(
    x: &Tensor,
    d_out: &Tensor,
    w: &mut Param,
    b: &mut Param,
) -> Result<(), NnError> {
    let dw = x.matmul_tn(d_out)?;
    w.grad.add_assign(&dw);
    let db = b.grad.row_mut(0);
    for i in 0..d_out.rows() {
        for (g, &dv) in db.iter_mut().zip(d_out.row(i)) {
            *g += dv;
        }
    }
    Ok(())
}

/// Input-layer forward over a sparse feature matrix.
pub fn linear_forward_csr(x: &CsrFeatures, w: &Param, b: &Param) -> Result<Tensor, NnError> {
    if x.cols != w.value.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "linear_forward_csr",
            left_rows: x.rows,
            left_cols: x.cols,
            right_rows: w.value.rows(),
            right_cols: w.value.cols(),
        }
        .into());
    }
    let h = w.value.cols();
    let mut out = Tensor::zeros(x.rows, h);
    let bias = b.value.row(0);
    for i in 0..x.rows {
        let out_row = out.row_mut(i);
        out_row.copy_from_slice(bias);
        for idx in x.indptr[i]..x.indptr[i + 1] {
            let (k, v) = (x.indices[idx], x.values[idx]);
            let w_row = w.value.row(k);
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o += v * wv;
            }
        }
    }
    debug_check_finite(&out, "linear_csr")?;
    Ok(out)
}

/// Gradient accumulation for the sparse input layer (no `dX`).
pub fn linear_backward_csr(
    x: &CsrFeatures,
    d_out: &Tensor,
    w: &mut Param,
    b: &mut Param,
) -> Result<(), NnError> {
    if x.rows != d_out.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "linear_backward_csr",
            left_rows: x.rows,
            left_cols: x.cols,
            right_rows: d_out.rows(),
            right_cols: d_out.cols(),
        }
        .into());
    }
    for i in 0..x.rows {
        let d_row = d_out.row(i);
        for idx in x.indptr[i]..x.indptr[i + 1] {
            let (k, v) = (x.indices[idx], x.values[idx]);
            let g_row = w.grad.row_mut(k);
            for (g, &dv) in g_row.iter_mut().zip(d_row) {
                *g += v * dv;
            }
        }
        let db = b.grad.row_mut(0);
        for (g, &dv) in db.iter_mut().zip(d_row) {
            *g += dv;
        }
    }
    Ok(())
}

// ---- relu ----

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gate by `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Tensor {
    assert_eq!(x.shape(), d_out.shape(), "relu_backward shape mismatch");
    let mut dx = d_out.clone();
    for (g, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

// ---- softmax ----

/// Row-wise softmax with max subtraction for overflow safety.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Jacobian-vector product through a row softmax whose output was `y`:
/// `dX_row = y ⊙ (dY_row - <dY_row, y>)`.
pub fn softmax_backward(y: &Tensor, d_out: &Tensor) -> Tensor {
    assert_eq!(y.shape(), d_out.shape(), "softmax_backward shape mismatch");
    let mut dx = Tensor::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let yr = y.row(i);
        let dr = d_out.row(i);
        let dot: f64 = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
        for ((o, &yv), &dv) in dx.row_mut(i).iter_mut().zip(yr).zip(dr) {
            *o = yv * (dv - dot);
        }
    }
    dx
}

// ---- losses ----

pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log probability of the true class over the masked rows.
/// `u` holds probabilities, not logits; entries are clamped at `PROB_FLOOR`
/// before the log so that slightly negative diffusion output cannot NaN.
pub fn nll_masked(u: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64, NnError> {
    if mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let mut total = 0.0;
    for &i in mask {
        if i >= u.rows() {
            return Err(NnError::MaskOutOfRange { index: i, rows: u.rows() });
        }
        let y = labels[i];
        if y >= u.cols() {
            return Err(NnError::LabelOutOfRange { label: y, classes: u.cols(), row: i });
        }
        total -= u.get(i, y).max(PROB_FLOOR).ln();
    }
    Ok(total / mask.len() as f64)
}

/// Gradient of [`nll_masked`] w.r.t. `u`; only masked rows are written.
pub fn nll_masked_backward(
    u: &Tensor,
    labels: &[usize],
    mask: &[usize],
) -> Result<Tensor, NnError> {
    if mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let inv = 1.0 / mask.len() as f64;
    let mut du = Tensor::zeros(u.rows(), u.cols());
    for &i in mask {
        if i >= u.rows() {
            return Err(NnError::MaskOutOfRange { index: i, rows: u.rows() });
        }
        let y = labels[i];
        let p = u.get(i, y);
        if p > PROB_FLOOR {
            du.set(i, y, -inv / p);
        }
        // clamped entries sit on the flat part of log(max(u, floor))
    }
    Ok(du)
}

/// Mean squared error over the masked rows of a column vector.
pub fn mse_masked(pred: &Tensor, target: &Tensor, mask: &[usize]) -> Result<f64, NnError> {
    if mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_masked",
            left_rows: pred.rows(),
            left_cols: pred.cols(),
            right_rows: target.rows(),
            right_cols: target.cols(),
        }
        .into());
    }
    let mut total = 0.0;
    for &i in mask {
        if i >= pred.rows() {
            return Err(NnError::MaskOutOfRange { index: i, rows: pred.rows() });
        }
        for (p, t) in pred.row(i).iter().zip(target.row(i)) {
            let d = p - t;
            total += d * d;
        }
    }
    Ok(total / mask.len() as f64)
}

pub fn mse_masked_backward(
    pred: &Tensor,
    target: &Tensor,
    mask: &[usize],
) -> Result<Tensor, NnError> {
    if mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let inv = 2.0 / mask.len() as f64;
    let mut dp = Tensor::zeros(pred.rows(), pred.cols());
    for &i in mask {
        for ((g, &p), &t) in dp.row_mut(i).iter_mut().zip(pred.row(i)).zip(target.row(i)) {
            *g = inv * (p - t);
        }
    }
    Ok(dp)
}

// ---- dropout ----

/// Inverted dropout: in training, zero each entry with probability `rate`
/// and scale survivors by `1/(1-rate)`; in eval, identity. The returned mask
/// holds the per-entry scale factors and is reused by the backward pass.
pub fn dropout_forward(
    x: &Tensor,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(Tensor, Option<Vec<f64>>), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidDropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut out = x.clone();
    let mut mask = Vec::with_capacity(out.data().len());
    for v in out.data_mut() {
        let keep = rng.random::<f64>() >= rate;
        let m = if keep { keep_scale } else { 0.0 };
        mask.push(m);
        *v *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(d_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => d_out.clone(),
        Some(m) => {
            let mut dx = d_out.clone();
            for (g, &mv) in dx.data_mut().iter_mut().zip(m) {
                *g *= mv;
            }
            dx
        }
    }
}

// ---- optimizers ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adam" => Some(OptimizerKind::Adam),
            "sgd-momentum" | "sgd" => Some(OptimizerKind::SgdMomentum),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        }
    }
}

/// Optimizer state: one moment buffer set per parameter, matched by position.
/// Weight decay is classical L2-added-to-gradient, not decoupled.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, params: &[&Param]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.value.data().len()).collect();
        OptimizerState {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
            step_count: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update over all parameters; grads must already be populated.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        assert_eq!(params.len(), self.first_moment.len(), "param count changed");
        self.step_count += 1;
        let t = self.step_count as f64;
        match self.kind {
            OptimizerKind::Adam => {
                let bc1 = 1.0 - self.beta1.powf(t);
                let bc2 = 1.0 - self.beta2.powf(t);
                for (pi, p) in params.iter_mut().enumerate() {
                    let m = &mut self.first_moment[pi];
                    let v = &mut self.second_moment[pi];
                    let value = p.value.data_mut();
                    let grad = p.grad.data();
                    for k in 0..value.len() {
                        let g = grad[k] + self.weight_decay * value[k];
                        m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                        v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        value[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                for (pi, p) in params.iter_mut().enumerate() {
                    let buf = &mut self.first_moment[pi];
                    let value = p.value.data_mut();
                    let grad = p.grad.data();
                    for k in 0..value.len() {
                        let g = grad[k] + self.weight_decay * value[k];
                        buf[k] = self.momentum * buf[k] + g;
                        value[k] -= self.lr * buf[k];
                    }
                }
            }
        }
    }
}

/// Multi-step decay: `base_lr` before `0.5 T`, times 0.1 on `[0.5T, 0.75T)`,
/// times 0.01 from `0.75 T` on.
pub fn multistep_lr(epoch: usize, total: usize, base_lr: f64) -> f64 {
    debug_assert!(epoch < total);
    let half = total / 2;
    let three_quarters = (3 * total) / 4;
    if epoch < half {
        base_lr
    } else if epoch < three_quarters {
        base_lr * 0.1
    } else {
        base_lr * 0.01
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    /// Central-difference gradient of `loss` w.r.t. the entries of `x`.
    fn finite_diff(mut loss: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
        let mut grad = Tensor::zeros(x.rows(), x.cols());
        let mut probe = x.clone();
        for k in 0..x.data().len() {
            let orig = probe.data()[k];
            probe.data_mut()[k] = orig + h;
            let up = loss(&probe);
            probe.data_mut()[k] = orig - h;
            let down = loss(&probe);
            probe.data_mut()[k] = orig;
            grad.data_mut()[k] = (up - down) / (2.0 * h);
        }
        grad
    }

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        let mut t = Tensor::zeros(rows, cols);
        t.data_mut().iter_mut().for_each(|v| *v = rng.random::<f64>() * 2.0 - 1.0);
        t
    }

    fn max_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
        analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_identity_input() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let w = Param::new("w", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = Param::new("b", Tensor::zeros(1, 2));
        let out = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(out, w.value);
    }

    #[test]
    fn linear_bias_only() {
        let x = Tensor::zeros(3, 2);
        let w = Param::new("w", Tensor::zeros(2, 2));
        let b = Param::new("b", Tensor::from_rows(&[vec![5.0, 5.0]]));
        let out = linear_forward(&x, &w, &b).unwrap();
        assert!(out.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn linear_rejects_shape_mismatch() {
        let x = Tensor::zeros(3, 2);
        let w = Param::new("w", Tensor::zeros(5, 4));
        let b = Param::new("b", Tensor::zeros(1, 4));
        let err = linear_forward(&x, &w, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x2") && msg.contains("5x4"), "message names both shapes: {msg}");
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let x = rand_tensor(4, 3, 1);
        let w0 = rand_tensor(3, 5, 2);
        let b0 = rand_tensor(1, 5, 3);
        let g = rand_tensor(4, 5, 4); // fixed cotangent: loss = <out, G>
        let loss_of = |w: &Tensor, b: &Tensor, xx: &Tensor| {
            let out = linear_forward(xx, &Param::new("w", w.clone()), &Param::new("b", b.clone())).unwrap();
            out.data().iter().zip(g.data()).map(|(&o, &gv)| o * gv).sum::<f64>()
        };
        let mut w = Param::new("w", w0.clone());
        let mut b = Param::new("b", b0.clone());
        let dx = linear_backward(&x, &g, &mut w, &mut b).unwrap();
        let h = 1e-6;
        let fd_w = finite_diff(|wt| loss_of(wt, &b0, &x), &w0, h);
        let fd_b = finite_diff(|bt| loss_of(&w0, bt, &x), &b0, h);
        let fd_x = finite_diff(|xt| loss_of(&w0, &b0, xt), &x, h);
        assert!(max_rel_err(&w.grad, &fd_w) <= 1e-6, "dW rel err {}", max_rel_err(&w.grad, &fd_w));
        assert!(max_rel_err(&b.grad, &fd_b) <= 1e-6);
        assert!(max_rel_err(&dx, &fd_x) <= 1e-6);
    }

    #[test]
    fn linear_grads_accumulate() {
        let x = rand_tensor(2, 2, 5);
        let g = rand_tensor(2, 2, 6);
        let mut w = Param::new("w", rand_tensor(2, 2, 7));
        let mut b = Param::new("b", Tensor::zeros(1, 2));
        linear_backward(&x, &g, &mut w, &mut b).unwrap();
        let once = w.grad.clone();
        linear_backward(&x, &g, &mut w, &mut b).unwrap();
        let mut twice = once.clone();
        twice.scale(2.0);
        assert!(w.grad.max_abs_diff(&twice) < 1e-14);
    }

    #[test]
    fn csr_linear_matches_dense_path() {
        let mut x = rand_tensor(5, 7, 8);
        // sparsify
        for v in x.data_mut().iter_mut() {
            if v.abs() < 0.6 {
                *v = 0.0;
            }
        }
        let sx = CsrFeatures::from_dense(&x);
        let w0 = rand_tensor(7, 3, 9);
        let b0 = rand_tensor(1, 3, 10);
        let g = rand_tensor(5, 3, 11);
        let dense_out = linear_forward(&x, &Param::new("w", w0.clone()), &Param::new("b", b0.clone())).unwrap();
        let sparse_out = linear_forward_csr(&sx, &Param::new("w", w0.clone()), &Param::new("b", b0.clone())).unwrap();
        assert!(dense_out.max_abs_diff(&sparse_out) < 1e-15);

        let mut wd = Param::new("w", w0.clone());
        let mut bd = Param::new("b", b0.clone());
        linear_backward(&x, &g, &mut wd, &mut bd).unwrap();
        let mut ws = Param::new("w", w0);
        let mut bs = Param::new("b", b0);
        linear_backward_csr(&sx, &g, &mut ws, &mut bs).unwrap();
        assert!(wd.grad.max_abs_diff(&ws.grad) < 1e-12);
        assert!(bd.grad.max_abs_diff(&bs.grad) < 1e-12);
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::from_rows(&[vec![-1.0, 0.0, 2.0]]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let dx = relu_backward(&x, &Tensor::from_rows(&[vec![1.0, 1.0, 1.0]]));
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_gradient_away_from_kink() {
        let mut x = rand_tensor(4, 4, 12);
        for v in x.data_mut().iter_mut() {
            if v.abs() < 1e-3 {
                *v = 0.1; // keep the finite difference off the kink
            }
        }
        let g = rand_tensor(4, 4, 13);
        let dx = relu_backward(&x, &g);
        let fd = finite_diff(
            |xt| {
                relu_forward(xt)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&o, &gv)| o * gv)
                    .sum()
            },
            &x,
            1e-6,
        );
        assert!(max_rel_err(&dx, &fd) <= 1e-6);
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let y = softmax_rows(&Tensor::from_rows(&[vec![0.0, 0.0]]));
        assert!((y.get(0, 0) - 0.5).abs() < 1e-15);
        let big = softmax_rows(&Tensor::from_rows(&[vec![1000.0, 1000.0]]));
        assert!((big.get(0, 0) - 0.5).abs() < 1e-15);
        assert!(big.is_finite());
    }

    #[test]
    fn softmax_reference_values() {
        // direct formula on [1, 2, 3]; denominators evaluated in extended
        // precision offline: e/(e+e^2+e^3), ...
        let y = softmax_rows(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]));
        let expect = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (j, &e) in expect.iter().enumerate() {
            assert!((y.get(0, j) - e).abs() < 1e-15, "{} vs {}", y.get(0, j), e);
        }
        let row_sum: f64 = y.row(0).iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let x = rand_tensor(3, 4, 14);
        let g = rand_tensor(3, 4, 15);
        let y = softmax_rows(&x);
        let dx = softmax_backward(&y, &g);
        let fd = finite_diff(
            |xt| {
                softmax_rows(xt)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&o, &gv)| o * gv)
                    .sum()
            },
            &x,
            1e-6,
        );
        assert!(max_rel_err(&dx, &fd) <= 1e-6);
    }

    #[test]
    fn nll_perfect_prediction_is_zero() {
        let u = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let loss = nll_masked(&u, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn nll_single_node_analytic() {
        let u = Tensor::from_rows(&[vec![0.5, 0.5]]);
        let loss = nll_masked(&u, &[0], &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_empty_mask() {
        let u = Tensor::from_rows(&[vec![0.5, 0.5]]);
        assert!(matches!(nll_masked(&u, &[0], &[]), Err(NnError::EmptyMask)));
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        // probabilities away from the clamp: random simplex rows
        let mut u = rand_tensor(5, 3, 16);
        u.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.1);
        for i in 0..5 {
            let s: f64 = u.row(i).iter().sum();
            u.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        let labels = [0usize, 2, 1, 0, 2];
        let mask = [0usize, 2, 4];
        let du = nll_masked_backward(&u, &labels, &mask).unwrap();
        let fd = finite_diff(|ut| nll_masked(ut, &labels, &mask).unwrap(), &u, 1e-7);
        assert!(max_rel_err(&du, &fd) <= 1e-5);
    }

    #[test]
    fn mse_examples_and_gradient() {
        let pred = Tensor::from_rows(&[vec![1.0], vec![3.0]]);
        let target = Tensor::from_rows(&[vec![0.0], vec![0.0]]);
        assert_eq!(mse_masked(&pred, &target, &[0, 1]).unwrap(), 5.0);
        assert_eq!(mse_masked(&pred, &pred, &[0, 1]).unwrap(), 0.0);
        assert!(mse_masked(&pred, &target, &[]).is_err());

        let p = rand_tensor(6, 1, 17);
        let t = rand_tensor(6, 1, 18);
        let mask = [1usize, 3, 4];
        let dp = mse_masked_backward(&p, &t, &mask).unwrap();
        let fd = finite_diff(|pt| mse_masked(pt, &t, &mask).unwrap(), &p, 1e-6);
        assert!(max_rel_err(&dp, &fd) <= 1e-6);
        // untouched rows stay zero
        assert_eq!(dp.get(0, 0), 0.0);
    }

    #[test]
    fn dropout_identity_cases() {
        let x = rand_tensor(3, 3, 19);
        let mut rng = rng_from_seed(0);
        let (y, mask) = dropout_forward(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, mask) = dropout_forward(&x, 0.7, &mut rng, false).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        assert!(dropout_forward(&x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_preserves_mean_at_large_n() {
        let x = Tensor::filled(100, 1000, 1.0);
        let mut rng = rng_from_seed(42);
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng, true).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.data().len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        // backward reuses the same mask
        let g = Tensor::filled(100, 1000, 1.0);
        let dx = dropout_backward(&g, mask.as_deref());
        assert_eq!(dx.data(), y.data());
    }

    #[test]
    fn adam_first_step_scalar_trace() {
        // g = 1, lr = 0.1: bias-corrected m_hat = v_hat = 1, so the step is
        // lr / (1 + eps) ~ 0.1
        let mut p = Param::new("p", Tensor::from_rows(&[vec![1.0]]));
        p.grad.set(0, 0, 1.0);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.1, 0.0, &[&p]);
        opt.step(&mut [&mut p]);
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-8);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn adam_zero_grad_zero_decay_is_noop() {
        let mut p = Param::new("p", rand_tensor(2, 2, 20));
        let before = p.value.clone();
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.1, 0.0, &[&p]);
        opt.step(&mut [&mut p]);
        assert_eq!(p.value, before);
    }

    #[test]
    fn weight_decay_equals_l2_gradient() {
        let start = rand_tensor(2, 3, 21);
        let lambda = 0.37;

        let mut with_decay = Param::new("p", start.clone());
        let mut opt1 = OptimizerState::new(OptimizerKind::Adam, 0.05, lambda, &[&with_decay]);
        opt1.step(&mut [&mut with_decay]);

        let mut manual = Param::new("p", start.clone());
        for (g, &v) in manual.grad.data_mut().iter_mut().zip(start.data()) {
            *g = lambda * v;
        }
        let mut opt2 = OptimizerState::new(OptimizerKind::Adam, 0.05, 0.0, &[&manual]);
        opt2.step(&mut [&mut manual]);

        assert!(with_decay.value.max_abs_diff(&manual.value) < 1e-15);
    }

    #[test]
    fn sgd_momentum_recurrence() {
        // v <- mu v + g, p <- p - lr v; two steps by hand
        let mut p = Param::new("p", Tensor::from_rows(&[vec![0.0]]));
        let mut opt = OptimizerState::new(OptimizerKind::SgdMomentum, 0.1, 0.0, &[&p]);
        p.grad.set(0, 0, 1.0);
        opt.step(&mut [&mut p]); // v = 1, p = -0.1
        assert!((p.value.get(0, 0) + 0.1).abs() < 1e-15);
        p.zero_grad();
        p.grad.set(0, 0, 1.0);
        opt.step(&mut [&mut p]); // v = 1.9, p = -0.29
        assert!((p.value.get(0, 0) + 0.29).abs() < 1e-15);
    }

    #[test]
    fn multistep_schedule_breakpoints() {
        assert_eq!(multistep_lr(0, 100, 0.1), 0.1);
        assert_eq!(multistep_lr(49, 100, 0.1), 0.1);
        assert!((multistep_lr(50, 100, 0.1) - 0.01).abs() < 1e-15);
        assert!((multistep_lr(74, 100, 0.1) - 0.01).abs() < 1e-15);
        assert!((multistep_lr(75, 100, 0.1) - 0.001).abs() < 1e-15);
        assert!((multistep_lr(99, 100, 0.1) - 0.001).abs() < 1e-15);
    }
}
