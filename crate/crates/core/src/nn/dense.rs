//! Output layer: affine map, softmax, categorical cross-entropy.

use crate::error::{Error, Result};
use crate::nn::attention::softmax_into;
use crate::nn::linalg::gemm;
use crate::nn::lstm::fill_uniform;
use crate::nn::tensor::{Parameter, Tensor};
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[K, U]`.
    pub w: Parameter,
    /// `[K]`.
    pub b: Parameter,
}

impl DenseParams {
    pub fn zeros(prefix: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            w: Parameter::zeros(format!("{prefix}.w"), &[outputs, inputs]),
            b: Parameter::zeros(format!("{prefix}.b"), &[outputs]),
        }
    }

    pub fn init(prefix: &str, inputs: usize, outputs: usize, rng: &mut SeededStream) -> Self {
        let mut p = Self::zeros(prefix, inputs, outputs);
        fill_uniform(&mut p.w.value, (1.0 / inputs as f64).sqrt(), rng);
        p
    }

    pub fn inputs(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.w, &mut self.b]
    }
}

fn rows_of(c: &Tensor, inputs: usize) -> Result<usize> {
    match *c.shape() {
        [u] if u == inputs => Ok(1),
        [b, u] if u == inputs => Ok(b),
        ref other => Err(Error::Shape(format!(
            "dense layer expects [{inputs}] or [B, {inputs}], got {other:?}"
        ))),
    }
}

/// `W c + b` for a single vector `[U]` or a batch `[B, U]`.
pub fn dense_logits(c: &Tensor, p: &DenseParams) -> Result<Tensor> {
    let (k, u) = (p.outputs(), p.inputs());
    let rows = rows_of(c, u)?;
    let mut z = vec![0.0; rows * k];
    gemm(false, true, rows, k, u, 1.0, c.data(), p.w.value.data(), 0.0, &mut z);
    for row in z.chunks_exact_mut(k) {
        for (zv, b) in row.iter_mut().zip(p.b.value.data()) {
            *zv += b;
        }
    }
    let shape: Vec<usize> = if c.shape().len() == 1 { vec![k] } else { vec![rows, k] };
    Tensor::from_vec(&shape, z)
}

/// Row-wise stabilized softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = *logits.shape().last().expect("non-empty shape");
    let mut out = logits.clone();
    for (o, z) in out.data_mut().chunks_exact_mut(k).zip(logits.data().chunks_exact(k)) {
        softmax_into(z, o);
    }
    out
}

pub fn dense_softmax(c: &Tensor, p: &DenseParams) -> Result<Tensor> {
    Ok(softmax(&dense_logits(c, p)?))
}

/// Fused cross-entropy on one logit row: `loss = logsumexp(z) − z_true` and
/// `∂loss/∂z = softmax(z) − onehot`.
pub fn categorical_cross_entropy(logits: &[f64], onehot: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != onehot.len() || logits.is_empty() {
        return Err(Error::Shape(format!(
            "cross entropy: {} logits vs {} targets",
            logits.len(),
            onehot.len()
        )));
    }
    let ones = onehot.iter().filter(|v| **v == 1.0).count();
    let zeros = onehot.iter().filter(|v| **v == 0.0).count();
    if ones != 1 || ones + zeros != onehot.len() {
        return Err(Error::Label(format!("{onehot:?} is not a one-hot vector")));
    }
    let truth = onehot.iter().position(|v| *v == 1.0).unwrap_or_default();
    cross_entropy_index(logits, truth)
}

/// [`categorical_cross_entropy`] with the true class given by index.
pub fn cross_entropy_index(logits: &[f64], truth: usize) -> Result<(f64, Vec<f64>)> {
    if truth >= logits.len() {
        return Err(Error::Label(format!(
            "class {truth} outside 0..{}",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let loss = log_norm - logits[truth];
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - log_norm).exp()).collect();
    grad[truth] -= 1.0;
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dc: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

/// Backward of [`dense_logits`] for a batch `[B, U]` given `dlogits [B, K]`.
pub fn dense_backward(c: &Tensor, dlogits: &Tensor, p: &DenseParams) -> Result<DenseGrads> {
    let (k, u) = (p.outputs(), p.inputs());
    let rows = rows_of(c, u)?;
    if dlogits.len() != rows * k {
        return Err(Error::Shape("dense backward: logit gradient shape mismatch".into()));
    }
    let mut dw = vec![0.0; k * u];
    gemm(true, false, k, u, rows, 1.0, dlogits.data(), c.data(), 0.0, &mut dw);
    let mut db = vec![0.0; k];
    for row in dlogits.data().chunks_exact(k) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut dc = vec![0.0; rows * u];
    gemm(false, false, rows, u, k, 1.0, dlogits.data(), p.w.value.data(), 0.0, &mut dc);
    Ok(DenseGrads {
        dc: Tensor::from_vec(c.shape(), dc)?,
        dw: Tensor::from_vec(&[k, u], dw)?,
        db: Tensor::from_vec(&[k], db)?,
    })
}
