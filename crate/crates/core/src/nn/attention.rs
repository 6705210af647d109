//! Additive attention pooling over a hidden-state sequence.
//!
//! ```text
//! e_t = v · tanh(W h_t + b)
//! α   = softmax_t(e)
//! ctx = Σ_t α_t h_t
//! ```

use crate::error::{Error, Result};
use crate::nn::linalg::gemm;
use crate::nn::lstm::fill_uniform;
use crate::nn::tensor::{sequence_dims, Parameter, Tensor};
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Projection `[A, U]`.
    pub w: Parameter,
    /// `[A]`.
    pub b: Parameter,
    /// Scoring vector `[A]`.
    pub v: Parameter,
}

impl AttentionParams {
    pub fn zeros(prefix: &str, units: usize, width: usize) -> Self {
        Self {
            w: Parameter::zeros(format!("{prefix}.w"), &[width, units]),
            b: Parameter::zeros(format!("{prefix}.b"), &[width]),
            v: Parameter::zeros(format!("{prefix}.v"), &[width]),
        }
    }

    pub fn init(prefix: &str, units: usize, width: usize, rng: &mut SeededStream) -> Self {
        let mut p = Self::zeros(prefix, units, width);
        fill_uniform(&mut p.w.value, (1.0 / units as f64).sqrt(), rng);
        fill_uniform(&mut p.v.value, (1.0 / width as f64).sqrt(), rng);
        p
    }

    pub fn width(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn params(&self) -> [&Parameter; 3] {
        [&self.w, &self.b, &self.v]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.w, &mut self.b, &mut self.v]
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    steps: usize,
    batch: usize,
    batched: bool,
    hidden: Vec<f64>,
    /// `tanh(W h + b)` per row, `[T·B, A]`.
    projected: Vec<f64>,
    /// `[B, T]`.
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dh: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    pub dv: Tensor,
}

/// Numerically stable softmax (max subtraction) written into `out`.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Pools `h` (`[T, U]` or `[T, B, U]`) into a context vector per sequence.
///
/// Returns `(context, weights, cache)` where context is `[U]` / `[B, U]` and
/// weights are `[T]` / `[B, T]`.
pub fn attention_pool(h: &Tensor, p: &AttentionParams) -> Result<(Tensor, Tensor, AttentionCache)> {
    let (steps, batch, units) = sequence_dims(h, "attention")?;
    if units != p.units() {
        return Err(Error::Shape(format!(
            "attention input has {units} units, projection expects {}",
            p.units()
        )));
    }
    let width = p.width();
    let rows = steps * batch;
    let mut projected = vec![0.0; rows * width];
    gemm(false, true, rows, width, units, 1.0, h.data(), p.w.value.data(), 0.0, &mut projected);
    let (b, v) = (p.b.value.data(), p.v.value.data());
    let mut scores = vec![0.0; rows];
    for (row, score) in projected.chunks_exact_mut(width).zip(scores.iter_mut()) {
        let mut s = 0.0;
        for ((x, bias), vv) in row.iter_mut().zip(b).zip(v) {
            *x = (*x + bias).tanh();
            s += *x * vv;
        }
        *score = s;
    }

    let mut weights = vec![0.0; batch * steps];
    let mut context = vec![0.0; batch * units];
    let mut seq_scores = vec![0.0; steps];
    for bi in 0..batch {
        for t in 0..steps {
            seq_scores[t] = scores[t * batch + bi];
        }
        let w = &mut weights[bi * steps..(bi + 1) * steps];
        softmax_into(&seq_scores, w);
        let ctx = &mut context[bi * units..(bi + 1) * units];
        for (t, &alpha) in w.iter().enumerate() {
            let ht = &h.data()[(t * batch + bi) * units..(t * batch + bi + 1) * units];
            for (c, hv) in ctx.iter_mut().zip(ht) {
                *c += alpha * hv;
            }
        }
    }

    let batched = h.shape().len() == 3;
    let (ctx_shape, w_shape) = if batched {
        (vec![batch, units], vec![batch, steps])
    } else {
        (vec![units], vec![steps])
    };
    Ok((
        Tensor::from_vec(&ctx_shape, context)?,
        Tensor::from_vec(&w_shape, weights.clone())?,
        AttentionCache {
            steps,
            batch,
            batched,
            hidden: h.data().to_vec(),
            projected,
            weights,
        },
    ))
}

pub fn attention_backward(
    dcontext: &Tensor,
    cache: &AttentionCache,
    p: &AttentionParams,
) -> Result<AttentionGrads> {
    let units = p.units();
    let width = p.width();
    let (steps, batch) = (cache.steps, cache.batch);
    if dcontext.len() != batch * units || cache.hidden.len() != steps * batch * units {
        return Err(Error::State(
            "attention backward: gradient does not match cached forward pass".into(),
        ));
    }
    let rows = steps * batch;
    let h = &cache.hidden;
    let dctx = dcontext.data();
    let v = p.v.value.data();

    let mut dh = vec![0.0; rows * units];
    let mut dscore = vec![0.0; rows];
    let mut dalpha = vec![0.0; steps];
    for bi in 0..batch {
        let dc = &dctx[bi * units..(bi + 1) * units];
        let w = &cache.weights[bi * steps..(bi + 1) * steps];
        for t in 0..steps {
            let row = (t * batch + bi) * units;
            let ht = &h[row..row + units];
            dalpha[t] = ht.iter().zip(dc).map(|(a, b)| a * b).sum();
            for (d, c) in dh[row..row + units].iter_mut().zip(dc) {
                *d = w[t] * c;
            }
        }
        let mean: f64 = w.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for t in 0..steps {
            dscore[t * batch + bi] = w[t] * (dalpha[t] - mean);
        }
    }

    let mut dv = vec![0.0; width];
    let mut dpre = vec![0.0; rows * width];
    for ((prow, drow), ds) in cache
        .projected
        .chunks_exact(width)
        .zip(dpre.chunks_exact_mut(width))
        .zip(&dscore)
    {
        for k in 0..width {
            dv[k] += ds * prow[k];
            drow[k] = ds * v[k] * (1.0 - prow[k] * prow[k]);
        }
    }
    let mut dw = vec![0.0; width * units];
    gemm(true, false, width, units, rows, 1.0, &dpre, h, 0.0, &mut dw);
    let mut db = vec![0.0; width];
    for row in dpre.chunks_exact(width) {
        for (acc, x) in db.iter_mut().zip(row) {
            *acc += x;
        }
    }
    gemm(false, false, rows, units, width, 1.0, &dpre, p.w.value.data(), 1.0, &mut dh);

    let dh_shape: Vec<usize> = if cache.batched {
        vec![steps, batch, units]
    } else {
        vec![steps, units]
    };
    Ok(AttentionGrads {
        dh: Tensor::from_vec(&dh_shape, dh)?,
        dw: Tensor::from_vec(&[width, units], dw)?,
        db: Tensor::from_vec(&[width], db)?,
        dv: Tensor::from_vec(&[width], dv)?,
    })
}
