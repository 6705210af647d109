//! LSTM layer over time-major batches.
//!
//! Gate order inside every `4U` block is input, forget, cell candidate,
//! output `(i, f, g, o)`. With `z_t = W x_t + R h_{t−1} + b`:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t−1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! starting from `h_0 = c_0 = 0`.

use crate::error::{Error, Result};
use crate::nn::linalg::gemm;
use crate::nn::tensor::{sequence_dims, Parameter, Tensor};
use crate::rng::SeededStream;

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights `[4U, D]`.
    pub w: Parameter,
    /// Recurrent weights `[4U, U]`.
    pub r: Parameter,
    /// Bias `[4U]`.
    pub b: Parameter,
}

impl LstmParams {
    pub fn zeros(prefix: &str, input: usize, units: usize) -> Self {
        Self {
            w: Parameter::zeros(format!("{prefix}.w"), &[4 * units, input]),
            r: Parameter::zeros(format!("{prefix}.r"), &[4 * units, units]),
            b: Parameter::zeros(format!("{prefix}.b"), &[4 * units]),
        }
    }

    /// Uniform `±√(1/fan_in)` weights, zero bias except the forget gate.
    pub fn init(prefix: &str, input: usize, units: usize, rng: &mut SeededStream) -> Self {
        let mut p = Self::zeros(prefix, input, units);
        fill_uniform(&mut p.w.value, (1.0 / input as f64).sqrt(), rng);
        fill_uniform(&mut p.r.value, (1.0 / units as f64).sqrt(), rng);
        p.b.value.data_mut()[units..2 * units].fill(FORGET_BIAS);
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn units(&self) -> usize {
        self.r.shape()[1]
    }

    pub fn params(&self) -> [&Parameter; 3] {
        [&self.w, &self.r, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.w, &mut self.r, &mut self.b]
    }
}

pub(crate) fn fill_uniform(t: &mut Tensor, bound: f64, rng: &mut SeededStream) {
    for v in t.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    batch: usize,
    input_size: usize,
    units: usize,
    batched: bool,
    input: Vec<f64>,
    /// Post-activation gates `[T, B, 4U]`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub dr: Tensor,
    pub db: Tensor,
}

/// Runs the recurrence over `x` (`[T, D]` or `[T, B, D]`), returning the full
/// hidden sequence in the matching layout.
pub fn lstm_forward(x: &Tensor, p: &LstmParams) -> Result<(Tensor, LstmCache)> {
    let (steps, batch, input_size) = sequence_dims(x, "lstm")?;
    if input_size != p.input_size() {
        return Err(Error::Shape(format!(
            "lstm input has {input_size} features, weights expect {}",
            p.input_size()
        )));
    }
    let units = p.units();
    let g4 = 4 * units;
    let rows = steps * batch;

    let mut gates = vec![0.0; rows * g4];
    gemm(false, true, rows, g4, input_size, 1.0, x.data(), p.w.value.data(), 0.0, &mut gates);
    let bias = p.b.value.data();
    for row in gates.chunks_exact_mut(g4) {
        for (z, b) in row.iter_mut().zip(bias) {
            *z += b;
        }
    }

    let mut cells = vec![0.0; rows * units];
    let mut tanh_cells = vec![0.0; rows * units];
    let mut hidden = vec![0.0; rows * units];
    let step_len = batch * units;
    for t in 0..steps {
        let z = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        if t > 0 {
            let h_prev = &hidden[(t - 1) * step_len..t * step_len];
            gemm(false, true, batch, g4, units, 1.0, h_prev, p.r.value.data(), 1.0, z);
        }
        for bi in 0..batch {
            let zg = &mut z[bi * g4..(bi + 1) * g4];
            let base = t * step_len + bi * units;
            for j in 0..units {
                let i = sigmoid(zg[j]);
                let f = sigmoid(zg[units + j]);
                let g = zg[2 * units + j].tanh();
                let o = sigmoid(zg[3 * units + j]);
                zg[j] = i;
                zg[units + j] = f;
                zg[2 * units + j] = g;
                zg[3 * units + j] = o;
                let c_prev = if t > 0 { cells[base - step_len + j] } else { 0.0 };
                let c = f * c_prev + i * g;
                let tc = c.tanh();
                cells[base + j] = c;
                tanh_cells[base + j] = tc;
                hidden[base + j] = o * tc;
            }
        }
    }

    let batched = x.shape().len() == 3;
    let out_shape: Vec<usize> = if batched {
        vec![steps, batch, units]
    } else {
        vec![steps, units]
    };
    let h = Tensor::from_vec(&out_shape, hidden.clone())?;
    Ok((
        h,
        LstmCache {
            steps,
            batch,
            input_size,
            units,
            batched,
            input: x.data().to_vec(),
            gates,
            cells,
            tanh_cells,
            hidden,
        },
    ))
}

/// Exact gradients of [`lstm_forward`] given the upstream gradient on every
/// hidden state.
pub fn lstm_backward(dh: &Tensor, cache: &LstmCache, p: &LstmParams) -> Result<LstmGrads> {
    let (steps, batch, units) = sequence_dims(dh, "lstm backward")?;
    if steps != cache.steps
        || batch != cache.batch
        || units != cache.units
        || p.units() != cache.units
        || p.input_size() != cache.input_size
    {
        return Err(Error::State(format!(
            "lstm backward got [{steps}, {batch}, {units}] for a cache of [{}, {}, {}]",
            cache.steps, cache.batch, cache.units
        )));
    }
    let g4 = 4 * units;
    let d = cache.input_size;
    let rows = steps * batch;
    let step_len = batch * units;
    let dh = dh.data();

    let mut dz = vec![0.0; rows * g4];
    let mut dh_rec = vec![0.0; step_len];
    let mut dc_next = vec![0.0; step_len];
    for t in (0..steps).rev() {
        for bi in 0..batch {
            let gate = &cache.gates[(t * batch + bi) * g4..(t * batch + bi + 1) * g4];
            let dzg = &mut dz[(t * batch + bi) * g4..(t * batch + bi + 1) * g4];
            let base = t * step_len + bi * units;
            for j in 0..units {
                let k = bi * units + j;
                let dhv = dh[base + j] + dh_rec[k];
                let (i, f, g, o) = (gate[j], gate[units + j], gate[2 * units + j], gate[3 * units + j]);
                let tc = cache.tanh_cells[base + j];
                let c_prev = if t > 0 { cache.cells[base - step_len + j] } else { 0.0 };
                let d_o = dhv * tc;
                let dc = dc_next[k] + dhv * o * (1.0 - tc * tc);
                dc_next[k] = dc * f;
                dzg[j] = dc * g * i * (1.0 - i);
                dzg[units + j] = dc * c_prev * f * (1.0 - f);
                dzg[2 * units + j] = dc * i * (1.0 - g * g);
                dzg[3 * units + j] = d_o * o * (1.0 - o);
            }
        }
        if t > 0 {
            let dzt = &dz[t * batch * g4..(t + 1) * batch * g4];
            gemm(false, false, batch, units, g4, 1.0, dzt, p.r.value.data(), 0.0, &mut dh_rec);
        }
    }

    let mut dw = vec![0.0; g4 * d];
    gemm(true, false, g4, d, rows, 1.0, &dz, &cache.input, 0.0, &mut dw);
    let mut dr = vec![0.0; g4 * units];
    if steps > 1 {
        let k = (steps - 1) * batch;
        gemm(true, false, g4, units, k, 1.0, &dz[batch * g4..], &cache.hidden[..k * units], 0.0, &mut dr);
    }
    let mut db = vec![0.0; g4];
    for row in dz.chunks_exact(g4) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut dx = vec![0.0; rows * d];
    gemm(false, false, rows, d, g4, 1.0, &dz, p.w.value.data(), 0.0, &mut dx);

    let dx_shape: Vec<usize> = if cache.batched {
        vec![steps, batch, d]
    } else {
        vec![steps, d]
    };
    Ok(LstmGrads {
        dx: Tensor::from_vec(&dx_shape, dx)?,
        dw: Tensor::from_vec(&[g4, d], dw)?,
        dr: Tensor::from_vec(&[g4, units], dr)?,
        db: Tensor::from_vec(&[g4], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(d: usize, u: usize, seed: u64) -> LstmParams {
        let mut rng = SeededStream::new(seed, 0, 0, 0);
        let mut p = LstmParams::init("l", d, u, &mut rng);
        fill_uniform(&mut p.b.value, 0.5, &mut rng);
        p
    }

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = SeededStream::new(seed, 1, 0, 0);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
    }

    /// Straight-line single-sequence reference with explicit loops.
    fn reference_forward(x: &[f64], t_len: usize, d: usize, p: &LstmParams) -> Vec<f64> {
        let u = p.units();
        let (w, r, b) = (p.w.value.data(), p.r.value.data(), p.b.value.data());
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        let mut out = Vec::new();
        for t in 0..t_len {
            let mut z = vec![0.0; 4 * u];
            for row in 0..4 * u {
                let mut s = b[row];
                for k in 0..d {
                    s += w[row * d + k] * x[t * d + k];
                }
                for k in 0..u {
                    s += r[row * u + k] * h[k];
                }
                z[row] = s;
            }
            for j in 0..u {
                let i = 1.0 / (1.0 + (-z[j]).exp());
                let f = 1.0 / (1.0 + (-z[u + j]).exp());
                let g = z[2 * u + j].tanh();
                let o = 1.0 / (1.0 + (-z[3 * u + j]).exp());
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            out.extend_from_slice(&h);
        }
        out
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let p = LstmParams::zeros("l", 3, 4);
        let x = random_input(&[6, 3], 2);
        let (h, _) = lstm_forward(&x, &p).unwrap();
        assert!(h.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_step_matches_closed_form() {
        let mut p = LstmParams::zeros("l", 1, 1);
        p.w.value.data_mut().copy_from_slice(&[0.5, -0.3, 0.8, 0.2]);
        p.b.value.data_mut().copy_from_slice(&[0.1, 0.0, -0.2, 0.05]);
        let x = 1.5;
        let (h, _) = lstm_forward(&Tensor::from_vec(&[1, 1], vec![x]).unwrap(), &p).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2_f64).tanh();
        let o = s(0.2 * x + 0.05);
        let expected = o * (i * g).tanh();
        assert!((h.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn batched_forward_matches_reference() {
        let (t, b, d, u) = (7, 3, 4, 5);
        let p = random_params(d, u, 5);
        let x = random_input(&[t, b, d], 6);
        let (h, _) = lstm_forward(&x, &p).unwrap();
        for bi in 0..b {
            let seq: Vec<f64> = (0..t)
                .flat_map(|ti| x.data()[(ti * b + bi) * d..(ti * b + bi + 1) * d].to_vec())
                .collect();
            let expect = reference_forward(&seq, t, d, &p);
            for ti in 0..t {
                for j in 0..u {
                    let got = h.data()[(ti * b + bi) * u + j];
                    assert!((got - expect[ti * u + j]).abs() < 1e-12);
                }
            }
        }
    }

    fn weighted_loss(h: &Tensor, probe: &[f64]) -> f64 {
        h.data().iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn gradients_match_central_differences() {
        let (t, d, u) = (4, 3, 5);
        let mut p = random_params(d, u, 9);
        let x = random_input(&[t, d], 10);
        let probe: Vec<f64> = random_input(&[t, u], 11).into_data();
        let (_, cache) = lstm_forward(&x, &p).unwrap();
        let dh = Tensor::from_vec(&[t, u], probe.clone()).unwrap();
        let grads = lstm_backward(&dh, &cache, &p).unwrap();

        let step = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        let mut worst: f64 = 0.0;
        for (which, analytic) in [(0, &grads.dw), (1, &grads.dr), (2, &grads.db)] {
            for idx in 0..analytic.len() {
                let orig = p.params()[which].value.data()[idx];
                p.params_mut()[which].value.data_mut()[idx] = orig + step;
                let up = weighted_loss(&lstm_forward(&x, &p).unwrap().0, &probe);
                p.params_mut()[which].value.data_mut()[idx] = orig - step;
                let down = weighted_loss(&lstm_forward(&x, &p).unwrap().0, &probe);
                p.params_mut()[which].value.data_mut()[idx] = orig;
                worst = worst.max(rel(analytic.data()[idx], (up - down) / (2.0 * step)));
            }
        }
        let mut xm = x.clone();
        for idx in 0..x.len() {
            let orig = x.data()[idx];
            xm.data_mut()[idx] = orig + step;
            let up = weighted_loss(&lstm_forward(&xm, &p).unwrap().0, &probe);
            xm.data_mut()[idx] = orig - step;
            let down = weighted_loss(&lstm_forward(&xm, &p).unwrap().0, &probe);
            xm.data_mut()[idx] = orig;
            worst = worst.max(rel(grads.dx.data()[idx], (up - down) / (2.0 * step)));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = random_params(3, 4, 1);
        let x = random_input(&[5, 2, 3], 2);
        let (_, cache) = lstm_forward(&x, &p).unwrap();
        let g = lstm_backward(&Tensor::zeros(&[5, 2, 4]), &cache, &p).unwrap();
        for t in [&g.dx, &g.dw, &g.dr, &g.db] {
            assert!(t.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let p = random_params(3, 4, 3);
        let x = random_input(&[5, 3], 4);
        let (_, cache) = lstm_forward(&x, &p).unwrap();
        let dh = random_input(&[5, 4], 5);
        let mut dh2 = dh.clone();
        dh2.scale(2.0);
        let g1 = lstm_backward(&dh, &cache, &p).unwrap();
        let g2 = lstm_backward(&dh2, &cache, &p).unwrap();
        for (a, b) in [(&g1.dx, &g2.dx), (&g1.dw, &g2.dw), (&g1.dr, &g2.dr), (&g1.db, &g2.db)] {
            for (x1, x2) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x1 - x2).abs() <= 1e-12 * x2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shape_mismatches_are_reported() {
        let p = random_params(3, 4, 1);
        assert!(matches!(lstm_forward(&Tensor::zeros(&[5, 2]), &p), Err(Error::Shape(_))));
        let (_, cache) = lstm_forward(&Tensor::zeros(&[5, 3]), &p).unwrap();
        assert!(matches!(
            lstm_backward(&Tensor::zeros(&[4, 4]), &cache, &p),
            Err(Error::State(_))
        ));
    }
}
