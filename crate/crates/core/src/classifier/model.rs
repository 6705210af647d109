//! The classifier stack:
//!
//! ```text
//! [T, D] ─▶ LSTM(U₁) ─▶ dropout ─▶ LeakyReLU ─▶ LSTM(U₂) ─▶ attention pool ─▶ dense softmax(K)
//! ```
//!
//! Both LSTMs emit their full hidden sequence. Batches are time-major
//! `[T, B, D]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::classifier::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::activation::{dropout, dropout_backward, leaky_relu_backward, leaky_relu_tensor};
use crate::nn::attention::{attention_backward, attention_pool, AttentionCache, AttentionParams};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::dense::{cross_entropy_index, dense_backward, dense_logits, softmax, DenseParams};
use crate::nn::gradcheck::Differentiable;
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmCache, LstmParams};
use crate::nn::{adam_step, AdamConfig, Parameter, Tensor};
use crate::rng::{domain, SeededStream};
use crate::session::{Color, Trial};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    lstm1: LstmParams,
    lstm2: LstmParams,
    attention: AttentionParams,
    output: DenseParams,
    adam_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub color: Color,
    pub probs: Vec<f64>,
    /// One weight per time step.
    pub attention_weights: Vec<f64>,
}

struct ForwardCache {
    lstm1: LstmCache,
    dropped: Tensor,
    mask: Tensor,
    training: bool,
    lstm2: LstmCache,
    attention: AttentionCache,
    context: Tensor,
}

/// Loss and hit count over one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// `argmax` with ties resolved to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Stacks trial samples into a time-major `[T, B, D]` batch of raw counts.
pub fn batch_tensor(trials: &[&Trial], config: &ModelConfig) -> Result<Tensor> {
    let (t, d) = (config.time_steps, config.features);
    let b = trials.len();
    if b == 0 {
        return Err(Error::Count("empty batch".into()));
    }
    let mut data = vec![0.0; t * b * d];
    for (bi, trial) in trials.iter().enumerate() {
        if trial.samples.len() != t * d {
            return Err(Error::Shape(format!(
                "trial has {} samples, model expects {t}x{d}",
                trial.samples.len()
            )));
        }
        for ti in 0..t {
            let src = &trial.samples[ti * d..(ti + 1) * d];
            let dst = &mut data[(ti * b + bi) * d..(ti * b + bi + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o = f64::from(*s);
            }
        }
    }
    Tensor::from_vec(&[t, b, d], data)
}

impl Model {
    /// Builds a freshly initialized model; the input must hold one trial.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Self::build_any_shape(config)
    }

    /// Like [`Model::build`] but accepts any `T × D`, for small test stacks.
    pub fn build_any_shape(config: ModelConfig) -> Result<Self> {
        config.validate_layers()?;
        let mut rng = SeededStream::new(config.seed, domain::INIT, 0, 0);
        let lstm1 = LstmParams::init("lstm1", config.features, config.lstm1_units, &mut rng);
        let lstm2 = LstmParams::init("lstm2", config.lstm1_units, config.lstm2_units, &mut rng);
        let attention =
            AttentionParams::init("attention", config.lstm2_units, config.attention_width, &mut rng);
        let output = DenseParams::init("output", config.lstm2_units, config.num_classes(), &mut rng);
        Ok(Self {
            config,
            lstm1,
            lstm2,
            attention,
            output,
            adam_steps: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v: Vec<&Parameter> = Vec::with_capacity(11);
        v.extend(self.lstm1.params());
        v.extend(self.lstm2.params());
        v.extend(self.attention.params());
        v.extend(self.output.params());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = Vec::with_capacity(11);
        v.extend(self.lstm1.params_mut());
        v.extend(self.lstm2.params_mut());
        v.extend(self.attention.params_mut());
        v.extend(self.output.params_mut());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn output_layer_mut(&mut self) -> &mut DenseParams {
        &mut self.output
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        let (t, d) = (self.config.time_steps, self.config.features);
        match *x.shape() {
            [xt, xd] if xt == t && xd == d => x.clone().reshape(&[t, 1, d]),
            [xt, _, xd] if xt == t && xd == d => Ok(x.clone()),
            ref other => Err(Error::Shape(format!(
                "model expects input [{t}, {d}] or [{t}, B, {d}], got {other:?}"
            ))),
        }
    }

    /// Returns logits `[B, K]`, attention weights `[B, T]` and the cache.
    fn forward(
        &self,
        x: &Tensor,
        dropout_rng: Option<&mut SeededStream>,
    ) -> Result<(Tensor, Tensor, ForwardCache)> {
        let mut xs = self.check_input(x)?;
        xs.scale(self.config.input_scale);
        let (h1, lstm1) = lstm_forward(&xs, &self.lstm1)?;
        let training = dropout_rng.is_some();
        let mut idle = SeededStream::new(0, 0, 0, 0);
        let rng = dropout_rng.unwrap_or(&mut idle);
        let (dropped, mask) = dropout(&h1, self.config.dropout_rate, training, rng)?;
        let activated = leaky_relu_tensor(&dropped, self.config.leaky_slope);
        let (h2, lstm2) = lstm_forward(&activated, &self.lstm2)?;
        let (context, weights, attention) = attention_pool(&h2, &self.attention)?;
        let logits = dense_logits(&context, &self.output)?;
        Ok((
            logits,
            weights,
            ForwardCache {
                lstm1,
                dropped,
                mask,
                training,
                lstm2,
                attention,
                context,
            },
        ))
    }

    /// Overwrites every parameter gradient with the backward pass of `dlogits`.
    fn backward(&mut self, cache: &ForwardCache, dlogits: &Tensor) -> Result<()> {
        let dense = dense_backward(&cache.context, dlogits, &self.output)?;
        let att = attention_backward(&dense.dc, &cache.attention, &self.attention)?;
        let l2 = lstm_backward(&att.dh, &cache.lstm2, &self.lstm2)?;
        let mut dh1 = leaky_relu_backward(&cache.dropped, &l2.dx, self.config.leaky_slope)?;
        if cache.training {
            dh1 = dropout_backward(&dh1, &cache.mask, self.config.dropout_rate)?;
        }
        let l1 = lstm_backward(&dh1, &cache.lstm1, &self.lstm1)?;

        self.output.w.grad = dense.dw;
        self.output.b.grad = dense.db;
        self.attention.w.grad = att.dw;
        self.attention.b.grad = att.db;
        self.attention.v.grad = att.dv;
        self.lstm2.w.grad = l2.dw;
        self.lstm2.r.grad = l2.dr;
        self.lstm2.b.grad = l2.db;
        self.lstm1.w.grad = l1.dw;
        self.lstm1.r.grad = l1.dr;
        self.lstm1.b.grad = l1.db;
        Ok(())
    }

    /// Mean cross-entropy and its logit gradient for a batch.
    fn batch_loss(&self, logits: &Tensor, labels: &[usize]) -> Result<(BatchStats, Tensor)> {
        let k = self.config.num_classes();
        let rows = logits.len() / k;
        if labels.len() != rows {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {rows}",
                labels.len()
            )));
        }
        let mut stats = BatchStats {
            count: rows,
            ..BatchStats::default()
        };
        let mut dlogits = Vec::with_capacity(rows * k);
        for (z, &y) in logits.data().chunks_exact(k).zip(labels) {
            let (loss, grad) = cross_entropy_index(z, y)?;
            stats.loss_sum += loss;
            if argmax(z) == y {
                stats.correct += 1;
            }
            dlogits.extend(grad.into_iter().map(|g| g / rows as f64));
        }
        Ok((stats, Tensor::from_vec(&[rows, k], dlogits)?))
    }

    /// One optimizer step on a batch with dropout active.
    pub fn train_batch(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        adam: &AdamConfig,
        dropout_rng: &mut SeededStream,
    ) -> Result<BatchStats> {
        let (logits, _, cache) = self.forward(x, Some(dropout_rng))?;
        let (stats, dlogits) = self.batch_loss(&logits, labels)?;
        if !stats.loss_sum.is_finite() {
            return Err(Error::Numeric("non-finite training loss".into()));
        }
        self.backward(&cache, &dlogits)?;
        self.adam_steps += 1;
        let step = self.adam_steps;
        adam_step(&mut self.parameters_mut(), step, adam)?;
        Ok(stats)
    }

    /// Inference loss and hit count for a batch.
    pub fn evaluate_batch(&self, x: &Tensor, labels: &[usize]) -> Result<BatchStats> {
        let (logits, _, _) = self.forward(x, None)?;
        Ok(self.batch_loss(&logits, labels)?.0)
    }

    /// Class probabilities for a batch, `[B, K]`, plus attention `[B, T]`.
    pub fn probabilities(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (logits, weights, _) = self.forward(x, None)?;
        Ok((softmax(&logits), weights))
    }

    /// Classifies one window `[T, D]` of raw counts.
    pub fn predict(&self, window: &Tensor) -> Result<Prediction> {
        if window.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "predict expects a [T, D] window, got {:?}",
                window.shape()
            )));
        }
        let (probs, weights) = self.probabilities(window)?;
        Ok(self.prediction_from(probs.into_data(), weights.into_data()))
    }

    fn prediction_from(&self, probs: Vec<f64>, attention_weights: Vec<f64>) -> Prediction {
        let class_index = argmax(&probs);
        Prediction {
            class_index,
            color: self.config.classes[class_index],
            probs,
            attention_weights,
        }
    }

    pub fn predict_trial(&self, trial: &Trial) -> Result<Prediction> {
        Ok(self.predict_trials(&[trial], 1)?.remove(0))
    }

    /// Batched inference in chunks of `chunk` trials.
    pub fn predict_trials(&self, trials: &[&Trial], chunk: usize) -> Result<Vec<Prediction>> {
        let k = self.config.num_classes();
        let t = self.config.time_steps;
        let mut out = Vec::with_capacity(trials.len());
        for group in trials.chunks(chunk.max(1)) {
            let x = batch_tensor(group, &self.config)?;
            let (probs, weights) = self.probabilities(&x)?;
            for (p, w) in probs.data().chunks_exact(k).zip(weights.data().chunks_exact(t)) {
                out.push(self.prediction_from(p.to_vec(), w.to_vec()));
            }
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let params = self.parameters();
        let tensors: Vec<(&str, &Tensor)> = params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
        write_checkpoint(out, &self.config.to_text(), &tensors)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Reads a checkpoint, validating every tensor against the embedded config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_from(BufReader::new(file))
    }

    fn read_from<R: std::io::Read>(input: R) -> Result<Self> {
        let ck = read_checkpoint(input)?;
        let config = ModelConfig::from_text(&ck.config)
            .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
        let mut model = Model::build(config)?;
        let mut params = model.parameters_mut();
        if params.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                params.len(),
                ck.tensors.len()
            )));
        }
        for (p, (name, tensor)) in params.iter_mut().zip(ck.tensors) {
            if p.name != name || p.value.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {:?} does not match {} {:?}",
                    tensor.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = tensor;
        }
        Ok(model)
    }
}

impl Differentiable for Model {
    fn parameters(&self) -> Vec<&Parameter> {
        Model::parameters(self)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        Model::parameters_mut(self)
    }

    fn loss(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let (logits, _, _) = self.forward(x, None)?;
        let (stats, _) = self.batch_loss(&logits, labels)?;
        Ok(stats.loss_sum / stats.count as f64)
    }

    fn loss_and_gradients(&mut self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let (logits, _, cache) = self.forward(x, None)?;
        let (stats, dlogits) = self.batch_loss(&logits, labels)?;
        self.backward(&cache, &dlogits)?;
        Ok(stats.loss_sum / stats.count as f64)
    }
}
