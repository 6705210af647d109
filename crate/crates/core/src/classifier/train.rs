//! Two-phase fitting: a validation scan locates the epoch with the lowest
//! validation loss, then a fresh model with the same seed is fit on all the
//! training trials for exactly that many epochs.

use std::fmt::Write as _;

use crate::classifier::config::{ModelConfig, TrainConfig};
use crate::classifier::model::{batch_tensor, BatchStats, Model};
use crate::error::{Error, Result};
use crate::rng::{domain, SeededStream};
use crate::session::Trial;

/// Inference batch size for validation and test passes.
pub const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's training batches, dropout active.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation scan curves; empty when the scan is disabled.
    pub phase1: Vec<EpochRecord>,
    pub phase2: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub final_train_acc: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn curves_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            fmt_opt(r.val_loss),
            fmt_opt(r.val_acc)
        );
    }
    s
}

impl TrainReport {
    /// Phase-1 curves, or the single fit's curves when no scan ran.
    pub fn curves_csv(&self) -> String {
        if self.phase1.is_empty() {
            curves_csv(&self.phase2)
        } else {
            curves_csv(&self.phase1)
        }
    }

    /// Refit curves; validation columns are empty.
    pub fn refit_csv(&self) -> String {
        curves_csv(&self.phase2)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// The scan model after its last epoch; `None` when the scan is disabled.
    pub phase1_final: Option<Model>,
    pub report: TrainReport,
}

/// Called after every completed epoch with the phase number (1 or 2).
pub type Progress<'a> = &'a mut dyn FnMut(usize, &EpochRecord);

/// Class index of every trial under the model's class list.
pub fn label_indices(trials: &[Trial], config: &ModelConfig) -> Result<Vec<usize>> {
    trials
        .iter()
        .map(|t| {
            config.class_index(t.color).ok_or_else(|| {
                Error::Label(format!("trial color {} is not a model class", t.color))
            })
        })
        .collect()
}

/// Stratified, seeded validation split. Returns sorted (train, validation)
/// index lists. Every class with at least two trials contributes at least one
/// validation trial and keeps at least one training trial.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for k in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        let n = idx.len();
        let n_val = if n < 2 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        SeededStream::new(seed, domain::VALIDATION, k as u64, 0).shuffle(&mut idx);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Inference loss and accuracy over `idx`.
pub fn evaluate_subset(
    model: &Model,
    trials: &[Trial],
    labels: &[usize],
    idx: &[usize],
) -> Result<(f64, f64)> {
    let mut total = BatchStats::default();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let refs: Vec<&Trial> = chunk.iter().map(|&i| &trials[i]).collect();
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let s = model.evaluate_batch(&batch_tensor(&refs, model.config())?, &y)?;
        total.loss_sum += s.loss_sum;
        total.correct += s.correct;
        total.count += s.count;
    }
    if total.count == 0 {
        return Err(Error::Count("no trials to evaluate".into()));
    }
    Ok((
        total.loss_sum / total.count as f64,
        total.correct as f64 / total.count as f64,
    ))
}

fn tag_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

/// One pass over `idx` in seeded shuffled order.
fn run_epoch(
    model: &mut Model,
    trials: &[Trial],
    labels: &[usize],
    idx: &[usize],
    cfg: &TrainConfig,
    phase: u64,
    epoch: usize,
) -> Result<(f64, f64)> {
    let mut order = idx.to_vec();
    SeededStream::new(cfg.seed, domain::SHUFFLE, phase, epoch as u64).shuffle(&mut order);
    let mut dropout_rng = SeededStream::new(model.config().seed, domain::DROPOUT, phase, epoch as u64);
    let mut total = BatchStats::default();
    for chunk in order.chunks(cfg.batch_size) {
        let refs: Vec<&Trial> = chunk.iter().map(|&i| &trials[i]).collect();
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let x = batch_tensor(&refs, model.config())?;
        let s = model
            .train_batch(&x, &y, &cfg.adam, &mut dropout_rng)
            .map_err(|e| tag_epoch(e, epoch))?;
        total.loss_sum += s.loss_sum;
        total.correct += s.correct;
        total.count += s.count;
    }
    Ok((
        total.loss_sum / total.count as f64,
        total.correct as f64 / total.count as f64,
    ))
}

/// Index of the lowest value, ties to the earliest; `None` for empty input.
pub fn argmin_earliest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v >= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn fit(
    model: &mut Model,
    trials: &[Trial],
    labels: &[usize],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
    phase: u64,
    epochs: usize,
    progress: &mut Option<Progress<'_>>,
) -> Result<Vec<EpochRecord>> {
    let mut records = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (train_loss, train_acc) = run_epoch(model, trials, labels, train_idx, cfg, phase, epoch)?;
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_subset(model, trials, labels, val_idx)?;
            if !l.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}: non-finite validation loss")));
            }
            (Some(l), Some(a))
        };
        let rec = EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        };
        if let Some(cb) = progress.as_mut() {
            cb(phase as usize, &rec);
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn train_two_phase(
    trials: &[Trial],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut progress: Option<Progress<'_>>,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let labels = label_indices(trials, model_cfg)?;
    let mut present = vec![false; model_cfg.num_classes()];
    for &y in &labels {
        present[y] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Data("training data must contain at least two classes".into()));
    }
    let all: Vec<usize> = (0..trials.len()).collect();

    let (phase1, phase1_final, best_epoch) = if train_cfg.epoch_scan {
        let (train_idx, val_idx) = stratified_split(
            &labels,
            model_cfg.num_classes(),
            train_cfg.val_fraction,
            train_cfg.seed,
        );
        let mut scan = Model::build(model_cfg.clone())?;
        let records = fit(
            &mut scan,
            trials,
            &labels,
            &train_idx,
            &val_idx,
            train_cfg,
            1,
            train_cfg.max_epochs,
            &mut progress,
        )?;
        let losses: Vec<f64> = records.iter().map(|r| r.val_loss.unwrap_or(f64::INFINITY)).collect();
        let best = argmin_earliest(&losses).map_or(1, |i| i + 1);
        (records, Some(scan), best)
    } else {
        (Vec::new(), None, train_cfg.max_epochs)
    };

    let mut model = Model::build(model_cfg.clone())?;
    let phase2 = fit(
        &mut model,
        trials,
        &labels,
        &all,
        &[],
        train_cfg,
        2,
        best_epoch,
        &mut progress,
    )?;
    let last = phase2.last().copied().expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        phase1_final,
        report: TrainReport {
            phase1,
            phase2,
            best_epoch,
            final_train_loss: last.train_loss,
            final_train_acc: last.train_acc,
        },
    })
}
