//! Trains one two-class model per color pair and picks the most accurate.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::classifier::config::{ModelConfig, TrainConfig};
use crate::classifier::train::train_two_phase;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_accuracy, evaluate, format_percent, groups_from_split, EvalRow};
use crate::session::{split_seen_unseen, Color, SplitCounts, Trial};

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub pair: (Color, Color),
    pub best_epoch: usize,
    pub rows: Vec<EvalRow>,
    pub accuracy: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScan {
    pub best: (Color, Color),
    /// Pairs in label order: (0,1), (0,2), ... (2,3).
    pub table: Vec<PairResult>,
}

impl PairScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("first,second,best_epoch,accuracy\n");
        for r in &self.table {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.pair.0,
                r.pair.1,
                r.best_epoch,
                format_percent(r.accuracy)
            );
        }
        s
    }
}

/// Every pair is trained on its own seeded split with identical seeds and
/// scored by the unweighted seen/unseen row average. Ties go to the first
/// pair in label order.
pub fn select_best_pair(
    trials: &[Trial],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    counts: SplitCounts,
    split_seed: u64,
) -> Result<PairScan> {
    let present: Vec<Color> = Color::ALL
        .into_iter()
        .filter(|c| trials.iter().any(|t| t.color == *c))
        .collect();
    if present.len() < 2 {
        return Err(Error::Data("pair scan needs at least two colors".into()));
    }
    let mut table = Vec::new();
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            let subset: Vec<Trial> = trials
                .iter()
                .filter(|t| t.color == a || t.color == b)
                .cloned()
                .collect();
            let split = split_seen_unseen(&subset, counts, split_seed).map_err(|e| match e {
                Error::Count(msg) => Error::Count(format!("pair {a}/{b}: {msg}")),
                other => other,
            })?;
            let cfg = ModelConfig {
                classes: vec![a, b],
                ..model_cfg.clone()
            };
            let outcome = train_two_phase(&split.train, &cfg, train_cfg, None)?;
            let rows = evaluate(&outcome.model, &groups_from_split(&split, &cfg.classes))?;
            table.push(PairResult {
                pair: (a, b),
                best_epoch: outcome.report.best_epoch,
                accuracy: aggregate_accuracy(&rows)?,
                rows,
            });
        }
    }
    let mut best = 0;
    for (i, r) in table.iter().enumerate() {
        if r.accuracy > table[best].accuracy {
            best = i;
        }
    }
    Ok(PairScan {
        best: table[best].pair,
        table,
    })
}
