//! Per-color seen/unseen evaluation tables with exact accuracy arithmetic.

use std::fmt;
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::classifier::model::Model;
use crate::error::{Error, Result};
use crate::session::{Color, Split, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataType {
    Seen,
    Unseen,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Seen => "seen",
            DataType::Unseen => "unseen",
        })
    }
}

/// Test trials for one table row. All trials must carry `color`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestGroup {
    pub data_type: DataType,
    pub color: Color,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRow {
    /// 1-based row number.
    pub set_index: usize,
    pub data_type: DataType,
    pub color: Color,
    /// The color's command label.
    pub command: u8,
    pub n: u64,
    pub correct: u64,
    pub false_count: u64,
}

impl EvalRow {
    pub fn from_counts(set_index: usize, data_type: DataType, color: Color, n: u64, correct: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Count(format!("row {set_index} has no trials")));
        }
        if correct > n {
            return Err(Error::Count(format!("row {set_index}: {correct} correct out of {n}")));
        }
        Ok(Self {
            set_index,
            data_type,
            color,
            command: color.label(),
            n,
            correct,
            false_count: n - correct,
        })
    }

    pub fn accuracy(&self) -> Ratio<u64> {
        Ratio::new(self.correct, self.n)
    }
}

/// Seen rows for every class, then unseen rows, classes in the given order.
pub fn groups_from_split(split: &Split, classes: &[Color]) -> Vec<TestGroup> {
    let mut groups = Vec::new();
    for (data_type, pool) in [(DataType::Seen, &split.seen_test), (DataType::Unseen, &split.unseen_test)] {
        for &color in classes {
            groups.push(TestGroup {
                data_type,
                color,
                trials: pool.iter().filter(|t| t.color == color).cloned().collect(),
            });
        }
    }
    groups
}

/// One row per group, counting argmax hits.
pub fn evaluate(model: &Model, groups: &[TestGroup]) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        if g.trials.is_empty() {
            return Err(Error::Count(format!("{} {} group is empty", g.data_type, g.color)));
        }
        let truth = model
            .config()
            .class_index(g.color)
            .ok_or_else(|| Error::Label(format!("{} is not a model class", g.color)))?;
        let refs: Vec<&Trial> = g.trials.iter().collect();
        let preds = model.predict_trials(&refs, crate::classifier::train::EVAL_CHUNK)?;
        let correct = preds.iter().filter(|p| p.class_index == truth).count() as u64;
        rows.push(EvalRow::from_counts(i + 1, g.data_type, g.color, g.trials.len() as u64, correct)?);
    }
    Ok(rows)
}

/// Unweighted mean of the row accuracies.
pub fn aggregate_accuracy(rows: &[EvalRow]) -> Result<Ratio<u64>> {
    if rows.is_empty() {
        return Err(Error::Count("no rows to aggregate".into()));
    }
    let sum = rows
        .iter()
        .fold(Ratio::from_integer(0), |acc, r| acc + r.accuracy());
    Ok(sum / rows.len() as u64)
}

/// Total correct over total trials.
pub fn weighted_accuracy(rows: &[EvalRow]) -> Result<Ratio<u64>> {
    if rows.is_empty() {
        return Err(Error::Count("no rows to aggregate".into()));
    }
    let correct: u64 = rows.iter().map(|r| r.correct).sum();
    let n: u64 = rows.iter().map(|r| r.n).sum();
    Ok(Ratio::new(correct, n))
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Percentage text: exact when the decimal expansion ends within six
/// places, otherwise rounded to six.
pub fn format_percent(r: Ratio<u64>) -> String {
    let pct = r * 100;
    let (num, den) = (*pct.numer(), *pct.denom());
    let whole = num / den;
    let mut rem = num % den;
    let mut digits = String::new();
    while rem != 0 && digits.len() < 6 {
        rem *= 10;
        digits.push(char::from(b'0' + (rem / den) as u8));
        rem %= den;
    }
    if rem != 0 {
        return format!("{:.6}%", ratio_to_f64(r) * 100.0);
    }
    if digits.is_empty() {
        format!("{whole}%")
    } else {
        format!("{whole}.{digits}%")
    }
}

/// Entry `[i][j]` counts trials of true class `i` predicted as `j`.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != labels.len() {
        return Err(Error::Count(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= k || y >= k {
            return Err(Error::Label(format!("class index {} outside 0..{k}", p.max(y))));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

const HEADER: [&str; 8] = [
    "set",
    "data_type",
    "color",
    "command",
    "n",
    "correct",
    "false",
    "accuracy",
];

fn row_fields(r: &EvalRow) -> [String; 8] {
    [
        r.set_index.to_string(),
        r.data_type.to_string(),
        r.color.to_string(),
        r.command.to_string(),
        r.n.to_string(),
        r.correct.to_string(),
        r.false_count.to_string(),
        format_percent(r.accuracy()),
    ]
}

/// CSV with a trailing `average` line.
pub fn rows_csv(rows: &[EvalRow]) -> Result<String> {
    let avg = aggregate_accuracy(rows)?;
    let mut s = HEADER.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&row_fields(r).join(","));
        s.push('\n');
    }
    let _ = writeln!(s, "average,,,,,,,{}", format_percent(avg));
    Ok(s)
}

/// Aligned plain-text table with an average line.
pub fn rows_table(rows: &[EvalRow]) -> Result<String> {
    let avg = aggregate_accuracy(rows)?;
    let body: Vec<[String; 8]> = rows.iter().map(row_fields).collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for f in &body {
        for (w, cell) in widths.iter_mut().zip(f) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut s = line(&HEADER.map(String::from));
    s.push('\n');
    for f in &body {
        s.push_str(&line(f));
        s.push('\n');
    }
    let _ = writeln!(s, "average  {}", format_percent(avg));
    Ok(s)
}
