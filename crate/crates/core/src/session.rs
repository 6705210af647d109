//! Labeled trials: persistence, quality filtering, windowing and splitting.
//!
//! # Dataset file format (version 1)
//!
//! Plain UTF-8 text, one record per line, every line terminated by `\n`.
//! The first line is the header `chromabci-trials v1`. Each following line
//! holds seven tab-separated fields:
//!
//! ```text
//! subject_id  captured_at_ms  label  color  attention  poor_signal  s0,s1,...,s2047
//! ```
//!
//! `label` must agree with `color` (red 0, blue 1, black 2, yellow 3). A file
//! whose last record lacks its newline is treated as truncated.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, ErrorKind as IoErrorKind, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{domain, SeededStream};

pub const TRIAL_SAMPLES: usize = 2048;
pub const STORE_HEADER: &str = "chromabci-trials v1";

/// Stimulus color; the discriminant is the class id / command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    Red = 0,
    Blue = 1,
    Black = 2,
    Yellow = 3,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Blue, Color::Black, Color::Yellow];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Result<Self> {
        Color::ALL
            .get(label as usize)
            .copied()
            .ok_or(Error::Class(label))
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Black => "black",
            Color::Yellow => "yellow",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "red" => Ok(Color::Red),
            "blue" => Ok(Color::Blue),
            "black" => Ok(Color::Black),
            "yellow" => Ok(Color::Yellow),
            other => Err(Error::Label(format!("unknown color {other:?}"))),
        }
    }
}

/// One labeled four-second recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub samples: Vec<i16>,
    pub color: Color,
    pub attention_level: u8,
    pub poor_signal: u8,
    pub subject_id: String,
    pub captured_at_ms: i64,
}

impl Trial {
    pub fn new(
        samples: Vec<i16>,
        color: Color,
        attention_level: u8,
        poor_signal: u8,
        subject_id: impl Into<String>,
        captured_at_ms: i64,
    ) -> Result<Self> {
        let trial = Self {
            samples,
            color,
            attention_level,
            poor_signal,
            subject_id: subject_id.into(),
            captured_at_ms,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn label(&self) -> u8 {
        self.color.label()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != TRIAL_SAMPLES {
            return Err(Error::Shape(format!(
                "trial has {} samples, expected {TRIAL_SAMPLES}",
                self.samples.len()
            )));
        }
        if self.attention_level > 100 {
            return Err(Error::Range(format!(
                "attention level {} exceeds 100",
                self.attention_level
            )));
        }
        if self.poor_signal > 200 {
            return Err(Error::Range(format!(
                "poor signal {} exceeds 200",
                self.poor_signal
            )));
        }
        if self.subject_id.contains(['\t', '\n', '\r']) {
            return Err(Error::Data(
                "subject id may not contain tabs or line breaks".into(),
            ));
        }
        Ok(())
    }

    fn max_abs_sample(&self) -> i32 {
        self.samples
            .iter()
            .map(|s| (*s as i32).abs())
            .max()
            .unwrap_or(0)
    }
}

/// Reshape of a 2048-sample trial into `rows × cols` (time steps × features).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowShape {
    rows: usize,
    cols: usize,
}

impl WindowShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.checked_mul(cols) != Some(TRIAL_SAMPLES) {
            return Err(Error::Shape(format!(
                "window {rows}x{cols} does not hold {TRIAL_SAMPLES} samples"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl Default for WindowShape {
    fn default() -> Self {
        Self { rows: 256, cols: 8 }
    }
}

impl fmt::Display for WindowShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for WindowShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Shape(format!("expected ROWSxCOLS, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Shape(format!("expected ROWSxCOLS, got {s:?}")))
        };
        WindowShape::new(parse(r)?, parse(c)?)
    }
}

/// Row-major reshape: element `(i, j)` is `samples[i * cols + j]`.
pub fn window_trial(samples: &[i16], shape: WindowShape) -> Result<Vec<Vec<f64>>> {
    if samples.len() != TRIAL_SAMPLES {
        return Err(Error::Shape(format!(
            "expected {TRIAL_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    Ok(samples
        .chunks_exact(shape.cols)
        .map(|row| row.iter().map(|&s| f64::from(s)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QualityFilter {
    pub max_poor_signal: u8,
    pub amplitude_limit: u16,
}

impl Default for QualityFilter {
    fn default() -> Self {
        Self {
            max_poor_signal: 50,
            amplitude_limit: 32767,
        }
    }
}

/// Keeps trials with acceptable contact quality and bounded amplitude.
///
/// Returns the kept trials in input order and the number rejected.
pub fn filter_quality(trials: Vec<Trial>, filter: QualityFilter) -> (Vec<Trial>, usize) {
    let before = trials.len();
    let kept: Vec<Trial> = trials
        .into_iter()
        .filter(|t| {
            t.poor_signal <= filter.max_poor_signal
                && t.max_abs_sample() <= i32::from(filter.amplitude_limit)
        })
        .collect();
    let rejected = before - kept.len();
    (kept, rejected)
}

fn format_record(trial: &Trial) -> String {
    let mut line = String::with_capacity(TRIAL_SAMPLES * 6 + 64);
    line.push_str(&format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t",
        trial.subject_id,
        trial.captured_at_ms,
        trial.label(),
        trial.color,
        trial.attention_level,
        trial.poor_signal
    ));
    for (i, s) in trial.samples.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&s.to_string());
    }
    line.push('\n');
    line
}

/// Appends one trial, writing the header first if the file is new or empty.
pub fn append_trial(path: &Path, trial: &Trial) -> Result<()> {
    append_trials(path, std::slice::from_ref(trial))
}

pub fn append_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    for t in trials {
        t.validate()?;
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let needs_header = file.metadata()?.len() == 0;
    let mut out = BufWriter::new(file);
    if needs_header {
        writeln!(out, "{STORE_HEADER}")?;
    }
    for t in trials {
        out.write_all(format_record(t).as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a fresh dataset file, replacing any existing one.
pub fn write_dataset(path: &Path, trials: &[Trial]) -> Result<()> {
    for t in trials {
        t.validate()?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{STORE_HEADER}")?;
    for t in trials {
        out.write_all(format_record(t).as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<Trial>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => f.read_to_string(&mut text)?,
        Err(e) if e.kind() == IoErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<Trial>> {
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(h) if h.trim_end_matches(['\n', '\r']) == STORE_HEADER => {}
        Some(h) => {
            return Err(Error::Record {
                index: 0,
                line: 1,
                reason: format!("unrecognized header {:?}", h.trim_end()),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut trials = Vec::new();
    for (index, raw) in lines.enumerate() {
        let line_no = index + 2;
        let record_err = |reason: String| Error::Record {
            index,
            line: line_no,
            reason,
        };
        let Some(line) = raw.strip_suffix('\n') else {
            return Err(record_err("truncated record (missing line terminator)".into()));
        };
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            return Err(record_err("empty record".into()));
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(record_err(format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |i: usize, what: &str| -> Result<i64> {
            fields[i]
                .parse::<i64>()
                .map_err(|_| record_err(format!("bad {what} {:?}", fields[i])))
        };
        let captured_at_ms = num(1, "timestamp")?;
        let label = num(2, "label")?;
        let color: Color = fields[3].parse().map_err(|e: Error| record_err(e.to_string()))?;
        if label != i64::from(color.label()) {
            return Err(record_err(format!(
                "label {label} does not match color {color}"
            )));
        }
        let attention = num(4, "attention level")?;
        let poor_signal = num(5, "poor signal")?;
        let samples = fields[6]
            .split(',')
            .map(|s| s.parse::<i16>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| record_err(format!("bad sample list: {e}")))?;
        if samples.len() != TRIAL_SAMPLES {
            return Err(record_err(format!(
                "expected {TRIAL_SAMPLES} samples, found {}",
                samples.len()
            )));
        }
        let attention_level = u8::try_from(attention)
            .ok()
            .filter(|a| *a <= 100)
            .ok_or_else(|| record_err(format!("attention level {attention} out of range")))?;
        let poor_signal = u8::try_from(poor_signal)
            .ok()
            .filter(|q| *q <= 200)
            .ok_or_else(|| record_err(format!("poor signal {poor_signal} out of range")))?;
        trials.push(Trial {
            samples,
            color,
            attention_level,
            poor_signal,
            subject_id: fields[0].to_string(),
            captured_at_ms,
        });
    }
    Ok(trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train_per_class: usize,
    pub seen_test_per_class: usize,
    pub unseen_test_per_class: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train_per_class: 80,
            seen_test_per_class: 50,
            unseen_test_per_class: 50,
        }
    }
}

/// Indices into the input slice; trials are grouped by class in label order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub seen_test: Vec<usize>,
    pub unseen_test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<Trial>,
    /// Drawn from `train`.
    pub seen_test: Vec<Trial>,
    /// Disjoint from `train`.
    pub unseen_test: Vec<Trial>,
}

/// Seeded per-class split into train, seen-test (a subset of train) and
/// unseen-test (disjoint from train) indices.
pub fn split_indices(trials: &[Trial], counts: SplitCounts, seed: u64) -> Result<SplitIndices> {
    if counts.seen_test_per_class > counts.train_per_class {
        return Err(Error::Count(format!(
            "seen test count {} exceeds train count {}",
            counts.seen_test_per_class, counts.train_per_class
        )));
    }
    let mut by_class: BTreeMap<Color, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        by_class.entry(t.color).or_default().push(i);
    }
    let needed = counts.train_per_class + counts.unseen_test_per_class;
    let mut out = SplitIndices::default();
    for (color, mut idx) in by_class {
        if idx.len() < needed {
            return Err(Error::Count(format!(
                "class {color} has {} trials, need {needed}",
                idx.len()
            )));
        }
        SeededStream::new(seed, domain::SPLIT, color.label() as u64, 0).shuffle(&mut idx);
        let train = &idx[..counts.train_per_class];
        out.train.extend_from_slice(train);
        out.seen_test
            .extend_from_slice(&train[..counts.seen_test_per_class]);
        out.unseen_test
            .extend_from_slice(&idx[counts.train_per_class..needed]);
    }
    Ok(out)
}

pub fn split_seen_unseen(trials: &[Trial], counts: SplitCounts, seed: u64) -> Result<Split> {
    let idx = split_indices(trials, counts, seed)?;
    let pick = |v: &[usize]| v.iter().map(|&i| trials[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&idx.train),
        seen_test: pick(&idx.seen_test),
        unseen_test: pick(&idx.unseen_test),
    })
}
