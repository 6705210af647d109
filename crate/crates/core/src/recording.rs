//! Turns a headset byte stream into labeled trials.

use std::io::Read;

use crate::error::{Error, Result};
use crate::session::{Color, Trial, TRIAL_SAMPLES};
use crate::thinkgear::{DataRow, FrameStats, Framer, ReplayMeta, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordConfig {
    pub color: Color,
    /// Capture length in seconds; every full 2048 samples become one trial.
    pub duration_s: f64,
    pub subject_id: String,
    pub captured_at_ms: i64,
    /// Consecutive rejected frames, with no good frame between them, that
    /// abort the capture.
    pub max_consecutive_drops: u64,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            color: Color::Red,
            duration_s: 4.0,
            subject_id: "unknown".into(),
            captured_at_ms: 0,
            max_consecutive_drops: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub trials: Vec<Trial>,
    pub stats: FrameStats,
}

fn rejected(s: &FrameStats) -> u64 {
    s.packets_dropped
}

/// Reads until `duration_s × rate` raw samples have arrived. Attention and
/// signal quality come from the latest rows seen when each trial completes,
/// defaulting to 0 and 200 (no contact) if the stream never carried them.
pub fn record<R: Read>(mut input: R, meta: &ReplayMeta, cfg: &RecordConfig) -> Result<RecordOutcome> {
    if meta.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::Data(format!(
            "capture declares {} Hz, trials need {SAMPLE_RATE_HZ} Hz",
            meta.sample_rate_hz
        )));
    }
    if !(cfg.duration_s.is_finite() && cfg.duration_s > 0.0) {
        return Err(Error::Param(format!("duration must be positive, got {}", cfg.duration_s)));
    }
    let wanted = (cfg.duration_s * f64::from(meta.sample_rate_hz)).round() as usize;
    if wanted < TRIAL_SAMPLES {
        return Err(Error::IncompleteTrial(format!(
            "{} s at {} Hz gives {wanted} samples, a trial needs {TRIAL_SAMPLES}",
            cfg.duration_s, meta.sample_rate_hz
        )));
    }
    let n_trials = wanted / TRIAL_SAMPLES;

    let mut framer = Framer::new();
    let mut trials = Vec::with_capacity(n_trials);
    let mut samples = Vec::with_capacity(TRIAL_SAMPLES);
    let mut attention = 0u8;
    let mut poor_signal = 200u8;
    let mut bad_run = 0u64;
    let mut buf = [0u8; 4096];

    'read: while trials.len() < n_trials {
        let n = match input.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        // Byte-at-a-time so the drop run is ordered exactly against good frames.
        for &byte in &buf[..n] {
            let before = rejected(&framer.stats());
            let packets = framer.push(&[byte]);
            bad_run += rejected(&framer.stats()) - before;
            if bad_run >= cfg.max_consecutive_drops {
                return Err(Error::StreamQuality(format!(
                    "{bad_run} consecutive frames rejected"
                )));
            }
            for packet in packets {
                bad_run = 0;
                for row in packet.rows {
                    match row {
                        DataRow::Attention(a) => attention = a,
                        DataRow::PoorSignal(q) => poor_signal = q,
                        DataRow::RawWave(v) => {
                            samples.push(v);
                            if samples.len() == TRIAL_SAMPLES {
                                trials.push(Trial {
                                    samples: std::mem::take(&mut samples),
                                    color: cfg.color,
                                    attention_level: attention,
                                    poor_signal,
                                    subject_id: cfg.subject_id.clone(),
                                    captured_at_ms: cfg.captured_at_ms,
                                });
                                if trials.len() == n_trials {
                                    break 'read;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if trials.len() < n_trials {
        return Err(Error::IncompleteTrial(format!(
            "stream ended after {} of {} trials ({} samples into the next)",
            trials.len(),
            n_trials,
            samples.len()
        )));
    }
    Ok(RecordOutcome {
        trials,
        stats: framer.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thinkgear::encode_packet;

    fn stream(n: usize) -> Vec<u8> {
        let mut out = encode_packet(&[DataRow::PoorSignal(10), DataRow::Attention(70)]).unwrap();
        for i in 0..n {
            out.extend(encode_packet(&[DataRow::RawWave(i as i16 - 1000)]).unwrap());
        }
        out
    }

    #[test]
    fn one_clean_capture_gives_one_trial() {
        let out = record(stream(2048).as_slice(), &ReplayMeta::default(), &RecordConfig::default()).unwrap();
        assert_eq!(out.trials.len(), 1);
        let t = &out.trials[0];
        assert_eq!(t.samples[0], -1000);
        assert_eq!(t.samples[2047], 1047);
        assert_eq!((t.attention_level, t.poor_signal), (70, 10));
        assert_eq!(out.stats.packets_dropped, 0);
    }

    #[test]
    fn short_duration_or_stream_is_incomplete() {
        let cfg = RecordConfig { duration_s: 3.0, ..RecordConfig::default() };
        assert!(matches!(
            record(stream(4096).as_slice(), &ReplayMeta::default(), &cfg),
            Err(Error::IncompleteTrial(_))
        ));
        assert!(matches!(
            record(stream(2000).as_slice(), &ReplayMeta::default(), &RecordConfig::default()),
            Err(Error::IncompleteTrial(_))
        ));
    }

    #[test]
    fn sustained_corruption_is_a_quality_error() {
        let mut bytes = Vec::new();
        for _ in 0..40 {
            let mut p = encode_packet(&[DataRow::RawWave(5)]).unwrap();
            *p.last_mut().unwrap() ^= 0xFF;
            bytes.extend(p);
        }
        bytes.extend(stream(2048));
        assert!(matches!(
            record(bytes.as_slice(), &ReplayMeta::default(), &RecordConfig::default()),
            Err(Error::StreamQuality(_))
        ));
    }

    #[test]
    fn wrong_declared_rate_is_rejected() {
        let meta = ReplayMeta { sample_rate_hz: 256, ..ReplayMeta::default() };
        assert!(record(stream(2048).as_slice(), &meta, &RecordConfig::default()).is_err());
    }
}
