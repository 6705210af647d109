//! Deterministic class-conditional synthetic trials.
//!
//! Trial `(class, index)` draws from the ChaCha20 stream keyed by
//! `(seed, SYNTH, class, index)` in this order: phase `φ` (uniform in
//! `[0, 2π)`), attention level (uniform integer in 40..=100), then one
//! standard normal per sample. Samples are
//! `round(amplitude · sin(2π f n / 512 + φ) + noise_std · z_n)` clipped to
//! the signed 16-bit range.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{domain, SeededStream};
use crate::session::{Color, Trial, TRIAL_SAMPLES};

pub const SYNTH_SUBJECT: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Tone frequency in Hz for each class id.
    pub class_frequencies: [f64; 4],
    /// ADC counts.
    pub amplitude: f64,
    /// ADC counts.
    pub noise_std: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            class_frequencies: [6.0, 10.0, 15.0, 22.0],
            amplitude: 256.0,
            noise_std: 32.0,
            sample_rate: 512.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Param(format!("bad sample rate {}", self.sample_rate)));
        }
        for (i, f) in self.class_frequencies.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0 && *f < nyquist) {
                return Err(Error::Param(format!(
                    "class {i} frequency {f} Hz must lie in (0, {nyquist})"
                )));
            }
            if self.class_frequencies[..i].contains(f) {
                return Err(Error::Param(format!("class frequency {f} Hz is repeated")));
            }
        }
        // zero amplitude is allowed: it yields pure noise (or silence)
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::Param(format!("bad amplitude {}", self.amplitude)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Param(format!("bad noise std {}", self.noise_std)));
        }
        Ok(())
    }
}

pub fn generate_trial(config: &SynthConfig, class_id: u8, trial_index: u64) -> Result<Trial> {
    let color = Color::from_label(class_id)?;
    config.validate()?;
    let mut rng = SeededStream::new(config.seed, domain::SYNTH, class_id as u64, trial_index);
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let attention_level = rng.int_inclusive(40, 100) as u8;
    let freq = config.class_frequencies[class_id as usize];
    let step = 2.0 * PI * freq / config.sample_rate;
    let samples = (0..TRIAL_SAMPLES)
        .map(|n| {
            let noise = rng.standard_normal() * config.noise_std;
            let v = (config.amplitude * (step * n as f64 + phase).sin() + noise).round();
            v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    Trial::new(samples, color, attention_level, 0, SYNTH_SUBJECT, 0)
}

/// `per_class` trials for each listed class, grouped by class in list order.
pub fn generate_dataset(config: &SynthConfig, classes: &[Color], per_class: usize) -> Result<Vec<Trial>> {
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for c in classes {
        for i in 0..per_class {
            out.push(generate_trial(config, c.label(), i as u64)?);
        }
    }
    Ok(out)
}
