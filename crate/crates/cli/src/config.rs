//! Run configuration: defaults, then a `key = value` file, then flags.

use std::fs;
use std::path::Path;

use chromabci::classifier::{ModelConfig, TrainConfig};
use chromabci::drive::{ChassisConfig, SimConfig, DEFAULT_ATTENTION_THRESHOLD};
use chromabci::kv;
use chromabci::session::{QualityFilter, SplitCounts};
use chromabci::synth::SynthConfig;
use chromabci::{Error, Result};

/// Every tunable the subcommands read.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// Trials generated per class by `synth`.
    pub synth_per_class: usize,
    pub split: SplitCounts,
    pub split_seed: u64,
    pub quality: QualityFilter,
    pub chassis: ChassisConfig,
    pub threshold: u8,
    pub hold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitCounts::default();
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            synth_per_class: split.train_per_class + split.unseen_test_per_class,
            split,
            split_seed: 0,
            quality: QualityFilter::default(),
            chassis: ChassisConfig::default(),
            threshold: DEFAULT_ATTENTION_THRESHOLD,
            hold: 1.0,
        }
    }
}

impl RunConfig {
    /// Applies one setting. `seed` sets every seed at once.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => {
                let s: u64 = kv::parse_value(key, value)?;
                self.model.seed = s;
                self.train.seed = s;
                self.synth.seed = s;
                self.split_seed = s;
            }
            "model_seed" => self.model.seed = kv::parse_value(key, value)?,
            "synth_seed" => self.synth.seed = kv::parse_value(key, value)?,
            "split_seed" => self.split_seed = kv::parse_value(key, value)?,
            "class_frequencies" => {
                let f: Vec<f64> = value
                    .split(',')
                    .map(|v| kv::parse_value(key, v.trim()))
                    .collect::<Result<_>>()?;
                self.synth.class_frequencies = f
                    .try_into()
                    .map_err(|_| Error::Param("class_frequencies needs 4 values".into()))?;
            }
            "amplitude" => self.synth.amplitude = kv::parse_value(key, value)?,
            "noise_std" => self.synth.noise_std = kv::parse_value(key, value)?,
            "per_class" => self.synth_per_class = kv::parse_value(key, value)?,
            "train_per_class" => self.split.train_per_class = kv::parse_value(key, value)?,
            "seen_per_class" => self.split.seen_test_per_class = kv::parse_value(key, value)?,
            "unseen_per_class" => self.split.unseen_test_per_class = kv::parse_value(key, value)?,
            "max_poor_signal" => self.quality.max_poor_signal = kv::parse_value(key, value)?,
            "amplitude_limit" => self.quality.amplitude_limit = kv::parse_value(key, value)?,
            "wheel_speed" => self.chassis.wheel_speed = kv::parse_value(key, value)?,
            "track_width" => self.chassis.track_width = kv::parse_value(key, value)?,
            "threshold" => self.threshold = kv::parse_value(key, value)?,
            "hold" => self.hold = kv::parse_value(key, value)?,
            _ => {
                if !self.model.set(key, value)? && !self.train.set(key, value)? {
                    return Err(Error::Param(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        for (k, v) in kv::parse(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Checks every section, so no subcommand starts work on a bad setting.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        self.chassis.validate()?;
        if self.threshold > 100 {
            return Err(Error::Range(format!("threshold {} outside 0..=100", self.threshold)));
        }
        if !(self.hold.is_finite() && self.hold > 0.0) {
            return Err(Error::Param(format!("hold must be positive, got {}", self.hold)));
        }
        if self.split.seen_test_per_class > self.split.train_per_class {
            return Err(Error::Param("seen_per_class exceeds train_per_class".into()));
        }
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            threshold: self.threshold,
            hold: self.hold,
            chassis: self.chassis,
            ..SimConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chromabci::session::Color;

    #[test]
    fn seed_fans_out() {
        let mut c = RunConfig::default();
        c.set("seed", "9").unwrap();
        assert_eq!((c.model.seed, c.train.seed, c.synth.seed, c.split_seed), (9, 9, 9, 9));
        c.set("model_seed", "1").unwrap();
        assert_eq!(c.model.seed, 1);
    }

    #[test]
    fn model_and_train_keys_pass_through() {
        let mut c = RunConfig::default();
        c.set("lstm1_units", "16").unwrap();
        c.set("max_epochs", "3").unwrap();
        c.set("classes", "red,yellow").unwrap();
        c.set("shape", "512x4").unwrap();
        assert_eq!(c.model.lstm1_units, 16);
        assert_eq!(c.train.max_epochs, 3);
        assert_eq!(c.model.classes, vec![Color::Red, Color::Yellow]);
        assert_eq!((c.model.time_steps, c.model.features), (512, 4));
        c.validate().unwrap();
    }

    #[test]
    fn bad_keys_and_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("nope", "1"), Err(Error::Param(_))));
        assert!(matches!(c.set("threshold", "abc"), Err(Error::Param(_))));
        c.set("threshold", "150").unwrap();
        assert!(c.validate().is_err());
    }
}
