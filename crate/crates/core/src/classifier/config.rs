use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kv;
use crate::nn::activation::{check_rate, DEFAULT_DROPOUT_RATE, DEFAULT_LEAKY_SLOPE};
use crate::nn::AdamConfig;
use crate::session::{Color, WindowShape, TRIAL_SAMPLES};

/// Layer sizes and fixed hyperparameters of the classifier stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub time_steps: usize,
    pub features: usize,
    pub lstm1_units: usize,
    pub lstm2_units: usize,
    pub attention_width: usize,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    /// Multiplies raw ADC counts before the first layer.
    pub input_scale: f64,
    /// Output class `k` predicts `classes[k]`.
    pub classes: Vec<Color>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            time_steps: 256,
            features: 8,
            lstm1_units: 256,
            lstm2_units: 64,
            attention_width: 64,
            dropout_rate: DEFAULT_DROPOUT_RATE,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            input_scale: 1.0 / 256.0,
            classes: Color::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn with_shape(mut self, shape: WindowShape) -> Self {
        self.time_steps = shape.rows();
        self.features = shape.cols();
        self
    }

    pub fn window_shape(&self) -> Result<WindowShape> {
        WindowShape::new(self.time_steps, self.features)
    }

    pub fn class_index(&self, color: Color) -> Option<usize> {
        self.classes.iter().position(|c| *c == color)
    }

    /// Checks everything except the `T × D = 2048` trial constraint.
    pub fn validate_layers(&self) -> Result<()> {
        let dims = [
            ("time_steps", self.time_steps),
            ("features", self.features),
            ("lstm1_units", self.lstm1_units),
            ("lstm2_units", self.lstm2_units),
            ("attention_width", self.attention_width),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Param(format!("{name} must be positive")));
        }
        check_rate(self.dropout_rate)?;
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Param(format!("bad leaky slope {}", self.leaky_slope)));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Param(format!("bad input scale {}", self.input_scale)));
        }
        if !(2..=4).contains(&self.classes.len()) {
            return Err(Error::Param(format!(
                "need 2 to 4 classes, got {}",
                self.classes.len()
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Param(format!("class {c} listed twice")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_steps * self.features != TRIAL_SAMPLES {
            return Err(Error::Shape(format!(
                "input {}x{} does not hold {TRIAL_SAMPLES} samples",
                self.time_steps, self.features
            )));
        }
        self.validate_layers()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let classes: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        let _ = writeln!(s, "time_steps = {}", self.time_steps);
        let _ = writeln!(s, "features = {}", self.features);
        let _ = writeln!(s, "lstm1_units = {}", self.lstm1_units);
        let _ = writeln!(s, "lstm2_units = {}", self.lstm2_units);
        let _ = writeln!(s, "attention_width = {}", self.attention_width);
        let _ = writeln!(s, "dropout_rate = {}", self.dropout_rate);
        let _ = writeln!(s, "leaky_slope = {}", self.leaky_slope);
        let _ = writeln!(s, "input_scale = {}", self.input_scale);
        let _ = writeln!(s, "classes = {}", classes.join(","));
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in kv::parse(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Param(format!("unknown model key {k:?}")));
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting; returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "time_steps" => self.time_steps = kv::parse_value(key, value)?,
            "features" => self.features = kv::parse_value(key, value)?,
            "lstm1_units" => self.lstm1_units = kv::parse_value(key, value)?,
            "lstm2_units" => self.lstm2_units = kv::parse_value(key, value)?,
            "attention_width" => self.attention_width = kv::parse_value(key, value)?,
            "dropout_rate" => self.dropout_rate = kv::parse_value(key, value)?,
            "leaky_slope" => self.leaky_slope = kv::parse_value(key, value)?,
            "input_scale" => self.input_scale = kv::parse_value(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            "classes" => self.classes = parse_classes(value)?,
            "shape" => {
                let shape: WindowShape = value.parse()?;
                self.time_steps = shape.rows();
                self.features = shape.cols();
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parses a comma-separated color list, or a count `n` meaning the first `n`
/// colors in label order.
pub fn parse_classes(value: &str) -> Result<Vec<Color>> {
    if let Ok(n) = value.trim().parse::<usize>() {
        if !(2..=4).contains(&n) {
            return Err(Error::Param(format!("class count {n} outside 2..=4")));
        }
        return Ok(Color::ALL[..n].to_vec());
    }
    value.split(',').map(|c| c.parse()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    /// Run the validation scan to find the overfit epoch before refitting.
    /// When disabled, a single fit on all data runs for `max_epochs`.
    pub epoch_scan: bool,
    /// Seeds the validation split and the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 100,
            val_fraction: 0.2,
            epoch_scan: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Param("max_epochs must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Param(format!(
                "val_fraction {} must lie in (0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lr" => self.adam.lr = kv::parse_value(key, value)?,
            "beta1" => self.adam.beta1 = kv::parse_value(key, value)?,
            "beta2" => self.adam.beta2 = kv::parse_value(key, value)?,
            "epsilon" => self.adam.epsilon = kv::parse_value(key, value)?,
            "batch_size" => self.batch_size = kv::parse_value(key, value)?,
            "max_epochs" => self.max_epochs = kv::parse_value(key, value)?,
            "val_fraction" => self.val_fraction = kv::parse_value(key, value)?,
            "epoch_scan" => self.epoch_scan = kv::parse_value(key, value)?,
            "train_seed" => self.seed = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
