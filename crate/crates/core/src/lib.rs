//! Color-thought EEG pipeline: headset stream decoding, trial storage,
//! synthetic data, an LSTM + attention classifier trained from scratch,
//! evaluation tables and attention-gated drive control.

pub mod classifier;
pub mod drive;
pub mod error;
pub mod evaluation;
pub mod kv;
pub mod nn;
pub mod recording;
pub mod rng;
pub mod session;
pub mod synth;
pub mod thinkgear;

pub use error::{Error, ErrorKind, Result};
