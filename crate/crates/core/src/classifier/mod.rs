//! The LSTM + attention color classifier and its training protocol.

pub mod config;
pub mod model;
pub mod pairscan;
pub mod train;

pub use config::{parse_classes, ModelConfig, TrainConfig};
pub use model::{argmax, batch_tensor, Model, Prediction};
pub use pairscan::{select_best_pair, PairResult, PairScan};
pub use train::{train_two_phase, EpochRecord, TrainOutcome, TrainReport};
