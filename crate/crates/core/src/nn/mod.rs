//! Dense `f64` kernels with hand-written backward passes.

pub mod activation;
pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
mod linalg;
pub mod lstm;
pub mod tensor;

pub use activation::{dropout, dropout_backward, leaky_relu, leaky_relu_grad};
pub use adam::{adam_step, AdamConfig};
pub use attention::{attention_backward, attention_pool, AttentionCache, AttentionParams};
pub use dense::{categorical_cross_entropy, cross_entropy_index, dense_logits, dense_softmax, softmax, DenseParams};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams};
pub use tensor::{Parameter, Tensor};
