//! Minimal neural kernel: conv1d, max-pool, dense, LSTM, ReLU and softmax
//! layers with exact analytic gradients, two losses, an adaptive-moment
//! optimizer, and a finite-difference gradient checker.
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and
//! verifies itself in `f64`.

mod adam;
mod gradcheck;
mod layer;
mod loss;
mod lstm;
mod network;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{gradient_check, GradCheckReport, DEFAULT_STEP, RESOLUTION_FACTOR};
pub use layer::{softmax, Activation, Init, Layer, LayerSpec};
pub use loss::{loss, LossKind, PROB_EPSILON};
pub use network::Network;
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape error{}: {msg}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Shape { layer: Option<usize>, msg: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
