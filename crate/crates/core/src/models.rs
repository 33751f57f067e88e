//! The two per-appliance networks and the bundle that pairs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{Scaler, LOOKBACK};
use crate::nn::{Activation, Init, LayerSpec, Network, NnError, Real};
use crate::signature::{ApplianceParams, OffStats};

/// Trainable parameter budget for one appliance (classifier + regressor).
pub const PARAM_BUDGET: usize = 70_000;

/// Classifier budget on its own.
pub const CLASSIFIER_BUDGET: usize = 40_000;

pub const LSTM_UNITS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("window length {0} is too short for the classifier stack")]
    WindowTooSmall(usize),
    #[error("{what} has {count} trainable parameters, budget is {budget}")]
    OverBudget {
        what: &'static str,
        count: usize,
        budget: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub fn classifier_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv1d { filters: 16, kernel: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::Conv1d { filters: 32, kernel: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::Dense { units: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ]
}

pub fn regressor_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Lstm {
            units: LSTM_UNITS,
            activation: Activation::Relu,
            return_sequences: true,
        },
        LayerSpec::Lstm {
            units: LSTM_UNITS,
            activation: Activation::Relu,
            return_sequences: false,
        },
        LayerSpec::Dense { units: 1 },
    ]
}

/// 1D-CNN on/off classifier over a `[window, 1]` mains window.
pub fn build_classifier<F: Real>(window: usize, seed: u64) -> Result<Network<F>, ModelError> {
    build_classifier_with(window, seed, Init::Seeded)
}

pub fn build_classifier_with<F: Real>(window: usize, seed: u64, init: Init) -> Result<Network<F>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::build(&[window, 1], &classifier_layers(), init, &mut rng)
        .map_err(|_| ModelError::WindowTooSmall(window))?;
    check_budget("classifier", &net, CLASSIFIER_BUDGET)?;
    Ok(net)
}

/// Stacked LSTM power regressor over `LOOKBACK` scaled state indices.
pub fn build_regressor<F: Real>(seed: u64) -> Result<Network<F>, ModelError> {
    build_regressor_with(seed, Init::Seeded)
}

pub fn build_regressor_with<F: Real>(seed: u64, init: Init) -> Result<Network<F>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Network::build(&[LOOKBACK, 1], &regressor_layers(), init, &mut rng)?)
}

pub fn param_count<F: Real>(network: &Network<F>) -> usize {
    network.param_count()
}

fn check_budget<F: Real>(what: &'static str, net: &Network<F>, budget: usize) -> Result<(), ModelError> {
    let count = net.param_count();
    if count > budget {
        return Err(ModelError::OverBudget { what, count, budget });
    }
    Ok(())
}

/// Everything needed to disaggregate one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub appliance: String,
    /// Sampling period the models were trained at, seconds.
    pub period: u32,
    pub classifier: Network<f32>,
    pub regressor: Network<f32>,
    pub mains_scaler: Scaler,
    pub power_scaler: Scaler,
    /// Divisor applied to run-length indices before the regressor.
    pub index_scale: f32,
    pub params: ApplianceParams,
    pub off: OffStats,
}

impl ModelBundle {
    pub fn window_len(&self) -> usize {
        self.classifier.input_shape.first().copied().unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.classifier.param_count() + self.regressor.param_count()
    }

    pub fn check_budget(&self) -> Result<(), ModelError> {
        let count = self.param_count();
        if count > PARAM_BUDGET {
            return Err(ModelError::OverBudget {
                what: "bundle",
                count,
                budget: PARAM_BUDGET,
            });
        }
        Ok(())
    }
}
