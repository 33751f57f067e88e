use serde::{Deserialize, Serialize};

use super::layer::softmax;
use super::tensor::Real;
use super::NnError;

/// Floor applied to probabilities inside the log.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Cross-entropy over softmax(logits) against one-hot targets.
    CategoricalCrossEntropy,
    MeanSquaredError,
}

/// Loss of one sample and its gradient w.r.t. `predictions`.
///
/// For cross-entropy the predictions are logits; softmax is applied here.
pub fn loss<F: Real>(kind: LossKind, predictions: &[F], targets: &[F]) -> Result<(F, Vec<F>), NnError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(NnError::Shape {
            layer: None,
            msg: format!(
                "loss: {} predictions vs {} targets",
                predictions.len(),
                targets.len()
            ),
        });
    }
    match kind {
        LossKind::MeanSquaredError => {
            let n = F::lit(predictions.len() as f64);
            let mut total = F::zero();
            let grad = predictions
                .iter()
                .zip(targets)
                .map(|(&p, &y)| {
                    let d = p - y;
                    total += d * d;
                    F::lit(2.0) * d / n
                })
                .collect();
            Ok((total / n, grad))
        }
        LossKind::CategoricalCrossEntropy => {
            let p = softmax(predictions);
            let eps = F::lit(PROB_EPSILON);
            let value = -p
                .iter()
                .zip(targets)
                .map(|(&pi, &yi)| yi * pi.max(eps).ln())
                .sum::<F>();
            let grad = p.iter().zip(targets).map(|(&pi, &yi)| pi - yi).collect();
            Ok((value, grad))
        }
    }
}
