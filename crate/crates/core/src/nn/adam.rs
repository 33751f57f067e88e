use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Moment accumulators mirroring a parameter list.
#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> OptimizerState<F> {
    pub fn new<'a, I>(config: AdamConfig, params: I) -> Self
    where
        I: IntoIterator<Item = &'a Tensor<F>>,
    {
        let m: Vec<Tensor<F>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected adaptive-moment update. Gradients are checked for
/// finiteness before anything is modified.
pub fn adam_step<'a, F, I>(params: I, grads: &[Tensor<F>], state: &mut OptimizerState<F>) -> Result<(), NnError>
where
    F: Real,
    I: IntoIterator<Item = &'a mut Tensor<F>>,
{
    if grads.len() != state.m.len() {
        return Err(NnError::Shape {
            layer: None,
            msg: format!("{} gradients for {} parameters", grads.len(), state.m.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NnError::NonFinite(format!("gradient tensor {i}")));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = F::lit(c.beta1);
    let b2 = F::lit(c.beta2);
    let one = F::one();
    let correction1 = F::lit(1.0 - c.beta1.powi(t));
    let correction2 = F::lit(1.0 - c.beta2.powi(t));
    let lr = F::lit(c.learning_rate);
    let eps = F::lit(c.epsilon);
    let mut n = 0;
    for (k, p) in params.into_iter().enumerate() {
        let (g, m, v) = (&grads[k], &mut state.m[k], &mut state.v[k]);
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(NnError::Shape {
                layer: None,
                msg: format!("parameter {k} shape {:?} vs gradient {:?}", p.shape(), g.shape()),
            });
        }
        for (((w, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        n += 1;
    }
    if n != grads.len() {
        return Err(NnError::Shape {
            layer: None,
            msg: format!("{n} parameters for {} gradients", grads.len()),
        });
    }
    Ok(())
}
