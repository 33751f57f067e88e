//! Layer kinds, their parameter layouts, and forward/backward passes.
//!
//! Activations are `[length, channels]` for sequence layers and flat for
//! dense layers. Parameter layouts follow the common Keras convention so
//! exported weights load into standard embedded runtimes:
//!
//! | kind   | tensors                                                     |
//! |--------|-------------------------------------------------------------|
//! | conv1d | `kernel [k, in_ch, filters]`, `bias [filters]`              |
//! | dense  | `kernel [in, units]`, `bias [units]`                        |
//! | lstm   | `kernel [in, 4u]`, `recurrent_kernel [u, 4u]`, `bias [4u]`  |
//!
//! LSTM gate blocks are ordered input, forget, candidate, output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm;
use super::tensor::{Real, Tensor};

/// Nonlinearity used by LSTM candidate and cell-output paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(F::zero()),
        }
    }

    /// Derivative expressed through the activation's output.
    pub(crate) fn grad_from_output<F: Real>(self, y: F) -> F {
        match self {
            Activation::Tanh => F::one() - y * y,
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Valid convolution, stride 1.
    Conv1d { filters: usize, kernel: usize },
    /// Non-overlapping max pooling, stride = width.
    MaxPool1d { width: usize },
    /// Fully connected; flattens its input.
    Dense { units: usize },
    Lstm {
        units: usize,
        activation: Activation,
        return_sequences: bool,
    },
    Relu,
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. } => &["kernel", "bias"],
            LayerSpec::Lstm { .. } => &["kernel", "recurrent_kernel", "bias"],
            _ => &[],
        }
    }

    /// Output shape and parameter shapes for a given input shape.
    pub fn resolve(&self, input: &[usize]) -> Result<(Vec<usize>, Vec<Vec<usize>>), String> {
        let seq = |what: &str| -> Result<(usize, usize), String> {
            match input {
                [len, ch] => Ok((*len, *ch)),
                _ => Err(format!("{what} expects a [length, channels] input, got {input:?}")),
            }
        };
        match *self {
            LayerSpec::Conv1d { filters, kernel } => {
                if filters == 0 || kernel == 0 {
                    return Err("conv1d needs positive filters and kernel".into());
                }
                let (len, ch) = seq("conv1d")?;
                if len < kernel {
                    return Err(format!("conv1d kernel {kernel} longer than input {len}"));
                }
                Ok((vec![len - kernel + 1, filters], vec![vec![kernel, ch, filters], vec![filters]]))
            }
            LayerSpec::MaxPool1d { width } => {
                if width == 0 {
                    return Err("maxpool1d width must be positive".into());
                }
                let (len, ch) = seq("maxpool1d")?;
                if len / width == 0 {
                    return Err(format!("maxpool1d width {width} exceeds input length {len}"));
                }
                Ok((vec![len / width, ch], vec![]))
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err("dense units must be positive".into());
                }
                let n: usize = input.iter().product();
                Ok((vec![units], vec![vec![n, units], vec![units]]))
            }
            LayerSpec::Lstm {
                units,
                return_sequences,
                ..
            } => {
                if units == 0 {
                    return Err("lstm units must be positive".into());
                }
                let (len, ch) = seq("lstm")?;
                let out = if return_sequences { vec![len, units] } else { vec![units] };
                Ok((out, vec![vec![ch, 4 * units], vec![units, 4 * units], vec![4 * units]]))
            }
            LayerSpec::Relu => Ok((input.to_vec(), vec![])),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(format!("softmax expects a flat input, got {input:?}"));
                }
                Ok((input.to_vec(), vec![]))
            }
        }
    }
}

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Fan-in scaled uniform weights, zero biases, unit LSTM forget bias.
    Seeded,
    /// Every parameter zero.
    Zeros,
}

/// A layer with resolved shapes and owned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub spec: LayerSpec,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub params: Vec<Tensor<F>>,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum Cache<F> {
    Input(Vec<F>),
    Pool(Vec<usize>),
    Output(Vec<F>),
    Lstm(lstm::LstmCache<F>),
}

impl<F: Real> Layer<F> {
    pub fn new<R: Rng>(spec: LayerSpec, input_shape: &[usize], init: Init, rng: &mut R) -> Result<Self, String> {
        let (output_shape, shapes) = spec.resolve(input_shape)?;
        let mut params: Vec<Tensor<F>> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        if init == Init::Seeded {
            match spec {
                LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. } => {
                    let fan_in = shapes[0][..shapes[0].len() - 1].iter().product::<usize>();
                    let limit = (6.0 / fan_in as f64).sqrt();
                    for w in params[0].data_mut() {
                        *w = F::lit(rng.random_range(-limit..limit));
                    }
                }
                LayerSpec::Lstm { units, .. } => {
                    let limit = 1.0 / (units as f64).sqrt();
                    for t in &mut params[..2] {
                        for w in t.data_mut() {
                            *w = F::lit(rng.random_range(-limit..limit));
                        }
                    }
                    params[2].data_mut()[units..2 * units].iter_mut().for_each(|b| *b = F::one());
                }
                _ => {}
            }
        }
        Ok(Self {
            spec,
            input_shape: input_shape.to_vec(),
            output_shape,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<G: Real>(&self) -> Layer<G> {
        Layer {
            spec: self.spec.clone(),
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn forward(&self, x: &[F]) -> (Vec<F>, Cache<F>) {
        match self.spec {
            LayerSpec::Conv1d { filters, kernel } => {
                let ch = self.input_shape[1];
                let out_len = self.output_shape[0];
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let mut y = Vec::with_capacity(out_len * filters);
                for _ in 0..out_len {
                    y.extend_from_slice(b);
                }
                for t in 0..out_len {
                    let yt = &mut y[t * filters..(t + 1) * filters];
                    for k in 0..kernel {
                        for c in 0..ch {
                            let xv = x[(t + k) * ch + c];
                            let row = &w[(k * ch + c) * filters..(k * ch + c + 1) * filters];
                            for (yo, &wv) in yt.iter_mut().zip(row) {
                                *yo += xv * wv;
                            }
                        }
                    }
                }
                (y, Cache::Input(x.to_vec()))
            }
            LayerSpec::MaxPool1d { width } => {
                let ch = self.input_shape[1];
                let out_len = self.output_shape[0];
                let mut y = Vec::with_capacity(out_len * ch);
                let mut arg = Vec::with_capacity(out_len * ch);
                for t in 0..out_len {
                    for c in 0..ch {
                        let mut best = t * width * ch + c;
                        for k in 1..width {
                            let j = (t * width + k) * ch + c;
                            if x[j] > x[best] {
                                best = j;
                            }
                        }
                        y.push(x[best]);
                        arg.push(best);
                    }
                }
                (y, Cache::Pool(arg))
            }
            LayerSpec::Dense { units } => {
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let mut y = b.to_vec();
                for (i, &xv) in x.iter().enumerate() {
                    for (yo, &wv) in y.iter_mut().zip(&w[i * units..(i + 1) * units]) {
                        *yo += xv * wv;
                    }
                }
                (y, Cache::Input(x.to_vec()))
            }
            LayerSpec::Lstm {
                units,
                activation,
                return_sequences,
            } => {
                let cache = lstm::forward(
                    x,
                    self.input_shape[0],
                    self.input_shape[1],
                    units,
                    activation,
                    &self.params,
                );
                let y = cache.output(return_sequences);
                (y, Cache::Lstm(cache))
            }
            LayerSpec::Relu => (x.iter().map(|&v| v.max(F::zero())).collect(), Cache::Input(x.to_vec())),
            LayerSpec::Softmax => {
                let y = softmax(x);
                (y.clone(), Cache::Output(y))
            }
        }
    }

    /// Gradient w.r.t. the layer input; parameter gradients are added into
    /// `grads` (one tensor per parameter, same order).
    pub fn backward(&self, cache: &Cache<F>, dy: &[F], grads: &mut [Tensor<F>]) -> Vec<F> {
        match (&self.spec, cache) {
            (&LayerSpec::Conv1d { filters, kernel }, Cache::Input(x)) => {
                let ch = self.input_shape[1];
                let out_len = self.output_shape[0];
                let w = self.params[0].data();
                let mut dx = vec![F::zero(); x.len()];
                let (gw, gb) = grads.split_at_mut(1);
                let (gw, gb) = (gw[0].data_mut(), gb[0].data_mut());
                for t in 0..out_len {
                    let g = &dy[t * filters..(t + 1) * filters];
                    for (b, &gv) in gb.iter_mut().zip(g) {
                        *b += gv;
                    }
                    for k in 0..kernel {
                        for c in 0..ch {
                            let xi = (t + k) * ch + c;
                            let base = (k * ch + c) * filters;
                            let xv = x[xi];
                            let mut acc = F::zero();
                            for f in 0..filters {
                                gw[base + f] += xv * g[f];
                                acc += w[base + f] * g[f];
                            }
                            dx[xi] += acc;
                        }
                    }
                }
                dx
            }
            (&LayerSpec::MaxPool1d { .. }, Cache::Pool(arg)) => {
                let n: usize = self.input_shape.iter().product();
                let mut dx = vec![F::zero(); n];
                for (&j, &g) in arg.iter().zip(dy) {
                    dx[j] += g;
                }
                dx
            }
            (&LayerSpec::Dense { units }, Cache::Input(x)) => {
                let w = self.params[0].data();
                let (gw, gb) = grads.split_at_mut(1);
                let (gw, gb) = (gw[0].data_mut(), gb[0].data_mut());
                for (b, &g) in gb.iter_mut().zip(dy) {
                    *b += g;
                }
                let mut dx = Vec::with_capacity(x.len());
                for (i, &xv) in x.iter().enumerate() {
                    let row = &w[i * units..(i + 1) * units];
                    let grow = &mut gw[i * units..(i + 1) * units];
                    let mut acc = F::zero();
                    for j in 0..units {
                        grow[j] += xv * dy[j];
                        acc += row[j] * dy[j];
                    }
                    dx.push(acc);
                }
                dx
            }
            (
                &LayerSpec::Lstm {
                    units,
                    activation,
                    return_sequences,
                },
                Cache::Lstm(c),
            ) => lstm::backward(c, dy, units, activation, return_sequences, &self.params, grads),
            (LayerSpec::Relu, Cache::Input(x)) => x
                .iter()
                .zip(dy)
                .map(|(&xv, &g)| if xv > F::zero() { g } else { F::zero() })
                .collect(),
            (LayerSpec::Softmax, Cache::Output(p)) => {
                let dot: F = p.iter().zip(dy).map(|(&a, &b)| a * b).sum();
                p.iter().zip(dy).map(|(&pi, &g)| pi * (g - dot)).collect()
            }
            _ => unreachable!("cache does not match layer kind"),
        }
    }
}

/// Piecewise-linear decision pattern of a cached forward pass: ReLU signs
/// and pooling winners. Two parameter vectors with equal patterns lie on
/// the same smooth piece of the network function.
pub(crate) fn kink_pattern<F: Real>(layer: &Layer<F>, cache: &Cache<F>, out: &mut Vec<u64>) {
    match (&layer.spec, cache) {
        (LayerSpec::Relu, Cache::Input(x)) => out.extend(x.iter().map(|&v| u64::from(v > F::zero()))),
        (LayerSpec::MaxPool1d { .. }, Cache::Pool(arg)) => out.extend(arg.iter().map(|&a| a as u64)),
        (
            LayerSpec::Lstm {
                activation: Activation::Relu,
                ..
            },
            Cache::Lstm(c),
        ) => c.kink_pattern(out),
        _ => {}
    }
}

pub fn softmax<F: Real>(x: &[F]) -> Vec<F> {
    let m = x.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}
