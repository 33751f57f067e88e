use rand::Rng;

use super::layer::{kink_pattern, Cache, Init, Layer, LayerSpec};
use super::loss::{loss, LossKind};
use super::tensor::{Real, Tensor};
use super::NnError;

/// A feed-forward stack of layers with a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer<F>>,
}

impl<F: Real> Network<F> {
    pub fn build<R: Rng>(input_shape: &[usize], specs: &[LayerSpec], init: Init, rng: &mut R) -> Result<Self, NnError> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::new(spec.clone(), &shape, init, rng).map_err(|msg| NnError::Shape {
                layer: Some(i),
                msg,
            })?;
            shape = layer.output_shape.clone();
            layers.push(layer);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    /// A network with no layers; its output is its input.
    pub fn empty(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: Vec::new(),
        }
    }

    /// Rebuild from specs and explicit parameter tensors, checking shapes.
    pub fn from_parts(input_shape: &[usize], parts: Vec<(LayerSpec, Vec<Tensor<F>>)>) -> Result<Self, NnError> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(parts.len());
        for (i, (spec, params)) in parts.into_iter().enumerate() {
            let (out, shapes) = spec.resolve(&shape).map_err(|msg| NnError::Shape {
                layer: Some(i),
                msg,
            })?;
            let got: Vec<&[usize]> = params.iter().map(|t| t.shape()).collect();
            if got.len() != shapes.len() || got.iter().zip(&shapes).any(|(a, b)| *a != b.as_slice()) {
                return Err(NnError::Shape {
                    layer: Some(i),
                    msg: format!("parameter shapes {got:?}, expected {shapes:?}"),
                });
            }
            layers.push(Layer {
                spec,
                input_shape: shape.clone(),
                output_shape: out.clone(),
                params,
            });
            shape = out;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.output_shape)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Zeroed gradient buffers, one per parameter tensor.
    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.params().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }

    fn check_input(&self, input: &[F]) -> Result<(), NnError> {
        let n: usize = self.input_shape.iter().product();
        if input.len() != n {
            return Err(NnError::Shape {
                layer: Some(0),
                msg: format!("input has {} values, expected {:?}", input.len(), self.input_shape),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NnError::Shape {
                layer: Some(0),
                msg: format!("input shape {:?}, expected {:?}", input.shape(), self.input_shape),
            });
        }
        let out = self.forward_slice(input.data())?;
        Tensor::new(self.output_shape().to_vec(), out)
    }

    /// Forward pass over a flat input.
    pub fn forward_slice(&self, input: &[F]) -> Result<Vec<F>, NnError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x).0;
        }
        Ok(x)
    }

    /// Forward through the first `upto` layers, keeping caches.
    fn forward_cached(&self, input: &[F], upto: usize) -> (Vec<F>, Vec<Cache<F>>) {
        let mut x = input.to_vec();
        let mut caches = Vec::with_capacity(upto);
        for layer in &self.layers[..upto] {
            let (y, c) = layer.forward(&x);
            caches.push(c);
            x = y;
        }
        (x, caches)
    }

    /// Number of leading layers whose output feeds the loss. A trailing
    /// softmax is folded into cross-entropy.
    fn loss_depth(&self, kind: LossKind) -> usize {
        let n = self.layers.len();
        match (kind, self.layers.last()) {
            (LossKind::CategoricalCrossEntropy, Some(l)) if l.spec == LayerSpec::Softmax => n - 1,
            _ => n,
        }
    }

    /// Loss of one sample (no gradients).
    pub fn sample_loss(&self, input: &[F], target: &[F], kind: LossKind) -> Result<F, NnError> {
        self.check_input(input)?;
        let (out, _) = self.forward_cached(input, self.loss_depth(kind));
        Ok(loss(kind, &out, target)?.0)
    }

    /// Backpropagate one sample, adding `scale ·` its parameter gradients
    /// into `grads`. Returns the sample loss.
    pub fn accumulate_gradients(
        &self,
        input: &[F],
        target: &[F],
        kind: LossKind,
        scale: F,
        grads: &mut [Tensor<F>],
    ) -> Result<F, NnError> {
        self.check_input(input)?;
        let depth = self.loss_depth(kind);
        let (out, caches) = self.forward_cached(input, depth);
        let (value, mut dy) = loss(kind, &out, target)?;
        dy.iter_mut().for_each(|g| *g *= scale);
        let mut offset: usize = self.layers[..depth].iter().map(|l| l.params.len()).sum();
        for (layer, cache) in self.layers[..depth].iter().zip(&caches).rev() {
            offset -= layer.params.len();
            dy = layer.backward(cache, &dy, &mut grads[offset..offset + layer.params.len()]);
        }
        Ok(value)
    }

    /// Loss and exact parameter gradients for one sample.
    pub fn backward(&self, input: &Tensor<F>, target: &Tensor<F>, kind: LossKind) -> Result<(F, Vec<Tensor<F>>), NnError> {
        let mut grads = self.zero_grads();
        let value = self.accumulate_gradients(input.data(), target.data(), kind, F::one(), &mut grads)?;
        Ok((value, grads))
    }

    /// Piecewise-linear region identifier of the forward pass at `input`.
    pub fn kink_pattern(&self, input: &[F]) -> Vec<u64> {
        let (_, caches) = self.forward_cached(input, self.layers.len());
        let mut out = Vec::new();
        for (layer, cache) in self.layers.iter().zip(&caches) {
            kink_pattern(layer, cache, &mut out);
        }
        out
    }
}
