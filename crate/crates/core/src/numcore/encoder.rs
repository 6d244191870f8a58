use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer `y = act(x·W + b)` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Feed-forward feature extractor producing `output_dim`-wide embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    layers: Vec<Layer>,
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`.
    inputs: Vec<Tensor2D>,
    /// Pre-activation output of each layer.
    pre: Vec<Tensor2D>,
    output: Tensor2D,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor2D {
        &self.output
    }
}

impl EncoderModel {
    /// Validates that layer widths chain and all parameters are finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("encoder needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} != output width {}",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Shape(format!("layer {i}: non-finite parameter")));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} expects width {}, previous layer produces {}",
                    layer.input_dim(),
                    layers[i - 1].output_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// MLP with relu hidden layers and an identity output layer. Weights are
    /// uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        if widths.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weight: Tensor2D::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                    activation: if i + 2 == widths.len() {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, batch: &Tensor2D) -> Result<Tensor2D> {
        Ok(self.forward_cached(batch)?.output)
    }

    pub fn forward_cached(&self, batch: &Tensor2D) -> Result<ForwardCache> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, encoder expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.matmul(&layer.weight)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let a = match layer.activation {
                Activation::Identity => z.clone(),
                Activation::Relu => {
                    let mut a = z.clone();
                    a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    a
                }
            };
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: x,
        })
    }

    /// Backpropagates `grad_output` (dL/d output) through the cached pass.
    /// Returns the flat parameter gradient, in [`Self::params_flat`] order.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor2D) -> Result<Vec<f64>> {
        if grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, output is {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                cache.output.rows(),
                cache.output.cols()
            )));
        }
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut grad = grad_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (g, z) in grad.data_mut().iter_mut().zip(cache.pre[l].data()) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let grad_w = cache.inputs[l].t_matmul(&grad)?;
            let mut grad_b = vec![0.0; layer.output_dim()];
            for row in grad.row_iter() {
                for (gb, g) in grad_b.iter_mut().zip(row) {
                    *gb += g;
                }
            }
            let mut flat = grad_w.into_data();
            flat.extend(grad_b);
            per_layer[l] = flat;
            if l > 0 {
                grad = grad.matmul_t(&layer.weight)?;
            }
        }
        Ok(per_layer.concat())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened layer by layer: weight (row-major), then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, encoder has {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weight.data().len();
            layer
                .weight
                .data_mut()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Applies `f(param, index)` in place to every parameter, in flat order.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for layer in &mut self.layers {
            for p in layer.weight.data_mut().iter_mut().chain(layer.bias.iter_mut()) {
                f(idx, p);
                idx += 1;
            }
        }
    }
}
