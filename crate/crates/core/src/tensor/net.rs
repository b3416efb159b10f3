use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation value.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer: `y = x · W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Flat gradient aligned with [`DenseNet::params`] ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape(Vec<f64>);

impl GradientTape {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GradientTape, scale: f64) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::shape(format!(
                "gradient lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input seen by each layer (the raw input, then masked activations).
    layer_inputs: Vec<Matrix>,
    /// Pre-activation values of every hidden layer.
    pre_activations: Vec<Matrix>,
    masks: Option<Vec<Matrix>>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Hidden-layer pre-activations, one `batch × width` matrix per layer.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }
}

/// Fully connected feed-forward network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
    activations: Vec<Activation>,
}

impl DenseNet {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        for layer in &mut net.layers {
            let (fan_in, fan_out) = layer.weights.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    /// Network whose weights and biases are all zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::contract(
                "a net needs at least input and output sizes",
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::contract(format!("zero-width layer in {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer {
                weights: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activations: vec![activation; sizes.len() - 2],
        })
    }

    /// Assembles a net from explicit layers; `activations` has one entry per
    /// hidden layer.
    pub fn from_layers(layers: Vec<DenseLayer>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a net needs at least one layer"));
        }
        if activations.len() != layers.len() - 1 {
            return Err(Error::contract(format!(
                "{} layers need {} activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        let mut sizes = vec![layers[0].weights.rows()];
        for (i, layer) in layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.weights.shape();
            if fan_in != *sizes.last().unwrap() {
                return Err(Error::shape(format!(
                    "layer {i} expects {fan_in} inputs but previous layer emits {}",
                    sizes.last().unwrap()
                )));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::shape(format!(
                    "layer {i} bias has {} entries for {fan_out} outputs",
                    layer.bias.len()
                )));
            }
            sizes.push(fan_out);
        }
        Ok(Self {
            sizes,
            layers,
            activations,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Widths of the hidden layers, in order.
    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Flat parameter vector: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} parameters supplied for a net with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.data_mut();
            w.copy_from_slice(&params[offset..offset + w.len()]);
            offset += w.len();
            let b = &mut layer.bias;
            let n = b.len();
            b.copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Copy of the net with `N(0, sigma²)` added to every parameter.
    pub fn perturbed(&self, sigma: f64, rng: &mut impl rand::Rng) -> Result<DenseNet> {
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| Error::contract(format!("noise scale {sigma}: {e}")))?;
        let mut params = self.params();
        for p in &mut params {
            *p += noise.sample(rng);
        }
        let mut out = self.clone();
        out.set_params(&params)?;
        Ok(out)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(input, None)?.output)
    }

    /// Forward pass with multiplicative masks on the hidden activations;
    /// `masks[l]` is `batch × hidden_l`.
    pub fn forward_masked(&self, input: &Matrix, masks: &[Matrix]) -> Result<Matrix> {
        Ok(self.forward_trace(input, Some(masks))?.output)
    }

    pub fn forward_trace(&self, input: &Matrix, masks: Option<&[Matrix]>) -> Result<ForwardTrace> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, net expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        if let Some(masks) = masks {
            let hidden = self.hidden_sizes();
            if masks.len() != hidden.len()
                || masks
                    .iter()
                    .zip(hidden)
                    .any(|(m, &h)| m.shape() != (input.rows(), h))
            {
                return Err(Error::shape(
                    "dropout masks do not match hidden layer shapes",
                ));
            }
        }
        let batch = input.rows();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len() - 1);
        let mut current = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(batch, layer.bias.len());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            super::matrix::gemm(1.0, &current, false, &layer.weights, false, 1.0, &mut z);
            let last = l + 1 == self.layers.len();
            layer_inputs.push(current);
            if last {
                current = z;
            } else {
                let act = self.activations[l];
                let mut h = z.map(|x| act.apply(x));
                if let Some(masks) = masks {
                    for (v, m) in h.data_mut().iter_mut().zip(masks[l].data()) {
                        *v *= m;
                    }
                }
                pre_activations.push(z);
                current = h;
            }
        }
        current.ensure_finite("network output")?;
        Ok(ForwardTrace {
            layer_inputs,
            pre_activations,
            masks: masks.map(|m| m.to_vec()),
            output: current,
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `loss_grad = ∂loss/∂output`. The net is not modified.
    pub fn backward(&self, input: &Matrix, loss_grad: &Matrix) -> Result<GradientTape> {
        let trace = self.forward_trace(input, None)?;
        self.backward_trace(&trace, loss_grad)
    }

    pub fn backward_trace(&self, trace: &ForwardTrace, loss_grad: &Matrix) -> Result<GradientTape> {
        if loss_grad.shape() != trace.output.shape() {
            return Err(Error::shape(format!(
                "loss gradient is {}x{}, output is {}x{}",
                loss_grad.rows(),
                loss_grad.cols(),
                trace.output.rows(),
                trace.output.cols()
            )));
        }
        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = loss_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &trace.layer_inputs[l];
            let mut gw = Matrix::zeros(layer.weights.rows(), layer.weights.cols());
            super::matrix::gemm(1.0, x, true, &delta, false, 0.0, &mut gw);
            let mut gb = vec![0.0; layer.bias.len()];
            for row in delta.iter_rows() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            grads.push((gw, gb));
            if l > 0 {
                let mut upstream = Matrix::zeros(delta.rows(), layer.weights.rows());
                super::matrix::gemm(1.0, &delta, false, &layer.weights, true, 0.0, &mut upstream);
                if let Some(masks) = &trace.masks {
                    for (u, m) in upstream.data_mut().iter_mut().zip(masks[l - 1].data()) {
                        *u *= m;
                    }
                }
                let act = self.activations[l - 1];
                for (u, z) in upstream
                    .data_mut()
                    .iter_mut()
                    .zip(trace.pre_activations[l - 1].data())
                {
                    *u *= act.derivative(*z);
                }
                delta = upstream;
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads.into_iter().rev() {
            flat.extend_from_slice(gw.data());
            flat.extend_from_slice(&gb);
        }
        let tape = GradientTape(flat);
        if !tape.is_finite() {
            return Err(Error::numeric("gradient contains non-finite values"));
        }
        Ok(tape)
    }
}
