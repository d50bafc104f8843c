//! Dense feed-forward networks with reverse-mode weight gradients and
//! forward tangent propagation of input gradients.
//!
//! The engine is deliberately small: a stack of affine layers, each followed
//! by SELU or the identity. Three differentiation paths are provided:
//!
//! * [`DenseNet::backward`]: ∂loss/∂weights for a loss on the output.
//! * [`DenseNet::forward_with_input_gradient`]: output together with its
//!   Jacobian with respect to a contiguous slice of the input, propagated
//!   layer by layer as a pair (activation, Jacobian).
//! * [`DenseNet::backward_through_input_gradient`]: ∂loss/∂weights for a
//!   loss on that Jacobian, i.e. reverse mode through the tangent pass.

mod activation;
mod adam;
mod io;
mod tangent;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use activation::{Activation, SELU_ALPHA, SELU_LAMBDA};
pub use adam::{AdamConfig, AdamState};
pub use io::{ModelFile, MODEL_FORMAT_VERSION};
pub use tangent::AugmentedState;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data of length {} does not fill {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Architecture description: everything but the parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub bias_enabled: Vec<bool>,
}

impl NetSpec {
    /// Hidden layers use SELU; the output layer is linear.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, output_bias: bool) -> Self {
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(input);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(output);
        let n = layer_dims.len() - 1;
        let mut activations = vec![Activation::Selu; n];
        activations[n - 1] = Activation::Linear;
        let mut bias_enabled = vec![true; n];
        bias_enabled[n - 1] = output_bias;
        NetSpec {
            layer_dims,
            activations,
            bias_enabled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        let n = self.layer_dims.len() - 1;
        if self.activations.len() != n || self.bias_enabled.len() != n {
            return Err(Error::Shape(format!(
                "{} layers but {} activations and {} bias flags",
                n,
                self.activations.len(),
                self.bias_enabled.len()
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims
            .windows(2)
            .zip(&self.bias_enabled)
            .map(|(w, &b)| w[0] * w[1] + if b { w[1] } else { 0 })
            .sum()
    }
}

/// One affine layer followed by an element-wise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub bias_enabled: bool,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    #[inline]
    fn weight(&self, o: usize, i: usize) -> T {
        self.weights[o * self.in_dim + i]
    }

    /// Pre-activation `W a + b`.
    fn affine(&self, a: &[T]) -> Vec<T> {
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.biases[o];
                for (w, x) in row.iter().zip(a) {
                    acc += *w * *x;
                }
                acc
            })
            .collect()
    }

    /// `Wᵀ v`.
    fn transpose_apply(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.in_dim];
        for (o, &vo) in v.iter().enumerate() {
            if vo == T::zero() {
                continue;
            }
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (acc, w) in out.iter_mut().zip(row) {
                *acc += *w * vo;
            }
        }
        out
    }
}

/// Feed-forward network of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    layers: Vec<Layer<T>>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightGradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> WeightGradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        WeightGradients {
            weights: net.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![T::zero(); l.biases.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, s: T) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x *= s);
    }

    pub fn fill_zero(&mut self) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .all(|x| x.is_finite())
    }

    /// Flattened in the same order as [`DenseNet::params_flat`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Cached forward pass: pre-activations `z[n]` and activations `a[n]`
/// (`a[0]` is the input).
pub(crate) struct ForwardTrace<T> {
    pub pre: Vec<Vec<T>>,
    pub post: Vec<Vec<T>>,
}

impl<T: Scalar> DenseNet<T> {
    /// All parameters zero.
    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims
            .windows(2)
            .zip(spec.activations.iter().zip(&spec.bias_enabled))
            .map(|(dims, (&activation, &bias_enabled))| Layer {
                in_dim: dims[0],
                out_dim: dims[1],
                weights: vec![T::zero(); dims[0] * dims[1]],
                biases: vec![T::zero(); dims[1]],
                bias_enabled,
                activation,
            })
            .collect();
        Ok(DenseNet { layers })
    }

    /// LeCun-normal weights (std = 1/√fan_in), zero biases.
    pub fn lecun_normal<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for layer in &mut net.layers {
            let std = 1.0 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::lit(z * std);
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Shape(format!("layer {k} parameter arrays do not match its dimensions")));
            }
            if !l.bias_enabled && l.biases.iter().any(|b| *b != T::zero()) {
                return Err(Error::Shape(format!("layer {k} has bias disabled but non-zero biases")));
            }
            if k > 0 && layers[k - 1].out_dim != l.in_dim {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs but previous layer produces {}",
                    l.in_dim,
                    layers[k - 1].out_dim
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn spec(&self) -> NetSpec {
        let mut layer_dims = vec![self.layers[0].in_dim];
        layer_dims.extend(self.layers.iter().map(|l| l.out_dim));
        NetSpec {
            layer_dims,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            bias_enabled: self.layers.iter().map(|l| l.bias_enabled).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Trainable parameters; disabled biases are not counted.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + if l.bias_enabled { l.biases.len() } else { 0 })
            .sum()
    }

    /// Weights then biases, layer by layer (disabled biases included as zeros).
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`params_flat`](Self::params_flat). Disabled biases stay zero.
    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        let total: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        if params.len() != total {
            return Err(Error::Shape(format!("expected {total} parameters, got {}", params.len())));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w = it.next().unwrap();
            }
            for b in &mut l.biases {
                let v = it.next().unwrap();
                *b = if l.bias_enabled { v } else { T::zero() };
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params_flat().iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.affine(&a);
            z.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(a)
    }

    pub(crate) fn forward_trace(&self, input: &[T]) -> Result<ForwardTrace<T>> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(input.to_vec());
        for layer in &self.layers {
            let z = layer.affine(post.last().unwrap());
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { pre, post })
    }

    /// Gradient of a loss on the output with respect to all parameters.
    /// `upstream` is ∂loss/∂output.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<WeightGradients<T>> {
        let mut grads = WeightGradients::zeros_like(self);
        self.backward_accumulate(input, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds ∂loss/∂weights into `grads`; returns the network output.
    pub fn backward_accumulate(&self, input: &[T], upstream: &[T], grads: &mut WeightGradients<T>) -> Result<Vec<T>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, network output has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let trace = self.forward_trace(input)?;
        let mut adj = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz: Vec<T> = trace.pre[k]
                .iter()
                .zip(&adj)
                .map(|(&z, &g)| g * layer.activation.derivative(z))
                .collect();
            let a_prev = &trace.post[k];
            let gw = &mut grads.weights[k];
            for (o, &d) in dz.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &a) in row.iter_mut().zip(a_prev) {
                    *g += d * a;
                }
            }
            if layer.bias_enabled {
                grads.biases[k].iter_mut().zip(&dz).for_each(|(g, &d)| *g += d);
            }
            if k > 0 {
                adj = layer.transpose_apply(&dz);
            }
        }
        Ok(trace.post.last().unwrap().clone())
    }

    pub(crate) fn check_slice(&self, slice: &Range<usize>) -> Result<()> {
        if slice.start >= slice.end || slice.end > self.input_dim() {
            return Err(Error::Shape(format!(
                "gradient slice {:?} invalid for input dimension {}",
                slice,
                self.input_dim()
            )));
        }
        Ok(())
    }
}
