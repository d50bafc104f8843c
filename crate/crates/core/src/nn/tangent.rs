use std::ops::Range;

use super::{DenseNet, Matrix, WeightGradients};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-layer activations `a[n]` and their Jacobians `b[n] = ∂a[n]/∂input[slice]`
/// (each `b[n]` is `dim(a[n]) × slice.len()`, row-major). `b[0]` is the
/// selector: identity on the slice, zero elsewhere.
#[derive(Clone, Debug)]
pub struct AugmentedState<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<Matrix<T>>,
    pub(crate) pre: Vec<Vec<T>>,
    /// `W[n] b[n-1]`, the Jacobian of the pre-activation.
    pub(crate) bz: Vec<Matrix<T>>,
}

impl<T: Scalar> DenseNet<T> {
    /// Runs the tangent pass and keeps every intermediate layer.
    pub fn augmented_forward(&self, input: &[T], slice: Range<usize>) -> Result<AugmentedState<T>> {
        self.check_input(input)?;
        self.check_slice(&slice)?;
        let d = slice.len();
        let mut b0 = Matrix::zeros(input.len(), d);
        for (j, i) in slice.clone().enumerate() {
            b0.data[i * d + j] = T::one();
        }
        let mut state = AugmentedState {
            a: vec![input.to_vec()],
            b: vec![b0],
            pre: Vec::with_capacity(self.layers.len()),
            bz: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let a_prev = state.a.last().unwrap();
            let b_prev = state.b.last().unwrap();
            let z = layer.affine(a_prev);
            let mut bz = Matrix::zeros(layer.out_dim, d);
            for o in 0..layer.out_dim {
                let out_row = &mut bz.data[o * d..(o + 1) * d];
                for i in 0..layer.in_dim {
                    let w = layer.weight(o, i);
                    if w == T::zero() {
                        continue;
                    }
                    for (acc, &bv) in out_row.iter_mut().zip(b_prev.row(i)) {
                        *acc += w * bv;
                    }
                }
            }
            let mut b = bz.clone();
            let mut a = Vec::with_capacity(layer.out_dim);
            for (o, &zo) in z.iter().enumerate() {
                let s = layer.activation.derivative(zo);
                b.data[o * d..(o + 1) * d].iter_mut().for_each(|v| *v *= s);
                a.push(layer.activation.apply(zo));
            }
            state.pre.push(z);
            state.bz.push(bz);
            state.a.push(a);
            state.b.push(b);
        }
        Ok(state)
    }

    /// Output value and ∂output/∂input[slice] (`output_dim × slice.len()`).
    pub fn forward_with_input_gradient(&self, input: &[T], slice: Range<usize>) -> Result<(Vec<T>, Matrix<T>)> {
        let mut state = self.augmented_forward(input, slice)?;
        Ok((state.a.pop().unwrap(), state.b.pop().unwrap()))
    }

    /// Gradient with respect to the weights of a loss on the input Jacobian,
    /// `upstream_jacobian = ∂loss/∂J`.
    pub fn backward_through_input_gradient(
        &self,
        input: &[T],
        slice: Range<usize>,
        upstream_jacobian: &Matrix<T>,
    ) -> Result<WeightGradients<T>> {
        let mut grads = WeightGradients::zeros_like(self);
        let zeros = vec![T::zero(); self.output_dim()];
        self.backward_augmented(input, slice, &zeros, upstream_jacobian, &mut grads)?;
        Ok(grads)
    }

    /// Reverse mode through the tangent pass for a loss depending on both the
    /// output value and its input Jacobian. Gradients are added into `grads`.
    pub fn backward_augmented(
        &self,
        input: &[T],
        slice: Range<usize>,
        upstream_value: &[T],
        upstream_jacobian: &Matrix<T>,
        grads: &mut WeightGradients<T>,
    ) -> Result<(Vec<T>, Matrix<T>)> {
        let d = slice.len();
        if upstream_value.len() != self.output_dim()
            || upstream_jacobian.rows != self.output_dim()
            || upstream_jacobian.cols != d
        {
            return Err(Error::Shape(format!(
                "upstream shapes ({}, {}x{}) do not match output {} and slice width {}",
                upstream_value.len(),
                upstream_jacobian.rows,
                upstream_jacobian.cols,
                self.output_dim(),
                d
            )));
        }
        let state = self.augmented_forward(input, slice)?;
        let mut a_adj = upstream_value.to_vec();
        let mut b_adj = upstream_jacobian.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &state.pre[k];
            let bz = &state.bz[k];
            let a_prev = &state.a[k];
            let b_prev = &state.b[k];
            // b[k+1] = diag(f'(z)) bz
            let mut bz_adj = Matrix::zeros(layer.out_dim, d);
            let mut z_adj = Vec::with_capacity(layer.out_dim);
            for o in 0..layer.out_dim {
                let s1 = layer.activation.derivative(z[o]);
                let s2 = layer.activation.second_derivative(z[o]);
                let mut s_adj = T::zero();
                for j in 0..d {
                    let g = b_adj.data[o * d + j];
                    bz_adj.data[o * d + j] = g * s1;
                    s_adj += g * bz.data[o * d + j];
                }
                z_adj.push(a_adj[o] * s1 + s_adj * s2);
            }
            let gw = &mut grads.weights[k];
            for o in 0..layer.out_dim {
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                let bz_row = bz_adj.row(o);
                for (i, g) in row.iter_mut().enumerate() {
                    let mut acc = z_adj[o] * a_prev[i];
                    for (x, y) in bz_row.iter().zip(b_prev.row(i)) {
                        acc += *x * *y;
                    }
                    *g += acc;
                }
            }
            if layer.bias_enabled {
                grads.biases[k].iter_mut().zip(&z_adj).for_each(|(g, &v)| *g += v);
            }
            if k > 0 {
                a_adj = layer.transpose_apply(&z_adj);
                let mut next = Matrix::zeros(layer.in_dim, d);
                for o in 0..layer.out_dim {
                    for i in 0..layer.in_dim {
                        let w = layer.weight(o, i);
                        if w == T::zero() {
                            continue;
                        }
                        let dst = &mut next.data[i * d..(i + 1) * d];
                        for (acc, &g) in dst.iter_mut().zip(bz_adj.row(o)) {
                            *acc += w * g;
                        }
                    }
                }
                b_adj = next;
            }
        }
        let mut state = state;
        Ok((state.a.pop().unwrap(), state.b.pop().unwrap()))
    }
}
