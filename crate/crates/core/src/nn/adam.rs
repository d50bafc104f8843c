use serde::{Deserialize, Serialize};

use super::{DenseNet, WeightGradients};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters. Defaults: lr = 0.001, β1 = 0.9, β2 = 0.999, ε = 1e-7.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Moment accumulators mirroring the parameter layout of one network.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: WeightGradients<T>,
    second: WeightGradients<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: WeightGradients::zeros_like(net),
            second: WeightGradients::zeros_like(net),
        }
    }

    /// One bias-corrected Adam update. Disabled biases are left untouched.
    pub fn step(&mut self, net: &mut DenseNet<T>, grads: &WeightGradients<T>) -> Result<()> {
        if grads.weights.len() != net.layers.len()
            || grads
                .weights
                .iter()
                .zip(&net.layers)
                .any(|(g, l)| g.len() != l.weights.len())
        {
            return Err(Error::Shape("gradient layout does not match network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let t = self.step as i32;
        let corr1 = one - T::lit(c.beta1.powi(t));
        let corr2 = one - T::lit(c.beta2.powi(t));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);

        let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            update(
                &mut layer.weights,
                &grads.weights[k],
                &mut self.first.weights[k],
                &mut self.second.weights[k],
            );
            if layer.bias_enabled {
                update(
                    &mut layer.biases,
                    &grads.biases[k],
                    &mut self.first.biases[k],
                    &mut self.second.biases[k],
                );
            }
        }
        Ok(())
    }
}
