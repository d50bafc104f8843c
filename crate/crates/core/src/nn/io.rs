use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseNet, Layer, NetSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model: architecture plus row-major parameter arrays, as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture_tag: String,
    /// Event and parameter dimensions the head was built for.
    pub event_dim: usize,
    pub param_dim: usize,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub bias_enabled: Vec<bool>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_net<T: Scalar>(tag: &str, event_dim: usize, param_dim: usize, net: &DenseNet<T>) -> Self {
        let spec = net.spec();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            architecture_tag: tag.to_string(),
            event_dim,
            param_dim,
            layer_dims: spec.layer_dims,
            activations: spec.activations,
            bias_enabled: spec.bias_enabled,
            weights: net
                .layers()
                .iter()
                .map(|l| l.weights.iter().map(|w| w.to_f64_lossless()).collect())
                .collect(),
            biases: net
                .layers()
                .iter()
                .map(|l| l.biases.iter().map(|b| b.to_f64_lossless()).collect())
                .collect(),
        }
    }

    pub fn to_net<T: Scalar>(&self) -> Result<DenseNet<T>> {
        let spec = NetSpec {
            layer_dims: self.layer_dims.clone(),
            activations: self.activations.clone(),
            bias_enabled: self.bias_enabled.clone(),
        };
        spec.validate()?;
        let n = spec.layer_dims.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::Shape(format!("model file lists {n} layers but parameter arrays disagree")));
        }
        let layers = (0..n)
            .map(|k| Layer {
                in_dim: spec.layer_dims[k],
                out_dim: spec.layer_dims[k + 1],
                weights: self.weights[k].iter().map(|&w| T::lit(w)).collect(),
                biases: self.biases[k].iter().map(|&b| T::lit(b)).collect(),
                bias_enabled: spec.bias_enabled[k],
                activation: spec.activations[k],
            })
            .collect();
        DenseNet::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let version = raw.get("format_version").and_then(|v| v.as_u64());
        if version != Some(MODEL_FORMAT_VERSION as u64) {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version.map_or("missing".into(), |v| v.to_string()),
                expected: MODEL_FORMAT_VERSION.to_string(),
            });
        }
        Ok(serde_json::from_value(raw)?)
    }
}
