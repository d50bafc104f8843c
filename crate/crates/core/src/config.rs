//! Experiment configuration files.
//!
//! A TOML file with an optional top-level `seed` and the sections
//! `[oracle]`, `[prior]`, `[kernel]`, `[pair]`, `[loss]`, `[train]` and
//! `[eval]`. Every key is optional; omitted keys take the benchmark
//! defaults shown by [`Config::default`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::architectures::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::nn::AdamConfig;
use crate::oracles::OracleModel;
use crate::samplers::{KernelKind, KernelSpec, PriorSpec};
use crate::trainer_eval::{TaskId, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSection {
    pub model: OracleModel,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            model: OracleModel::Dirichlet3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            lower: vec![0.5; 3],
            upper: vec![5.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSection {
    pub kind: KernelKind,
    pub widths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    /// Loss on score targets (`kse`).
    pub score: LossKind,
    /// Loss on labelled pairs (`klre`, `carl`).
    pub ratio: LossKind,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            score: LossKind::Mse,
            ratio: LossKind::Logistic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub n_train: usize,
    pub n_seeds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            n_train: 100_000,
            n_seeds: 5,
            epochs: t.epochs,
            batch_size: t.batch_size,
            validation_fraction: t.validation_fraction,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            hidden: crate::architectures::DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub n_eval: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_eval: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub oracle: OracleSection,
    pub prior: PriorSection,
    /// Kernel of the score-regression targets.
    pub kernel: KernelSection,
    /// Kernel of correlated parameter pairs.
    pub pair: KernelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            oracle: OracleSection::default(),
            prior: PriorSection::default(),
            kernel: KernelSection {
                kind: KernelKind::Delta,
                widths: vec![0.25; 3],
            },
            pair: KernelSection {
                kind: KernelKind::Rectangular,
                widths: vec![0.4; 3],
            },
            loss: LossSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Keys present in `value` but not in `known`, as dotted paths.
fn unknown_keys(value: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in value {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(kt)), toml::Value::Table(vt)) => unknown_keys(vt, kt, &path, out),
            _ => {}
        }
    }
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        let known = toml::Table::try_from(Config::default()).expect("default config serialises");
        let mut bad = Vec::new();
        unknown_keys(&table, &known, "", &mut bad);
        if !bad.is_empty() {
            return Err(Error::UnknownKeys(bad));
        }
        let cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior_spec()?;
        KernelSpec::constant(self.kernel.kind, self.kernel.widths.clone())?;
        KernelSpec::constant(self.pair.kind, self.pair.widths.clone())?;
        for id in TaskId::ALL {
            self.task_spec(id)?.validate()?;
        }
        Ok(())
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        PriorSpec::box_uniform(self.prior.lower.clone(), self.prior.upper.clone())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            validation_fraction: t.validation_fraction,
            adam: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
        }
    }

    pub fn task_spec(&self, id: TaskId) -> Result<TaskSpec> {
        let (kernel, loss) = match id {
            TaskId::Kse => (&self.kernel, self.loss.score),
            TaskId::Klre | TaskId::Carl => (&self.pair, self.loss.ratio),
        };
        let d = self.oracle.model.param_dim();
        if kernel.widths.len() != d {
            return Err(Error::Config(format!(
                "kernel widths {:?} must have one entry per parameter ({d})",
                kernel.widths
            )));
        }
        Ok(TaskSpec {
            id,
            oracle: self.oracle.model,
            prior: self.prior_spec()?,
            kernel: KernelSpec::constant(kernel.kind, kernel.widths.clone())?,
            loss,
            n_train: self.train.n_train,
            n_eval: self.eval.n_eval,
            n_seeds: self.train.n_seeds,
            train: self.train_config(),
            hidden: self.train.hidden.clone(),
        })
    }

    /// SHA-256 of the resolved configuration (defaults filled in), so files
    /// that differ only in layout or omitted defaults hash alike.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
