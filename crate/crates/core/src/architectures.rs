//! Estimator heads: the inferostatic network and the two direct networks,
//! with a shared mini-batch training loop.

use std::path::Path;
use std::time::Instant;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, RatioExample, ScoreExample};
use crate::error::{Error, Result};
use crate::losses::{mse_loss, ratio_loss, LossKind, OutputChannel};
use crate::nn::{AdamConfig, AdamState, DenseNet, Matrix, ModelFile, NetSpec, WeightGradients};
use crate::oracles::OracleModel;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN: [usize; 3] = [8, 16, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureTag {
    Isn,
    DirectScore,
    DirectRatio,
}

impl ArchitectureTag {
    pub fn name(self) -> &'static str {
        match self {
            ArchitectureTag::Isn => "isn",
            ArchitectureTag::DirectScore => "direct_score",
            ArchitectureTag::DirectRatio => "direct_ratio",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "isn" => Ok(ArchitectureTag::Isn),
            "direct_score" => Ok(ArchitectureTag::DirectScore),
            "direct_ratio" => Ok(ArchitectureTag::DirectRatio),
            _ => Err(Error::Config(format!(
                "unknown architecture {s:?} (valid: isn, direct_score, direct_ratio)"
            ))),
        }
    }

    /// Layer layout for D-dimensional events and d-dimensional parameters.
    pub fn net_spec(self, event_dim: usize, param_dim: usize, hidden: &[usize]) -> NetSpec {
        match self {
            ArchitectureTag::Isn => NetSpec::mlp(event_dim + param_dim, hidden, 1, false),
            ArchitectureTag::DirectScore => NetSpec::mlp(event_dim + param_dim, hidden, param_dim, true),
            ArchitectureTag::DirectRatio => NetSpec::mlp(event_dim + 2 * param_dim, hidden, 2, true),
        }
    }
}

/// Score estimator ŝ(x; Θ).
pub trait ScoreEstimator {
    fn predict_score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
}

/// Log likelihood-ratio estimator ln r̂(x; Θ0, Θ1).
pub trait LogRatioEstimator {
    fn predict_log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64>;
}

/// Anything that can be asked for a score and a log ratio, possibly
/// answering `NotApplicable` for one of them.
pub trait Estimator: ScoreEstimator + LogRatioEstimator + Sync {}

impl<E: ScoreEstimator + LogRatioEstimator + Sync> Estimator for E {}

impl ScoreEstimator for OracleModel {
    fn predict_score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.score(x, theta)
    }
}

impl LogRatioEstimator for OracleModel {
    fn predict_log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64> {
        self.log_ratio(x, theta0, theta1)
    }
}

fn to_t<T: Scalar>(v: &[f64]) -> impl Iterator<Item = T> + '_ {
    v.iter().map(|&a| T::lit(a))
}

fn concat<T: Scalar>(parts: &[&[f64]]) -> Vec<T> {
    parts.iter().flat_map(|p| to_t::<T>(p)).collect()
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// Inferostatic network: a scalar potential φ̂(x, Θ) with
/// ŝ = ∇_Θ φ̂ and ln r̂ = φ̂(x, Θ0) − φ̂(x, Θ1).
#[derive(Clone, Debug, PartialEq)]
pub struct IsnModel<T> {
    pub net: DenseNet<T>,
    pub event_dim: usize,
    pub param_dim: usize,
}

impl<T: Scalar> IsnModel<T> {
    pub fn new<R: Rng + ?Sized>(event_dim: usize, param_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = ArchitectureTag::Isn.net_spec(event_dim, param_dim, hidden);
        Self::from_net(DenseNet::lecun_normal(&spec, rng)?, event_dim, param_dim)
    }

    pub fn from_net(net: DenseNet<T>, event_dim: usize, param_dim: usize) -> Result<Self> {
        if net.input_dim() != event_dim + param_dim || net.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "a potential network needs {} inputs and 1 output, got {} and {}",
                event_dim + param_dim,
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(IsnModel {
            net,
            event_dim,
            param_dim,
        })
    }

    fn input(&self, x: &[f64], theta: &[f64]) -> Result<Vec<T>> {
        check_len("event", x, self.event_dim)?;
        check_len("parameter", theta, self.param_dim)?;
        Ok(concat(&[x, theta]))
    }

    fn slice(&self) -> std::ops::Range<usize> {
        self.event_dim..self.event_dim + self.param_dim
    }

    pub fn potential(&self, x: &[f64], theta: &[f64]) -> Result<T> {
        Ok(self.net.forward(&self.input(x, theta)?)?[0])
    }

    pub fn score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<T>> {
        let (_, jac) = self.net.forward_with_input_gradient(&self.input(x, theta)?, self.slice())?;
        Ok(jac.data)
    }

    pub fn log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<T> {
        Ok(self.potential(x, theta0)? - self.potential(x, theta1)?)
    }
}

/// Direct score network: (x, Θ) → ŝ.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectScoreModel<T> {
    pub net: DenseNet<T>,
    pub event_dim: usize,
    pub param_dim: usize,
}

impl<T: Scalar> DirectScoreModel<T> {
    pub fn new<R: Rng + ?Sized>(event_dim: usize, param_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = ArchitectureTag::DirectScore.net_spec(event_dim, param_dim, hidden);
        Self::from_net(DenseNet::lecun_normal(&spec, rng)?, event_dim, param_dim)
    }

    pub fn from_net(net: DenseNet<T>, event_dim: usize, param_dim: usize) -> Result<Self> {
        if net.input_dim() != event_dim + param_dim || net.output_dim() != param_dim {
            return Err(Error::Shape("direct score network dimensions do not match (D, d)".into()));
        }
        Ok(DirectScoreModel {
            net,
            event_dim,
            param_dim,
        })
    }

    pub fn score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<T>> {
        check_len("event", x, self.event_dim)?;
        check_len("parameter", theta, self.param_dim)?;
        self.net.forward(&concat(&[x, theta]))
    }
}

/// Direct ratio network: (x, Θ0, Θ1) → (ζ0, ζ1), ln r̂ = ζ0 − ζ1.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectRatioModel<T> {
    pub net: DenseNet<T>,
    pub event_dim: usize,
    pub param_dim: usize,
}

impl<T: Scalar> DirectRatioModel<T> {
    pub fn new<R: Rng + ?Sized>(event_dim: usize, param_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = ArchitectureTag::DirectRatio.net_spec(event_dim, param_dim, hidden);
        Self::from_net(DenseNet::lecun_normal(&spec, rng)?, event_dim, param_dim)
    }

    pub fn from_net(net: DenseNet<T>, event_dim: usize, param_dim: usize) -> Result<Self> {
        if net.input_dim() != event_dim + 2 * param_dim || net.output_dim() != 2 {
            return Err(Error::Shape("direct ratio network dimensions do not match (D, d)".into()));
        }
        Ok(DirectRatioModel {
            net,
            event_dim,
            param_dim,
        })
    }

    fn input(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<Vec<T>> {
        check_len("event", x, self.event_dim)?;
        check_len("parameter", theta0, self.param_dim)?;
        check_len("parameter", theta1, self.param_dim)?;
        Ok(concat(&[x, theta0, theta1]))
    }

    pub fn log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<T> {
        let z = self.net.forward(&self.input(x, theta0, theta1)?)?;
        Ok(z[0] - z[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    Isn(IsnModel<T>),
    DirectScore(DirectScoreModel<T>),
    DirectRatio(DirectRatioModel<T>),
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng + ?Sized>(
        tag: ArchitectureTag,
        event_dim: usize,
        param_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match tag {
            ArchitectureTag::Isn => Model::Isn(IsnModel::new(event_dim, param_dim, hidden, rng)?),
            ArchitectureTag::DirectScore => Model::DirectScore(DirectScoreModel::new(event_dim, param_dim, hidden, rng)?),
            ArchitectureTag::DirectRatio => Model::DirectRatio(DirectRatioModel::new(event_dim, param_dim, hidden, rng)?),
        })
    }

    pub fn tag(&self) -> ArchitectureTag {
        match self {
            Model::Isn(_) => ArchitectureTag::Isn,
            Model::DirectScore(_) => ArchitectureTag::DirectScore,
            Model::DirectRatio(_) => ArchitectureTag::DirectRatio,
        }
    }

    pub fn net(&self) -> &DenseNet<T> {
        match self {
            Model::Isn(m) => &m.net,
            Model::DirectScore(m) => &m.net,
            Model::DirectRatio(m) => &m.net,
        }
    }

    fn net_mut(&mut self) -> &mut DenseNet<T> {
        match self {
            Model::Isn(m) => &mut m.net,
            Model::DirectScore(m) => &mut m.net,
            Model::DirectRatio(m) => &mut m.net,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Model::Isn(m) => (m.event_dim, m.param_dim),
            Model::DirectScore(m) => (m.event_dim, m.param_dim),
            Model::DirectRatio(m) => (m.event_dim, m.param_dim),
        }
    }

    pub fn num_params(&self) -> usize {
        self.net().num_params()
    }

    pub fn can_score(&self) -> bool {
        !matches!(self, Model::DirectRatio(_))
    }

    pub fn can_ratio(&self) -> bool {
        !matches!(self, Model::DirectScore(_))
    }

    pub fn to_file(&self) -> ModelFile {
        let (d_x, d_p) = self.dims();
        ModelFile::from_net(self.tag().name(), d_x, d_p, self.net())
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let net = file.to_net::<T>()?;
        let (dx, dp) = (file.event_dim, file.param_dim);
        Ok(match ArchitectureTag::from_name(&file.architecture_tag)? {
            ArchitectureTag::Isn => Model::Isn(IsnModel::from_net(net, dx, dp)?),
            ArchitectureTag::DirectScore => Model::DirectScore(DirectScoreModel::from_net(net, dx, dp)?),
            ArchitectureTag::DirectRatio => Model::DirectRatio(DirectRatioModel::from_net(net, dx, dp)?),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&ModelFile::load(path)?)
    }
}

impl<T: Scalar> ScoreEstimator for Model<T> {
    fn predict_score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let s = match self {
            Model::Isn(m) => m.score(x, theta)?,
            Model::DirectScore(m) => m.score(x, theta)?,
            Model::DirectRatio(_) => {
                return Err(Error::NotApplicable("a direct ratio network has no score head".into()))
            }
        };
        Ok(s.into_iter().map(Scalar::to_f64_lossless).collect())
    }
}

impl<T: Scalar> LogRatioEstimator for Model<T> {
    fn predict_log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64> {
        let l = match self {
            Model::Isn(m) => m.log_ratio(x, theta0, theta1)?,
            Model::DirectRatio(m) => m.log_ratio(x, theta0, theta1)?,
            Model::DirectScore(_) => {
                return Err(Error::NotApplicable("a direct score network has no ratio head".into()))
            }
        };
        Ok(l.to_f64_lossless())
    }
}

impl<T: Scalar> ScoreEstimator for IsnModel<T> {
    fn predict_score(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.score(x, theta)?.into_iter().map(Scalar::to_f64_lossless).collect())
    }
}

impl<T: Scalar> LogRatioEstimator for IsnModel<T> {
    fn predict_log_ratio(&self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64> {
        Ok(self.log_ratio(x, theta0, theta1)?.to_f64_lossless())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of examples, taken from the end of the dataset, held out
    /// for validation.
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 20,
            validation_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validation_size(&self, n: usize) -> usize {
        ((self.validation_fraction * n as f64).ceil() as usize).min(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub architecture: ArchitectureTag,
    pub loss: LossKind,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: Vec<EpochReport>,
    /// Evaluations where |ln r̂| was clamped before exponentiation.
    pub clamp_events: u64,
    pub wall_seconds: f64,
}

/// Per-example loss; accumulates ∂loss/∂weights into `grads` when given.
pub(crate) fn score_example_loss<T: Scalar>(
    model: &Model<T>,
    loss: LossKind,
    ex: &ScoreExample,
    grads: Option<&mut WeightGradients<T>>,
) -> Result<T> {
    if loss.channel() != OutputChannel::ScoreVector {
        return Err(Error::NotApplicable(format!("{} cannot train on score targets", loss.name())));
    }
    let target: Vec<T> = to_t(&ex.y).collect();
    let w = T::lit(ex.weight);
    match model {
        Model::Isn(m) => {
            let input = m.input(&ex.x, &ex.theta)?;
            let (_, jac) = m.net.forward_with_input_gradient(&input, m.slice())?;
            let (value, g) = mse_loss(&jac.data, &target, w)?;
            if let Some(grads) = grads {
                let upstream = Matrix::from_rows(1, g.len(), g)?;
                m.net.backward_augmented(&input, m.slice(), &[T::zero()], &upstream, grads)?;
            }
            Ok(value)
        }
        Model::DirectScore(m) => {
            let input: Vec<T> = concat(&[&ex.x, &ex.theta]);
            let s = m.net.forward(&input)?;
            let (value, g) = mse_loss(&s, &target, w)?;
            if let Some(grads) = grads {
                m.net.backward_accumulate(&input, &g, grads)?;
            }
            Ok(value)
        }
        Model::DirectRatio(_) => Err(Error::NotApplicable(
            "a direct ratio network cannot train on score targets".into(),
        )),
    }
}

pub(crate) fn ratio_example_loss<T: Scalar>(
    model: &Model<T>,
    loss: LossKind,
    ex: &RatioExample,
    grads: Option<&mut WeightGradients<T>>,
    clamps: &mut u64,
) -> Result<T> {
    if loss.channel() != OutputChannel::LogRatio {
        return Err(Error::NotApplicable(format!("{} cannot train on ratio labels", loss.name())));
    }
    let r_lat = ex.r_lat.map(T::lit);
    let y = T::lit(ex.y());
    match model {
        Model::Isn(m) => {
            let in0 = m.input(&ex.x, &ex.theta0)?;
            let in1 = m.input(&ex.x, &ex.theta1)?;
            let l = m.net.forward(&in0)?[0] - m.net.forward(&in1)?[0];
            let e = ratio_loss(loss, l, y, r_lat)?;
            *clamps += u64::from(e.clamped);
            if let Some(grads) = grads {
                m.net.backward_accumulate(&in0, &[e.grad], grads)?;
                m.net.backward_accumulate(&in1, &[-e.grad], grads)?;
            }
            Ok(e.value)
        }
        Model::DirectRatio(m) => {
            let input = m.input(&ex.x, &ex.theta0, &ex.theta1)?;
            let z = m.net.forward(&input)?;
            let e = ratio_loss(loss, z[0] - z[1], y, r_lat)?;
            *clamps += u64::from(e.clamped);
            if let Some(grads) = grads {
                m.net.backward_accumulate(&input, &[e.grad, -e.grad], grads)?;
            }
            Ok(e.value)
        }
        Model::DirectScore(_) => Err(Error::NotApplicable(
            "a direct score network cannot train on ratio labels".into(),
        )),
    }
}

fn example_loss<T: Scalar>(
    model: &Model<T>,
    loss: LossKind,
    data: &Dataset,
    i: usize,
    grads: Option<&mut WeightGradients<T>>,
    clamps: &mut u64,
) -> Result<T> {
    match data {
        Dataset::Score(v) => score_example_loss(model, loss, &v[i], grads),
        Dataset::Ratio(v) => ratio_example_loss(model, loss, &v[i], grads, clamps),
        Dataset::Events(_) => Err(Error::NotApplicable("event datasets carry no training targets".into())),
    }
}

/// Mini-batch Adam on `data`. The last ⌈f·n⌉ examples form the validation
/// split; training examples are reshuffled once per epoch.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    model: &mut Model<T>,
    data: &Dataset,
    loss: LossKind,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingReport> {
    let started = Instant::now();
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
    }
    if loss.requires_r_lat() {
        let ok = matches!(data, Dataset::Ratio(v) if v.iter().all(|e| e.r_lat.is_some()));
        if !ok {
            return Err(Error::Config(format!("{} requires r_lat on every example", loss.name())));
        }
    }
    // probe compatibility before touching the weights
    example_loss(model, loss, data, 0, None, &mut 0)?;
    let n = data.len();
    let n_val = config.validation_size(n);
    let n_train = n - n_val;
    if n_train == 0 {
        return Err(Error::EmptyDataset("no examples left after the validation split".into()));
    }

    let mut adam = AdamState::new(model.net(), config.adam);
    let mut grads = WeightGradients::zeros_like(model.net());
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut clamps = 0u64;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let mut batch_loss = T::zero();
            for &i in idx {
                batch_loss += example_loss(model, loss, data, i, Some(&mut grads), &mut clamps)?;
            }
            let divergence = |reason: &str| Error::Divergence {
                epoch,
                batch,
                reason: reason.to_string(),
            };
            if !batch_loss.is_finite() {
                return Err(divergence("non-finite loss"));
            }
            grads.scale(T::one() / T::from_usize(idx.len()).unwrap());
            adam.step(model.net_mut(), &grads).map_err(|e| match e {
                Error::NonFiniteGradient => divergence("non-finite gradient"),
                other => other,
            })?;
            total += batch_loss.to_f64_lossless();
        }
        let train_loss = total / n_train as f64;
        let val_loss = if n_val > 0 {
            let mut s = 0.0;
            for i in n_train..n {
                s += example_loss(model, loss, data, i, None, &mut clamps)?.to_f64_lossless();
            }
            Some(s / n_val as f64)
        } else {
            None
        };
        debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        epochs.push(EpochReport {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(TrainingReport {
        architecture: model.tag(),
        loss,
        n_train,
        n_val,
        epochs,
        clamp_events: clamps,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
