//! Analytic ground-truth models: sampling plus exact log-density, score and
//! likelihood ratio.

mod dirichlet;
mod gaussian;
mod latent;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dirichlet::{dirichlet_log_density, dirichlet_sample, dirichlet_score};
pub use gaussian::{gaussian1d_ksa_closed_form, gaussian1d_log_density, gaussian1d_sample, gaussian1d_score};
pub use latent::{latent_log_ratio, latent_ratio, latent_sample, marginal_log_density, marginal_score};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleModel {
    /// 3-dimensional Dirichlet, Θ = concentrations, x on the simplex.
    Dirichlet3,
    /// x ~ Normal(θ, 1).
    Gaussian1d,
    /// z ~ Normal(θ, 1), x = z + Normal(0, 1).
    LatentTwoStage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub can_log_density: bool,
    pub can_score: bool,
    pub can_latent_ratio: bool,
}

/// A simulated event together with the simulator's latent state (empty for
/// models without one).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentEvent {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl OracleModel {
    pub fn param_dim(self) -> usize {
        match self {
            OracleModel::Dirichlet3 => 3,
            OracleModel::Gaussian1d | OracleModel::LatentTwoStage => 1,
        }
    }

    pub fn event_dim(self) -> usize {
        match self {
            OracleModel::Dirichlet3 => 3,
            OracleModel::Gaussian1d | OracleModel::LatentTwoStage => 1,
        }
    }

    pub fn capabilities(self) -> Capabilities {
        Capabilities {
            can_log_density: true,
            can_score: true,
            can_latent_ratio: self == OracleModel::LatentTwoStage,
        }
    }

    /// Whether Θ lies in the parameter domain of the model.
    pub fn in_domain(self, theta: &[f64]) -> bool {
        theta.len() == self.param_dim()
            && theta.iter().all(|t| t.is_finite())
            && match self {
                OracleModel::Dirichlet3 => theta.iter().all(|&t| t > 0.0),
                _ => true,
            }
    }

    fn check(self, x: Option<&[f64]>, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::Shape(format!(
                "{self:?} expects a {}-dim parameter, got {}",
                self.param_dim(),
                theta.len()
            )));
        }
        if let Some(x) = x {
            if x.len() != self.event_dim() {
                return Err(Error::Shape(format!(
                    "{self:?} expects a {}-dim event, got {}",
                    self.event_dim(),
                    x.len()
                )));
            }
        }
        if !self.in_domain(theta) {
            return Err(Error::Domain(format!("{theta:?} outside the parameter domain of {self:?}")));
        }
        Ok(())
    }

    /// Draws one event; the second value counts internal boundary redraws.
    pub fn sample<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> Result<(LatentEvent, u64)> {
        self.check(None, theta)?;
        Ok(match self {
            OracleModel::Dirichlet3 => {
                let (x, redraws) = dirichlet_sample(theta, rng)?;
                (LatentEvent { x, z: Vec::new() }, redraws)
            }
            OracleModel::Gaussian1d => (
                LatentEvent {
                    x: vec![gaussian1d_sample(theta[0], rng)],
                    z: Vec::new(),
                },
                0,
            ),
            OracleModel::LatentTwoStage => {
                let (x, z) = latent_sample(theta[0], rng);
                (LatentEvent { x: vec![x], z: vec![z] }, 0)
            }
        })
    }

    pub fn log_density(self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check(Some(x), theta)?;
        match self {
            OracleModel::Dirichlet3 => dirichlet_log_density(x, theta),
            OracleModel::Gaussian1d => Ok(gaussian1d_log_density(x[0], theta[0])),
            OracleModel::LatentTwoStage => Ok(marginal_log_density(x[0], theta[0])),
        }
    }

    pub fn score(self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check(Some(x), theta)?;
        match self {
            OracleModel::Dirichlet3 => dirichlet_score(x, theta),
            OracleModel::Gaussian1d => Ok(vec![gaussian1d_score(x[0], theta[0])]),
            OracleModel::LatentTwoStage => Ok(vec![marginal_score(x[0], theta[0])]),
        }
    }

    /// ln r(x; Θ0, Θ1) = ln p(x; Θ0) − ln p(x; Θ1).
    pub fn log_ratio(self, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64> {
        Ok(self.log_density(x, theta0)? - self.log_density(x, theta1)?)
    }

    /// ln r_lat(x, z; Θ0, Θ1).
    pub fn latent_log_ratio(self, event: &LatentEvent, theta0: &[f64], theta1: &[f64]) -> Result<f64> {
        match self {
            OracleModel::LatentTwoStage => {
                self.check(Some(&event.x), theta0)?;
                self.check(None, theta1)?;
                let z = event
                    .z
                    .first()
                    .ok_or_else(|| Error::Shape("latent event carries no latent state".into()))?;
                Ok(latent_log_ratio(*z, theta0[0], theta1[0]))
            }
            _ => Err(Error::Config(format!("{self:?} exposes no latent information"))),
        }
    }
}
