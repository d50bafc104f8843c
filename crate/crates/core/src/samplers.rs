//! Kernels, difference functions, priors and parameter-pair distributions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// u_i ~ Uniform[−1, 1)
    Rectangular,
    /// u_i = ±1 with equal probability
    Delta,
}

impl KernelKind {
    /// Variance of u_i under the standard-width kernel.
    pub fn sigma_sq(self) -> f64 {
        match self {
            KernelKind::Rectangular => 1.0 / 3.0,
            KernelKind::Delta => 1.0,
        }
    }
}

/// Width function λ(x, Θ). Kernel-score generation calls it with an empty
/// `x` because the event is drawn after the displacement.
pub type WidthFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Widths {
    Constant(Vec<f64>),
    Function(WidthFn),
}

impl fmt::Debug for Widths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Widths::Constant(w) => f.debug_tuple("Constant").field(w).finish(),
            Widths::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Product kernel K_Θ(ε) = Π λ_i⁻¹ K(ε_i / λ_i).
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub widths: Widths,
}

impl KernelSpec {
    pub fn constant(kind: KernelKind, widths: Vec<f64>) -> Result<Self> {
        if widths.is_empty() || widths.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("kernel widths must be positive, got {widths:?}")));
        }
        Ok(KernelSpec {
            kind,
            widths: Widths::Constant(widths),
        })
    }

    pub fn with_width_fn(kind: KernelKind, f: WidthFn) -> Self {
        KernelSpec {
            kind,
            widths: Widths::Function(f),
        }
    }

    pub fn sigma_sq(&self) -> f64 {
        self.kind.sigma_sq()
    }

    pub fn widths_at(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let w = match &self.widths {
            Widths::Constant(w) => w.clone(),
            Widths::Function(f) => f(x, theta),
        };
        if w.len() != theta.len() {
            return Err(Error::Shape(format!("{} kernel widths for a {}-dim parameter", w.len(), theta.len())));
        }
        if w.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!("non-positive kernel width {w:?} at Θ={theta:?}")));
        }
        Ok(w)
    }

    /// Draws the standard-width displacement u.
    pub fn sample_u<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        sample_u(self.kind, dim, rng)
    }

    /// E_{ε∼K_Θ}[ε_i ψ_i(ε)] for the linear difference function: λ_i² σ².
    pub fn linear_normalizer(&self, widths: &[f64]) -> Vec<f64> {
        let s = self.sigma_sq();
        widths.iter().map(|l| l * l * s).collect()
    }
}

pub fn sample_u<R: Rng + ?Sized>(kind: KernelKind, dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| match kind {
            KernelKind::Rectangular => rng.random_range(-1.0..1.0),
            KernelKind::Delta => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect()
}

/// ψ: odd in ε_i and even in every other component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceFunction {
    #[default]
    Linear,
}

impl DifferenceFunction {
    pub fn eval(self, eps: &[f64]) -> Vec<f64> {
        match self {
            DifferenceFunction::Linear => eps.to_vec(),
        }
    }
}

/// Densities usable as a prior in weight computations.
pub trait PriorDensity {
    fn density(&self, theta: &[f64]) -> f64;
}

/// Independent uniform prior on the half-open box [lower, upper).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PriorSpec {
    pub fn box_uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let p = PriorSpec { lower, upper };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::Config("prior bounds must be non-empty and of equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config(format!(
                "prior lower bounds {:?} must be below upper bounds {:?}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *l <= *t && *t < *u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.random_range(l..u))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

impl PriorDensity for PriorSpec {
    fn density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }
}

/// w(Θ, ε) = π(Θ) / π(Θ + ε).
pub fn pair_weight(theta: &[f64], eps: &[f64], prior: &dyn PriorDensity) -> Result<f64> {
    let shifted: Vec<f64> = theta.iter().zip(eps).map(|(t, e)| t + e).collect();
    let denom = prior.density(&shifted);
    if !(denom > 0.0) {
        return Err(Error::DegenerateWeight(shifted));
    }
    Ok(prior.density(theta) / denom)
}

#[derive(Clone, Debug)]
pub enum PairKind {
    /// Θ0, Θ1 independent draws from the prior.
    Iid,
    /// Θ0 from the prior, Θ1 fixed.
    Reference(Vec<f64>),
    /// Symmetrised kernel mixture: an anchor drawn from the prior, its
    /// partner displaced by the kernel, and the anchor slot chosen uniformly.
    KernelCorrelated(KernelSpec),
}

#[derive(Clone, Debug)]
pub struct PairDistribution {
    pub kind: PairKind,
    pub prior: PriorSpec,
}

impl PairDistribution {
    pub fn new(kind: PairKind, prior: PriorSpec) -> Result<Self> {
        prior.validate()?;
        if let PairKind::Reference(r) = &kind {
            if r.len() != prior.dim() {
                return Err(Error::Shape("reference parameter dimension differs from prior".into()));
            }
        }
        Ok(PairDistribution { kind, prior })
    }

    /// Partners that leave the prior box are kept.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let anchor = self.prior.sample(rng);
        match &self.kind {
            PairKind::Iid => {
                let other = self.prior.sample(rng);
                Ok((anchor, other))
            }
            PairKind::Reference(r) => Ok((anchor, r.clone())),
            PairKind::KernelCorrelated(kernel) => {
                let widths = kernel.widths_at(&[], &anchor)?;
                let u = kernel.sample_u(anchor.len(), rng);
                let partner: Vec<f64> = anchor
                    .iter()
                    .zip(u.iter().zip(&widths))
                    .map(|(a, (u, l))| a + l * u)
                    .collect();
                if rng.random::<bool>() {
                    Ok((anchor, partner))
                } else {
                    Ok((partner, anchor))
                }
            }
        }
    }
}
