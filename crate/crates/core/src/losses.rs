//! Score-regression and ratio-classification losses.
//!
//! Ratio losses are functions of ℓ = ln r̂ and a target t, where t is the
//! binary label y for the classification losses and 1/(1 + r_lat) for their
//! latent counterparts. Labels follow the convention that y = 0 marks events
//! drawn at Θ0, so the Bayes-optimal classifier has 1/(1 + r̂) = P(y = 1 | x).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseNet, WeightGradients};
use crate::oracles::OracleModel;
use crate::scalar::Scalar;

/// Largest |ln r̂| fed to an exponential.
pub const LOG_RATIO_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Logistic,
    Square,
    Exponential,
    Savage,
    Rolr,
    Alice,
    LatentRolr,
    LatentSquare,
    LatentExponential,
    LatentSavage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputChannel {
    ScoreVector,
    LogRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Logistic,
    Square,
    Exponential,
    Savage,
    Rolr,
}

impl LossKind {
    pub const ALL: [LossKind; 11] = [
        LossKind::Mse,
        LossKind::Logistic,
        LossKind::Square,
        LossKind::Exponential,
        LossKind::Savage,
        LossKind::Rolr,
        LossKind::Alice,
        LossKind::LatentRolr,
        LossKind::LatentSquare,
        LossKind::LatentExponential,
        LossKind::LatentSavage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Logistic => "logistic",
            LossKind::Square => "square",
            LossKind::Exponential => "exponential",
            LossKind::Savage => "savage",
            LossKind::Rolr => "rolr",
            LossKind::Alice => "alice",
            LossKind::LatentRolr => "latent_rolr",
            LossKind::LatentSquare => "latent_square",
            LossKind::LatentExponential => "latent_exponential",
            LossKind::LatentSavage => "latent_savage",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::UnsupportedLoss(format!("{s:?} (valid: {})", valid.join(", ")))
        })
    }

    pub fn channel(self) -> OutputChannel {
        match self {
            LossKind::Mse => OutputChannel::ScoreVector,
            _ => OutputChannel::LogRatio,
        }
    }

    /// Whether the label is replaced by 1/(1 + r_lat).
    pub fn is_latent(self) -> bool {
        matches!(
            self,
            LossKind::Alice
                | LossKind::LatentRolr
                | LossKind::LatentSquare
                | LossKind::LatentExponential
                | LossKind::LatentSavage
        )
    }

    pub fn requires_r_lat(self) -> bool {
        self.is_latent() || self == LossKind::Rolr
    }

    fn form(self) -> Option<Form> {
        Some(match self {
            LossKind::Mse => return None,
            LossKind::Logistic | LossKind::Alice => Form::Logistic,
            LossKind::Square | LossKind::LatentSquare => Form::Square,
            LossKind::Exponential | LossKind::LatentExponential => Form::Exponential,
            LossKind::Savage | LossKind::LatentSavage => Form::Savage,
            LossKind::Rolr | LossKind::LatentRolr => Form::Rolr,
        })
    }
}

/// Replaces y by 1/(1 + r_lat). Latent kinds map to themselves.
pub fn latentify(base: LossKind) -> Result<LossKind> {
    Ok(match base {
        LossKind::Logistic => LossKind::Alice,
        LossKind::Square => LossKind::LatentSquare,
        LossKind::Exponential => LossKind::LatentExponential,
        LossKind::Savage => LossKind::LatentSavage,
        LossKind::Rolr => LossKind::LatentRolr,
        k if k.is_latent() => k,
        k => return Err(Error::UnsupportedLoss(format!("{} is not affine in a binary label", k.name()))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEval<T> {
    pub value: T,
    /// ∂L/∂ln r̂.
    pub grad: T,
    pub clamped: bool,
}

/// ln(1 + eˣ) without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// 1/(1 + eˣ) without overflow.
fn sigmoid_neg<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        let e = (-x).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

/// Value and ∂/∂ln r̂ of a ratio loss at ln r̂ = `log_r`, label `y` and
/// optional latent ratio.
pub fn ratio_loss<T: Scalar>(kind: LossKind, log_r: T, y: T, r_lat: Option<T>) -> Result<LossEval<T>> {
    let form = kind
        .form()
        .ok_or_else(|| Error::UnsupportedLoss(format!("{} does not act on ln r̂", kind.name())))?;
    if !log_r.is_finite() {
        return Err(Error::Domain(format!("non-finite ln r̂ = {log_r}")));
    }
    let r_lat = match (kind.requires_r_lat(), r_lat) {
        (true, None) => return Err(Error::Config(format!("{} requires r_lat on every example", kind.name()))),
        (_, r) => r,
    };
    let one = T::one();
    let two = T::lit(2.0);
    let t = if kind.is_latent() {
        let r = r_lat.unwrap();
        one / (one + r)
    } else {
        y
    };
    let clamp_at = T::lit(LOG_RATIO_CLAMP);
    let mut l = log_r;
    let mut clamped = false;
    if matches!(form, Form::Exponential | Form::Rolr) && l.abs() > clamp_at {
        l = l.signum() * clamp_at;
        clamped = true;
    }
    // σ = 1/(1+r̂), q = r̂/(1+r̂); dσ/dℓ = −σq, dq/dℓ = σq
    let sigma = sigmoid_neg(l);
    let q = sigmoid_neg(-l);
    let (value, grad) = match form {
        Form::Logistic => (t * softplus(l) + (one - t) * softplus(-l), t * q - (one - t) * sigma),
        Form::Square => {
            let d = sigma - t;
            (d * d, -two * d * sigma * q)
        }
        Form::Exponential => {
            let half = T::lit(0.5);
            let up = (half * l).exp();
            let dn = (-half * l).exp();
            (t * up + (one - t) * dn, half * (t * up - (one - t) * dn))
        }
        Form::Savage => (
            t * q * q + (one - t) * sigma * sigma,
            two * sigma * q * (t * q - (one - t) * sigma),
        ),
        Form::Rolr => {
            let big_r = r_lat.unwrap();
            let r = l.exp();
            let inv = (-l).exp();
            let a = r - big_r;
            let b = inv - one / big_r;
            (t * a * a + (one - t) * b * b, two * (t * a * r - (one - t) * b * inv))
        }
    };
    Ok(LossEval { value, grad, clamped })
}

/// Mean over components of w·(ŝ_i − y_i)², with its gradient in ŝ.
pub fn mse_loss<T: Scalar>(prediction: &[T], target: &[T], weight: T) -> Result<(T, Vec<T>)> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::Shape(format!(
            "prediction has {} components, target {}",
            prediction.len(),
            target.len()
        )));
    }
    let n = T::from_usize(prediction.len()).unwrap();
    let two = T::lit(2.0);
    let mut value = T::zero();
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let d = p - y;
            value += d * d;
            two * weight * d / n
        })
        .collect();
    Ok((weight * value / n, grad))
}

/// Monte Carlo statistics of ∂L/∂w for a base loss and its latent form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub base: LossKind,
    pub latent: LossKind,
    pub n: usize,
    pub mean_base: f64,
    pub mean_latent: f64,
    pub se_mean_base: f64,
    pub se_mean_latent: f64,
    pub var_base: f64,
    pub var_latent: f64,
    pub se_var_base: f64,
    pub se_var_latent: f64,
    /// |mean difference| ≤ 3 combined standard errors.
    pub means_agree: bool,
    /// Latent variance exceeds the base variance by less than 3 combined
    /// standard errors.
    pub variance_not_larger: bool,
}

fn moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let se_mean = (var / n).sqrt();
    let se_var = ((m4 - var * var).max(0.0) / n).sqrt();
    (m, se_mean, var, se_var)
}

/// Compares ∂L/∂w between `base` and its latent form on LatentTwoStage
/// events. `net` is a potential over (x, θ) and ln r̂ = φ̂(x,θ0) − φ̂(x,θ1);
/// `weight_index` indexes [`DenseNet::params_flat`]. Both losses see the
/// same events.
pub fn check_variance_reduction<R, F>(
    base: LossKind,
    net: &DenseNet<f64>,
    weight_index: usize,
    mut pairs: F,
    n: usize,
    rng: &mut R,
) -> Result<VarianceReport>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> (f64, f64),
{
    let latent = latentify(base)?;
    if base == latent {
        return Err(Error::UnsupportedLoss(format!("{} is already latent", base.name())));
    }
    if net.input_dim() != 2 || net.output_dim() != 1 {
        return Err(Error::Shape("variance check expects a (x, θ) → φ̂ network".into()));
    }
    if weight_index >= net.params_flat().len() {
        return Err(Error::Shape(format!("weight index {weight_index} out of range")));
    }
    if n < 2 {
        return Err(Error::EmptyDataset("variance check needs at least two samples".into()));
    }
    let oracle = OracleModel::LatentTwoStage;
    let mut gb = Vec::with_capacity(n);
    let mut gl = Vec::with_capacity(n);
    let mut grads = WeightGradients::zeros_like(net);
    for _ in 0..n {
        let (t0, t1) = pairs(rng);
        let y: u8 = rng.random_range(0..2);
        let (ev, _) = oracle.sample(&[if y == 0 { t0 } else { t1 }], rng)?;
        let r_lat = oracle.latent_log_ratio(&ev, &[t0], &[t1])?.exp();
        let x = ev.x[0];
        grads.fill_zero();
        let p0 = net.backward_accumulate(&[x, t0], &[1.0], &mut grads)?[0];
        let dphi0 = grads.flatten()[weight_index];
        grads.fill_zero();
        let p1 = net.backward_accumulate(&[x, t1], &[1.0], &mut grads)?[0];
        let dphi1 = grads.flatten()[weight_index];
        let dl_dw = dphi0 - dphi1;
        let log_r = p0 - p1;
        let eb = ratio_loss(base, log_r, f64::from(y), Some(r_lat))?;
        let el = ratio_loss(latent, log_r, f64::from(y), Some(r_lat))?;
        gb.push(eb.grad * dl_dw);
        gl.push(el.grad * dl_dw);
    }
    let (mb, smb, vb, svb) = moments(&gb);
    let (ml, sml, vl, svl) = moments(&gl);
    Ok(VarianceReport {
        base,
        latent,
        n,
        mean_base: mb,
        mean_latent: ml,
        se_mean_base: smb,
        se_mean_latent: sml,
        var_base: vb,
        var_latent: vl,
        se_var_base: svb,
        se_var_latent: svl,
        means_agree: (mb - ml).abs() <= 3.0 * (smb * smb + sml * sml).sqrt(),
        variance_not_larger: vl - vb <= 3.0 * (svb * svb + svl * svl).sqrt(),
    })
}
