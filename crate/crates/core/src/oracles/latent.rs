//! Two-stage Gaussian simulator with a latent variable:
//! z ~ Normal(θ, 1), then x = z + Normal(0, 1). The marginal of x is
//! Normal(θ, 2), and the joint ratio depends on z only.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn latent_sample<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    let z = theta + a;
    (z + b, z)
}

/// ln r_lat = ln p1(z; θ0) − ln p1(z; θ1) = (θ0 − θ1) z − (θ0² − θ1²)/2.
pub fn latent_log_ratio(z: f64, theta0: f64, theta1: f64) -> f64 {
    (theta0 - theta1) * z - 0.5 * (theta0 * theta0 - theta1 * theta1)
}

pub fn latent_ratio(z: f64, theta0: f64, theta1: f64) -> f64 {
    latent_log_ratio(z, theta0, theta1).exp()
}

pub fn marginal_log_density(x: f64, theta: f64) -> f64 {
    -0.25 * (x - theta) * (x - theta) - 0.5 * (4.0 * std::f64::consts::PI).ln()
}

pub fn marginal_score(x: f64, theta: f64) -> f64 {
    0.5 * (x - theta)
}
