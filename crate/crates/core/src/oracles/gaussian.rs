use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// x ~ Normal(θ, 1).
pub fn gaussian1d_sample<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    theta + z
}

pub fn gaussian1d_log_density(x: f64, theta: f64) -> f64 {
    -0.5 * (x - theta) * (x - theta) - LN_SQRT_2PI
}

pub fn gaussian1d_score(x: f64, theta: f64) -> f64 {
    x - theta
}

/// Kernel score approximation for the unit-variance Gaussian with a delta
/// kernel of width λ and the linear difference function:
/// (1/λ)·(p(x;θ+λ) − p(x;θ−λ)) / (p(x;θ+λ) + p(x;θ−λ)).
pub fn gaussian1d_ksa_closed_form(x: f64, theta: f64, lambda: f64) -> f64 {
    let up = gaussian1d_log_density(x, theta + lambda);
    let dn = gaussian1d_log_density(x, theta - lambda);
    // (a − b)/(a + b) = tanh((ln a − ln b)/2)
    (0.5 * (up - dn)).tanh() / lambda
}
