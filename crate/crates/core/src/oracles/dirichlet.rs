use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

const SIMPLEX_TOL: f64 = 1e-9;

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.len() != 3 {
        return Err(Error::Shape(format!("Dirichlet parameter must have 3 components, got {}", theta.len())));
    }
    if theta.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::Domain(format!("Dirichlet concentration must be positive, got {theta:?}")));
    }
    Ok(())
}

fn check_simplex(x: &[f64]) -> Result<()> {
    if x.len() != 3 {
        return Err(Error::Shape(format!("Dirichlet event must have 3 components, got {}", x.len())));
    }
    if x.iter().any(|&v| !(v >= 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Domain(format!("{x:?} is not on the probability simplex")));
    }
    Ok(())
}

/// Draws x ~ Dirichlet(Θ) by normalising independent Gamma(θ_i, 1) draws.
/// Returns the event and how many draws were rejected because a component
/// underflowed to zero.
pub fn dirichlet_sample<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<(Vec<f64>, u64)> {
    check_theta(theta)?;
    let gammas: Vec<Gamma<f64>> = theta
        .iter()
        .map(|&t| Gamma::new(t, 1.0).map_err(|e| Error::Domain(e.to_string())))
        .collect::<Result<_>>()?;
    let mut redraws = 0;
    loop {
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        let x: Vec<f64> = g.iter().map(|v| v / total).collect();
        if total > 0.0 && total.is_finite() && x.iter().all(|&v| v > 0.0) {
            return Ok((x, redraws));
        }
        redraws += 1;
    }
}

/// ln p(x; Θ) with respect to Lebesgue measure on (x1, x2).
pub fn dirichlet_log_density(x: &[f64], theta: &[f64]) -> Result<f64> {
    check_theta(theta)?;
    check_simplex(x)?;
    let norm = ln_gamma(theta.iter().sum::<f64>()) - theta.iter().map(|&t| ln_gamma(t)).sum::<f64>();
    let mut acc = norm;
    for (&xi, &ti) in x.iter().zip(theta) {
        if xi == 0.0 {
            if ti < 1.0 {
                return Err(Error::Boundary(format!("density diverges at x={x:?} for Θ={theta:?}")));
            } else if ti > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        acc += (ti - 1.0) * xi.ln();
    }
    Ok(acc)
}

/// s_i = ln x_i + ψ(Σθ) − ψ(θ_i).
pub fn dirichlet_score(x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_theta(theta)?;
    check_simplex(x)?;
    if x.iter().any(|&v| v == 0.0) {
        return Err(Error::Boundary(format!("score undefined at boundary event {x:?}")));
    }
    let psi_total = digamma(theta.iter().sum::<f64>());
    Ok(x.iter().zip(theta).map(|(&xi, &ti)| xi.ln() + psi_total - digamma(ti)).collect())
}
