//! Parameter estimation and reweighting with a learned (or exact) ratio.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architectures::{Estimator, LogRatioEstimator};
use crate::error::{Error, Result};
use crate::losses::softplus;
use crate::samplers::PriorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Grid,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub method: SearchMethod,
    /// Final grid resolution.
    pub grid_step: f64,
    /// Points per dimension of the first, box-wide grid level.
    pub coarse_points: usize,
    pub gradient_step: f64,
    pub iterations: usize,
    /// Gradient search stops once no component moves by more than this.
    pub tolerance: f64,
    /// Gradient starting point; the box centre when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: SearchMethod::Grid,
            grid_step: 0.05,
            coarse_points: 10,
            gradient_step: 0.01,
            iterations: 500,
            tolerance: 1e-7,
            start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Gradient iteration, or grid refinement level.
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub on_boundary: bool,
    pub warnings: Vec<String>,
    pub trace: Vec<TracePoint>,
}

impl Estimate {
    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let d = self.theta.len();
        let mut body = || -> std::io::Result<()> {
            let cols: Vec<String> = (0..d).map(|i| format!("theta_{i}")).collect();
            writeln!(w, "iteration,{},objective", cols.join(","))?;
            for p in &self.trace {
                let th: Vec<String> = p.theta.iter().map(|v| format!("{v:.10e}")).collect();
                writeln!(w, "{},{},{:.10e}", p.iteration, th.join(","), p.objective)?;
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

fn nonempty(what: &str, events: &[Vec<f64>]) -> Result<()> {
    if events.is_empty() {
        return Err(Error::EmptyDataset(what.into()));
    }
    Ok(())
}

fn log_ratios(est: &dyn Estimator, events: &[Vec<f64>], theta: &[f64], theta_ref: &[f64]) -> Result<Vec<f64>> {
    events.par_iter().map(|x| est.predict_log_ratio(x, theta, theta_ref)).collect()
}

/// −(1/N) Σ ln r̂(x_i; Θ′, Θ_ref)
pub fn mle_objective(est: &dyn Estimator, events: &[Vec<f64>], theta: &[f64], theta_ref: &[f64]) -> Result<f64> {
    nonempty("events", events)?;
    let lr = log_ratios(est, events, theta, theta_ref)?;
    Ok(-lr.iter().sum::<f64>() / events.len() as f64)
}

/// −(1/N) Σ ŝ(x_i; Θ′)
pub fn mle_gradient(est: &dyn Estimator, events: &[Vec<f64>], theta: &[f64]) -> Result<Vec<f64>> {
    nonempty("events", events)?;
    let scores: Vec<Vec<f64>> = events.par_iter().map(|x| est.predict_score(x, theta)).collect::<Result<_>>()?;
    let n = events.len() as f64;
    let mut g = vec![0.0; theta.len()];
    for s in &scores {
        for (gi, si) in g.iter_mut().zip(s) {
            *gi -= si / n;
        }
    }
    Ok(g)
}

/// Binary cross-entropy between data (label "r̂ large") and reference
/// events (label "r̂ small"), each term averaged over its own sample.
pub fn bce_objective(
    est: &dyn Estimator,
    data: &[Vec<f64>],
    ref_data: &[Vec<f64>],
    theta: &[f64],
    theta_ref: &[f64],
) -> Result<f64> {
    nonempty("data", data)?;
    nonempty("reference data", ref_data)?;
    let a = log_ratios(est, data, theta, theta_ref)?;
    let b = log_ratios(est, ref_data, theta, theta_ref)?;
    let ta = a.iter().map(|&l| softplus(-l)).sum::<f64>() / a.len() as f64;
    let tb = b.iter().map(|&l| softplus(l)).sum::<f64>() / b.len() as f64;
    Ok(ta + tb)
}

pub fn bce_gradient(
    est: &dyn Estimator,
    data: &[Vec<f64>],
    ref_data: &[Vec<f64>],
    theta: &[f64],
    theta_ref: &[f64],
) -> Result<Vec<f64>> {
    nonempty("data", data)?;
    nonempty("reference data", ref_data)?;
    // (coefficient, score) per event; data terms carry −1/(1+r), reference terms r/(1+r)
    let term = |x: &Vec<f64>, is_data: bool| -> Result<(f64, Vec<f64>)> {
        let l = est.predict_log_ratio(x, theta, theta_ref)?;
        let s = est.predict_score(x, theta)?;
        let c = if is_data { -sigmoid(-l) } else { sigmoid(l) };
        Ok((c, s))
    };
    let ga: Vec<(f64, Vec<f64>)> = data.par_iter().map(|x| term(x, true)).collect::<Result<_>>()?;
    let gb: Vec<(f64, Vec<f64>)> = ref_data.par_iter().map(|x| term(x, false)).collect::<Result<_>>()?;
    let mut g = vec![0.0; theta.len()];
    for (terms, n) in [(&ga, data.len() as f64), (&gb, ref_data.len() as f64)] {
        for (c, s) in terms {
            for (gi, si) in g.iter_mut().zip(s) {
                *gi += c * si / n;
            }
        }
    }
    Ok(g)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn axis(lo: f64, hi: f64, center: f64, half: f64, step: f64) -> Vec<f64> {
    let a = (center - half).max(lo);
    let b = (center + half).min(hi);
    let n = ((b - a) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| a + k as f64 * step).collect();
    if b - v[v.len() - 1] > 1e-9 * step {
        v.push(b);
    }
    v
}

fn grid_search(
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    region: &PriorSpec,
    config: &SearchConfig,
) -> Result<(Vec<f64>, f64, Vec<TracePoint>)> {
    if !(config.grid_step > 0.0) || config.coarse_points < 2 {
        return Err(Error::Config("grid_step must be positive and coarse_points at least 2".into()));
    }
    let d = region.dim();
    let mut center = region.center();
    let mut half: Vec<f64> = region.lower.iter().zip(&region.upper).map(|(l, u)| 0.5 * (u - l)).collect();
    let mut step: Vec<f64> = half
        .iter()
        .map(|h| (2.0 * h / (config.coarse_points - 1) as f64).max(config.grid_step))
        .collect();
    let mut trace = Vec::new();
    let mut level = 0;
    loop {
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| axis(region.lower[i], region.upper[i], center[i], half[i], step[i]))
            .collect();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut idx = vec![0usize; d];
        'outer: loop {
            let theta: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| axes[i][k]).collect();
            let f = objective(&theta)?;
            if !f.is_finite() {
                return Err(Error::Divergence {
                    epoch: level,
                    batch: 0,
                    reason: format!("non-finite objective at {theta:?}"),
                });
            }
            if best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((theta, f));
            }
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    continue 'outer;
                }
                idx[i] = 0;
            }
            break;
        }
        let (theta, f) = best.expect("grid has at least one point");
        trace.push(TracePoint {
            iteration: level,
            theta: theta.clone(),
            objective: f,
        });
        if step.iter().all(|&s| s <= config.grid_step) {
            return Ok((theta, f, trace));
        }
        center = theta;
        half = step.clone();
        step = step.iter().map(|s| (s / 5.0).max(config.grid_step)).collect();
        level += 1;
    }
}

fn gradient_search(
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    gradient: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    region: &PriorSpec,
    config: &SearchConfig,
) -> Result<(Vec<f64>, f64, bool, Vec<TracePoint>)> {
    let mut theta = match &config.start {
        Some(s) if s.len() == region.dim() => s.clone(),
        Some(_) => return Err(Error::Shape("search start has the wrong dimension".into())),
        None => region.center(),
    };
    let project = |t: &mut Vec<f64>| {
        for (i, v) in t.iter_mut().enumerate() {
            *v = v.clamp(region.lower[i], region.upper[i]);
        }
    };
    project(&mut theta);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut converged = false;
    for it in 0..config.iterations {
        let g = gradient(&theta)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: it,
                batch: 0,
                reason: format!("non-finite gradient at {theta:?}"),
            });
        }
        trace.push(TracePoint {
            iteration: it,
            theta: theta.clone(),
            objective: objective(&theta)?,
        });
        let mut next: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - config.gradient_step * g).collect();
        project(&mut next);
        let moved = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        if moved <= config.tolerance {
            converged = true;
            break;
        }
    }
    let f = objective(&theta)?;
    trace.push(TracePoint {
        iteration: trace.len(),
        theta: theta.clone(),
        objective: f,
    });
    Ok((theta, f, converged, trace))
}

fn finish(theta: Vec<f64>, objective: f64, converged: bool, trace: Vec<TracePoint>, region: &PriorSpec, n: usize) -> Estimate {
    let on_boundary = theta
        .iter()
        .enumerate()
        .any(|(i, t)| (t - region.lower[i]).abs() < 1e-12 || (t - region.upper[i]).abs() < 1e-12);
    let mut warnings = Vec::new();
    if n == 1 {
        warnings.push("a single event cannot constrain the parameters".to_string());
    }
    if on_boundary {
        warnings.push(format!("estimate {theta:?} lies on the search boundary"));
    }
    if !converged {
        warnings.push("gradient search stopped before converging".to_string());
    }
    for w in &warnings {
        warn!("{w}");
    }
    Estimate {
        theta,
        objective,
        converged,
        on_boundary,
        warnings,
        trace,
    }
}

fn run_search(
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    gradient: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    region: &PriorSpec,
    config: &SearchConfig,
    n: usize,
) -> Result<Estimate> {
    region.validate()?;
    match config.method {
        SearchMethod::Grid => {
            let (t, f, trace) = grid_search(objective, region, config)?;
            Ok(finish(t, f, true, trace, region, n))
        }
        SearchMethod::Gradient => {
            let (t, f, c, trace) = gradient_search(objective, gradient, region, config)?;
            Ok(finish(t, f, c, trace, region, n))
        }
    }
}

/// Maximum-likelihood estimate over `region` using r̂(x; Θ′, Θ_ref).
pub fn mle_estimate(
    est: &dyn Estimator,
    events: &[Vec<f64>],
    theta_ref: &[f64],
    region: &PriorSpec,
    config: &SearchConfig,
) -> Result<Estimate> {
    nonempty("events", events)?;
    let obj = |t: &[f64]| mle_objective(est, events, t, theta_ref);
    let grad = |t: &[f64]| mle_gradient(est, events, t);
    run_search(&obj, &grad, region, config, events.len())
}

/// Cross-entropy estimate; `ref_data` must be drawn at `theta_ref`.
pub fn bce_estimate(
    est: &dyn Estimator,
    data: &[Vec<f64>],
    ref_data: &[Vec<f64>],
    theta_ref: &[f64],
    region: &PriorSpec,
    config: &SearchConfig,
) -> Result<Estimate> {
    nonempty("data", data)?;
    nonempty("reference data", ref_data)?;
    let obj = |t: &[f64]| bce_objective(est, data, ref_data, t, theta_ref);
    let grad = |t: &[f64]| bce_gradient(est, data, ref_data, t, theta_ref);
    run_search(&obj, &grad, region, config, data.len())
}

/// Weights r̂(x; Θ1, Θ0) that turn a Θ0 sample into a Θ1 sample.
pub fn reweight(
    est: &(dyn LogRatioEstimator + Sync),
    events: &[Vec<f64>],
    theta0: &[f64],
    theta1: &[f64],
) -> Result<Vec<f64>> {
    events.par_iter().map(|x| Ok(est.predict_log_ratio(x, theta1, theta0)?.exp())).collect()
}

/// Self-normalised weighted mean per component with its delta-method
/// standard error.
pub fn weighted_mean(events: &[Vec<f64>], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    nonempty("events", events)?;
    if weights.len() != events.len() {
        return Err(Error::Shape("one weight per event is required".into()));
    }
    let d = events[0].len();
    let total: f64 = weights.iter().sum();
    let mean: Vec<f64> = (0..d)
        .map(|j| events.iter().zip(weights).map(|(x, w)| w * x[j]).sum::<f64>() / total)
        .collect();
    let se = (0..d)
        .map(|j| {
            let s: f64 = events.iter().zip(weights).map(|(x, w)| (w * (x[j] - mean[j])).powi(2)).sum();
            s.sqrt() / total
        })
        .collect();
    Ok((mean, se))
}
