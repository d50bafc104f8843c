//! Training and evaluation datasets for kernel score estimation and for the
//! pair-classification ratio tasks, plus a plain-text dataset format.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracles::{LatentEvent, OracleModel};
use crate::samplers::{pair_weight, KernelSpec, PairDistribution, PriorDensity, PriorSpec};

pub const DATASET_SCHEMA: u32 = 1;
const MAGIC: &str = "#isn-dataset";
/// Redraw budget per example before giving up on a domain violation.
const MAX_REDRAWS: u64 = 10_000;

/// One kernel-score regression example.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreExample {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    /// Standard-width displacement.
    pub u: Vec<f64>,
    /// Kernel widths entering the target denominator.
    pub lambda: Vec<f64>,
    pub weight: f64,
}

/// One pair-classification example; label 0 means x was drawn at Θ0.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioExample {
    pub x: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub label: u8,
    pub r_lat: Option<f64>,
}

impl RatioExample {
    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Events simulated at one parameter point.
#[derive(Clone, Debug, PartialEq)]
pub struct EventExample {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GenerationStats {
    /// Parameter points outside the oracle domain that were redrawn.
    pub domain_redraws: u64,
    /// Events on the support boundary that the sampler redrew.
    pub boundary_redraws: u64,
    /// Weighted examples dropped because the weight vanished.
    pub dropped_zero_weight: u64,
}

impl GenerationStats {
    pub fn merge(&mut self, other: &GenerationStats) {
        self.domain_redraws += other.domain_redraws;
        self.boundary_redraws += other.boundary_redraws;
        self.dropped_zero_weight += other.dropped_zero_weight;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Score,
    Ratio,
    Events,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Score => "score",
            DatasetKind::Ratio => "ratio",
            DatasetKind::Events => "events",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "score" => Some(DatasetKind::Score),
            "ratio" => Some(DatasetKind::Ratio),
            "events" => Some(DatasetKind::Events),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Score(Vec<ScoreExample>),
    Ratio(Vec<RatioExample>),
    Events(Vec<EventExample>),
}

impl Dataset {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Score(_) => DatasetKind::Score,
            Dataset::Ratio(_) => DatasetKind::Ratio,
            Dataset::Events(_) => DatasetKind::Events,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Score(v) => v.len(),
            Dataset::Ratio(v) => v.len(),
            Dataset::Events(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Dataset::Score(v) => v.first().map_or((0, 0), |e| (e.x.len(), e.theta.len())),
            Dataset::Ratio(v) => v.first().map_or((0, 0), |e| (e.x.len(), e.theta0.len())),
            Dataset::Events(v) => v.first().map_or((0, 0), |e| (e.x.len(), e.theta.len())),
        }
    }

    pub fn as_score(&self) -> Result<&[ScoreExample]> {
        match self {
            Dataset::Score(v) => Ok(v),
            other => Err(Error::Config(format!("expected a score dataset, got {}", other.kind().name()))),
        }
    }

    pub fn as_ratio(&self) -> Result<&[RatioExample]> {
        match self {
            Dataset::Ratio(v) => Ok(v),
            other => Err(Error::Config(format!("expected a ratio dataset, got {}", other.kind().name()))),
        }
    }

    pub fn as_events(&self) -> Result<&[EventExample]> {
        match self {
            Dataset::Events(v) => Ok(v),
            other => Err(Error::Config(format!("expected an events dataset, got {}", other.kind().name()))),
        }
    }
}

fn draw_event<R: Rng + ?Sized>(
    oracle: OracleModel,
    theta: &[f64],
    rng: &mut R,
    stats: &mut GenerationStats,
) -> Result<LatentEvent> {
    let (ev, redraws) = oracle.sample(theta, rng)?;
    stats.boundary_redraws += redraws;
    Ok(ev)
}

fn check_dims(oracle: OracleModel, prior: &PriorSpec) -> Result<()> {
    prior.validate()?;
    if prior.dim() != oracle.param_dim() {
        return Err(Error::Shape(format!(
            "prior has dimension {}, oracle expects {}",
            prior.dim(),
            oracle.param_dim()
        )));
    }
    Ok(())
}

/// Kernel score estimation data: Θ ~ π, u ~ K, ε = λ(Θ)⊙u, x ~ p(·; Θ+ε),
/// y_i = u_i / (λ_i(Θ) σ²).
pub fn generate_kse<R: Rng + ?Sized>(
    oracle: OracleModel,
    prior: &PriorSpec,
    kernel: &KernelSpec,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<ScoreExample>, GenerationStats)> {
    check_dims(oracle, prior)?;
    let d = prior.dim();
    let sigma_sq = kernel.sigma_sq();
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut attempts = 0;
        let (theta, u, lambda, shifted) = loop {
            let theta = prior.sample(rng);
            let lambda = kernel.widths_at(&[], &theta)?;
            let u = kernel.sample_u(d, rng);
            let shifted: Vec<f64> = theta.iter().zip(u.iter().zip(&lambda)).map(|(t, (u, l))| t + l * u).collect();
            if oracle.in_domain(&shifted) {
                break (theta, u, lambda, shifted);
            }
            stats.domain_redraws += 1;
            attempts += 1;
            if attempts > MAX_REDRAWS {
                return Err(Error::Domain(format!("kernel keeps leaving the {oracle:?} domain near {theta:?}")));
            }
        };
        let ev = draw_event(oracle, &shifted, rng, &mut stats)?;
        let y = u.iter().zip(&lambda).map(|(u, l)| u / (l * sigma_sq)).collect();
        out.push(ScoreExample {
            x: ev.x,
            theta,
            y,
            u,
            lambda,
            weight: 1.0,
        });
    }
    Ok((out, stats))
}

/// A pre-simulated (Θ′, x) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn generate_pool<R: Rng + ?Sized>(
    oracle: OracleModel,
    prior: &PriorSpec,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<PoolEntry>, GenerationStats)> {
    check_dims(oracle, prior)?;
    let mut stats = GenerationStats::default();
    let mut pool = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = prior.sample(rng);
        let ev = draw_event(oracle, &theta, rng, &mut stats)?;
        pool.push(PoolEntry { theta, x: ev.x });
    }
    Ok((pool, stats))
}

fn alt_example<R: Rng + ?Sized>(
    entry: &PoolEntry,
    prior: &dyn PriorDensity,
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<Option<ScoreExample>> {
    let d = entry.theta.len();
    let sigma_sq = kernel.sigma_sq();
    let lambda_shift = kernel.widths_at(&entry.x, &entry.theta)?;
    let u = kernel.sample_u(d, rng);
    let eps: Vec<f64> = u.iter().zip(&lambda_shift).map(|(u, l)| u * l).collect();
    let theta: Vec<f64> = entry.theta.iter().zip(&eps).map(|(t, e)| t - e).collect();
    let weight = pair_weight(&theta, &eps, prior)?;
    if !(weight > 0.0) || !weight.is_finite() {
        return Ok(None);
    }
    let lambda = kernel.widths_at(&entry.x, &theta)?;
    let y = (0..d)
        .map(|i| {
            let ratio = (lambda[i] * lambda[i]) / (lambda_shift[i] * lambda_shift[i]);
            ratio * eps[i] / (lambda[i] * lambda[i] * sigma_sq)
        })
        .collect();
    Ok(Some(ScoreExample {
        x: entry.x.clone(),
        theta,
        y,
        u,
        lambda,
        weight,
    }))
}

/// Weighted kernel score data built from a pre-simulated pool: for each
/// (Θ′, x), ε = λ(x, Θ′)⊙u, Θ = Θ′ − ε, weight π(Θ)/π(Θ′). Entries whose
/// weight vanishes are dropped and counted.
pub fn generate_kse_alt_from_pool<R: Rng + ?Sized>(
    pool: &[PoolEntry],
    prior: &dyn PriorDensity,
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<(Vec<ScoreExample>, GenerationStats)> {
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(pool.len());
    for entry in pool {
        match alt_example(entry, prior, kernel, rng)? {
            Some(ex) => out.push(ex),
            None => stats.dropped_zero_weight += 1,
        }
    }
    Ok((out, stats))
}

/// As [`generate_kse_alt_from_pool`], simulating fresh pool entries until
/// `n` examples are retained.
pub fn generate_kse_alt<R: Rng + ?Sized>(
    oracle: OracleModel,
    prior: &PriorSpec,
    kernel: &KernelSpec,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<ScoreExample>, GenerationStats)> {
    check_dims(oracle, prior)?;
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let theta = prior.sample(rng);
        let ev = draw_event(oracle, &theta, rng, &mut stats)?;
        let entry = PoolEntry { theta, x: ev.x };
        match alt_example(&entry, prior, kernel, rng)? {
            Some(ex) => out.push(ex),
            None => stats.dropped_zero_weight += 1,
        }
    }
    Ok((out, stats))
}

/// Pair-classification data: (Θ0, Θ1) ~ π_pair, y ~ Bernoulli(1/2),
/// x ~ p(·; Θ_y). With `with_latent`, r_lat(x, z; Θ0, Θ1) is attached.
pub fn generate_ratio<R: Rng + ?Sized>(
    oracle: OracleModel,
    pairs: &PairDistribution,
    n: usize,
    rng: &mut R,
    with_latent: bool,
) -> Result<(Vec<RatioExample>, GenerationStats)> {
    check_dims(oracle, &pairs.prior)?;
    if with_latent && !oracle.capabilities().can_latent_ratio {
        return Err(Error::Config(format!("{oracle:?} exposes no latent information")));
    }
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (theta0, theta1) = pairs.sample(rng)?;
        if !oracle.in_domain(&theta0) || !oracle.in_domain(&theta1) {
            stats.domain_redraws += 1;
            if stats.domain_redraws > MAX_REDRAWS * (n as u64 + 1) {
                return Err(Error::Domain(format!("pair distribution keeps leaving the {oracle:?} domain")));
            }
            continue;
        }
        let label: u8 = rng.random_range(0..2);
        let at = if label == 0 { &theta0 } else { &theta1 };
        let ev = draw_event(oracle, at, rng, &mut stats)?;
        let r_lat = if with_latent {
            Some(oracle.latent_log_ratio(&ev, &theta0, &theta1)?.exp())
        } else {
            None
        };
        out.push(RatioExample {
            x: ev.x,
            theta0,
            theta1,
            label,
            r_lat,
        });
    }
    Ok((out, stats))
}

pub fn generate_events<R: Rng + ?Sized>(
    oracle: OracleModel,
    theta: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<(Vec<EventExample>, GenerationStats)> {
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ev = draw_event(oracle, theta, rng, &mut stats)?;
        out.push(EventExample {
            x: ev.x,
            theta: theta.to_vec(),
        });
    }
    Ok((out, stats))
}

/// Components of a score predictor that sit near the bound ±1/(λ_i σ²)
/// reached by bounded-kernel targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturationReport {
    pub bound: Vec<f64>,
    /// Per component, the fraction of predictions with |ŝ_i| ≥ threshold·bound.
    pub saturated_fraction: Vec<f64>,
    pub warn: bool,
}

pub fn saturation_diagnostic(
    predictions: &[Vec<f64>],
    widths: &[f64],
    sigma_sq: f64,
    threshold: f64,
) -> SaturationReport {
    let bound: Vec<f64> = widths.iter().map(|l| 1.0 / (l * sigma_sq)).collect();
    let mut counts = vec![0usize; bound.len()];
    for p in predictions {
        for (i, (v, b)) in p.iter().zip(&bound).enumerate() {
            if v.abs() >= threshold * b {
                counts[i] += 1;
            }
        }
    }
    let n = predictions.len().max(1) as f64;
    let saturated_fraction: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let warn = counts.iter().any(|&c| c > 0);
    if warn {
        warn!("score predictions approach the kernel target bound {bound:?} (fractions {saturated_fraction:?}); high bias, consider smaller widths");
    }
    SaturationReport {
        bound,
        saturated_fraction,
        warn,
    }
}

fn push_vals(line: &mut String, vals: &[f64]) {
    for v in vals {
        if !line.is_empty() {
            line.push(',');
        }
        let _ = write!(line, "{v:.16e}");
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn columns(kind: DatasetKind, event_dim: usize, param_dim: usize, latent: bool) -> Vec<String> {
    let mut c = names("x", event_dim);
    match kind {
        DatasetKind::Score => {
            c.extend(names("theta", param_dim));
            c.extend(names("y", param_dim));
            c.extend(names("u", param_dim));
            c.extend(names("lambda", param_dim));
            c.push("weight".into());
        }
        DatasetKind::Ratio => {
            c.extend(names("theta0_", param_dim));
            c.extend(names("theta1_", param_dim));
            c.push("label".into());
            if latent {
                c.push("r_lat".into());
            }
        }
        DatasetKind::Events => c.extend(names("theta", param_dim)),
    }
    c
}

pub fn dataset_save(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (event_dim, param_dim) = dataset.dims();
    let latent = match dataset {
        Dataset::Ratio(v) => v.first().is_some_and(|e| e.r_lat.is_some()),
        _ => false,
    };
    if let Dataset::Ratio(v) = dataset {
        if v.iter().any(|e| e.r_lat.is_some() != latent) {
            return Err(Error::Shape("r_lat must be present on all rows or none".into()));
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = format!(
        "{MAGIC} schema={DATASET_SCHEMA} kind={} rows={} event_dim={event_dim} param_dim={param_dim} latent={}\n",
        dataset.kind().name(),
        dataset.len(),
        u8::from(latent)
    );
    out.push_str(&columns(dataset.kind(), event_dim, param_dim, latent).join(","));
    out.push('\n');
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    for i in 0..dataset.len() {
        line.clear();
        match dataset {
            Dataset::Score(v) => {
                let e = &v[i];
                push_vals(&mut line, &e.x);
                push_vals(&mut line, &e.theta);
                push_vals(&mut line, &e.y);
                push_vals(&mut line, &e.u);
                push_vals(&mut line, &e.lambda);
                push_vals(&mut line, &[e.weight]);
            }
            Dataset::Ratio(v) => {
                let e = &v[i];
                push_vals(&mut line, &e.x);
                push_vals(&mut line, &e.theta0);
                push_vals(&mut line, &e.theta1);
                let _ = write!(line, ",{}", e.label);
                if let Some(r) = e.r_lat {
                    push_vals(&mut line, &[r]);
                }
            }
            Dataset::Events(v) => {
                let e = &v[i];
                push_vals(&mut line, &e.x);
                push_vals(&mut line, &e.theta);
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn dataset_load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(parse_err(1, format!("missing {MAGIC} header")));
    }
    let mut schema = None;
    let mut kind = None;
    let (mut rows, mut event_dim, mut param_dim, mut latent) = (None, None, None, false);
    for f in fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {f:?}")))?;
        let num = || v.parse::<usize>().map_err(|_| parse_err(1, format!("bad value for {k}: {v:?}")));
        match k {
            "schema" => schema = Some(v.to_string()),
            "kind" => kind = Some(DatasetKind::parse(v).ok_or_else(|| parse_err(1, format!("unknown kind {v:?}")))?),
            "rows" => rows = Some(num()?),
            "event_dim" => event_dim = Some(num()?),
            "param_dim" => param_dim = Some(num()?),
            "latent" => latent = num()? == 1,
            _ => return Err(parse_err(1, format!("unknown header field {k:?}"))),
        }
    }
    let schema = schema.ok_or_else(|| parse_err(1, "missing schema".into()))?;
    if schema != DATASET_SCHEMA.to_string() {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: schema,
            expected: DATASET_SCHEMA.to_string(),
        });
    }
    let (Some(kind), Some(rows), Some(event_dim), Some(param_dim)) = (kind, rows, event_dim, param_dim) else {
        return Err(parse_err(1, "header lacks kind, rows, event_dim or param_dim".into()));
    };
    let expected_cols = columns(kind, event_dim, param_dim, latent);
    match lines.next() {
        Some(l) => {
            let l = l.map_err(|e| Error::io(path, e))?;
            if l.split(',').map(str::trim).ne(expected_cols.iter().map(String::as_str)) {
                return Err(parse_err(2, format!("column row does not match {}", expected_cols.join(","))));
            }
        }
        None => return Err(parse_err(2, "missing column row".into())),
    }
    let (dx, dp) = (event_dim, param_dim);
    let mut data = match kind {
        DatasetKind::Score => Dataset::Score(Vec::with_capacity(rows)),
        DatasetKind::Ratio => Dataset::Ratio(Vec::with_capacity(rows)),
        DatasetKind::Events => Dataset::Events(Vec::with_capacity(rows)),
    };
    let mut vals: Vec<f64> = Vec::with_capacity(expected_cols.len());
    let mut count = 0;
    for (idx, l) in lines.enumerate() {
        let lineno = idx + 3;
        let l = l.map_err(|e| Error::io(path, e))?;
        if l.trim().is_empty() {
            continue;
        }
        vals.clear();
        for tok in l.split(',') {
            let v = tok
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("not a number: {tok:?}")))?;
            vals.push(v);
        }
        if vals.len() != expected_cols.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", expected_cols.len(), vals.len()),
            ));
        }
        let s = |a: usize, n: usize| vals[a..a + n].to_vec();
        match &mut data {
            Dataset::Score(v) => v.push(ScoreExample {
                x: s(0, dx),
                theta: s(dx, dp),
                y: s(dx + dp, dp),
                u: s(dx + 2 * dp, dp),
                lambda: s(dx + 3 * dp, dp),
                weight: vals[dx + 4 * dp],
            }),
            Dataset::Ratio(v) => {
                let label = vals[dx + 2 * dp];
                if label != 0.0 && label != 1.0 {
                    return Err(parse_err(lineno, format!("label must be 0 or 1, found {label}")));
                }
                v.push(RatioExample {
                    x: s(0, dx),
                    theta0: s(dx, dp),
                    theta1: s(dx + dp, dp),
                    label: label as u8,
                    r_lat: latent.then(|| vals[dx + 2 * dp + 1]),
                })
            }
            Dataset::Events(v) => v.push(EventExample {
                x: s(0, dx),
                theta: s(dx, dp),
            }),
        }
        count += 1;
    }
    if count != rows {
        return Err(parse_err(
            count + 3,
            format!("header declares {rows} rows, file holds {count}"),
        ));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::gaussian1d_ksa_closed_form;
    use crate::rng::seeded;
    use crate::samplers::{KernelKind, PairKind};
    use std::sync::Arc;

    fn study_prior() -> PriorSpec {
        PriorSpec::box_uniform(vec![0.5; 3], vec![5.0; 3]).unwrap()
    }

    #[test]
    fn delta_targets_are_plus_minus_four() {
        let k = KernelSpec::constant(KernelKind::Delta, vec![0.25; 3]).unwrap();
        let (data, _) = generate_kse(OracleModel::Dirichlet3, &study_prior(), &k, 500, &mut seeded(1)).unwrap();
        assert_eq!(data.len(), 500);
        for e in &data {
            assert!(e.y.iter().all(|&y| y == 4.0 || y == -4.0));
            let s: f64 = e.x.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_recompute_exactly() {
        let k = KernelSpec::constant(KernelKind::Rectangular, vec![0.25; 3]).unwrap();
        let (data, _) = generate_kse(OracleModel::Dirichlet3, &study_prior(), &k, 200, &mut seeded(2)).unwrap();
        for e in &data {
            for i in 0..3 {
                assert_eq!(e.y[i], e.u[i] / (e.lambda[i] * (1.0 / 3.0)));
            }
        }
        // u = 0.5, λ = 0.25, rectangular
        assert!((0.5 / (0.25 * KernelKind::Rectangular.sigma_sq()) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_binned_kse_tracks_closed_form() {
        let lambda = 0.5;
        let prior = PriorSpec::box_uniform(vec![-0.05], vec![0.05]).unwrap();
        let k = KernelSpec::constant(KernelKind::Delta, vec![lambda]).unwrap();
        let (data, _) = generate_kse(OracleModel::Gaussian1d, &prior, &k, 200_000, &mut seeded(3)).unwrap();
        let edges: Vec<f64> = (0..=8).map(|i| -2.0 + 0.5 * i as f64).collect();
        for w in edges.windows(2) {
            let bin: Vec<&ScoreExample> = data.iter().filter(|e| e.x[0] >= w[0] && e.x[0] < w[1]).collect();
            let n = bin.len() as f64;
            let mean_y = bin.iter().map(|e| e.y[0]).sum::<f64>() / n;
            let var_y = bin.iter().map(|e| (e.y[0] - mean_y).powi(2)).sum::<f64>() / (n - 1.0);
            let mean_ksa = bin
                .iter()
                .map(|e| gaussian1d_ksa_closed_form(e.x[0], e.theta[0], lambda))
                .sum::<f64>()
                / n;
            let z = (mean_y - mean_ksa) / (var_y / n).sqrt();
            assert!(z.abs() < 4.0, "bin {w:?}: z = {z}");
        }
    }

    #[test]
    fn alt_with_constant_widths_matches_plain_target() {
        let prior = study_prior();
        let k = KernelSpec::constant(KernelKind::Delta, vec![0.25; 3]).unwrap();
        let (data, stats) = generate_kse_alt(OracleModel::Dirichlet3, &prior, &k, 2000, &mut seeded(4)).unwrap();
        assert_eq!(data.len(), 2000);
        assert!(stats.dropped_zero_weight > 0);
        for e in &data {
            assert_eq!(e.weight, 1.0);
            for i in 0..3 {
                assert!((e.y[i] - e.u[i] / 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alt_with_varying_widths_reduces_to_shifted_width() {
        let prior = PriorSpec::box_uniform(vec![-10.0], vec![10.0]).unwrap();
        let f: crate::samplers::WidthFn = Arc::new(|x: &[f64], t: &[f64]| vec![0.2 + 0.05 * (x[0] + t[0]).abs()]);
        let k = KernelSpec::with_width_fn(KernelKind::Rectangular, f.clone());
        let inner = PriorSpec::box_uniform(vec![-5.0], vec![5.0]).unwrap();
        let (pool, _) = generate_pool(OracleModel::Gaussian1d, &inner, 300, &mut seeded(5)).unwrap();
        let (data, _) = generate_kse_alt_from_pool(&pool, &prior, &k, &mut seeded(6)).unwrap();
        assert_eq!(data.len(), 300);
        for (e, p) in data.iter().zip(&pool) {
            let l_shift = f(&p.x, &p.theta)[0];
            let expect = e.u[0] / (l_shift * (1.0 / 3.0));
            assert!((e.y[0] - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn pool_reuse_counts_drops() {
        let prior = study_prior();
        let k = KernelSpec::constant(KernelKind::Delta, vec![0.4; 3]).unwrap();
        let (pool, _) = generate_pool(OracleModel::Dirichlet3, &prior, 1000, &mut seeded(7)).unwrap();
        let (data, stats) = generate_kse_alt_from_pool(&pool, &prior, &k, &mut seeded(8)).unwrap();
        assert_eq!(data.len() as u64 + stats.dropped_zero_weight, 1000);
        assert!(data.iter().all(|e| prior.contains(&e.theta)));
    }

    #[test]
    fn ratio_labels_balanced_and_pairs_close() {
        let k = KernelSpec::constant(KernelKind::Rectangular, vec![0.4; 3]).unwrap();
        let pd = PairDistribution::new(PairKind::KernelCorrelated(k), study_prior()).unwrap();
        let n = 20_000;
        let (data, _) = generate_ratio(OracleModel::Dirichlet3, &pd, n, &mut seeded(9), false).unwrap();
        let zeros = data.iter().filter(|e| e.label == 0).count() as f64;
        assert!((zeros - n as f64 / 2.0).abs() < 3.0 * (n as f64 / 4.0).sqrt());
        for e in &data {
            let sep = e.theta0.iter().zip(&e.theta1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(sep < 0.4);
            assert!(e.r_lat.is_none());
        }
    }

    #[test]
    fn latent_requires_capability() {
        let pd = PairDistribution::new(PairKind::Iid, study_prior()).unwrap();
        assert!(generate_ratio(OracleModel::Dirichlet3, &pd, 10, &mut seeded(0), true).is_err());
    }

    #[test]
    fn latent_label_mean_matches_r_lat() {
        let prior = PriorSpec::box_uniform(vec![-1.0], vec![1.0]).unwrap();
        let pd = PairDistribution::new(PairKind::Reference(vec![0.0]), prior).unwrap();
        let (data, _) = generate_ratio(OracleModel::LatentTwoStage, &pd, 100_000, &mut seeded(10), true).unwrap();
        for w in [-2.0, -0.5, 0.5, 2.0].windows(2) {
            let bin: Vec<&RatioExample> = data.iter().filter(|e| e.x[0] >= w[0] && e.x[0] < w[1]).collect();
            let n = bin.len() as f64;
            let my = bin.iter().map(|e| e.y()).sum::<f64>() / n;
            let t: Vec<f64> = bin.iter().map(|e| 1.0 / (1.0 + e.r_lat.unwrap())).collect();
            let mt = t.iter().sum::<f64>() / n;
            let se = (my * (1.0 - my) / n).sqrt();
            assert!((my - mt).abs() < 3.0 * se, "bin {w:?}: {my} vs {mt}");
        }
    }

    #[test]
    fn round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let k = KernelSpec::constant(KernelKind::Rectangular, vec![0.25; 3]).unwrap();
        let (s, _) = generate_kse(OracleModel::Dirichlet3, &study_prior(), &k, 50, &mut seeded(11)).unwrap();
        let prior = PriorSpec::box_uniform(vec![-1.0], vec![1.0]).unwrap();
        let pd = PairDistribution::new(PairKind::Iid, prior).unwrap();
        let (r, _) = generate_ratio(OracleModel::LatentTwoStage, &pd, 50, &mut seeded(12), true).unwrap();
        let (ev, _) = generate_events(OracleModel::Dirichlet3, &[1.0, 2.0, 2.0], 50, &mut seeded(13)).unwrap();
        for (i, ds) in [Dataset::Score(s), Dataset::Ratio(r), Dataset::Events(ev)].into_iter().enumerate() {
            let p = dir.path().join(format!("d{i}.csv"));
            dataset_save(&ds, &p).unwrap();
            assert_eq!(dataset_load(&p).unwrap(), ds);
        }
    }

    #[test]
    fn large_file_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let (ev, _) = generate_events(OracleModel::Gaussian1d, &[0.0], 100_000, &mut seeded(14)).unwrap();
        let p = dir.path().join("big.csv");
        dataset_save(&Dataset::Events(ev), &p).unwrap();
        assert_eq!(dataset_load(&p).unwrap().len(), 100_000);
    }

    #[test]
    fn wrong_schema_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(&p, "#isn-dataset schema=9 kind=events rows=0 event_dim=1 param_dim=1 latent=0\nx0,theta0\n").unwrap();
        assert!(matches!(dataset_load(&p), Err(Error::Version { .. })));
        fs::write(
            &p,
            "#isn-dataset schema=1 kind=events rows=2 event_dim=1 param_dim=1 latent=0\nx0,theta0\n1,2\n1,abc\n",
        )
        .unwrap();
        assert!(matches!(dataset_load(&p), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn saturation_flags_bound() {
        let preds = vec![vec![3.9, 0.0], vec![1.0, -1.0]];
        let r = saturation_diagnostic(&preds, &[0.25, 0.25], 1.0, 0.95);
        assert_eq!(r.bound, vec![4.0, 4.0]);
        assert!(r.warn);
        assert_eq!(r.saturated_fraction, vec![0.5, 0.0]);
        assert!(!saturation_diagnostic(&preds, &[0.1, 0.1], 1.0, 0.95).warn);
    }
}
