//! The Dirichlet benchmark: three training tasks, seeded instances,
//! evaluation on two held-out sets, oracle floors and the cross-task matrix.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architectures::{
    train, ArchitectureTag, Estimator, Model, TrainConfig, TrainingReport, DEFAULT_HIDDEN,
};
use crate::datagen::{generate_kse, generate_ratio, Dataset, GenerationStats};
use crate::error::{Error, Result};
use crate::losses::{mse_loss, ratio_loss, LossKind, OutputChannel};
use crate::oracles::OracleModel;
use crate::rng::{stream, StreamPurpose};
use crate::samplers::{KernelKind, KernelSpec, PairDistribution, PairKind, PriorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Kse,
    Klre,
    Carl,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Kse, TaskId::Klre, TaskId::Carl];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Kse => "kse",
            TaskId::Klre => "klre",
            TaskId::Carl => "carl",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}` (valid tasks: kse, klre, carl)")))
    }

    /// 1-based task number, also used to separate random streams.
    pub fn number(self) -> u64 {
        match self {
            TaskId::Kse => 1,
            TaskId::Klre => 2,
            TaskId::Carl => 3,
        }
    }

    pub fn channel(self) -> OutputChannel {
        match self {
            TaskId::Kse => OutputChannel::ScoreVector,
            TaskId::Klre | TaskId::Carl => OutputChannel::LogRatio,
        }
    }
}

/// Which network family to train for a task; `Direct` resolves to the
/// direct score or direct ratio head depending on the task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchChoice {
    Isn,
    Direct,
}

impl ArchChoice {
    pub const ALL: [ArchChoice; 2] = [ArchChoice::Isn, ArchChoice::Direct];

    pub fn name(self) -> &'static str {
        match self {
            ArchChoice::Isn => "isn",
            ArchChoice::Direct => "direct",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "isn" => Ok(ArchChoice::Isn),
            "direct" => Ok(ArchChoice::Direct),
            other => Err(Error::Config(format!("unknown architecture `{other}` (valid: isn, direct)"))),
        }
    }

    pub fn tag(self, task: TaskId) -> ArchitectureTag {
        match (self, task.channel()) {
            (ArchChoice::Isn, _) => ArchitectureTag::Isn,
            (ArchChoice::Direct, OutputChannel::ScoreVector) => ArchitectureTag::DirectScore,
            (ArchChoice::Direct, OutputChannel::LogRatio) => ArchitectureTag::DirectRatio,
        }
    }

    fn stream_offset(self) -> u64 {
        match self {
            ArchChoice::Isn => 0,
            ArchChoice::Direct => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub id: TaskId,
    pub oracle: OracleModel,
    pub prior: PriorSpec,
    /// Score-target kernel for `kse`, pair kernel for `klre`; unused by `carl`.
    pub kernel: KernelSpec,
    pub loss: LossKind,
    pub n_train: usize,
    pub n_eval: usize,
    pub n_seeds: usize,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
}

impl TaskSpec {
    /// Full-size benchmark settings.
    pub fn benchmark(id: TaskId) -> Self {
        let kernel = match id {
            TaskId::Kse => KernelSpec::constant(KernelKind::Delta, vec![0.25; 3]),
            TaskId::Klre | TaskId::Carl => KernelSpec::constant(KernelKind::Rectangular, vec![0.4; 3]),
        }
        .expect("valid widths");
        TaskSpec {
            id,
            oracle: OracleModel::Dirichlet3,
            prior: PriorSpec::box_uniform(vec![0.5; 3], vec![5.0; 3]).expect("valid prior"),
            kernel,
            loss: match id {
                TaskId::Kse => LossKind::Mse,
                _ => LossKind::Logistic,
            },
            n_train: 100_000,
            n_eval: 100_000,
            n_seeds: 5,
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }

    /// Reduced profile that runs on a desktop in minutes.
    pub fn desk(id: TaskId) -> Self {
        let mut spec = Self::benchmark(id);
        spec.n_train = 20_000;
        spec.train.epochs = 10;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n_train", self.n_train), ("n_eval", self.n_eval), ("n_seeds", self.n_seeds)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.prior.validate()?;
        if self.prior.dim() != self.oracle.param_dim() {
            return Err(Error::Config(format!(
                "prior has {} dimensions but {:?} has {} parameters",
                self.prior.dim(),
                self.oracle.param_dim(),
                self.oracle.param_dim()
            )));
        }
        if self.loss.channel() != self.id.channel() {
            return Err(Error::Config(format!(
                "loss {} does not fit task {}",
                self.loss.name(),
                self.id.name()
            )));
        }
        if self.loss.requires_r_lat() && !self.oracle.capabilities().can_latent_ratio {
            return Err(Error::Config(format!(
                "loss {} needs latent information that {:?} does not expose",
                self.loss.name(),
                self.oracle
            )));
        }
        Ok(())
    }

    pub fn pair_distribution(&self) -> Result<PairDistribution> {
        let kind = match self.id {
            TaskId::Kse => return Err(Error::Config("the kse task draws no parameter pairs".into())),
            TaskId::Klre => PairKind::KernelCorrelated(self.kernel.clone()),
            TaskId::Carl => PairKind::Iid,
        };
        PairDistribution::new(kind, self.prior.clone())
    }

    pub fn generate<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Dataset, GenerationStats)> {
        match self.id {
            TaskId::Kse => {
                let (v, s) = generate_kse(self.oracle, &self.prior, &self.kernel, n, rng)?;
                Ok((Dataset::Score(v), s))
            }
            TaskId::Klre | TaskId::Carl => {
                let (v, s) = generate_ratio(self.oracle, &self.pair_distribution()?, n, rng, self.loss.requires_r_lat())?;
                Ok((Dataset::Ratio(v), s))
            }
        }
    }

    /// Training set of instance `i`; both architectures see the same data.
    pub fn training_data(&self, master_seed: u64, instance: usize) -> Result<(Dataset, GenerationStats)> {
        let mut rng = stream(master_seed, StreamPurpose::TrainData, self.id.number(), instance as u64);
        self.generate(self.n_train, &mut rng)
    }
}

/// Mean of per-example values with its sample standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::EmptyDataset("no values to average".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(MeanSe { mean, se, n })
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-example values of the task's evaluation loss.
pub fn per_example_losses(est: &dyn Estimator, task: &TaskSpec, data: &Dataset) -> Result<Vec<f64>> {
    match task.id.channel() {
        OutputChannel::ScoreVector => data
            .as_score()?
            .par_iter()
            .map(|ex| {
                let pred = est.predict_score(&ex.x, &ex.theta)?;
                Ok(mse_loss(&pred, &ex.y, ex.weight)?.0)
            })
            .collect(),
        OutputChannel::LogRatio => data
            .as_ratio()?
            .par_iter()
            .map(|ex| {
                let lr = est.predict_log_ratio(&ex.x, &ex.theta0, &ex.theta1)?;
                Ok(ratio_loss(task.loss, lr, ex.y(), ex.r_lat)?.value)
            })
            .collect(),
    }
}

/// Per-example squared error against the oracle truth: the component mean
/// of (ŝ_i − s_i)² for scores, (ln r̂ − ln r)² for ratios.
pub fn per_example_errors(est: &dyn Estimator, task: &TaskSpec, data: &Dataset) -> Result<Vec<f64>> {
    let caps = task.oracle.capabilities();
    match task.id.channel() {
        OutputChannel::ScoreVector => {
            if !caps.can_score {
                return Err(Error::NotApplicable(format!("{:?} has no true score", task.oracle)));
            }
            data.as_score()?
                .par_iter()
                .map(|ex| {
                    let pred = est.predict_score(&ex.x, &ex.theta)?;
                    let truth = task.oracle.score(&ex.x, &ex.theta)?;
                    let n = truth.len() as f64;
                    Ok(pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n)
                })
                .collect()
        }
        OutputChannel::LogRatio => {
            if !caps.can_log_density {
                return Err(Error::NotApplicable(format!("{:?} has no true likelihood", task.oracle)));
            }
            data.as_ratio()?
                .par_iter()
                .map(|ex| {
                    let pred = est.predict_log_ratio(&ex.x, &ex.theta0, &ex.theta1)?;
                    let truth = task.oracle.log_ratio(&ex.x, &ex.theta0, &ex.theta1)?;
                    Ok((pred - truth).powi(2))
                })
                .collect()
        }
    }
}

pub fn eval_avg_loss(est: &dyn Estimator, task: &TaskSpec, data: &Dataset) -> Result<MeanSe> {
    MeanSe::from_values(&per_example_losses(est, task, data)?)
}

pub fn eval_avg_error(est: &dyn Estimator, task: &TaskSpec, data: &Dataset) -> Result<MeanSe> {
    MeanSe::from_values(&per_example_errors(est, task, data)?)
}

/// The two evaluation sets of a task, shared by every network evaluated on
/// it, together with the oracle's per-example losses on the first.
pub struct EvalContext {
    pub spec: TaskSpec,
    pub loss_set: Dataset,
    pub error_set: Dataset,
    pub stats: GenerationStats,
    pub oracle_losses: Vec<f64>,
    pub floor: MeanSe,
}

impl EvalContext {
    pub fn new(spec: TaskSpec, master_seed: u64) -> Result<Self> {
        spec.validate()?;
        let t = spec.id.number();
        let (loss_set, mut stats) = spec.generate(spec.n_eval, &mut stream(master_seed, StreamPurpose::EvalLoss, t, 0))?;
        let (error_set, s2) = spec.generate(spec.n_eval, &mut stream(master_seed, StreamPurpose::EvalError, t, 0))?;
        stats.merge(&s2);
        let oracle_losses = per_example_losses(&spec.oracle, &spec, &loss_set)?;
        let floor = MeanSe::from_values(&oracle_losses)?;
        Ok(EvalContext {
            spec,
            loss_set,
            error_set,
            stats,
            oracle_losses,
            floor,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance: usize,
    pub avg_loss: MeanSe,
    pub avg_error: MeanSe,
    /// Paired per-example difference between this instance's loss and the
    /// oracle's on the same examples.
    pub excess_loss: MeanSe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trained_on: TaskId,
    pub architecture: ArchChoice,
    pub evaluated_on: TaskId,
    pub instances: Vec<InstanceMetrics>,
    pub median_loss: f64,
    pub median_error: f64,
    pub floor: MeanSe,
}

pub fn evaluate_instances(
    models: &[&Model<f64>],
    trained_on: TaskId,
    architecture: ArchChoice,
    ctx: &EvalContext,
) -> Result<EvalReport> {
    let instances = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let run = || -> Result<InstanceMetrics> {
                let losses = per_example_losses(*m, &ctx.spec, &ctx.loss_set)?;
                let diffs: Vec<f64> = losses.iter().zip(&ctx.oracle_losses).map(|(a, b)| a - b).collect();
                Ok(InstanceMetrics {
                    instance: i,
                    avg_loss: MeanSe::from_values(&losses)?,
                    avg_error: eval_avg_error(*m, &ctx.spec, &ctx.error_set)?,
                    excess_loss: MeanSe::from_values(&diffs)?,
                })
            };
            run().map_err(|e| Error::Instance {
                instance: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let losses: Vec<f64> = instances.iter().map(|m| m.avg_loss.mean).collect();
    let errors: Vec<f64> = instances.iter().map(|m| m.avg_error.mean).collect();
    Ok(EvalReport {
        trained_on,
        architecture,
        evaluated_on: ctx.spec.id,
        median_loss: median(&losses),
        median_error: median(&errors),
        instances,
        floor: ctx.floor,
    })
}

pub struct TrainedInstance {
    pub instance: usize,
    pub model: Model<f64>,
    pub training: TrainingReport,
    pub generation: GenerationStats,
}

/// Train `n_seeds` instances of one architecture on a task. Instances run in
/// parallel on the current rayon pool; each owns its data, initialisation
/// and shuffle streams, so the result does not depend on the pool size.
pub fn train_instances(task: &TaskSpec, arch: ArchChoice, master_seed: u64) -> Result<Vec<TrainedInstance>> {
    task.validate()?;
    let tag = arch.tag(task.id);
    let sub = task.id.number() * 4 + arch.stream_offset();
    (0..task.n_seeds)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<TrainedInstance> {
                let (data, generation) = task.training_data(master_seed, i)?;
                let mut init = stream(master_seed, StreamPurpose::Init, sub, i as u64);
                let (d_x, d_t) = (task.oracle.event_dim(), task.oracle.param_dim());
                let mut model = Model::<f64>::new(tag, d_x, d_t, &task.hidden, &mut init)?;
                let mut shuffle = stream(master_seed, StreamPurpose::Shuffle, sub, i as u64);
                let training = train(&mut model, &data, task.loss, &task.train, &mut shuffle)?;
                info!(
                    "{} {} instance {i}: final train loss {:.5} in {:.1}s",
                    task.id.name(),
                    tag.name(),
                    training.epochs.last().map_or(f64::NAN, |e| e.train_loss),
                    training.wall_seconds
                );
                Ok(TrainedInstance {
                    instance: i,
                    model,
                    training,
                    generation,
                })
            };
            run().map_err(|e| Error::Instance {
                instance: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub struct TaskRun {
    pub task: TaskId,
    pub architecture: ArchChoice,
    pub instances: Vec<TrainedInstance>,
    pub report: EvalReport,
}

/// Train and evaluate on the task's own evaluation sets.
pub fn run_task(task: &TaskSpec, arch: ArchChoice, master_seed: u64, ctx: &EvalContext) -> Result<TaskRun> {
    if ctx.spec.id != task.id {
        return Err(Error::Config(format!(
            "evaluation context is for {}, not {}",
            ctx.spec.id.name(),
            task.id.name()
        )));
    }
    let instances = train_instances(task, arch, master_seed)?;
    let models: Vec<&Model<f64>> = instances.iter().map(|t| &t.model).collect();
    let report = evaluate_instances(&models, task.id, arch, ctx)?;
    Ok(TaskRun {
        task: task.id,
        architecture: arch,
        instances,
        report,
    })
}

/// All instances of one (training task, architecture) column.
pub struct TrainedSet {
    pub trained_on: TaskId,
    pub architecture: ArchChoice,
    pub models: Vec<Model<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell {
    NotApplicable,
    Evaluated(EvalReport),
}

impl Cell {
    pub fn report(&self) -> Option<&EvalReport> {
        match self {
            Cell::NotApplicable => None,
            Cell::Evaluated(r) => Some(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub avg_loss: MeanSe,
    pub avg_error: MeanSe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub evaluated_on: TaskId,
    pub cells: Vec<Cell>,
    pub truth: TruthCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalReport {
    pub columns: Vec<(TaskId, ArchChoice)>,
    pub rows: Vec<MatrixRow>,
}

impl CrossEvalReport {
    pub fn cell(&self, evaluated_on: TaskId, trained_on: TaskId, arch: ArchChoice) -> Option<&Cell> {
        let col = self.columns.iter().position(|&c| c == (trained_on, arch))?;
        self.rows.iter().find(|r| r.evaluated_on == evaluated_on).map(|r| &r.cells[col])
    }

    /// Median loss and error per cell, one block per evaluation task.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<6} {:<6}", "eval", "metric");
        for (t, a) in &self.columns {
            let _ = write!(out, " {:>12}", format!("{}/{}", t.name(), a.name()));
        }
        let _ = writeln!(out, " {:>12}", "truth");
        for row in &self.rows {
            for metric in ["loss", "error"] {
                let _ = write!(out, "{:<6} {:<6}", row.evaluated_on.name(), metric);
                for cell in &row.cells {
                    match cell {
                        Cell::NotApplicable => {
                            let _ = write!(out, " {:>12}", "---");
                        }
                        Cell::Evaluated(r) => {
                            let v = if metric == "loss" { r.median_loss } else { r.median_error };
                            let _ = write!(out, " {v:>12.4}");
                        }
                    }
                }
                let truth = if metric == "loss" { row.truth.avg_loss.mean } else { row.truth.avg_error.mean };
                let _ = writeln!(out, " {truth:>12.4}");
            }
        }
        out
    }
}

fn applicable(model: &Model<f64>, task: TaskId) -> bool {
    match task.channel() {
        OutputChannel::ScoreVector => model.can_score(),
        OutputChannel::LogRatio => model.can_ratio(),
    }
}

/// Evaluate every trained set on every task. Cells whose networks lack the
/// required head are marked not applicable.
pub fn cross_evaluate(sets: &[TrainedSet], contexts: &[EvalContext]) -> Result<CrossEvalReport> {
    let columns = sets.iter().map(|s| (s.trained_on, s.architecture)).collect();
    let mut rows = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let mut cells = Vec::with_capacity(sets.len());
        for set in sets {
            if set.models.is_empty() || !set.models.iter().all(|m| applicable(m, ctx.spec.id)) {
                cells.push(Cell::NotApplicable);
                continue;
            }
            let models: Vec<&Model<f64>> = set.models.iter().collect();
            cells.push(Cell::Evaluated(evaluate_instances(&models, set.trained_on, set.architecture, ctx)?));
        }
        let truth = TruthCell {
            avg_loss: ctx.floor,
            avg_error: eval_avg_error(&ctx.spec.oracle, &ctx.spec, &ctx.error_set)?,
        };
        rows.push(MatrixRow {
            evaluated_on: ctx.spec.id,
            cells,
            truth,
        });
    }
    Ok(CrossEvalReport { columns, rows })
}

pub struct Study {
    pub contexts: Vec<EvalContext>,
    pub sets: Vec<TrainedSet>,
    pub training: Vec<(TaskId, ArchChoice, Vec<TrainingReport>)>,
    pub report: CrossEvalReport,
}

/// Train both architectures on every task and fill the full matrix.
pub fn run_study(specs: &[TaskSpec], master_seed: u64) -> Result<Study> {
    let contexts = specs
        .iter()
        .map(|s| EvalContext::new(s.clone(), master_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut sets = Vec::new();
    let mut training = Vec::new();
    for spec in specs {
        for arch in ArchChoice::ALL {
            let trained = train_instances(spec, arch, master_seed)?;
            training.push((spec.id, arch, trained.iter().map(|t| t.training.clone()).collect()));
            sets.push(TrainedSet {
                trained_on: spec.id,
                architecture: arch,
                models: trained.into_iter().map(|t| t.model).collect(),
            });
        }
    }
    let report = cross_evaluate(&sets, &contexts)?;
    Ok(Study {
        contexts,
        sets,
        training,
        report,
    })
}

/// (component, truth, prediction) triples on an evaluation set.
pub fn heatmap_points(est: &dyn Estimator, task: &TaskSpec, data: &Dataset) -> Result<Vec<(usize, f64, f64)>> {
    match task.id.channel() {
        OutputChannel::ScoreVector => {
            let rows: Vec<Vec<(usize, f64, f64)>> = data
                .as_score()?
                .par_iter()
                .map(|ex| {
                    let pred = est.predict_score(&ex.x, &ex.theta)?;
                    let truth = task.oracle.score(&ex.x, &ex.theta)?;
                    Ok(truth.into_iter().zip(pred).enumerate().map(|(i, (t, p))| (i, t, p)).collect())
                })
                .collect::<Result<_>>()?;
            Ok(rows.into_iter().flatten().collect())
        }
        OutputChannel::LogRatio => data
            .as_ratio()?
            .par_iter()
            .map(|ex| {
                let p = est.predict_log_ratio(&ex.x, &ex.theta0, &ex.theta1)?;
                let t = task.oracle.log_ratio(&ex.x, &ex.theta0, &ex.theta1)?;
                Ok((0, t, p))
            })
            .collect(),
    }
}

/// Write the heatmap CSV; returns the number of data rows.
pub fn export_heatmap_data(est: &dyn Estimator, task: &TaskSpec, data: &Dataset, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let points = heatmap_points(est, task, data)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "component,truth,prediction")?;
        for (c, t, p) in &points {
            writeln!(w, "{c},{t:.10e},{p:.10e}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))?;
    Ok(points.len())
}

pub fn pearson(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architectures::{LogRatioEstimator, ScoreEstimator};
    use crate::oracles::dirichlet_score;
    use crate::rng::seeded;
    use rand::Rng;

    struct Zero;

    impl ScoreEstimator for Zero {
        fn predict_score(&self, _x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; theta.len()])
        }
    }

    impl LogRatioEstimator for Zero {
        fn predict_log_ratio(&self, _x: &[f64], _t0: &[f64], _t1: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
    }

    fn tiny(id: TaskId) -> TaskSpec {
        let mut s = TaskSpec::benchmark(id);
        s.n_train = 300;
        s.n_eval = 400;
        s.n_seeds = 2;
        s.train.epochs = 2;
        s
    }

    #[test]
    fn task_names_round_trip_and_reject_unknown() {
        for t in TaskId::ALL {
            assert_eq!(TaskId::from_name(t.name()).unwrap(), t);
        }
        let msg = TaskId::from_name("nope").unwrap_err().to_string();
        assert!(msg.contains("kse") && msg.contains("klre") && msg.contains("carl"));
    }

    #[test]
    fn zero_counts_are_configuration_errors() {
        let mut s = TaskSpec::benchmark(TaskId::Kse);
        s.n_train = 0;
        assert!(matches!(train_instances(&s, ArchChoice::Isn, 1), Err(Error::Config(_))));
        let mut s = TaskSpec::benchmark(TaskId::Klre);
        s.loss = LossKind::Mse;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        s.loss = LossKind::Alice;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn median_is_order_free() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        let mut v = vec![0.3, 9.0, -1.0, 2.5, 0.7];
        let m = median(&v);
        v.reverse();
        assert_eq!(median(&v), m);
        v.swap(0, 3);
        assert_eq!(median(&v), m);
    }

    #[test]
    fn mean_se_matches_hand_values() {
        let m = MeanSe::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(MeanSe::from_values(&[]).is_err());
    }

    #[test]
    fn oracle_has_zero_error_on_every_task() {
        for id in TaskId::ALL {
            let spec = tiny(id);
            let (data, _) = spec.generate(500, &mut seeded(3)).unwrap();
            let e = eval_avg_error(&spec.oracle, &spec, &data).unwrap();
            assert_eq!(e.mean, 0.0);
        }
    }

    #[test]
    fn zero_score_error_is_mean_square_score() {
        let spec = TaskSpec::benchmark(TaskId::Kse);
        let (data, _) = spec.generate(100_000, &mut seeded(11)).unwrap();
        let zero = eval_avg_error(&Zero, &spec, &data).unwrap().mean;
        let floor = eval_avg_loss(&spec.oracle, &spec, &data).unwrap().mean;

        // independent draw of the same sampling distribution
        let mut rng = seeded(12);
        let mut acc = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let theta: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..5.0)).collect();
            let shifted: Vec<f64> = theta
                .iter()
                .map(|t| t + if rng.random::<bool>() { 0.25 } else { -0.25 })
                .collect();
            let g: Vec<f64> = shifted
                .iter()
                .map(|&a| rand_distr::Distribution::sample(&rand_distr::Gamma::new(a, 1.0).unwrap(), &mut rng))
                .collect();
            let s: f64 = g.iter().sum();
            let x: Vec<f64> = g.iter().map(|v| v / s).collect();
            if x.iter().any(|&v| v <= 0.0) {
                continue;
            }
            let sc = dirichlet_score(&x, &theta).unwrap();
            acc += sc.iter().map(|v| v * v).sum::<f64>() / 3.0;
        }
        let ms = acc / n as f64;
        assert!((zero - ms).abs() < 0.05 * ms, "zero-model error {zero} vs E[s^2] {ms}");
        assert!(floor > 15.0 && floor < 16.0, "floor {floor}");
    }

    #[test]
    fn direct_score_cells_are_not_applicable_on_ratio_tasks() {
        let seed = 5;
        let specs: Vec<TaskSpec> = TaskId::ALL.into_iter().map(tiny).collect();
        let study = run_study(&specs, seed).unwrap();
        let r = &study.report;
        assert_eq!(r.columns.len(), 6);
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.cells.len() == 6 && row.truth.avg_error.mean == 0.0));
        assert_eq!(r.cell(TaskId::Klre, TaskId::Kse, ArchChoice::Direct), Some(&Cell::NotApplicable));
        assert_eq!(r.cell(TaskId::Kse, TaskId::Carl, ArchChoice::Direct), Some(&Cell::NotApplicable));
        let portable = r.cell(TaskId::Carl, TaskId::Kse, ArchChoice::Isn).unwrap().report().unwrap();
        assert!(portable.instances.iter().all(|m| m.avg_loss.mean.is_finite() && m.avg_error.mean.is_finite()));
        let na = r.rows.iter().flat_map(|row| &row.cells).filter(|c| **c == Cell::NotApplicable).count();
        assert_eq!(na, 4);
        assert!(r.render().contains("---"));
        let json = serde_json::to_string(r).unwrap();
        let back: CrossEvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, r);
    }

    #[test]
    fn runs_are_reproducible_from_the_master_seed() {
        let spec = tiny(TaskId::Klre);
        let ctx = EvalContext::new(spec.clone(), 9).unwrap();
        let a = run_task(&spec, ArchChoice::Isn, 9, &ctx).unwrap();
        let b = run_task(&spec, ArchChoice::Isn, 9, &ctx).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.instances.len(), spec.n_seeds);
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.model.net(), y.model.net());
        }
        let c = run_task(&spec, ArchChoice::Isn, 10, &ctx).unwrap();
        assert_ne!(a.report, c.report);
    }

    #[test]
    fn error_is_a_pure_function_of_the_model() {
        let spec = tiny(TaskId::Kse);
        let ctx = EvalContext::new(spec.clone(), 2).unwrap();
        let trained = train_instances(&spec, ArchChoice::Isn, 2).unwrap();
        let m = &trained[1].model;
        let alone = evaluate_instances(&[m], spec.id, ArchChoice::Isn, &ctx).unwrap();
        let both = evaluate_instances(&[&trained[0].model, m], spec.id, ArchChoice::Isn, &ctx).unwrap();
        assert_eq!(alone.instances[0].avg_error, both.instances[1].avg_error);
    }

    #[test]
    fn heatmap_rows_and_diagonal() {
        let dir = tempfile::tempdir().unwrap();
        for (id, per) in [(TaskId::Kse, 3), (TaskId::Carl, 1)] {
            let spec = tiny(id);
            let ctx = EvalContext::new(spec.clone(), 4).unwrap();
            let path = dir.path().join(format!("{}.csv", id.name()));
            let rows = export_heatmap_data(&spec.oracle, &spec, &ctx.error_set, &path).unwrap();
            assert_eq!(rows, spec.n_eval * per);
            let text = std::fs::read_to_string(&path).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some("component,truth,prediction"));
            for line in lines {
                let f: Vec<&str> = line.split(',').collect();
                assert_eq!(f[1], f[2]);
            }
        }
    }

    #[test]
    fn divergence_carries_the_instance_index() {
        let mut spec = tiny(TaskId::Kse);
        spec.train.adam.learning_rate = f64::INFINITY;
        match train_instances(&spec, ArchChoice::Isn, 1) {
            Err(Error::Instance { instance: 0, source }) => assert_eq!(source.category(), "divergence"),
            other => panic!("unexpected {:?}", other.map(|v| v.len())),
        }
    }
}
