use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use isn_core::architectures::{train, Estimator, Model};
use isn_core::config::Config;
use isn_core::datagen::{dataset_load, dataset_save, generate_events, Dataset, GenerationStats};
use isn_core::inference::{bce_estimate, mle_estimate, reweight, weighted_mean, SearchConfig, SearchMethod};
use isn_core::oracles::OracleModel;
use isn_core::rng::{stream, StreamPurpose};
use isn_core::trainer_eval::{
    eval_avg_error, evaluate_instances, export_heatmap_data, run_study, ArchChoice, EvalContext, TaskId,
};
use isn_core::{Error, Result};

/// Inferostatic networks on the Dirichlet benchmark.
#[derive(Parser)]
#[command(name = "isn", version)]
struct Cli {
    /// Experiment configuration (TOML). Benchmark defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for instance and example parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset file for a task, or raw events at a fixed parameter.
    Generate {
        /// kse, klre, carl or events
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        /// Number of rows; the configured n_train by default.
        #[arg(long)]
        n: Option<usize>,
        /// Training instance whose random stream is used.
        #[arg(long, default_value_t = 0)]
        instance: usize,
        /// Parameter point for `events`, comma separated.
        #[arg(long, value_delimiter = ',')]
        theta: Option<Vec<f64>>,
    },
    /// Train one network.
    Train {
        #[arg(long)]
        task: String,
        /// isn or direct
        #[arg(long, default_value = "isn")]
        arch: String,
        /// Training data; generated from the configuration when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        instance: usize,
    },
    /// Average loss and error of trained networks on a task's evaluation sets.
    Evaluate {
        #[arg(long)]
        task: String,
        #[command(flatten)]
        source: ModelsArg,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train every task and architecture and evaluate all pairings.
    CrossEval {
        #[arg(long)]
        report: PathBuf,
        /// Directory for the trained model files.
        #[arg(long)]
        save_models: Option<PathBuf>,
    },
    /// Loss of the true likelihood on each task's first evaluation set.
    Floors {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// (component, truth, prediction) CSV on a task's second evaluation set.
    Heatmap {
        #[arg(long)]
        task: String,
        #[command(flatten)]
        source: ModelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the parameters of an events dataset.
    Infer {
        #[command(flatten)]
        source: ModelArg,
        /// Events file (`generate --task events`).
        #[arg(long)]
        data: PathBuf,
        /// mle or bce
        #[arg(long, default_value = "mle")]
        method: String,
        /// grid or gradient
        #[arg(long, default_value = "grid")]
        search: String,
        #[arg(long, value_delimiter = ',')]
        theta_ref: Option<Vec<f64>>,
        /// Reference sample size for bce; the data size by default.
        #[arg(long)]
        n_ref: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        #[arg(long, default_value_t = 0.01)]
        gradient_step: f64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-event weights that map a Θ0 sample onto Θ1.
    Reweight {
        #[command(flatten)]
        source: ModelArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        theta0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        theta1: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Trained model file.
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    model: Option<PathBuf>,
    /// Use the true likelihood instead of a network.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct ModelsArg {
    /// Trained model files, one per instance.
    #[arg(long, num_args = 1.., conflicts_with = "oracle", required_unless_present = "oracle")]
    models: Vec<PathBuf>,
    #[arg(long)]
    oracle: bool,
}

struct Ctx {
    config: Config,
    config_path: Option<PathBuf>,
    seed: u64,
    hash: String,
}

enum Source {
    Oracle(OracleModel),
    Net(Model<f64>),
}

impl Source {
    fn load(arg: &ModelArg, ctx: &Ctx) -> Result<Self> {
        match &arg.model {
            Some(p) if !arg.oracle => Ok(Source::Net(Model::load(p)?)),
            _ => Ok(Source::Oracle(ctx.config.oracle.model)),
        }
    }

    fn est(&self) -> &dyn Estimator {
        match self {
            Source::Oracle(o) => o,
            Source::Net(m) => m,
        }
    }
}

/// Relative output paths land under `ISN_OUT_DIR` when it is set.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("ISN_OUT_DIR") {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn create_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn manifest(ctx: &Ctx, target: &Path, command: &str, extra: serde_json::Value) -> Result<()> {
    let mut name = target.as_os_str().to_owned();
    name.push(".manifest.json");
    let value = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": ctx.seed,
        "config": ctx.config_path,
        "config_hash": ctx.hash,
        "output": target,
        "details": extra,
    });
    write_json(Path::new(&name), &value)
}

fn task(name: &str) -> Result<TaskId> {
    TaskId::from_name(name)
}

fn events_of(data: &Dataset) -> Result<Vec<Vec<f64>>> {
    Ok(data.as_events()?.iter().map(|e| e.x.clone()).collect())
}

fn search_method(s: &str) -> Result<SearchMethod> {
    match s {
        "grid" => Ok(SearchMethod::Grid),
        "gradient" => Ok(SearchMethod::Gradient),
        other => Err(Error::Config(format!("unknown search `{other}` (valid: grid, gradient)"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let ctx = Ctx {
        hash: config.hash(),
        config,
        config_path: cli.config.clone(),
        seed,
    };

    match cli.command {
        Command::Generate {
            task: name,
            out,
            n,
            instance,
            theta,
        } => {
            let out = out_path(&out);
            create_parent(&out)?;
            let n = n.unwrap_or(ctx.config.train.n_train);
            let (data, stats): (Dataset, GenerationStats) = if name == "events" {
                let theta = theta.ok_or_else(|| Error::Config("events need --theta".into()))?;
                let mut rng = stream(ctx.seed, StreamPurpose::Events, 0, instance as u64);
                let (v, s) = generate_events(ctx.config.oracle.model, &theta, n, &mut rng)?;
                (Dataset::Events(v), s)
            } else {
                let id = TaskId::from_name(&name).map_err(|_| {
                    Error::Config(format!("unknown task `{name}` (valid tasks: kse, klre, carl, events)"))
                })?;
                let spec = ctx.config.task_spec(id)?;
                let mut rng = stream(ctx.seed, StreamPurpose::TrainData, id.number(), instance as u64);
                spec.generate(n, &mut rng)?
            };
            dataset_save(&data, &out)?;
            manifest(
                &ctx,
                &out,
                "generate",
                json!({"task": name, "rows": data.len(), "instance": instance, "stats": stats}),
            )?;
            println!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::Train {
            task: name,
            arch,
            data,
            out,
            instance,
        } => {
            let id = task(&name)?;
            let arch = ArchChoice::from_name(&arch)?;
            let spec = ctx.config.task_spec(id)?;
            spec.validate()?;
            let data = match data {
                Some(p) => dataset_load(p)?,
                None => spec.training_data(ctx.seed, instance)?.0,
            };
            let sub = id.number() * 4 + u64::from(arch == ArchChoice::Direct);
            let mut init = stream(ctx.seed, StreamPurpose::Init, sub, instance as u64);
            let (dx, dt) = (spec.oracle.event_dim(), spec.oracle.param_dim());
            let mut model = Model::<f64>::new(arch.tag(id), dx, dt, &spec.hidden, &mut init)?;
            let mut shuffle = stream(ctx.seed, StreamPurpose::Shuffle, sub, instance as u64);
            let report = train(&mut model, &data, spec.loss, &spec.train, &mut shuffle)?;
            let out = out_path(&out);
            create_parent(&out)?;
            model.save(&out)?;
            manifest(&ctx, &out, "train", json!({"task": name, "instance": instance, "training": report}))?;
            let last = report.epochs.last();
            println!(
                "trained {} on {}: final train loss {:.6}, val loss {:?}, {:.1}s -> {}",
                arch.tag(id).name(),
                id.name(),
                last.map_or(f64::NAN, |e| e.train_loss),
                last.and_then(|e| e.val_loss),
                report.wall_seconds,
                out.display()
            );
        }
        Command::Evaluate {
            task: name,
            source,
            report,
        } => {
            let id = task(&name)?;
            let spec = ctx.config.task_spec(id)?;
            let ev = EvalContext::new(spec, ctx.seed)?;
            let summary = if source.oracle {
                let err = eval_avg_error(&ev.spec.oracle, &ev.spec, &ev.error_set)?;
                println!("oracle avg_loss {:.6} ± {:.6}", ev.floor.mean, ev.floor.se);
                println!("oracle avg_error {} ± {}", err.mean, err.se);
                json!({"task": id, "oracle": true, "avg_loss": ev.floor, "avg_error": err})
            } else {
                let models = source.models.iter().map(Model::<f64>::load).collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Model<f64>> = models.iter().collect();
                let arch = if models.iter().all(|m| m.tag() == isn_core::architectures::ArchitectureTag::Isn) {
                    ArchChoice::Isn
                } else {
                    ArchChoice::Direct
                };
                let r = evaluate_instances(&refs, id, arch, &ev)?;
                for (m, p) in r.instances.iter().zip(&source.models) {
                    println!(
                        "{}: avg_loss {:.6} ± {:.6}  avg_error {:.6} ± {:.6}",
                        p.display(),
                        m.avg_loss.mean,
                        m.avg_loss.se,
                        m.avg_error.mean,
                        m.avg_error.se
                    );
                }
                println!("median avg_loss {:.6}  median avg_error {:.6}", r.median_loss, r.median_error);
                println!("oracle floor {:.6} ± {:.6}", r.floor.mean, r.floor.se);
                json!({"task": id, "oracle": false, "models": source.models, "report": r})
            };
            if let Some(p) = report {
                let p = out_path(&p);
                write_json(&p, &json!({"config_hash": ctx.hash, "seed": ctx.seed, "evaluation": summary}))?;
                manifest(&ctx, &p, "evaluate", json!({"task": name}))?;
            }
        }
        Command::CrossEval { report, save_models } => {
            let specs = TaskId::ALL
                .into_iter()
                .map(|id| ctx.config.task_spec(id))
                .collect::<Result<Vec<_>>>()?;
            let study = run_study(&specs, ctx.seed)?;
            print!("{}", study.report.render());
            if let Some(dir) = save_models {
                let dir = out_path(&dir);
                for set in &study.sets {
                    for (i, m) in set.models.iter().enumerate() {
                        let p = dir.join(format!("{}_{}_{i}.json", set.trained_on.name(), set.architecture.name()));
                        create_parent(&p)?;
                        m.save(&p)?;
                    }
                }
            }
            let training: Vec<_> = study
                .training
                .iter()
                .map(|(t, a, r)| json!({"task": t, "architecture": a, "reports": r}))
                .collect();
            let p = out_path(&report);
            write_json(
                &p,
                &json!({"config_hash": ctx.hash, "seed": ctx.seed, "matrix": study.report, "training": training}),
            )?;
            manifest(&ctx, &p, "cross-eval", json!({}))?;
        }
        Command::Floors { report } => {
            let mut rows = Vec::new();
            for id in TaskId::ALL {
                let ev = EvalContext::new(ctx.config.task_spec(id)?, ctx.seed)?;
                println!(
                    "{:<5} floor {:.4} ± {:.4} (n = {})",
                    id.name(),
                    ev.floor.mean,
                    ev.floor.se,
                    ev.floor.n
                );
                rows.push(json!({"task": id, "floor": ev.floor}));
            }
            if let Some(p) = report {
                let p = out_path(&p);
                write_json(&p, &json!({"config_hash": ctx.hash, "seed": ctx.seed, "floors": rows}))?;
                manifest(&ctx, &p, "floors", json!({}))?;
            }
        }
        Command::Heatmap { task: name, source, out } => {
            let id = task(&name)?;
            let ev = EvalContext::new(ctx.config.task_spec(id)?, ctx.seed)?;
            let src = Source::load(&source, &ctx)?;
            let out = out_path(&out);
            create_parent(&out)?;
            let rows = export_heatmap_data(src.est(), &ev.spec, &ev.error_set, &out)?;
            manifest(&ctx, &out, "heatmap", json!({"task": name, "rows": rows}))?;
            println!("wrote {rows} points to {}", out.display());
        }
        Command::Infer {
            source,
            data,
            method,
            search,
            theta_ref,
            n_ref,
            grid_step,
            gradient_step,
            iterations,
            trace,
            out,
        } => {
            let src = Source::load(&source, &ctx)?;
            let events = events_of(&dataset_load(&data)?)?;
            let region = ctx.config.prior_spec()?;
            let theta_ref = theta_ref.unwrap_or_else(|| region.center());
            let config = SearchConfig {
                method: search_method(&search)?,
                grid_step,
                gradient_step,
                iterations,
                ..SearchConfig::default()
            };
            let est = match method.as_str() {
                "mle" => mle_estimate(src.est(), &events, &theta_ref, &region, &config)?,
                "bce" => {
                    let n = n_ref.unwrap_or(events.len());
                    let mut rng = stream(ctx.seed, StreamPurpose::Events, 1, 0);
                    let (r, _) = generate_events(ctx.config.oracle.model, &theta_ref, n, &mut rng)?;
                    let r: Vec<Vec<f64>> = r.into_iter().map(|e| e.x).collect();
                    bce_estimate(src.est(), &events, &r, &theta_ref, &region, &config)?
                }
                other => return Err(Error::Config(format!("unknown method `{other}` (valid: mle, bce)"))),
            };
            println!("theta_hat {:?} objective {:.6}", est.theta, est.objective);
            for w in &est.warnings {
                println!("warning: {w}");
            }
            if let Some(p) = trace {
                let p = out_path(&p);
                create_parent(&p)?;
                est.write_trace(&p)?;
            }
            if let Some(p) = out {
                let p = out_path(&p);
                write_json(
                    &p,
                    &json!({"config_hash": ctx.hash, "seed": ctx.seed, "method": method, "theta_ref": theta_ref,
                        "theta": est.theta, "objective": est.objective, "converged": est.converged,
                        "on_boundary": est.on_boundary, "warnings": est.warnings}),
                )?;
                manifest(&ctx, &p, "infer", json!({"data": data}))?;
            }
        }
        Command::Reweight {
            source,
            data,
            theta0,
            theta1,
            out,
        } => {
            let src = Source::load(&source, &ctx)?;
            let events = events_of(&dataset_load(&data)?)?;
            let w = reweight(src.est(), &events, &theta0, &theta1)?;
            let (mean, se) = weighted_mean(&events, &w)?;
            let out = out_path(&out);
            create_parent(&out)?;
            let mut text = String::from("weight\n");
            for v in &w {
                text.push_str(&format!("{v:.10e}\n"));
            }
            std::fs::write(&out, text).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let mean_w = w.iter().sum::<f64>() / w.len() as f64;
            manifest(
                &ctx,
                &out,
                "reweight",
                json!({"data": data, "theta0": theta0, "theta1": theta1, "weighted_mean": mean, "weighted_mean_se": se, "mean_weight": mean_w}),
            )?;
            println!("mean weight {mean_w:.6}");
            println!("weighted mean of x {mean:?} ± {se:?}");
        }
    }
    info!("done");
    Ok(())
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 2,
        "schema" => 3,
        "io" => 4,
        "domain" => 5,
        "divergence" => 6,
        "not_applicable" => 7,
        "empty_dataset" => 8,
        "shape" => 9,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{category}]: {e}");
            ExitCode::from(exit_code(category))
        }
    }
}
