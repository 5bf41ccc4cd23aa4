//! `ris-pass` command line. Exit status 0 on success, 2 on usage or
//! configuration errors, 1 on any other failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnn::checkpoint::{load_network, save_network};
use crate::gnn::Network;
use crate::harness::config::{Arch, RunConfig, Subset};
use crate::harness::{baseline_eval, grid_oracle, Method};
use crate::io::{params_fingerprint, DatasetDoc};
use crate::objective::Objective;
use crate::scenario::SystemParams;
use crate::train::{self, write_history};

#[derive(Debug, Parser)]
#[command(name = "ris-pass", version, about = "RIS-assisted pinching-antenna downlink simulation and learned optimization")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides RIS_PASS_RESULTS and the configuration).
    #[arg(long, global = true)]
    results_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset of scenarios.
    GenData {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        /// Output file (default `<results>/dataset.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network on a dataset.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = named::<Arch>)]
        arch: Option<Arch>,
        /// ris+pa, pa-only or fixed-pa-only.
        #[arg(long, value_parser = named::<crate::gnn::SystemConfig>)]
        system: Option<crate::gnn::SystemConfig>,
        /// hzm (three stages) or rzf (two stages).
        #[arg(long, value_parser = named::<crate::gnn::BeamHead>)]
        beams: Option<crate::gnn::BeamHead>,
        #[arg(long)]
        hidden: Option<usize>,
        /// SR or EE.
        #[arg(long, value_parser = named::<Objective>)]
        objective: Option<Objective>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Seed of the shuffling and of the initial weights.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint file (default `<results>/model.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a method and write `report.csv`.
    Eval(EvalArgs),
    /// Grid-search reference solutions.
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        positions: Option<usize>,
        #[arg(long)]
        phase_levels: Option<usize>,
        #[arg(long)]
        max_evaluations: Option<u128>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Per-sample latency of a method.
    Bench(EvalArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset file; generated from the configuration when absent.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// I, II, III, mlp, refine-only or random.
    #[arg(long, alias = "method", value_parser = named::<Method>)]
    strategy: Option<Method>,
    #[arg(long, value_parser = named::<crate::gnn::SystemConfig>)]
    system: Option<crate::gnn::SystemConfig>,
    #[arg(long, value_parser = named::<Objective>)]
    objective: Option<Objective>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
    /// Evaluate the test split only.
    #[arg(long)]
    test_split: bool,
}

/// Parses a value by its serialized name, case-insensitively for methods.
fn named<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    let candidates = [s.to_string(), s.to_ascii_lowercase(), s.to_ascii_uppercase()];
    candidates
        .iter()
        .find_map(|c| serde_json::from_value(serde_json::Value::String(c.clone())).ok())
        .ok_or_else(|| format!("unrecognized value `{s}`"))
}

enum Failure {
    Config(String),
    Run(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}\n\nUsage: ris-pass [--config FILE] <gen-data|train|eval|oracle|bench> [OPTIONS]");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let results = cfg.results_dir(cli.results_dir.as_deref());
    match cli.command {
        Command::GenData { seed, count, out } => {
            cfg.dataset.seed = seed.unwrap_or(cfg.dataset.seed);
            cfg.dataset.count = count.unwrap_or(cfg.dataset.count);
            let params = cfg.system.resolve().map_err(config_error)?;
            let doc = DatasetDoc::generate(&params, cfg.dataset.seed, cfg.dataset.count)?;
            let out = output(&results, out, "dataset.json")?;
            doc.save(&out)?;
            println!("wrote {} scenarios to {}", doc.scenarios.len(), out.display());
        }
        Command::Train { data, arch, system, beams, hidden, objective, epochs, lr, batch_size, seed, out } => {
            let m = &mut cfg.model;
            m.arch = arch.unwrap_or(m.arch);
            m.system = system.unwrap_or(m.system);
            m.beams = beams.unwrap_or(m.beams);
            m.hidden = hidden.unwrap_or(m.hidden);
            let t = &mut cfg.train;
            t.objective = objective.unwrap_or(t.objective);
            t.epochs = epochs.unwrap_or(t.epochs);
            t.lr = lr.unwrap_or(t.lr);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            if let Some(s) = seed {
                t.seed = s;
                m.init_seed = s;
            }
            cfg.validate().map_err(config_error)?;
            let doc = dataset(&cfg, data.data.as_deref())?;
            let mut net = cfg.model.build(&doc.params).map_err(config_error)?;
            let report = match train::train(&mut net, &doc.scenarios, &doc.params, &cfg.train) {
                Ok(r) => r,
                Err(e) => {
                    let partial = output(&results, None, "model.partial.json")?;
                    save_network(&net, &doc.params, &partial)?;
                    eprintln!("best parameters so far saved to {}", partial.display());
                    return Err(e.into());
                }
            };
            train::print_history(&report.history, std::io::stdout().lock())?;
            std::fs::create_dir_all(&results)?;
            let out = output(&results, out, "model.json")?;
            save_network(&net, &doc.params, &out)?;
            write_history(&report.history, &results.join("history.csv"))?;
            write_json(
                &results.join("train.json"),
                &serde_json::json!({
                    "best_epoch": report.best_epoch,
                    "initial_train_loss": report.initial_train_loss,
                    "final_train_loss": report.final_train_loss,
                    "stopped_early": report.stopped_early,
                    "model": net.label(),
                    "system": net.system().label(),
                }),
            )?;
            println!("wrote {}", out.display());
        }
        Command::Eval(args) => {
            let (report, _) = evaluate(&mut cfg, args, &results)?;
            let path = results.join("report.csv");
            report.write_csv(&path)?;
            let mut summary = report.clone();
            summary.samples.clear();
            write_json(&results.join("summary.json"), &summary)?;
            println!(
                "{} / {}: mean SR {:.4} bit/s/Hz, mean EE {:.4} bit/J/Hz over {} samples; wrote {}",
                report.method,
                report.system,
                report.mean_sr,
                report.mean_ee,
                report.samples.len(),
                path.display()
            );
        }
        Command::Bench(args) => {
            let (report, wall) = evaluate(&mut cfg, args, &results)?;
            let times: Vec<f64> = report.samples.iter().map(|s| s.time_ms).collect();
            let max = times.iter().copied().fold(0.0, f64::max);
            let bench = serde_json::json!({
                "method": report.method,
                "system": report.system,
                "samples": times.len(),
                "median_ms": report.median_time_ms,
                "mean_ms": report.mean_time_ms,
                "max_ms": max,
                "wall_s": wall,
            });
            write_json(&results.join("bench.json"), &bench)?;
            println!(
                "{} / {}: median {:.3} ms, mean {:.3} ms, max {:.3} ms per sample ({} samples)",
                report.method,
                report.system,
                report.median_time_ms,
                report.mean_time_ms,
                max,
                times.len()
            );
        }
        Command::Oracle { data, positions, phase_levels, max_evaluations, limit } => {
            let g = &mut cfg.oracle;
            g.positions = positions.unwrap_or(g.positions);
            g.phase_levels = phase_levels.unwrap_or(g.phase_levels);
            g.max_evaluations = max_evaluations.unwrap_or(g.max_evaluations);
            cfg.eval.limit = limit.or(cfg.eval.limit);
            cfg.validate().map_err(config_error)?;
            let doc = dataset(&cfg, data.data.as_deref())?;
            let slice = cfg.eval_slice(&doc.scenarios);
            std::fs::create_dir_all(&results)?;
            let mut w = csv::Writer::from_path(results.join("oracle.csv"))?;
            w.write_record(["sample_id", "SR", "grid_SR", "evaluations"])?;
            let mut solutions = Vec::new();
            for (i, s) in slice.iter().enumerate() {
                let r = grid_oracle(s, &doc.params, &cfg.oracle)?;
                w.write_record([i.to_string(), r.value.to_string(), r.grid_value.to_string(), r.evaluations.to_string()])?;
                solutions.push(r);
            }
            w.flush()?;
            write_json(&results.join("oracle.json"), &solutions)?;
            let mean = solutions.iter().map(|r| r.value).sum::<f64>() / solutions.len().max(1) as f64;
            println!("oracle mean SR {mean:.4} bit/s/Hz over {} samples", solutions.len());
        }
    }
    Ok(())
}

fn evaluate(
    cfg: &mut RunConfig,
    args: EvalArgs,
    results: &Path,
) -> std::result::Result<(crate::harness::StrategyReport, f64), Failure> {
    let e = &mut cfg.eval;
    e.method = args.strategy.unwrap_or(e.method);
    e.system = args.system.or(e.system);
    e.objective = args.objective.unwrap_or(e.objective);
    e.budget = args.budget.unwrap_or(e.budget);
    e.limit = args.limit.or(e.limit);
    if args.test_split {
        e.subset = Subset::Test;
    }
    cfg.validate().map_err(config_error)?;
    let model_path = args.model.or_else(|| cfg.model.checkpoint.clone());
    let doc = dataset(cfg, args.data.data.as_deref())?;
    let net: Option<Network> = match (&model_path, cfg.eval.method.needs_model()) {
        (Some(p), true) => {
            let (net, trained) = load_network(p)?;
            check_compatible(&trained, &doc.params)?;
            Some(net)
        }
        (None, true) => return Err(Error::MissingModel(format!("method {} (pass --model)", cfg.eval.method.label())).into()),
        (_, false) => None,
    };
    let system = cfg.eval.system.or(net.as_ref().map(Network::system)).unwrap_or(cfg.model.system);
    let start = Instant::now();
    let report = baseline_eval(system, cfg.eval.method, net.as_ref(), cfg.eval_slice(&doc.scenarios), &doc.params, &cfg.eval.options())?;
    std::fs::create_dir_all(results)?;
    Ok((report, start.elapsed().as_secs_f64()))
}

/// Models transfer across user counts but not across anything else.
fn check_compatible(trained: &SystemParams, data: &SystemParams) -> Result<()> {
    if params_fingerprint(&trained.clone().with_users(0)) != params_fingerprint(&data.clone().with_users(0)) {
        return Err(Error::ModelMismatch("the model was trained under different system parameters".into()));
    }
    Ok(())
}

fn dataset(cfg: &RunConfig, explicit: Option<&Path>) -> std::result::Result<DatasetDoc, Failure> {
    match explicit.or(cfg.dataset.path.as_deref()) {
        Some(p) => Ok(DatasetDoc::load(p)?),
        None => {
            let params = cfg.system.resolve().map_err(config_error)?;
            Ok(DatasetDoc::generate(&params, cfg.dataset.seed, cfg.dataset.count)?)
        }
    }
}

fn output(results: &Path, explicit: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| results.join(name));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(path)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
