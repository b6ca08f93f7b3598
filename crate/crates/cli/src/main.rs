//! `tpp`: simulate event-sequence scenarios, fit models, run GoF/OoD tests,
//! and execute full experiment sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;
mod experiment;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tpp_core::detect::{run_gof, run_ood, TestOutcome};
use tpp_core::fit::{fit_hawkes, fit_poisson, FitConfig};
use tpp_core::jsonl::{load_jsonl, save_jsonl};
use tpp_core::model::{deserialize_model, serialize_model, AnyModel, TppModel};
use tpp_core::rng::RngHandle;
use tpp_core::simulate::{
    sample_dataset, sample_scenario_id, sample_scenario_ood, ScenarioSpec, SimulateError,
};
use tpp_core::stats::StatisticKind;
use tpp_core::types::Dataset;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "tpp",
    version,
    about = "Goodness-of-fit testing and anomaly detection for event sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a scenario's ID or OoD process.
    Simulate(SimulateArgs),
    /// Fit a parametric model to a JSONL dataset by maximum likelihood.
    Fit(FitArgs),
    /// Score test sets against a reference distribution and report p-values and ROC AUC.
    Test(TestArgs),
    /// Run a full (scenario x delta x seed x statistic) sweep from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario kind (rate | stopping | renewal | hawkes | inhomogeneous |
    /// self-correcting | increasing-rate | renewal-b | server-stop |
    /// server-overload | latency).
    #[arg(long)]
    scenario: String,
    /// Detectability parameter in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Number of sequences.
    #[arg(long)]
    n: usize,
    /// Observation horizon.
    #[arg(long, default_value_t = 100.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw from the delta-perturbed OoD process instead of the ID process.
    #[arg(long)]
    ood: bool,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Model family: poisson | hawkes.
    #[arg(long)]
    model: String,
    /// Training dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Output path for the fitted model record.
    #[arg(long)]
    out: PathBuf,
    /// Objective-trace path (default: <out>.log).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    /// Relative improvement below which the fit stops.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the Hawkes kernel decay fixed at 1.
    #[arg(long)]
    freeze_decay: bool,
}

#[derive(Args)]
struct TestArgs {
    /// gof: reference statistics from model samples; ood: from --ref-data.
    #[arg(long)]
    mode: String,
    /// Statistic kind, or "all".
    #[arg(long)]
    statistic: String,
    /// Model record path (fitted or analytic).
    #[arg(long)]
    model: PathBuf,
    /// Reference dataset: required in ood mode (the training data),
    /// optional in gof mode (replaces generated model samples).
    #[arg(long)]
    ref_data: Option<PathBuf>,
    /// Number of model samples for the gof reference when --ref-data is omitted.
    #[arg(long, default_value_t = 1000)]
    n_ref: usize,
    /// Seed for generated model samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// In-distribution test set (JSONL).
    #[arg(long)]
    test_id: PathBuf,
    /// Out-of-distribution test set (JSONL).
    #[arg(long)]
    test_ood: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: <config stem>-results).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        CliError::Runtime(message.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Test(args) => cmd_test(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

// OoD draws use a disjoint stream block so `--ood` output is independent of
// the ID output under the same seed.
const OOD_STREAM_BASE: u64 = 1 << 32;

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let kind = args
        .scenario
        .parse()
        .map_err(|e: String| CliError::usage(e))?;
    if args.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let spec = ScenarioSpec::with_t_max(kind, args.delta, args.t_max).map_err(|e| match e {
        SimulateError::InvalidDelta { .. } | SimulateError::InvalidParameter(_) => {
            CliError::usage(e.to_string())
        }
        other => CliError::runtime(other),
    })?;

    let base = RngHandle::new(args.seed, if args.ood { OOD_STREAM_BASE } else { 0 });
    let sequences: Vec<_> = (0..args.n as u64)
        .into_par_iter()
        .map(|i| {
            if args.ood {
                sample_scenario_ood(&spec, base.offset(i))
            } else {
                sample_scenario_id(&spec, base.offset(i))
            }
        })
        .collect();
    let dataset = Dataset::new(sequences, kind.num_marks()).expect("scenario output is valid");
    save_jsonl(&dataset, &args.out).map_err(CliError::runtime)?;
    eprintln!(
        "wrote {} sequences ({} events total) to {}",
        dataset.len(),
        dataset.iter().map(|s| s.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let data = load_jsonl(&args.data).map_err(CliError::runtime)?;
    let (model, trace): (AnyModel, Vec<f64>) = match args.model.as_str() {
        "poisson" => {
            let fitted = fit_poisson(&data).map_err(CliError::runtime)?;
            let mut objective = 0.0;
            for seq in data.iter() {
                objective += fitted.log_likelihood(seq).map_err(CliError::runtime)?;
            }
            objective /= data.len() as f64;
            (fitted.into(), vec![objective])
        }
        "hawkes" => {
            let fit_config = FitConfig {
                max_iterations: args.max_iterations,
                step_size: args.step_size,
                convergence_tol: args.tol,
                seed: args.seed,
                freeze_decay: args.freeze_decay,
            };
            let fit = fit_hawkes(&data, &fit_config).map_err(CliError::runtime)?;
            eprintln!(
                "fit: {} iterations, converged = {}, objective {:.6}",
                fit.iterations,
                fit.converged,
                fit.trace.last().copied().unwrap_or(f64::NAN)
            );
            (fit.model.into(), fit.trace)
        }
        other => return Err(CliError::usage(format!("unknown model family {other:?}"))),
    };

    fs::write(&args.out, serialize_model(&model) + "\n").map_err(CliError::runtime)?;
    let log_path = args
        .log
        .unwrap_or_else(|| PathBuf::from(format!("{}.log", args.out.display())));
    let mut log = String::from("iteration,mean_log_likelihood\n");
    for (i, objective) in trace.iter().enumerate() {
        log.push_str(&format!("{i},{objective}\n"));
    }
    fs::write(&log_path, log).map_err(CliError::runtime)?;
    eprintln!(
        "wrote model to {} and trace to {}",
        args.out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_test(args: TestArgs) -> Result<(), CliError> {
    let statistics: Vec<StatisticKind> = if args.statistic == "all" {
        StatisticKind::ALL.to_vec()
    } else {
        vec![args
            .statistic
            .parse()
            .map_err(|e: String| CliError::usage(e))?]
    };
    let model_text = fs::read_to_string(&args.model).map_err(CliError::runtime)?;
    let model = deserialize_model(&model_text).map_err(CliError::runtime)?;
    let test_id = load_jsonl(&args.test_id).map_err(CliError::runtime)?;
    let test_ood = load_jsonl(&args.test_ood).map_err(CliError::runtime)?;

    let mode = args.mode.as_str();
    let reference: Dataset = match (mode, &args.ref_data) {
        ("gof", Some(path)) | ("ood", Some(path)) => load_jsonl(path).map_err(CliError::runtime)?,
        ("gof", None) => {
            if args.n_ref == 0 {
                return Err(CliError::usage("--n-ref must be positive"));
            }
            sample_dataset(
                &model,
                args.n_ref,
                test_id.sequences().first().map_or(100.0, |s| s.t_max()),
                RngHandle::new(args.seed, 0),
            )
        }
        ("ood", None) => {
            return Err(CliError::usage(
                "ood mode requires --ref-data (the training dataset)",
            ))
        }
        (other, _) => return Err(CliError::usage(format!("unknown mode {other:?}"))),
    };

    let mut out = String::from("statistic,set,index,p_value\n");
    for &stat in &statistics {
        let outcome: TestOutcome = match mode {
            "gof" => run_gof(stat, &model, &reference, &test_id, &test_ood),
            _ => run_ood(stat, &model, &reference, &test_id, &test_ood),
        }
        .map_err(CliError::runtime)?;
        // Reported p-values use the two-sided (factor-2) convention; the
        // AUC is rank-based and identical under either convention.
        for (set, pvals) in [("id", &outcome.p_id), ("ood", &outcome.p_ood)] {
            for (index, p) in pvals.iter().enumerate() {
                let doubled = (2.0 * p).min(1.0);
                out.push_str(&format!("{stat},{set},{index},{doubled}\n"));
            }
        }
        out.push_str(&format!("{stat},auc,,{}\n", outcome.auc));
        eprintln!("{stat}: auc = {:.4}", outcome.auc);
    }
    fs::write(&args.out, out).map_err(CliError::runtime)?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(CliError::runtime)?;
    let config = ExperimentConfig::parse(&text).map_err(CliError::usage)?;
    let out_dir = args.out_dir.unwrap_or_else(|| {
        let stem = args
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "experiment".to_string());
        PathBuf::from(format!("{stem}-results"))
    });
    experiment::run_experiment(&config, &text, &out_dir).map_err(CliError::Runtime)
}
