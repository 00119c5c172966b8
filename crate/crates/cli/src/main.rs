//! `lisco`: instance generation, oracle certification, training, solving,
//! and the full experiment pipeline.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, malformed files),
//! 3 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use lisco_core::bench::{run_experiment, ExperimentConfig};
use lisco_core::lisco::{lisco_solve, save_reports, SolveOptions};
use lisco_core::nn::{MlpParams, NetRole};
use lisco_core::oracle::{newton_fb_multistart, save_oracle_cache, CachedSolution, NewtonOptions};
use lisco_core::problems::{gen_instance, sample_params, ProblemInstance, ProblemKind};
use lisco_core::training::{
    save_history, train_predictor, train_solver, PredictorTrainConfig, SolverTrainConfig,
};
use lisco_core::{Error, Result};

#[derive(Parser)]
#[command(name = "lisco", version, about = "Learned iterative solver for parametric constrained optimization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a problem instance and write it as JSON.
    Gen(GenArgs),
    /// Sample test parameters and certify them with the Newton oracle.
    Oracle(OracleArgs),
    /// Train the warm-start predictor network.
    TrainPredictor(TrainPredictorArgs),
    /// Train the iterative solver network.
    TrainSolver(TrainSolverArgs),
    /// Solve one parameter point with trained weights.
    Solve(SolveArgs),
    /// Run the full experiment pipeline into an output directory.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    ConvexQp,
    NonconvexQp,
    Rosenbrock,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> ProblemKind {
        match k {
            KindArg::ConvexQp => ProblemKind::ConvexQp,
            KindArg::NonconvexQp => ProblemKind::NonconvexQp,
            KindArg::Rosenbrock => ProblemKind::Rosenbrock,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "convex-qp")]
    kind: KindArg,
    #[arg(long, default_value_t = 20)]
    n_y: usize,
    #[arg(long, default_value_t = 10)]
    n_h: usize,
    #[arg(long, default_value_t = 10)]
    n_g: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Number of test parameters to sample and solve.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Sampling seed; per-point multistart seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache file to write (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainPredictorArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Training config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desk-scale defaults (the default scale).
    #[arg(long, conflicts_with_all = ["full", "config"])]
    desk: bool,
    /// Full-scale training config.
    #[arg(long, conflicts_with = "config")]
    full: bool,
    /// Overrides the config seed when given.
    #[arg(long)]
    seed: Option<u64>,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional training history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSolverArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Predictor weights for pool warm starts; omitted = standard-normal pool.
    #[arg(long)]
    predictor: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["full", "config"])]
    desk: bool,
    #[arg(long, conflicts_with = "config")]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solver weights.
    #[arg(long)]
    weights: PathBuf,
    /// Predictor weights for the warm start.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Parameter point as comma-separated numbers.
    #[arg(long, conflicts_with = "x_file")]
    x: Option<String>,
    /// Parameter point as a JSON array file.
    #[arg(long)]
    x_file: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    tau: f64,
    /// Record the per-iteration trace in the report.
    #[arg(long)]
    trace: bool,
    /// Seed for the standard-normal start when no predictor is given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file (JSON lines); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config JSON; missing fields take desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["full", "config"])]
    desk: bool,
    #[arg(long, conflicts_with = "config")]
    full: bool,
    /// Problem kind for preset configs.
    #[arg(long, value_enum, default_value = "convex-qp", conflicts_with = "config")]
    kind: KindArg,
    /// Overrides the config master seed when given.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen(a) => {
            let inst: ProblemInstance<f64> =
                gen_instance(a.kind.into(), a.n_y, a.n_h, a.n_g, a.seed)?;
            inst.save(&a.out)?;
            eprintln!("wrote instance {} to {}", inst.content_hash(), a.out.display());
            Ok(())
        }
        Cmd::Oracle(a) => {
            let inst: ProblemInstance<f64> = ProblemInstance::load(&a.instance)?;
            let xs = sample_params(&inst, a.n, a.seed);
            let opts = NewtonOptions::default();
            let mut cache = Vec::with_capacity(a.n);
            let mut converged = 0;
            for i in 0..xs.len() {
                let sol = newton_fb_multistart(
                    &inst,
                    xs.point(i),
                    a.seed.wrapping_add(1).wrapping_add(i as u64),
                    &opts,
                )?;
                if sol.converged() {
                    converged += 1;
                }
                cache.push(CachedSolution::new(i, xs.point(i), &sol));
            }
            save_oracle_cache(&a.out, &inst.content_hash(), &cache)?;
            eprintln!("oracle: {converged}/{} converged, cache at {}", a.n, a.out.display());
            Ok(())
        }
        Cmd::TrainPredictor(a) => {
            let inst: ProblemInstance<f64> = ProblemInstance::load(&a.instance)?;
            let mut cfg: PredictorTrainConfig = match &a.config {
                Some(p) => read_json(p)?,
                None if a.full => PredictorTrainConfig::full(),
                None => PredictorTrainConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let (net, hist) = train_predictor(&inst, &cfg)?;
            net.save(&a.out)?;
            if let Some(h) = &a.history {
                save_history(h, &hist)?;
            }
            eprintln!(
                "predictor: {} epochs, final loss {:.3e}, weights at {}",
                hist.len(),
                hist.last().map(|r| r.loss).unwrap_or(f64::NAN),
                a.out.display()
            );
            Ok(())
        }
        Cmd::TrainSolver(a) => {
            let inst: ProblemInstance<f64> = ProblemInstance::load(&a.instance)?;
            let mut cfg: SolverTrainConfig = match &a.config {
                Some(p) => read_json(p)?,
                None if a.full => SolverTrainConfig::full(),
                None => SolverTrainConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let predictor = match &a.predictor {
                Some(p) => Some(MlpParams::<f64>::load(p, NetRole::Predictor)?),
                None => None,
            };
            cfg.use_predictor = predictor.is_some();
            let (net, hist) = train_solver(&inst, &cfg, predictor.as_ref())?;
            net.save(&a.out)?;
            if let Some(h) = &a.history {
                save_history(h, &hist)?;
            }
            eprintln!(
                "solver: {} steps, final loss {:.3e}, weights at {}",
                hist.len(),
                hist.last().map(|r| r.loss).unwrap_or(f64::NAN),
                a.out.display()
            );
            Ok(())
        }
        Cmd::Solve(a) => {
            let inst: ProblemInstance<f64> = ProblemInstance::load(&a.instance)?;
            let solver = MlpParams::<f64>::load(&a.weights, NetRole::Solver)?;
            let predictor = match &a.predictor {
                Some(p) => Some(MlpParams::<f64>::load(p, NetRole::Predictor)?),
                None => None,
            };
            let x: Vec<f64> = match (&a.x, &a.x_file) {
                (Some(list), None) => list
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Validation(format!("bad x entry '{s}': {e}")))
                    })
                    .collect::<Result<_>>()?,
                (None, Some(path)) => read_json(path)?,
                (None, None) => {
                    return Err(Error::Validation("one of --x or --x-file is required".into()))
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let opts = SolveOptions {
                n_max: a.n_max,
                tau: a.tau,
                record_trace: a.trace,
                use_predictor: predictor.is_some(),
                init_seed: a.seed,
                ..SolveOptions::default()
            };
            let report = lisco_solve(&inst, &x, predictor.as_ref(), &solver, &opts)?;
            match &a.out {
                Some(path) => save_reports(path, std::slice::from_ref(&report))?,
                None => println!("{}", serde_json::to_string(&report)?),
            }
            eprintln!(
                "solve: converged={} iterations={} t_final={:.3e}",
                report.converged, report.iterations, report.t_final
            );
            Ok(())
        }
        Cmd::Bench(a) => {
            let mut cfg = match &a.config {
                Some(p) => read_json::<ExperimentConfig>(p)?,
                None if a.full => ExperimentConfig::full(a.kind.into(), PathBuf::from("bench_out")),
                None => ExperimentConfig::desk(a.kind.into(), PathBuf::from("bench_out")),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(out) = &a.out {
                cfg.out_dir = out.clone();
            }
            let summary = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}
