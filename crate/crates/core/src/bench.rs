//! Experiment harness: trains both networks, certifies test points with the
//! Newton oracle, runs the learned solver, and writes metrics, convergence
//! fractions, and raw reports with full config and seed provenance.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::lisco::{lisco_solve_batch, save_reports, SolveOptions, SolveReport};
use crate::oracle::{
    newton_fb_multistart, optimality_gap, save_oracle_cache, CachedSolution, NewtonOptions,
    OracleStatus,
};
use crate::problems::{fnv1a64, gen_instance, sample_params, ProblemInstance, ProblemKind};
use crate::training::{
    save_history, train_predictor, train_solver, PredictorTrainConfig, SolverTrainConfig,
};
use crate::{Error, Result, Scalar};

/// Success threshold on the metric T for reported success rates.
pub const SUCCESS_T: f64 = 1e-8;
/// Marker file present while an experiment is running; left behind on abort
/// so partial outputs are recognizably stale.
pub const STALE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    File {
        path: PathBuf,
    },
    Generate {
        kind: ProblemKind,
        n_y: usize,
        n_h: usize,
        n_g: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub n_test: usize,
    /// Master seed; every stage seed is derived from it (see DerivedSeeds).
    /// The `seed` fields inside the embedded train configs are overridden.
    pub seed: u64,
    pub predictor: PredictorTrainConfig,
    pub solver: SolverTrainConfig,
    pub solve: SolveOptions,
    pub train_without_predictor: bool,
    /// Positive, strictly descending.
    pub tolerances: Vec<f64>,
    /// Strictly ascending iteration counts, all >= 1.
    pub checkpoints: Vec<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk(ProblemKind::ConvexQp, PathBuf::from("bench_out"))
    }
}

impl ExperimentConfig {
    /// CI-sized experiment: 20/10/10 instance, 200 test points, default
    /// (desk) training configs.
    pub fn desk(kind: ProblemKind, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            instance: InstanceSource::Generate {
                kind,
                n_y: 20,
                n_h: 10,
                n_g: 10,
            },
            n_test: 200,
            seed: 0,
            predictor: PredictorTrainConfig::default(),
            solver: SolverTrainConfig::default(),
            solve: SolveOptions::default(),
            train_without_predictor: true,
            tolerances: vec![1e-6, 1e-8],
            checkpoints: vec![10, 20, 50, 100, 500],
            out_dir,
        }
    }

    /// Full-scale protocol: 1000 test points and the large training configs.
    /// Runtimes are far beyond desk budgets.
    pub fn full(kind: ProblemKind, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            n_test: 1000,
            predictor: PredictorTrainConfig::full(),
            solver: SolverTrainConfig::full(),
            ..ExperimentConfig::desk(kind, out_dir)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_test == 0 {
            return Err(Error::Validation("n_test must be positive".into()));
        }
        if self.tolerances.is_empty() {
            return Err(Error::Validation("tolerances must be non-empty".into()));
        }
        for w in self.tolerances.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Validation(
                    "tolerances must be strictly descending".into(),
                ));
            }
        }
        if self.tolerances.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Validation("tolerances must be positive".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Validation("checkpoints must be non-empty".into()));
        }
        if self.checkpoints[0] == 0 {
            return Err(Error::Validation("checkpoints must be >= 1".into()));
        }
        for w in self.checkpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Validation(
                    "checkpoints must be strictly ascending".into(),
                ));
            }
        }
        self.predictor.validate()?;
        self.solver.validate()?;
        self.solve.validate()?;
        Ok(())
    }

    pub fn derived_seeds(&self) -> DerivedSeeds {
        let s = self.seed;
        DerivedSeeds {
            instance: s,
            predictor: s.wrapping_add(1),
            solver_with_predictor: s.wrapping_add(2),
            solver_without_predictor: s.wrapping_add(3),
            test_sampling: s.wrapping_add(4),
            oracle_multistart: s.wrapping_add(5),
            solve_init: s.wrapping_add(6),
        }
    }

    /// FNV-1a over the canonical JSON form with the output directory
    /// cleared, so relocating an experiment does not change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub instance: u64,
    pub predictor: u64,
    pub solver_with_predictor: u64,
    pub solver_without_predictor: u64,
    pub test_sampling: u64,
    pub oracle_multistart: u64,
    pub solve_init: u64,
}

/// Nearest-rank order statistics over a non-empty sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub median: f64,
    pub p99: f64,
    pub max: f64,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let rank = |q: f64| {
        let n = v.len() as f64;
        let idx = (q * n).ceil() as usize;
        v[idx.clamp(1, v.len()) - 1]
    };
    Some(Stats {
        min: v[0],
        median: rank(0.5),
        p99: rank(0.99),
        max: v[v.len() - 1],
    })
}

/// Aggregates for one method over one test set. Wall-time fields live in
/// their own keys so determinism comparisons can drop them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_points: usize,
    pub n_converged: usize,
    /// Fraction of points with final T <= 1e-8.
    pub success_rate: f64,
    pub max_eq_violation: f64,
    pub mean_eq_violation: f64,
    pub max_ineq_violation: f64,
    pub mean_ineq_violation: f64,
    pub max_gap_pct: Option<f64>,
    pub mean_gap_pct: Option<f64>,
    /// Points where the reference objective sits at zero and the relative
    /// gap has no meaning.
    pub gap_undefined_count: usize,
    pub t: Option<Stats>,
    pub iterations_converged: Option<Stats>,
    pub iterations_all: Option<Stats>,
    pub wall_time_converged: Option<Stats>,
    pub wall_time_all: Option<Stats>,
}

/// Per-point constraint violations, optimality gaps against the oracle
/// cache, and distribution summaries. Cache entries pair with reports by
/// their `index` field; every report index must be present.
pub fn compute_metrics<T: Scalar>(
    inst: &ProblemInstance<T>,
    reports: &[SolveReport<T>],
    oracle: &[CachedSolution<T>],
) -> Result<MetricsSummary> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports to summarize".into()));
    }
    let mut by_index = std::collections::HashMap::new();
    for entry in oracle {
        by_index.insert(entry.index, entry);
    }

    let n = reports.len();
    let mut eq = Vec::with_capacity(n);
    let mut ineq = Vec::with_capacity(n);
    let mut gaps = Vec::new();
    let mut gap_undefined = 0;
    let mut ts = Vec::with_capacity(n);
    let mut iters_all = Vec::with_capacity(n);
    let mut iters_conv = Vec::new();
    let mut wall_all = Vec::with_capacity(n);
    let mut wall_conv = Vec::new();
    let mut successes = 0;
    let mut converged = 0;

    for (i, rep) in reports.iter().enumerate() {
        let entry = *by_index
            .get(&i)
            .ok_or_else(|| Error::Cache(format!("missing oracle entry for x index {i}")))?;
        let y = rep.z_final.y();

        let ay = inst.a_mat().matvec(y);
        let mut eq_v = 0.0f64;
        for (j, &r) in ay.iter().enumerate() {
            eq_v = eq_v.max((r - entry.x[j]).to_f64().abs());
        }
        eq.push(eq_v);

        let gy = inst.g_mat().matvec(y);
        let mut ineq_v = 0.0f64;
        for (j, &s) in gy.iter().enumerate() {
            ineq_v = ineq_v.max((s - inst.h()[j]).to_f64());
        }
        ineq.push(ineq_v);

        let f_hat = inst.objective(y);
        match optimality_gap(f_hat, entry.f) {
            Ok(g) => gaps.push(g.to_f64()),
            Err(Error::GapUndefined) => gap_undefined += 1,
            Err(e) => return Err(e),
        }

        let t = rep.t_final.to_f64();
        ts.push(t);
        if t <= SUCCESS_T {
            successes += 1;
        }
        iters_all.push(rep.iterations as f64);
        wall_all.push(rep.wall_time);
        if rep.converged {
            converged += 1;
            iters_conv.push(rep.iterations as f64);
            wall_conv.push(rep.wall_time);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    Ok(MetricsSummary {
        n_points: n,
        n_converged: converged,
        success_rate: successes as f64 / n as f64,
        max_eq_violation: max(&eq),
        mean_eq_violation: mean(&eq),
        max_ineq_violation: max(&ineq),
        mean_ineq_violation: mean(&ineq),
        max_gap_pct: gaps.iter().copied().reduce(f64::max),
        mean_gap_pct: (!gaps.is_empty()).then(|| mean(&gaps)),
        gap_undefined_count: gap_undefined,
        t: stats(&ts),
        iterations_converged: stats(&iters_conv),
        iterations_all: stats(&iters_all),
        wall_time_converged: stats(&wall_conv),
        wall_time_all: stats(&wall_all),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub tol: f64,
    pub k: usize,
    pub fraction: f64,
}

/// For every (tolerance, checkpoint) pair: the fraction of runs whose best
/// metric T by iteration k is at or below the tolerance. Requires traces.
pub fn convergence_fractions<T: Scalar>(
    reports: &[SolveReport<T>],
    tolerances: &[f64],
    checkpoints: &[usize],
) -> Result<Vec<FractionRow>> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports for fractions".into()));
    }
    for (i, rep) in reports.iter().enumerate() {
        if rep.trace.is_none() {
            return Err(Error::Validation(format!(
                "report {i} has no trace; solve with record_trace enabled"
            )));
        }
    }
    let best_at = |rep: &SolveReport<T>, k: usize| -> f64 {
        let tr = rep.trace.as_ref().unwrap();
        if tr.is_empty() {
            rep.t_final.to_f64()
        } else {
            tr.t_best[k.min(tr.len()) - 1].to_f64()
        }
    };
    let mut rows = Vec::with_capacity(tolerances.len() * checkpoints.len());
    for &tol in tolerances {
        for &k in checkpoints {
            let hit = reports.iter().filter(|r| best_at(r, k) <= tol).count();
            rows.push(FractionRow {
                tol,
                k,
                fraction: hit as f64 / reports.len() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn fractions_to_csv(rows: &[FractionRow]) -> String {
    let mut out = String::from("tol,k,fraction\n");
    for r in rows {
        out.push_str(&format!("{:e},{},{}\n", r.tol, r.k, r.fraction));
    }
    out
}

pub fn save_fractions(path: &Path, rows: &[FractionRow]) -> Result<()> {
    std::fs::write(path, fractions_to_csv(rows))?;
    Ok(())
}

/// Everything metrics.json carries: identity (config hash + seeds), the
/// instance hash, and one summary per method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub seed: u64,
    pub derived_seeds: DerivedSeeds,
    pub instance_hash: String,
    pub n_test: usize,
    /// Test points whose oracle run did not certify convergence; their best
    /// iterate still serves as the reference.
    pub oracle_nonconverged: usize,
    pub predictor_only: MetricsSummary,
    pub lisco_with_predictor: MetricsSummary,
    pub lisco_without_predictor: Option<MetricsSummary>,
}

/// Full pipeline: instance, oracle certification, both trainings, learned
/// solves, metrics, and files. Any stage failure is labeled with the stage
/// name; the `INCOMPLETE` marker stays behind on abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let seeds = cfg.derived_seeds();
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::from(e).in_stage("config"))?;
    std::fs::write(
        out.join(STALE_MARKER),
        "experiment in progress or aborted; outputs may be stale\n",
    )
    .map_err(|e| Error::from(e).in_stage("config"))?;

    let inst: ProblemInstance<f64> = match &cfg.instance {
        InstanceSource::File { path } => {
            ProblemInstance::load(path).map_err(|e| e.in_stage("instance"))?
        }
        InstanceSource::Generate { kind, n_y, n_h, n_g } => {
            gen_instance(*kind, *n_y, *n_h, *n_g, seeds.instance)
                .map_err(|e| e.in_stage("instance"))?
        }
    };
    inst.save(&out.join("instance.json"))
        .map_err(|e| e.in_stage("instance"))?;

    let xs = sample_params(&inst, cfg.n_test, seeds.test_sampling);

    // Oracle certification for every test point.
    let opts = NewtonOptions::default();
    let mut cache = Vec::with_capacity(cfg.n_test);
    let mut oracle_nonconverged = 0;
    for i in 0..xs.len() {
        let sol = newton_fb_multistart(
            &inst,
            xs.point(i),
            seeds.oracle_multistart.wrapping_add(i as u64),
            &opts,
        )
        .map_err(|e| e.in_stage("oracle"))?;
        if sol.status != OracleStatus::Converged {
            oracle_nonconverged += 1;
        }
        cache.push(CachedSolution::new(i, xs.point(i), &sol));
    }
    save_oracle_cache(&out.join("oracle_cache.jsonl"), &inst.content_hash(), &cache)
        .map_err(|e| e.in_stage("oracle"))?;

    // Predictor.
    let mut pred_cfg = cfg.predictor.clone();
    pred_cfg.seed = seeds.predictor;
    let (predictor, pred_hist) =
        train_predictor(&inst, &pred_cfg).map_err(|e| e.in_stage("train-predictor"))?;
    predictor
        .save(&out.join("predictor.json"))
        .map_err(|e| e.in_stage("train-predictor"))?;
    save_history(&out.join("history_predictor.csv"), &pred_hist)
        .map_err(|e| e.in_stage("train-predictor"))?;

    // Solver, warm-started pool.
    let mut sol_cfg = cfg.solver.clone();
    sol_cfg.seed = seeds.solver_with_predictor;
    sol_cfg.use_predictor = true;
    let (solver_wp, solver_wp_hist) = train_solver(&inst, &sol_cfg, Some(&predictor))
        .map_err(|e| e.in_stage("train-solver"))?;
    solver_wp
        .save(&out.join("solver_with_pred.json"))
        .map_err(|e| e.in_stage("train-solver"))?;
    save_history(&out.join("history_solver_with_pred.csv"), &solver_wp_hist)
        .map_err(|e| e.in_stage("train-solver"))?;

    // Solver, standard-normal pool.
    let solver_np = if cfg.train_without_predictor {
        let mut np_cfg = cfg.solver.clone();
        np_cfg.seed = seeds.solver_without_predictor;
        np_cfg.use_predictor = false;
        let (net, hist) =
            train_solver(&inst, &np_cfg, None).map_err(|e| e.in_stage("train-solver"))?;
        net.save(&out.join("solver_no_pred.json"))
            .map_err(|e| e.in_stage("train-solver"))?;
        save_history(&out.join("history_solver_no_pred.csv"), &hist)
            .map_err(|e| e.in_stage("train-solver"))?;
        Some(net)
    } else {
        None
    };

    // Learned solves. Traces are forced on for the fraction tables.
    let mut solve_opts = cfg.solve.clone();
    solve_opts.record_trace = true;
    solve_opts.init_seed = seeds.solve_init;

    let wp_opts = SolveOptions {
        use_predictor: true,
        ..solve_opts.clone()
    };
    let reports_wp = lisco_solve_batch(&inst, &xs, Some(&predictor), &solver_wp, &wp_opts)
        .map_err(|e| e.in_stage("solve"))?;
    save_reports(&out.join("reports_with_pred.jsonl"), &reports_wp)
        .map_err(|e| e.in_stage("solve"))?;

    // Predictor evaluation alone: the warm start with zero learned steps.
    let pred_opts = SolveOptions {
        n_max: 0,
        use_predictor: true,
        ..solve_opts.clone()
    };
    let reports_pred = lisco_solve_batch(&inst, &xs, Some(&predictor), &solver_wp, &pred_opts)
        .map_err(|e| e.in_stage("solve"))?;
    save_reports(&out.join("reports_predictor_only.jsonl"), &reports_pred)
        .map_err(|e| e.in_stage("solve"))?;

    let reports_np = match &solver_np {
        Some(net) => {
            let np_opts = SolveOptions {
                use_predictor: false,
                ..solve_opts.clone()
            };
            let reports = lisco_solve_batch(&inst, &xs, None, net, &np_opts)
                .map_err(|e| e.in_stage("solve"))?;
            save_reports(&out.join("reports_no_pred.jsonl"), &reports)
                .map_err(|e| e.in_stage("solve"))?;
            Some(reports)
        }
        None => None,
    };

    // Metrics and fraction tables.
    let m_pred =
        compute_metrics(&inst, &reports_pred, &cache).map_err(|e| e.in_stage("metrics"))?;
    let m_wp = compute_metrics(&inst, &reports_wp, &cache).map_err(|e| e.in_stage("metrics"))?;
    let m_np = match &reports_np {
        Some(reports) => {
            Some(compute_metrics(&inst, reports, &cache).map_err(|e| e.in_stage("metrics"))?)
        }
        None => None,
    };

    let fr_wp = convergence_fractions(&reports_wp, &cfg.tolerances, &cfg.checkpoints)
        .map_err(|e| e.in_stage("metrics"))?;
    save_fractions(&out.join("fractions.csv"), &fr_wp).map_err(|e| e.in_stage("write"))?;
    if let Some(reports) = &reports_np {
        let fr_np = convergence_fractions(reports, &cfg.tolerances, &cfg.checkpoints)
            .map_err(|e| e.in_stage("metrics"))?;
        save_fractions(&out.join("fractions_no_pred.csv"), &fr_np)
            .map_err(|e| e.in_stage("write"))?;
    }

    let summary = ExperimentSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        derived_seeds: seeds,
        instance_hash: inst.content_hash(),
        n_test: cfg.n_test,
        oracle_nonconverged,
        predictor_only: m_pred,
        lisco_with_predictor: m_wp,
        lisco_without_predictor: m_np,
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Error::from(e).in_stage("write"))?;
    json.push('\n');
    std::fs::write(out.join("metrics.json"), json).map_err(|e| Error::from(e).in_stage("write"))?;

    std::fs::remove_file(out.join(STALE_MARKER)).map_err(|e| Error::from(e).in_stage("write"))?;
    Ok(summary)
}
