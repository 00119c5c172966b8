//! Inference loop: predictor warm start, learned solver steps, best-iterate
//! tracking with step-size backoff, tolerance-based termination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::time::Instant;

use crate::kkt::{kkt_residual, KktResidual, PrimalDual, FB_EPS_DEFAULT};
use crate::nn::{MlpParams, NetRole};
use crate::problems::{ParamBatch, ProblemInstance};
use crate::training::solver_predict_step;
use crate::{Error, Result, Scalar};

/// What gets compared against `tau` when deciding convergence. The default
/// is the squared residual norm; `Norm` switches to the plain norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationMetric {
    #[default]
    NormSquared,
    Norm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub n_max: usize,
    /// Convergence tolerance on the termination metric.
    pub tau: f64,
    pub alpha0: f64,
    /// Divergence threshold: reset when `||F|| > omega * ||F_best||`.
    pub omega: f64,
    /// Step-size backoff factor applied on every reset.
    pub beta: f64,
    pub use_predictor: bool,
    pub record_trace: bool,
    pub termination: TerminationMetric,
    /// Seed for the standard-normal z0 fallback when no predictor is used.
    pub init_seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            n_max: 500,
            tau: 1e-8,
            alpha0: 1.0,
            omega: 10.0,
            beta: 0.95,
            use_predictor: true,
            record_trace: false,
            termination: TerminationMetric::NormSquared,
            init_seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation("tau must be positive".into()));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Validation("alpha0 must be positive".into()));
        }
        if !(self.omega > 1.0 && self.omega.is_finite()) {
            return Err(Error::Validation("omega must exceed 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Validation("beta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-iteration history, recorded only when `record_trace` is set.
/// `t` is the metric T of the iterate each step produced (before any reset
/// restoration, so divergence shows up as the bad value); `alpha` is the
/// step size in effect after the iteration's backoff, if any; `t_best`
/// is T at the retained best iterate, including z0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace<T> {
    pub t: Vec<T>,
    pub alpha: Vec<T>,
    pub reset: Vec<bool>,
    pub t_best: Vec<T>,
}

impl<T> Default for SolveTrace<T> {
    fn default() -> Self {
        SolveTrace {
            t: Vec::new(),
            alpha: Vec::new(),
            reset: Vec::new(),
            t_best: Vec::new(),
        }
    }
}

impl<T> SolveTrace<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub z_final: PrimalDual<T>,
    /// Metric T = 1/2 ||F||^2 at z_final.
    pub t_final: T,
    pub converged: bool,
    pub iterations: usize,
    pub alpha_final: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<SolveTrace<T>>,
    /// Seconds. Excluded from any determinism comparison.
    pub wall_time: f64,
}

impl<T: Scalar> SolveReport<T> {
    /// Equality over everything except wall_time, for batch/pointwise checks.
    pub fn same_result(&self, other: &Self) -> bool {
        self.z_final == other.z_final
            && self.t_final.to_f64().to_bits() == other.t_final.to_f64().to_bits()
            && self.converged == other.converged
            && self.iterations == other.iterations
            && self.alpha_final == other.alpha_final
            && self.trace == other.trace
    }
}

fn check_shapes<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    predictor: Option<&MlpParams<T>>,
    solver: &MlpParams<T>,
    opts: &SolveOptions,
) -> Result<()> {
    opts.validate()?;
    if x.len() != inst.n_h() {
        return Err(Error::DimMismatch {
            what: "parameter x",
            expected: inst.n_h(),
            got: x.len(),
        });
    }
    if solver.role() != NetRole::Solver {
        return Err(Error::RoleMismatch {
            expected: NetRole::Solver,
            found: solver.role(),
        });
    }
    let in_dim = inst.n_z() + 1 + inst.n_h();
    if solver.in_dim() != in_dim || solver.out_dim() != inst.n_z() {
        return Err(Error::DimMismatch {
            what: "solver net width",
            expected: in_dim,
            got: solver.in_dim(),
        });
    }
    if let Some(p) = predictor {
        if p.role() != NetRole::Predictor {
            return Err(Error::RoleMismatch {
                expected: NetRole::Predictor,
                found: p.role(),
            });
        }
        if p.in_dim() != inst.n_h() || p.out_dim() != inst.n_z() {
            return Err(Error::DimMismatch {
                what: "predictor net width",
                expected: inst.n_h(),
                got: p.in_dim(),
            });
        }
    }
    Ok(())
}

fn term_value<T: Scalar>(res: &KktResidual<T>, metric: TerminationMetric) -> T {
    match metric {
        TerminationMetric::NormSquared => res.norm() * res.norm(),
        TerminationMetric::Norm => res.norm(),
    }
}

fn initial_point<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    predictor: Option<&MlpParams<T>>,
    opts: &SolveOptions,
) -> PrimalDual<T> {
    if opts.use_predictor {
        if let Some(p) = predictor {
            let out = p.forward_one(x);
            return PrimalDual::from_concat(inst.n_y(), inst.n_h(), inst.n_g(), out)
                .expect("predictor out_dim checked against n_z");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.init_seed);
    let data: Vec<T> = (0..inst.n_z()).map(|_| T::standard_normal(&mut rng)).collect();
    PrimalDual::from_concat(inst.n_y(), inst.n_h(), inst.n_g(), data).expect("length by construction")
}

/// Solve one instance of the parametric problem at `x` starting from the
/// predictor output (or a seeded standard-normal point when `use_predictor`
/// is off or no predictor is given).
pub fn lisco_solve<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    predictor: Option<&MlpParams<T>>,
    solver: &MlpParams<T>,
    opts: &SolveOptions,
) -> Result<SolveReport<T>> {
    check_shapes(inst, x, predictor, solver, opts)?;
    let z0 = initial_point(inst, x, predictor, opts);
    Ok(run_loop(inst, x, z0, solver, opts))
}

/// Same loop with a caller-supplied starting point.
pub fn lisco_solve_from<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    z0: PrimalDual<T>,
    solver: &MlpParams<T>,
    opts: &SolveOptions,
) -> Result<SolveReport<T>> {
    check_shapes(inst, x, None, solver, opts)?;
    if !z0.matches(inst) {
        return Err(Error::DimMismatch {
            what: "starting point z0",
            expected: inst.n_z(),
            got: z0.n_z(),
        });
    }
    Ok(run_loop(inst, x, z0, solver, opts))
}

fn run_loop<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    z0: PrimalDual<T>,
    solver: &MlpParams<T>,
    opts: &SolveOptions,
) -> SolveReport<T> {
    let start = Instant::now();
    let eps = T::of(FB_EPS_DEFAULT);
    let tau = T::of(opts.tau);
    let omega = T::of(opts.omega);
    let beta = T::of(opts.beta);
    let mut alpha = T::of(opts.alpha0);
    let mut trace = opts.record_trace.then(SolveTrace::default);

    let res0 = kkt_residual(inst, &z0, x, None, eps);
    if !res0.is_finite() {
        return SolveReport {
            t_final: res0.metric_t(),
            z_final: z0,
            converged: false,
            iterations: 0,
            alpha_final: alpha,
            trace,
            wall_time: start.elapsed().as_secs_f64(),
        };
    }
    if term_value(&res0, opts.termination) < tau {
        return SolveReport {
            t_final: res0.metric_t(),
            z_final: z0,
            converged: true,
            iterations: 0,
            alpha_final: alpha,
            trace,
            wall_time: start.elapsed().as_secs_f64(),
        };
    }

    let mut z = z0;
    let mut z_best = z.clone();
    let mut res = res0.clone();
    let mut res_best = res0;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.n_max {
        iterations += 1;
        // res is finite here: the initial residual was checked and every
        // non-finite step restores the finite best.
        let (t_step, diverged) = match solver_predict_step(solver, &res, x) {
            Ok(step) => {
                z.step(alpha, &step);
                res = kkt_residual(inst, &z, x, None, eps);
                let bad = !res.is_finite() || res.norm() > omega * res_best.norm();
                (res.metric_t(), bad)
            }
            // Unreachable after the termination check (the norm is finite
            // and positive), kept as a divergence for robustness.
            Err(_) => (T::of(f64::NAN), true),
        };

        let reset = diverged;
        if diverged {
            z = z_best.clone();
            res = res_best.clone();
            alpha = alpha * beta;
        } else if res.norm() < res_best.norm() {
            z_best = z.clone();
            res_best = res.clone();
        }
        if let Some(tr) = trace.as_mut() {
            tr.t.push(t_step);
            tr.alpha.push(alpha);
            tr.reset.push(reset);
            tr.t_best.push(res_best.metric_t());
        }
        if !diverged && term_value(&res, opts.termination) < tau {
            converged = true;
            break;
        }
    }

    let (z_final, t_final) = if converged {
        let t = res.metric_t();
        (z, t)
    } else {
        let t = res_best.metric_t();
        (z_best, t)
    };
    SolveReport {
        z_final,
        t_final,
        converged,
        iterations,
        alpha_final: alpha,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Solve every parameter point in the batch. Each point runs the exact
/// pointwise loop with `init_seed + i`, so results match per-point
/// `lisco_solve` calls field for field (wall_time aside). Numeric failures
/// surface as non-converged reports, never as errors.
pub fn lisco_solve_batch<T: Scalar>(
    inst: &ProblemInstance<T>,
    xs: &ParamBatch<T>,
    predictor: Option<&MlpParams<T>>,
    solver: &MlpParams<T>,
    opts: &SolveOptions,
) -> Result<Vec<SolveReport<T>>> {
    if xs.dim() != inst.n_h() {
        return Err(Error::DimMismatch {
            what: "parameter batch",
            expected: inst.n_h(),
            got: xs.dim(),
        });
    }
    let mut reports = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let point_opts = SolveOptions {
            init_seed: opts.init_seed.wrapping_add(i as u64),
            ..opts.clone()
        };
        reports.push(lisco_solve(inst, xs.point(i), predictor, solver, &point_opts)?);
    }
    Ok(reports)
}

/// One report per line as JSON.
pub fn save_reports<T: Scalar + Serialize>(
    path: &std::path::Path,
    reports: &[SolveReport<T>],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_reports<T: Scalar + serde::de::DeserializeOwned>(
    path: &std::path::Path,
) -> Result<Vec<SolveReport<T>>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut reports = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(&line)?);
    }
    Ok(reports)
}
