//! Classical reference solvers. A damped Newton method on the smoothed KKT
//! system handles every problem kind; exhaustive active-set enumeration gives
//! an independent ground truth on tiny convex QPs. Both feed the gap metrics
//! and the oracle solution cache consumed by the bench module.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kkt::{kkt_jacobian, kkt_residual, PrimalDual, FB_EPS_DEFAULT};
use crate::linalg::{dot, LuFactor};
use crate::problems::{ProblemInstance, ProblemKind};
use crate::{Error, Result, Scalar};

/// Damping beyond `1e6 * ||J||_inf` means the Jacobian is effectively
/// unusable; the solve reports `Singular` instead of grinding on.
const MU_LIMIT_FACTOR: f64 = 1e6;

/// Number of seeded starting points for [`newton_fb_multistart`].
pub const MULTISTART_DRAWS: usize = 5;

pub const ORACLE_CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct NewtonOptions<T> {
    pub max_iters: usize,
    /// Convergence threshold on T = 0.5 * ||F||^2.
    pub tol: T,
    pub armijo_c: T,
    pub backtrack_factor: T,
    pub min_step: T,
    pub levenberg_mu0: T,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        NewtonOptions {
            max_iters: 200,
            tol: T::of(1e-12),
            armijo_c: T::of(1e-4),
            backtrack_factor: T::of(0.5),
            min_step: T::of(1e-12),
            levenberg_mu0: T::of(1e-8),
        }
    }
}

impl<T: Scalar> NewtonOptions<T> {
    fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        if self.max_iters == 0
            || !pos(self.tol)
            || !pos(self.armijo_c)
            || !pos(self.min_step)
            || !pos(self.levenberg_mu0)
            || !pos(self.backtrack_factor)
            || self.backtrack_factor >= T::one()
        {
            return Err(Error::Validation(
                "newton options must be positive with backtrack_factor in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Converged,
    MaxIters,
    Singular,
}

#[derive(Clone, Debug)]
pub struct OracleSolution<T> {
    pub z_star: PrimalDual<T>,
    /// T = 0.5 * ||F||^2 at `z_star`; at most `tol` when status is Converged.
    pub t_star: T,
    pub objective: T,
    pub iterations: usize,
    pub status: OracleStatus,
    /// T after the initial point and after each accepted step.
    pub t_trace: Vec<T>,
}

impl<T: Scalar> OracleSolution<T> {
    pub fn converged(&self) -> bool {
        self.status == OracleStatus::Converged
    }
}

/// Damped Newton iteration on the smoothed KKT residual: solves
/// `(J + mu I) d = -F`, escalates `mu` tenfold whenever factorization or the
/// Armijo backtracking line search on T fails, and resets it after every
/// accepted step. The smoothing eps is pinned to the pipeline default so the
/// oracle certifies the same optimality surface the learned solver is
/// trained on.
pub fn newton_fb_solve<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    z0: &PrimalDual<T>,
    opts: &NewtonOptions<T>,
) -> Result<OracleSolution<T>> {
    opts.validate()?;
    if x.len() != inst.n_h() {
        return Err(Error::DimMismatch {
            what: "parameter x",
            expected: inst.n_h(),
            got: x.len(),
        });
    }
    if !z0.matches(inst) {
        return Err(Error::DimMismatch {
            what: "initial point z0",
            expected: inst.n_z(),
            got: z0.n_z(),
        });
    }

    let eps = T::of(FB_EPS_DEFAULT);
    let n_z = inst.n_z();
    let mut z = z0.clone();
    let mut res = kkt_residual(inst, &z, x, None, eps);
    let mut t = res.metric_t();
    let mut t_trace = vec![t];

    let finish = |z: PrimalDual<T>, t: T, iters: usize, status: OracleStatus, trace: Vec<T>| {
        let objective = inst.objective(z.y());
        OracleSolution {
            z_star: z,
            t_star: t,
            objective,
            iterations: iters,
            status,
            t_trace: trace,
        }
    };

    if !t.is_finite() {
        return Ok(finish(z, t, 0, OracleStatus::MaxIters, t_trace));
    }

    for iter in 0..opts.max_iters {
        if t <= opts.tol {
            return Ok(finish(z, t, iter, OracleStatus::Converged, t_trace));
        }

        let j = kkt_jacobian(inst, &z, None, eps)?;
        let mu_limit = T::of(MU_LIMIT_FACTOR) * j.inf_norm();
        let mut mu = opts.levenberg_mu0;

        // Escalate damping until some step passes the line search.
        let accepted = loop {
            if mu > mu_limit {
                return Ok(finish(z, t, iter, OracleStatus::Singular, t_trace));
            }
            let mut damped = j.clone();
            for i in 0..n_z {
                damped[(i, i)] += mu;
            }
            let lu = match LuFactor::new(damped, T::zero()) {
                Ok(lu) => lu,
                Err(_) => {
                    mu *= T::of(10.0);
                    continue;
                }
            };
            let mut delta = res.f().to_vec();
            for d in &mut delta {
                *d = -*d;
            }
            lu.solve_in_place(&mut delta);
            // Directional derivative of T along delta is F' J delta.
            let dd = dot(res.f(), &j.matvec(&delta));
            if !delta.iter().all(|v| v.is_finite()) || !(dd < T::zero()) {
                mu *= T::of(10.0);
                continue;
            }

            let mut alpha = T::one();
            let mut hit = None;
            while alpha >= opts.min_step {
                let mut trial = z.clone();
                trial.step(alpha, &delta);
                let trial_res = kkt_residual(inst, &trial, x, None, eps);
                let trial_t = trial_res.metric_t();
                if trial_t.is_finite() && trial_t <= t + opts.armijo_c * alpha * dd {
                    hit = Some((trial, trial_res, trial_t));
                    break;
                }
                alpha *= opts.backtrack_factor;
            }
            match hit {
                Some(step) => break step,
                None => mu *= T::of(10.0),
            }
        };

        let (new_z, new_res, new_t) = accepted;
        z = new_z;
        res = new_res;
        t = new_t;
        t_trace.push(t);
    }

    let status = if t <= opts.tol {
        OracleStatus::Converged
    } else {
        OracleStatus::MaxIters
    };
    Ok(finish(z, t, opts.max_iters, status, t_trace))
}

/// Runs [`newton_fb_solve`] from [`MULTISTART_DRAWS`] seeded standard-normal
/// starting points and returns the converged root with the lowest objective.
/// Nonconvex kinds have multiple KKT roots, so a single start can land in a
/// poor local solution. Falls back to the lowest-T attempt if nothing
/// converged.
pub fn newton_fb_multistart<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
    seed: u64,
    opts: &NewtonOptions<T>,
) -> Result<OracleSolution<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<OracleSolution<T>> = None;
    for _ in 0..MULTISTART_DRAWS {
        let mut z0 = PrimalDual::zeros(inst.n_y(), inst.n_h(), inst.n_g());
        for v in z0.as_mut_slice() {
            *v = T::standard_normal(&mut rng);
        }
        let sol = newton_fb_solve(inst, x, &z0, opts)?;
        best = Some(match best {
            None => sol,
            Some(cur) => match (cur.converged(), sol.converged()) {
                (true, false) => cur,
                (false, true) => sol,
                (true, true) => {
                    if sol.objective < cur.objective {
                        sol
                    } else {
                        cur
                    }
                }
                (false, false) => {
                    if sol.t_star < cur.t_star {
                        sol
                    } else {
                        cur
                    }
                }
            },
        });
    }
    Ok(best.expect("at least one start"))
}

/// Upper bound on enumerable inequality constraints; 2^n subsets.
const MAX_ENUM_INEQ: usize = 20;
const DUAL_FEAS_TOL: f64 = 1e-10;
const SLACK_FEAS_TOL: f64 = 1e-10;

/// Brute-force ground truth for convex QPs: every subset of inequality
/// constraints is tried as the active set, the equality-constrained KKT
/// system is solved directly, and the feasible candidate with the lowest
/// objective wins. Independent of the Newton path, so the two can
/// cross-check each other.
pub fn active_set_enumerate<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &[T],
) -> Result<OracleSolution<T>> {
    if inst.kind() != ProblemKind::ConvexQp {
        return Err(Error::Validation(
            "active-set enumeration requires a convex QP".into(),
        ));
    }
    if x.len() != inst.n_h() {
        return Err(Error::DimMismatch {
            what: "parameter x",
            expected: inst.n_h(),
            got: x.len(),
        });
    }
    let (n_y, n_h, n_g) = (inst.n_y(), inst.n_h(), inst.n_g());
    if n_g > MAX_ENUM_INEQ {
        return Err(Error::Validation(format!(
            "active-set enumeration supports at most {MAX_ENUM_INEQ} inequality constraints, got {n_g}"
        )));
    }
    let q = inst.q_diag().expect("convex QP has a diagonal");
    let a = inst.a_mat();
    let g = inst.g_mat();
    let dual_tol = T::of(DUAL_FEAS_TOL);
    let slack_tol = T::of(SLACK_FEAS_TOL);

    let mut best: Option<(T, PrimalDual<T>)> = None;
    for mask in 0u32..(1u32 << n_g) {
        let active: Vec<usize> = (0..n_g).filter(|i| mask >> i & 1 == 1).collect();
        let m = n_y + n_h + active.len();

        let mut kkt = crate::linalg::DMat::zeros(m, m);
        let mut rhs = vec![T::zero(); m];
        for i in 0..n_y {
            kkt[(i, i)] = q[i];
            rhs[i] = -inst.p()[i];
        }
        for r in 0..n_h {
            for c in 0..n_y {
                kkt[(n_y + r, c)] = a[(r, c)];
                kkt[(c, n_y + r)] = a[(r, c)];
            }
            rhs[n_y + r] = x[r];
        }
        for (s, &row) in active.iter().enumerate() {
            for c in 0..n_y {
                kkt[(n_y + n_h + s, c)] = g[(row, c)];
                kkt[(c, n_y + n_h + s)] = g[(row, c)];
            }
            rhs[n_y + n_h + s] = inst.h()[row];
        }

        // Singular subsets (linearly dependent active rows) carry no
        // candidate; skip them.
        let lu = match LuFactor::new(kkt, T::zero()) {
            Ok(lu) => lu,
            Err(_) => continue,
        };
        lu.solve_in_place(&mut rhs);
        if !rhs.iter().all(|v| v.is_finite()) {
            continue;
        }

        let y = &rhs[..n_y];
        if active.iter().enumerate().any(|(s, _)| rhs[n_y + n_h + s] < -dual_tol) {
            continue;
        }
        if inst.ineq_residual(y).iter().any(|&gi| gi > slack_tol) {
            continue;
        }

        let obj = inst.objective(y);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            let mut lambda = vec![T::zero(); n_g];
            for (s, &row) in active.iter().enumerate() {
                lambda[row] = rhs[n_y + n_h + s];
            }
            let z = PrimalDual::from_parts(y, &rhs[n_y..n_y + n_h], &lambda);
            best = Some((obj, z));
        }
    }

    let (objective, z_star) = best.ok_or_else(|| {
        Error::Diverged("active-set enumeration found no feasible candidate".into())
    })?;
    let t_star = kkt_residual(inst, &z_star, x, None, T::of(FB_EPS_DEFAULT)).metric_t();
    Ok(OracleSolution {
        z_star,
        t_star,
        objective,
        iterations: 0,
        status: OracleStatus::Converged,
        t_trace: Vec::new(),
    })
}

/// Relative suboptimality in percent: `100 (f_hat - f_star) / |f_star|`.
pub fn optimality_gap<T: Scalar>(f_hat: T, f_star: T) -> Result<T> {
    if !(f_star.abs() >= T::of(1e-12)) {
        return Err(Error::GapUndefined);
    }
    Ok(T::of(100.0) * (f_hat - f_star) / f_star.abs())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CachedSolution<T> {
    pub index: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub nu: Vec<T>,
    pub lambda: Vec<T>,
    pub f: T,
    pub status: OracleStatus,
}

impl<T: Scalar> CachedSolution<T> {
    pub fn new(index: usize, x: &[T], sol: &OracleSolution<T>) -> Self {
        CachedSolution {
            index,
            x: x.to_vec(),
            y: sol.z_star.y().to_vec(),
            nu: sol.z_star.nu().to_vec(),
            lambda: sol.z_star.lambda().to_vec(),
            f: sol.objective,
            status: sol.status,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format_version: u32,
    instance_hash: String,
}

/// Writes a solution cache as JSON lines: a header with the instance content
/// hash, then one entry per line.
pub fn save_oracle_cache<T: Scalar>(
    path: &Path,
    instance_hash: &str,
    entries: &[CachedSolution<T>],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = CacheHeader {
        format_version: ORACLE_CACHE_FORMAT_VERSION,
        instance_hash: instance_hash.to_string(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for entry in entries {
        writeln!(out, "{}", serde_json::to_string(entry)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a solution cache, rejecting files whose header hash does not match
/// the instance they are claimed for.
pub fn load_oracle_cache<T: Scalar>(
    path: &Path,
    expected_hash: &str,
) -> Result<Vec<CachedSolution<T>>> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Cache("empty cache file".into()))??;
    let header: CacheHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Cache(format!("bad header: {e}")))?;
    if header.format_version != ORACLE_CACHE_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: ORACLE_CACHE_FORMAT_VERSION,
            found: header.format_version,
        });
    }
    if header.instance_hash != expected_hash {
        return Err(Error::Cache(format!(
            "instance hash mismatch: cache has {}, expected {}",
            header.instance_hash, expected_hash
        )));
    }
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str(&line).map_err(|e| Error::Cache(format!("bad entry: {e}")))?,
        );
    }
    Ok(entries)
}
