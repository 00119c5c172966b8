//! Parametric problem families and instance generation.
//!
//! Every instance is a family of problems
//!
//! ```text
//!   min_y f(y)   s.t.  A y = x,  G y <= h
//! ```
//!
//! indexed by the parameter vector `x`. The objective depends on the kind:
//! convex QP `f = 1/2 y'Qy + p'y` with diagonal `Q`, nonconvex QP
//! `f = 1/2 y'Qy + p'sin(y)` (elementwise sine), and a constrained Rosenbrock
//! variant. `h` is constructed from the generated matrices so that every
//! `x` in `[-1, 1]^{n_h}` admits a feasible point, which keeps sampled
//! training and test parameters meaningful.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{DMat, LuFactor};
use crate::{Error, Result, Scalar};

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Pivot magnitude below which `A A^T` counts as rank deficient.
pub const RANK_PIVOT_TOL: f64 = 1e-10;

/// Attempts to draw a full-row-rank `A` before giving up.
pub const MAX_GEN_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    ConvexQp,
    NonconvexQp,
    Rosenbrock,
}

impl ProblemKind {
    pub fn is_convex(self) -> bool {
        matches!(self, ProblemKind::ConvexQp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::ConvexQp => "convex_qp",
            ProblemKind::NonconvexQp => "nonconvex_qp",
            ProblemKind::Rosenbrock => "rosenbrock",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex_qp" => Ok(ProblemKind::ConvexQp),
            "nonconvex_qp" => Ok(ProblemKind::NonconvexQp),
            "rosenbrock" => Ok(ProblemKind::Rosenbrock),
            other => Err(Error::Validation(format!(
                "unknown problem kind '{other}' (expected convex_qp, nonconvex_qp or rosenbrock)"
            ))),
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One generated problem family. Immutable after construction; shared freely
/// across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    kind: ProblemKind,
    n_y: usize,
    n_h: usize,
    n_g: usize,
    q_diag: Option<Vec<T>>,
    p: Vec<T>,
    a: DMat<T>,
    g: DMat<T>,
    h: Vec<T>,
    seed: u64,
}

impl<T: Scalar> ProblemInstance<T> {
    /// Validating constructor. Generated instances additionally satisfy the
    /// `h` construction below; that part is checked whenever equality rows
    /// exist, so hand-built instances without equality constraints stay
    /// representable (useful for small closed-form problems).
    pub fn new(
        kind: ProblemKind,
        q_diag: Option<Vec<T>>,
        p: Vec<T>,
        a: DMat<T>,
        g: DMat<T>,
        h: Vec<T>,
        seed: u64,
    ) -> Result<Self> {
        let n_y = p.len();
        let n_h = a.rows();
        let n_g = g.rows();
        if n_y == 0 {
            return Err(Error::Validation("n_y must be positive".into()));
        }
        if kind == ProblemKind::Rosenbrock && n_y < 2 {
            return Err(Error::Validation(
                "rosenbrock objective needs n_y >= 2".into(),
            ));
        }
        if a.cols() != n_y {
            return Err(Error::DimMismatch {
                what: "equality matrix columns",
                expected: n_y,
                got: a.cols(),
            });
        }
        if g.cols() != n_y {
            return Err(Error::DimMismatch {
                what: "inequality matrix columns",
                expected: n_y,
                got: g.cols(),
            });
        }
        if h.len() != n_g {
            return Err(Error::DimMismatch {
                what: "inequality bound length",
                expected: n_g,
                got: h.len(),
            });
        }
        match (&q_diag, kind) {
            (None, ProblemKind::Rosenbrock) => {}
            (Some(q), ProblemKind::ConvexQp | ProblemKind::NonconvexQp) => {
                if q.len() != n_y {
                    return Err(Error::DimMismatch {
                        what: "q_diag length",
                        expected: n_y,
                        got: q.len(),
                    });
                }
                if q.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
                    return Err(Error::Validation(
                        "q_diag entries must lie in [0, 1]".into(),
                    ));
                }
            }
            (Some(_), ProblemKind::Rosenbrock) => {
                return Err(Error::Validation(
                    "rosenbrock instances carry no q_diag".into(),
                ));
            }
            (None, _) => {
                return Err(Error::Validation(
                    "quadratic kinds require q_diag".into(),
                ));
            }
        }
        if !p.iter().all(|v| v.is_finite())
            || !a.data().iter().all(|v| v.is_finite())
            || !g.data().iter().all(|v| v.is_finite())
            || !h.iter().all(|v| v.is_finite())
        {
            return Err(Error::Validation("instance data must be finite".into()));
        }
        let inst = ProblemInstance {
            kind,
            n_y,
            n_h,
            n_g,
            q_diag,
            p,
            a,
            g,
            h,
            seed,
        };
        if n_h > 0 {
            let expect = inst.feasible_bounds()?;
            let tol = T::of(1e-9);
            for (hi, ei) in inst.h.iter().zip(&expect) {
                if (*hi - *ei).abs() > tol {
                    return Err(Error::Validation(
                        "h does not match the feasibility construction".into(),
                    ));
                }
            }
        }
        Ok(inst)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_h(&self) -> usize {
        self.n_h
    }
    pub fn n_g(&self) -> usize {
        self.n_g
    }
    /// Total primal-dual dimension `n_y + n_h + n_g`.
    pub fn n_z(&self) -> usize {
        self.n_y + self.n_h + self.n_g
    }
    pub fn q_diag(&self) -> Option<&[T]> {
        self.q_diag.as_deref()
    }
    pub fn p(&self) -> &[T] {
        &self.p
    }
    pub fn a_mat(&self) -> &DMat<T> {
        &self.a
    }
    pub fn g_mat(&self) -> &DMat<T> {
        &self.g
    }
    pub fn h(&self) -> &[T] {
        &self.h
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn objective(&self, y: &[T]) -> T {
        debug_assert_eq!(y.len(), self.n_y);
        let half = T::of(0.5);
        match self.kind {
            ProblemKind::ConvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                let mut acc = T::zero();
                for i in 0..self.n_y {
                    acc += half * q[i] * y[i] * y[i] + self.p[i] * y[i];
                }
                acc
            }
            ProblemKind::NonconvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                let mut acc = T::zero();
                for i in 0..self.n_y {
                    acc += half * q[i] * y[i] * y[i] + self.p[i] * y[i].sin();
                }
                acc
            }
            ProblemKind::Rosenbrock => {
                let c = T::of(0.01);
                let five = T::of(5.0);
                let mut acc = T::zero();
                for i in 0..self.n_y - 1 {
                    let a = y[i + 1] - y[i] * y[i];
                    let b = T::one() - y[i];
                    acc += a * a + c * b * b;
                }
                for i in 0..self.n_y {
                    acc += five * self.p[i] * y[i];
                }
                acc
            }
        }
    }

    pub fn objective_grad(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.n_y);
        match self.kind {
            ProblemKind::ConvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                (0..self.n_y).map(|i| q[i] * y[i] + self.p[i]).collect()
            }
            ProblemKind::NonconvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                (0..self.n_y)
                    .map(|i| q[i] * y[i] + self.p[i] * y[i].cos())
                    .collect()
            }
            ProblemKind::Rosenbrock => {
                let n = self.n_y;
                let four = T::of(4.0);
                let two = T::of(2.0);
                let c2 = T::of(0.02);
                let five = T::of(5.0);
                let mut g = vec![T::zero(); n];
                for i in 0..n {
                    let mut gi = five * self.p[i];
                    if i + 1 < n {
                        gi = gi - four * y[i] * (y[i + 1] - y[i] * y[i]) - c2 * (T::one() - y[i]);
                    }
                    if i > 0 {
                        gi = gi + two * (y[i] - y[i - 1] * y[i - 1]);
                    }
                    g[i] = gi;
                }
                g
            }
        }
    }

    pub fn objective_hess(&self, y: &[T]) -> DMat<T> {
        debug_assert_eq!(y.len(), self.n_y);
        let n = self.n_y;
        let mut hess = DMat::zeros(n, n);
        match self.kind {
            ProblemKind::ConvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                for i in 0..n {
                    hess[(i, i)] = q[i];
                }
            }
            ProblemKind::NonconvexQp => {
                let q = self.q_diag.as_ref().unwrap();
                for i in 0..n {
                    hess[(i, i)] = q[i] - self.p[i] * y[i].sin();
                }
            }
            ProblemKind::Rosenbrock => {
                let four = T::of(4.0);
                let twelve = T::of(12.0);
                let two = T::of(2.0);
                let c2 = T::of(0.02);
                for i in 0..n {
                    let mut d = T::zero();
                    if i + 1 < n {
                        d = d + twelve * y[i] * y[i] - four * y[i + 1] + c2;
                        hess[(i, i + 1)] = -four * y[i];
                        hess[(i + 1, i)] = -four * y[i];
                    }
                    if i > 0 {
                        d = d + two;
                    }
                    hess[(i, i)] = d;
                }
            }
        }
        hess
    }

    /// `A y - x`
    pub fn eq_residual(&self, y: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n_h);
        let mut r = self.a.matvec(y);
        for (ri, xi) in r.iter_mut().zip(x) {
            *ri = *ri - *xi;
        }
        r
    }

    /// `G y - h`
    pub fn ineq_residual(&self, y: &[T]) -> Vec<T> {
        let mut r = self.g.matvec(y);
        for (ri, hi) in r.iter_mut().zip(&self.h) {
            *ri = *ri - *hi;
        }
        r
    }

    /// Minimum-norm solution of `A y = x`, i.e. `A^T (A A^T)^{-1} x`.
    /// Feasible for the inequalities whenever `x` lies in `[-1, 1]^{n_h}`,
    /// by construction of `h`.
    pub fn feasible_point(&self, x: &[T]) -> Result<Vec<T>> {
        let lu = self.row_gram_factor()?;
        let w = lu.solve(x);
        Ok(self.a.matvec_t(&w))
    }

    /// Row sums of `|G A^+|`; the bounds `h` that make every `x` in
    /// `[-1, 1]^{n_h}` feasible via the minimum-norm point.
    fn feasible_bounds(&self) -> Result<Vec<T>> {
        let lu = self.row_gram_factor()?;
        let b = crate::linalg::matmul_nt(&self.g, &self.a);
        let mut h = Vec::with_capacity(self.n_g);
        for r in 0..self.n_g {
            let u = lu.solve(b.row(r));
            h.push(u.iter().map(|v| v.abs()).sum());
        }
        Ok(h)
    }

    /// LU of the row Gram matrix `A A^T`; fails when `A` lacks full row rank.
    fn row_gram_factor(&self) -> Result<LuFactor<T>> {
        let m = crate::linalg::matmul_nt(&self.a, &self.a);
        LuFactor::new(m, T::of(RANK_PIVOT_TOL)).map_err(|_| Error::RankDeficient { attempts: 1 })
    }

    /// Stable content hash of the serialized instance, used to key oracle
    /// solution caches.
    pub fn content_hash(&self) -> String {
        let file = InstanceFile::from_instance(self);
        let json = serde_json::to_string(&file).expect("instance serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(self))
            .expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: InstanceFile<T> = serde_json::from_str(json)?;
        file.into_instance()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}

/// Generates a random instance. The equality matrix is redrawn (up to
/// [`MAX_GEN_ATTEMPTS`]) until it has full row rank; `h` is then built from
/// the generated matrices so the feasible set is nonempty for every parameter
/// in the sampling box.
pub fn gen_instance<T: Scalar>(
    kind: ProblemKind,
    n_y: usize,
    n_h: usize,
    n_g: usize,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    if n_y == 0 || n_h == 0 || n_h > n_y {
        return Err(Error::Validation(format!(
            "generation requires 0 < n_h <= n_y, got n_y={n_y}, n_h={n_h}"
        )));
    }
    if kind == ProblemKind::Rosenbrock && n_y < 2 {
        return Err(Error::Validation(
            "rosenbrock objective needs n_y >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q_diag = match kind {
        ProblemKind::Rosenbrock => None,
        _ => Some(
            (0..n_y)
                .map(|_| T::uniform(&mut rng, T::zero(), T::one()))
                .collect::<Vec<_>>(),
        ),
    };
    let p: Vec<T> = (0..n_y)
        .map(|_| T::uniform(&mut rng, T::zero(), T::one()))
        .collect();

    let mut a = None;
    for _ in 0..MAX_GEN_ATTEMPTS {
        let cand = normal_mat::<T, _>(&mut rng, n_h, n_y);
        let m = crate::linalg::matmul_nt(&cand, &cand);
        if LuFactor::new(m, T::of(RANK_PIVOT_TOL)).is_ok() {
            a = Some(cand);
            break;
        }
    }
    let a = a.ok_or(Error::RankDeficient {
        attempts: MAX_GEN_ATTEMPTS,
    })?;
    let g = normal_mat::<T, _>(&mut rng, n_g, n_y);

    // Fill in h after the fact via the same construction new() validates.
    let mut inst = ProblemInstance {
        kind,
        n_y,
        n_h,
        n_g,
        q_diag,
        p,
        a,
        g,
        h: vec![T::zero(); n_g],
        seed,
    };
    inst.h = inst.feasible_bounds()?;
    ProblemInstance::new(
        inst.kind, inst.q_diag, inst.p, inst.a, inst.g, inst.h, inst.seed,
    )
}

fn normal_mat<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMat<T> {
    let data = (0..rows * cols)
        .map(|_| T::standard_normal(rng))
        .collect();
    DMat::from_vec(rows, cols, data).expect("sized by construction")
}

/// A batch of parameter vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBatch<T> {
    x: DMat<T>,
}

impl<T: Scalar> ParamBatch<T> {
    pub fn new(x: DMat<T>) -> Self {
        ParamBatch { x }
    }
    pub fn len(&self) -> usize {
        self.x.rows()
    }
    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
    pub fn dim(&self) -> usize {
        self.x.cols()
    }
    pub fn point(&self, i: usize) -> &[T] {
        self.x.row(i)
    }
    pub fn matrix(&self) -> &DMat<T> {
        &self.x
    }
}

/// Samples `n` parameter vectors uniformly from `[-1, 1]^{n_h}`.
pub fn sample_params<T: Scalar>(
    inst: &ProblemInstance<T>,
    n: usize,
    seed: u64,
) -> ParamBatch<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_params_with(inst, n, &mut rng)
}

pub fn sample_params_with<T: Scalar, R: Rng>(
    inst: &ProblemInstance<T>,
    n: usize,
    rng: &mut R,
) -> ParamBatch<T> {
    let one = T::one();
    let data = (0..n * inst.n_h())
        .map(|_| T::uniform(rng, -one, one))
        .collect();
    ParamBatch::new(DMat::from_vec(n, inst.n_h(), data).expect("sized by construction"))
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Serialize, Deserialize)]
struct InstanceFile<T> {
    format_version: u32,
    kind: ProblemKind,
    n_y: usize,
    n_h: usize,
    n_g: usize,
    q_diag: Option<Vec<T>>,
    p: Vec<T>,
    a_row_major: Vec<T>,
    g_row_major: Vec<T>,
    h: Vec<T>,
    seed: u64,
}

impl<T: Scalar> InstanceFile<T> {
    fn from_instance(inst: &ProblemInstance<T>) -> Self {
        InstanceFile {
            format_version: INSTANCE_FORMAT_VERSION,
            kind: inst.kind,
            n_y: inst.n_y,
            n_h: inst.n_h,
            n_g: inst.n_g,
            q_diag: inst.q_diag.clone(),
            p: inst.p.clone(),
            a_row_major: inst.a.data().to_vec(),
            g_row_major: inst.g.data().to_vec(),
            h: inst.h.clone(),
            seed: inst.seed,
        }
    }

    fn into_instance(self) -> Result<ProblemInstance<T>> {
        if self.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: INSTANCE_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        if self.p.len() != self.n_y {
            return Err(Error::DimMismatch {
                what: "p length",
                expected: self.n_y,
                got: self.p.len(),
            });
        }
        let a = DMat::from_vec(self.n_h, self.n_y, self.a_row_major)?;
        let g = DMat::from_vec(self.n_g, self.n_y, self.g_row_major)?;
        ProblemInstance::new(self.kind, self.q_diag, self.p, a, g, self.h, self.seed)
    }
}
