//! Learned iterative solving of parametric constrained optimization problems.
//!
//! A predictor network maps problem parameters to a primal-dual point and a
//! solver network iteratively refines that point by driving a smoothed KKT
//! residual to zero. Both networks are trained self-supervised from the
//! residual alone; no presolved data sets are required. Classical baselines
//! (damped Newton on the smoothed KKT system, active-set enumeration for small
//! convex QPs) provide reference solutions for evaluation.
//!
//! Module map:
//! - [`problems`]: parametric problem families, instance generation, calculus
//! - [`kkt`]: smoothed Fischer-Burmeister residual, Jacobian, metric
//! - [`nn`]: one-hidden-layer MLP, AdamW, plateau scheduler, weight files
//! - [`training`]: self-supervised predictor and solver training loops
//! - [`lisco`]: the safeguarded inference loop
//! - [`oracle`]: Newton and active-set reference solvers, solution cache
//! - [`bench`]: metrics, convergence fractions, end-to-end experiments
//! - [`linalg`]: small dense row-major matrices and LU solves

pub mod bench;
pub mod error;
pub mod kkt;
pub mod linalg;
pub mod lisco;
pub mod nn;
pub mod oracle;
pub mod problems;
#[cfg(test)]
pub(crate) mod testutil;
pub mod training;

pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Version tag for the residual row ordering (stationarity, equality,
/// complementarity). Recorded in weight-file metadata so saved networks are
/// never applied to residuals with a different layout.
pub const RESIDUAL_ORDER_VERSION: u32 = 1;

use std::fmt;

/// Floating-point scalar the whole pipeline is generic over.
///
/// Double precision is the default everywhere; `f32` is available as a
/// configuration choice. Constants travel through `of`, so literals in the
/// math keep full precision in the `f64` instantiation.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self;
    fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
    #[inline]
    fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        rng.random_range(lo..hi)
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
    #[inline]
    fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        rng.random_range(lo..hi)
    }
}

// Double-precision aliases for the common types.
pub type ProblemInstance64 = problems::ProblemInstance<f64>;
pub type PrimalDual64 = kkt::PrimalDual<f64>;
pub type MlpParams64 = nn::MlpParams<f64>;
pub type SolveReport64 = lisco::SolveReport<f64>;
pub type OracleSolution64 = oracle::OracleSolution<f64>;
