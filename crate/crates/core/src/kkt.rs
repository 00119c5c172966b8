//! Smoothed KKT residual, its Jacobian, and the optimization metric.
//!
//! The first-order conditions of an instance are flattened into one root
//! problem `F(z; x) = 0` over the primal-dual point `z = (y, nu, lambda)`.
//! Complementarity is encoded with a smoothed Fischer-Burmeister function so
//! `F` stays differentiable; the networks and the Newton oracle all operate
//! on the same residual.
//!
//! Row order of `F` (stable, recorded in weight metadata as
//! [`crate::RESIDUAL_ORDER_VERSION`]):
//!
//! ```text
//!   [ grad f(y) + A' nu + G' lambda ]   n_y rows   stationarity
//!   [ A y - x                      ]   n_h rows   equality
//!   [ phi(lambda_i, (G y - h)_i)   ]   n_g rows   complementarity
//! ```

use crate::linalg::DMat;
use crate::problems::ProblemInstance;
use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

/// Default Fischer-Burmeister smoothing.
pub const FB_EPS_DEFAULT: f64 = 1e-6;

/// Primal-dual point with concatenated storage `[y; nu; lambda]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDual<T> {
    n_y: usize,
    n_h: usize,
    n_g: usize,
    data: Vec<T>,
}

impl<T: Scalar> PrimalDual<T> {
    pub fn zeros(n_y: usize, n_h: usize, n_g: usize) -> Self {
        PrimalDual {
            n_y,
            n_h,
            n_g,
            data: vec![T::zero(); n_y + n_h + n_g],
        }
    }

    pub fn from_concat(n_y: usize, n_h: usize, n_g: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_y + n_h + n_g {
            return Err(Error::DimMismatch {
                what: "primal-dual vector length",
                expected: n_y + n_h + n_g,
                got: data.len(),
            });
        }
        Ok(PrimalDual { n_y, n_h, n_g, data })
    }

    pub fn from_parts(y: &[T], nu: &[T], lambda: &[T]) -> Self {
        let mut data = Vec::with_capacity(y.len() + nu.len() + lambda.len());
        data.extend_from_slice(y);
        data.extend_from_slice(nu);
        data.extend_from_slice(lambda);
        PrimalDual {
            n_y: y.len(),
            n_h: nu.len(),
            n_g: lambda.len(),
            data,
        }
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
    pub fn n_z(&self) -> usize {
        self.data.len()
    }

    pub fn y(&self) -> &[T] {
        &self.data[..self.n_y]
    }
    pub fn nu(&self) -> &[T] {
        &self.data[self.n_y..self.n_y + self.n_h]
    }
    pub fn lambda(&self) -> &[T] {
        &self.data[self.n_y + self.n_h..]
    }
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn matches(&self, inst: &ProblemInstance<T>) -> bool {
        self.n_y == inst.n_y() && self.n_h == inst.n_h() && self.n_g == inst.n_g()
    }

    /// z += alpha * step
    pub fn step(&mut self, alpha: T, step: &[T]) {
        crate::linalg::axpy(alpha, step, &mut self.data);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Smoothed Fischer-Burmeister function
/// `phi(lambda, g) = lambda - g - sqrt(lambda^2 + g^2 + eps^2)`.
///
/// At `eps = 0`, `phi = 0` exactly characterizes `lambda >= 0`, `g <= 0`,
/// `lambda g = 0`; positive `eps` smooths the kink at the origin and shifts
/// the value by at most `eps`.
#[inline]
pub fn fb<T: Scalar>(lambda: T, g: T, eps: T) -> T {
    lambda - g - (lambda * lambda + g * g + eps * eps).sqrt()
}

/// Partials of [`fb`] with respect to `lambda` and `g`.
#[inline]
pub fn fb_partials<T: Scalar>(lambda: T, g: T, eps: T) -> Result<(T, T)> {
    let r = (lambda * lambda + g * g + eps * eps).sqrt();
    if r == T::zero() {
        return Err(Error::FbSingularPoint);
    }
    Ok((T::one() - lambda / r, -T::one() - g / r))
}

/// Training-time convexified objective: the gradient of
/// `f(y_lin) + grad f(y_lin)'(y - y_lin) + rho ||y - y_lin||^2`
/// replaces the true gradient in the stationarity rows, and `2 rho I`
/// replaces the Hessian block. The linearization point carries no gradient.
#[derive(Debug, Clone)]
pub struct Convexification<T> {
    pub rho: T,
    pub y_lin: Vec<T>,
}

/// Residual vector together with its cached Euclidean norm.
#[derive(Debug, Clone)]
pub struct KktResidual<T> {
    f: Vec<T>,
    norm: T,
}

impl<T: Scalar> KktResidual<T> {
    pub fn new(f: Vec<T>) -> Self {
        let norm = crate::linalg::norm2(&f);
        KktResidual { f, norm }
    }

    pub fn f(&self) -> &[T] {
        &self.f
    }

    pub fn norm(&self) -> T {
        self.norm
    }

    /// The optimization metric `T = 1/2 ||F||^2`.
    pub fn metric_t(&self) -> T {
        T::of(0.5) * self.norm * self.norm
    }

    pub fn is_finite(&self) -> bool {
        self.norm.is_finite()
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// `T = 1/2 ||F||^2` for a raw residual vector.
pub fn metric_t<T: Scalar>(f: &[T]) -> T {
    T::of(0.5) * crate::linalg::dot(f, f)
}

/// Evaluates the KKT residual at `z`. With `conv` given, the stationarity
/// rows use the convexified gradient; at `y = y_lin` that equals the true
/// gradient, so the residual value itself is unchanged at the linearization
/// point.
pub fn kkt_residual<T: Scalar>(
    inst: &ProblemInstance<T>,
    z: &PrimalDual<T>,
    x: &[T],
    conv: Option<&Convexification<T>>,
    eps: T,
) -> KktResidual<T> {
    debug_assert!(z.matches(inst));
    debug_assert_eq!(x.len(), inst.n_h());
    let (n_y, n_h, n_g) = (inst.n_y(), inst.n_h(), inst.n_g());
    let y = z.y();
    let mut f = vec![T::zero(); n_y + n_h + n_g];

    // Stationarity rows.
    {
        let grad = match conv {
            None => inst.objective_grad(y),
            Some(c) => {
                debug_assert_eq!(c.y_lin.len(), n_y);
                let mut g = inst.objective_grad(&c.y_lin);
                let two_rho = T::of(2.0) * c.rho;
                for i in 0..n_y {
                    g[i] = g[i] + two_rho * (y[i] - c.y_lin[i]);
                }
                g
            }
        };
        f[..n_y].copy_from_slice(&grad);
        inst.a_mat().matvec_t_acc(z.nu(), T::one(), &mut f[..n_y]);
        inst.g_mat()
            .matvec_t_acc(z.lambda(), T::one(), &mut f[..n_y]);
    }

    // Equality rows.
    let eq = inst.eq_residual(y, x);
    f[n_y..n_y + n_h].copy_from_slice(&eq);

    // Complementarity rows.
    let ineq = inst.ineq_residual(y);
    let lambda = z.lambda();
    for i in 0..n_g {
        f[n_y + n_h + i] = fb(lambda[i], ineq[i], eps);
    }

    KktResidual::new(f)
}

/// Jacobian of the residual with respect to `z`, with block structure
///
/// ```text
///   [ H        A'   G'       ]
///   [ A        0    0        ]
///   [ D_g G    0    D_lambda ]
/// ```
///
/// where `H` is the objective Hessian, or `2 rho I` under convexification,
/// and `D_g`, `D_lambda` hold the Fischer-Burmeister partials.
pub fn kkt_jacobian<T: Scalar>(
    inst: &ProblemInstance<T>,
    z: &PrimalDual<T>,
    conv: Option<&Convexification<T>>,
    eps: T,
) -> Result<DMat<T>> {
    debug_assert!(z.matches(inst));
    let (n_y, n_h, n_g) = (inst.n_y(), inst.n_h(), inst.n_g());
    let n_z = n_y + n_h + n_g;
    let mut j = DMat::zeros(n_z, n_z);

    match conv {
        None => {
            let hess = inst.objective_hess(z.y());
            for r in 0..n_y {
                j.row_mut(r)[..n_y].copy_from_slice(hess.row(r));
            }
        }
        Some(c) => {
            let two_rho = T::of(2.0) * c.rho;
            for r in 0..n_y {
                j[(r, r)] = two_rho;
            }
        }
    }

    let a = inst.a_mat();
    let g = inst.g_mat();
    for r in 0..n_h {
        for c in 0..n_y {
            j[(c, n_y + r)] = a[(r, c)];
            j[(n_y + r, c)] = a[(r, c)];
        }
    }

    let ineq = inst.ineq_residual(z.y());
    let lambda = z.lambda();
    for r in 0..n_g {
        let (d_lambda, d_g) = fb_partials(lambda[r], ineq[r], eps)?;
        for c in 0..n_y {
            j[(c, n_y + n_h + r)] = g[(r, c)];
            j[(n_y + n_h + r, c)] = d_g * g[(r, c)];
        }
        j[(n_y + n_h + r, n_y + n_h + r)] = d_lambda;
    }

    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_instance, ProblemKind};
    use crate::testutil::rel_err;
    use crate::Scalar;
    use proptest::prelude::*;
    use rand::SeedableRng;

    /// min 1/2 y^2 subject to y >= 1, i.e. G = [-1], h = [-1], no equalities.
    fn one_dim_qp() -> ProblemInstance<f64> {
        ProblemInstance::new(
            ProblemKind::ConvexQp,
            Some(vec![1.0]),
            vec![0.0],
            DMat::zeros(0, 1),
            DMat::from_vec(1, 1, vec![-1.0]).unwrap(),
            vec![-1.0],
            0,
        )
        .unwrap()
    }

    #[test]
    fn fb_hand_values() {
        assert_eq!(fb(0.0, 0.0, 1e-6), -1e-6);
        assert_eq!(fb(1.0, 1.0, 0.0), -(2.0_f64.sqrt()));
        assert!((fb(1.0, -1.0, 0.0) - (2.0 - 2.0_f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn fb_exact_roots_iff_complementary() {
        // Values chosen so squares and roots are exact in binary floating
        // point; fb must vanish exactly on complementary pairs and only there.
        let roots = [
            (0.0, 0.0),
            (1.0, 0.0),
            (3.0, 0.0),
            (0.5, 0.0),
            (2.0, 0.0),
            (0.0, -2.0),
            (0.0, -0.5),
            (0.0, -1.0),
            (0.0, -4.0),
        ];
        for (l, g) in roots {
            assert_eq!(fb(l, g, 0.0), 0.0, "({l}, {g})");
        }
        let nonroots = [(1.0, 1.0), (-1.0, 0.0), (0.0, 1.0), (2.0, -2.0), (-0.5, -0.5)];
        for (l, g) in nonroots {
            assert_ne!(fb(l, g, 0.0), 0.0, "({l}, {g})");
        }
    }

    #[test]
    fn fb_partials_hand_values() {
        let (dl, dg) = fb_partials::<f64>(3.0, 4.0, 0.0).unwrap();
        assert!((dl - 0.4).abs() < 1e-15);
        assert!((dg + 1.8).abs() < 1e-15);
        assert!(matches!(
            fb_partials(0.0, 0.0, 0.0),
            Err(Error::FbSingularPoint)
        ));
        assert!(fb_partials(0.0, 0.0, 1e-6).is_ok());
    }

    #[test]
    fn fb_partials_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let l = f64::standard_normal(&mut rng) * 2.0;
            let g = f64::standard_normal(&mut rng) * 2.0;
            let eps = 1e-6;
            let (dl, dg) = fb_partials(l, g, eps).unwrap();
            let h = 1e-6;
            let fd_l = (fb(l + h, g, eps) - fb(l - h, g, eps)) / (2.0 * h);
            let fd_g = (fb(l, g + h, eps) - fb(l, g - h, eps)) / (2.0 * h);
            assert!(rel_err(dl, fd_l) <= 1e-5);
            assert!(rel_err(dg, fd_g) <= 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn smoothing_changes_fb_by_at_most_eps(
            l in -100.0_f64..100.0,
            g in -100.0_f64..100.0,
            eps in 0.0_f64..1.0,
        ) {
            let diff = (fb(l, g, eps) - fb(l, g, 0.0)).abs();
            prop_assert!(diff <= eps + 1e-12);
        }
    }

    #[test]
    fn residual_vanishes_at_hand_solution() {
        // y* = 1, lambda* = 1 solves the 1-d QP; the smoothed residual is
        // within eps of zero there and exactly zero when eps = 0.
        let inst = one_dim_qp();
        let z = PrimalDual::from_parts(&[1.0], &[], &[1.0]);
        let r0 = kkt_residual(&inst, &z, &[], None, 0.0);
        assert_eq!(r0.f(), &[0.0, 0.0]);
        let r = kkt_residual(&inst, &z, &[], None, 1e-6);
        assert!(r.metric_t() <= 1e-10);
    }

    #[test]
    fn residual_row_order_is_stationarity_equality_complementarity() {
        // One variable, one equality, one inequality with distinct values in
        // every block.
        let a = DMat::from_vec(1, 1, vec![1.0]).unwrap();
        let g = DMat::from_vec(1, 1, vec![1.0]).unwrap();
        // h = |G A^+| row sums = 1.
        let inst = ProblemInstance::new(
            ProblemKind::ConvexQp,
            Some(vec![1.0]),
            vec![0.0],
            a,
            g,
            vec![1.0],
            0,
        )
        .unwrap();
        let z = PrimalDual::from_parts(&[2.0], &[3.0], &[0.0]);
        let r = kkt_residual(&inst, &z, &[0.5], None, 0.0);
        // stationarity: y + nu + lambda = 5; equality: y - x = 1.5;
        // fb(0, g) with g = y - h = 1: -g - |g| = -2.
        assert_eq!(r.f(), &[5.0, 1.5, -2.0]);
    }

    #[test]
    fn metric_t_hand_value() {
        let r = KktResidual::new(vec![3.0, 4.0]);
        assert_eq!(r.norm(), 5.0);
        assert_eq!(r.metric_t(), 12.5);
        assert_eq!(metric_t(&[3.0, 4.0]), 12.5);
    }

    #[test]
    fn convexified_residual_at_lin_point_equals_true_residual() {
        let inst: ProblemInstance<f64> =
            gen_instance(ProblemKind::NonconvexQp, 6, 2, 3, 21).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let data: Vec<f64> = (0..inst.n_z())
                .map(|_| f64::standard_normal(&mut rng))
                .collect();
            let z = PrimalDual::from_concat(6, 2, 3, data).unwrap();
            let x: Vec<f64> = (0..2).map(|_| f64::standard_normal(&mut rng)).collect();
            let conv = Convexification {
                rho: 1.0,
                y_lin: z.y().to_vec(),
            };
            let plain = kkt_residual(&inst, &z, &x, None, 1e-6);
            let lifted = kkt_residual(&inst, &z, &x, Some(&conv), 1e-6);
            assert_eq!(plain.f(), lifted.f());
        }
    }

    #[test]
    fn convexified_residual_away_from_lin_point() {
        let inst: ProblemInstance<f64> =
            gen_instance(ProblemKind::NonconvexQp, 4, 2, 2, 22).unwrap();
        let z = PrimalDual::from_concat(4, 2, 2, vec![0.3; 8]).unwrap();
        let y_lin = vec![-0.2, 0.1, 0.5, 0.0];
        let conv = Convexification {
            rho: 1.0,
            y_lin: y_lin.clone(),
        };
        let x = [0.1, -0.4];
        let got = kkt_residual(&inst, &z, &x, Some(&conv), 1e-6);
        // Stationarity must read grad f(y_lin) + 2 rho (y - y_lin) + duals.
        let mut expect = inst.objective_grad(&y_lin);
        for i in 0..4 {
            expect[i] += 2.0 * (z.y()[i] - y_lin[i]);
        }
        inst.a_mat().matvec_t_acc(z.nu(), 1.0, &mut expect);
        inst.g_mat().matvec_t_acc(z.lambda(), 1.0, &mut expect);
        assert_eq!(&got.f()[..4], expect.as_slice());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for kind in [
            ProblemKind::ConvexQp,
            ProblemKind::NonconvexQp,
            ProblemKind::Rosenbrock,
        ] {
            let inst: ProblemInstance<f64> = gen_instance(kind, 5, 2, 3, 31).unwrap();
            let n_z = inst.n_z();
            for _ in 0..50 {
                let data: Vec<f64> = (0..n_z).map(|_| f64::standard_normal(&mut rng)).collect();
                let z = PrimalDual::from_concat(5, 2, 3, data.clone()).unwrap();
                let x: Vec<f64> = (0..2).map(|_| f64::standard_normal(&mut rng)).collect();
                let j = kkt_jacobian(&inst, &z, None, 1e-6).unwrap();
                for col in 0..n_z {
                    let h = 1e-6 * data[col].abs().max(1.0);
                    let mut zp = data.clone();
                    zp[col] += h;
                    let mut zm = data.clone();
                    zm[col] -= h;
                    let fp = kkt_residual(
                        &inst,
                        &PrimalDual::from_concat(5, 2, 3, zp).unwrap(),
                        &x,
                        None,
                        1e-6,
                    );
                    let fm = kkt_residual(
                        &inst,
                        &PrimalDual::from_concat(5, 2, 3, zm).unwrap(),
                        &x,
                        None,
                        1e-6,
                    );
                    for row in 0..n_z {
                        let fd = (fp.f()[row] - fm.f()[row]) / (2.0 * h);
                        assert!(
                            rel_err(j[(row, col)], fd) <= 1e-5,
                            "{kind:?} J[{row},{col}] = {} vs fd {}",
                            j[(row, col)],
                            fd
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn convexified_jacobian_top_left_block() {
        let inst: ProblemInstance<f64> =
            gen_instance(ProblemKind::NonconvexQp, 4, 2, 2, 41).unwrap();
        let z = PrimalDual::from_concat(4, 2, 2, vec![0.1; 8]).unwrap();
        let conv = Convexification {
            rho: 1.5,
            y_lin: z.y().to_vec(),
        };
        let j = kkt_jacobian(&inst, &z, Some(&conv), 1e-6).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c { 3.0 } else { 0.0 };
                assert_eq!(j[(r, c)], expect);
            }
        }
    }

    #[test]
    fn primal_dual_accessors_and_step() {
        let mut z = PrimalDual::from_parts(&[1.0, 2.0], &[3.0], &[4.0, 5.0]);
        assert_eq!(z.y(), &[1.0, 2.0]);
        assert_eq!(z.nu(), &[3.0]);
        assert_eq!(z.lambda(), &[4.0, 5.0]);
        z.step(0.5, &[2.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(z.as_slice(), &[2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(PrimalDual::from_concat(2, 1, 2, vec![0.0; 4]).is_err());
    }
}
