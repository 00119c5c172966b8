//! Finite-difference helpers shared by unit tests.

/// Relative error with an absolute floor of 1, so values near zero compare
/// absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs().max(b.abs()))
}

/// Central-difference gradient of `f` at `y`.
pub fn grad_fd<F: Fn(&[f64]) -> f64>(f: F, y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut yy = y.to_vec();
    for i in 0..y.len() {
        let h = 1e-6 * y[i].abs().max(1.0);
        let orig = yy[i];
        yy[i] = orig + h;
        let fp = f(&yy);
        yy[i] = orig - h;
        let fm = f(&yy);
        yy[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}
