use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use super::StateSpace;
use crate::error::{check_dim, Error, Result};

/// `G(i omega) = C (i omega I - A)^-1 B + D`.
pub fn frequency_response(sys: &StateSpace, omega: f64) -> Result<Mat<c64>> {
    transfer_at(sys, c64::new(0.0, omega))
}

/// `G(s)` at a complex point.
pub fn transfer_at(sys: &StateSpace, s: c64) -> Result<Mat<c64>> {
    let n = sys.order();
    let shifted = Mat::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { c64::new(0.0, 0.0) };
        diag - c64::new(sys.a[(i, j)], 0.0)
    });
    let rhs = Mat::from_fn(n, sys.inputs(), |i, j| c64::new(sys.b[(i, j)], 0.0));
    let x = shifted.partial_piv_lu().solve(&rhs);
    if (0..x.ncols()).any(|j| x.col(j).iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) {
        return Err(Error::singular(format!("resolvent is singular at s = {s:?}")));
    }
    let c = Mat::from_fn(sys.outputs(), n, |i, j| c64::new(sys.c[(i, j)], 0.0));
    let d = Mat::from_fn(sys.outputs(), sys.inputs(), |i, j| c64::new(sys.d[(i, j)], 0.0));
    Ok(c * x + d)
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm(m: &Mat<c64>) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm_l2();
    }
    m.singular_values().map(|s| s.first().copied().unwrap_or(0.0)).unwrap_or(f64::NAN)
}

/// `max_k ||G1(i w_k) - G2(i w_k)||_2` over the grid.
pub fn sample_frequency_error(s1: &StateSpace, s2: &StateSpace, omegas: &[f64]) -> Result<f64> {
    check_dim("compared systems inputs", s1.inputs(), s2.inputs())?;
    check_dim("compared systems outputs", s1.outputs(), s2.outputs())?;
    if omegas.is_empty() {
        return Err(Error::invalid("empty frequency grid"));
    }
    let mut worst = 0.0f64;
    for &w in omegas {
        let diff = frequency_response(s1, w)? - frequency_response(s2, w)?;
        worst = worst.max(spectral_norm(&diff));
    }
    Ok(worst)
}

/// `n` logarithmically spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}
