//! Square-root balanced truncation.

use faer::{Mat, Side};
use log::warn;

use super::lyapunov::{solve_lyapunov_with_schur, LyapunovKind};
use super::schur::RealSchur;
use super::{symmetric_part, StateSpace};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BalancedReduction {
    pub reduced: StateSpace,
    /// Hankel singular values of the full system, nonincreasing.
    pub hsv: Vec<f64>,
    /// `2 * sum` of the discarded Hankel singular values.
    pub error_bound: f64,
}

impl BalancedReduction {
    pub fn order(&self) -> usize {
        self.reduced.order()
    }
}

/// `F` with `F F^T = P` for a symmetric positive semidefinite Gramian.
/// Cholesky is tried first; numerically singular Gramians fall back to a
/// symmetric eigendecomposition with negative eigenvalues clipped.
fn gramian_factor(p: &Mat<f64>) -> Result<Mat<f64>> {
    if let Ok(llt) = p.llt(Side::Lower) {
        return Ok(llt.L().to_owned());
    }
    let eig = p
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::singular(format!("Gramian eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    Ok(Mat::from_fn(p.nrows(), p.ncols(), |i, j| u[(i, j)] * s[j].max(0.0).sqrt()))
}

/// Truncates a stable system to order `r` by balancing its Gramians.
pub fn balanced_truncation(sys: &StateSpace, r: usize) -> Result<BalancedReduction> {
    let n = sys.order();
    if r == 0 || r > n {
        return Err(Error::invalid(format!("reduced order {r} outside 1..={n}")));
    }
    let schur = RealSchur::new(&sys.a)?;
    if !(schur.abscissa() < 0.0) {
        return Err(Error::Unstable {
            what: "system to be balanced",
            abscissa: schur.abscissa(),
        });
    }
    let bb = symmetric_part(&(&sys.b * sys.b.transpose()));
    let cc = symmetric_part(&(sys.c.transpose() * &sys.c));
    let p = solve_lyapunov_with_schur(&schur, &bb, LyapunovKind::Controllability)?;
    let q = solve_lyapunov_with_schur(&schur, &cc, LyapunovKind::Observability)?;
    let s = gramian_factor(&p)?;
    let l = gramian_factor(&q)?;
    let svd = (l.transpose() * &s)
        .svd()
        .map_err(|e| Error::singular(format!("SVD of Gramian factors failed: {e:?}")))?;
    let hsv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let tol = hsv[0] * n as f64 * f64::EPSILON;
    let rank = hsv.iter().take_while(|&&h| h > tol).count();
    let r_eff = if r > rank {
        warn!("requested order {r} exceeds numerical rank {rank}; truncating to {rank}");
        rank
    } else {
        r
    };
    if r_eff == 0 {
        return Err(Error::singular("system has no controllable and observable part"));
    }
    let u = svd.U().subcols(0, r_eff);
    let v = svd.V().subcols(0, r_eff);
    let scale: Vec<f64> = hsv[..r_eff].iter().map(|h| 1.0 / h.sqrt()).collect();
    // T_l = S^-1/2 U^T L^T, T_r = S V S^-1/2
    let mut t_l = u.transpose() * l.transpose();
    for i in 0..r_eff {
        for j in 0..n {
            t_l[(i, j)] *= scale[i];
        }
    }
    let mut t_r = &s * v;
    for j in 0..r_eff {
        for i in 0..n {
            t_r[(i, j)] *= scale[j];
        }
    }
    let reduced = StateSpace::new(&t_l * &sys.a * &t_r, &t_l * &sys.b, &sys.c * &t_r, sys.d.clone())?;
    let error_bound = 2.0 * hsv[r_eff..].iter().sum::<f64>();
    Ok(BalancedReduction {
        reduced,
        hsv,
        error_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::freq::{log_grid, sample_frequency_error};

    #[test]
    fn two_mode_example() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [-1.0, -100.0][i] } else { 0.0 });
        let b = Mat::from_fn(2, 1, |_, _| 1.0);
        let c = Mat::from_fn(1, 2, |_, _| 1.0);
        let sys = StateSpace::strictly_proper(a, b, c).unwrap();
        let red = balanced_truncation(&sys, 1).unwrap();
        // Gramians by hand (Kronecker oracle for diagonal A): P_ij = 1/(-(l_i + l_j))
        let l = [-1.0, -100.0];
        let p = Mat::from_fn(2, 2, |i, j| -1.0 / (l[i] + l[j]));
        let pq = &p * &p;
        let ev: Vec<faer::c64> = pq.eigenvalues().unwrap();
        let mut sig: Vec<f64> = ev.iter().map(|e| e.re.sqrt()).collect();
        sig.sort_by(|x, y| y.total_cmp(x));
        assert!((red.hsv[0] - sig[0]).abs() < 1e-12 && (red.hsv[1] - sig[1]).abs() < 1e-12);
        // the slow mode is kept
        assert!((red.reduced.a[(0, 0)] + 1.0).abs() < 0.1);
        let err = sample_frequency_error(&sys, &red.reduced, &log_grid(1e-3, 1e4, 200)).unwrap();
        assert!(err <= 2.0 * sig[1] * (1.0 + 1e-12));
        assert!((red.error_bound - 2.0 * sig[1]).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_order() {
        let sys = StateSpace::strictly_proper(
            Mat::from_fn(1, 1, |_, _| -1.0),
            Mat::from_fn(1, 1, |_, _| 1.0),
            Mat::from_fn(1, 1, |_, _| 1.0),
        )
        .unwrap();
        assert!(balanced_truncation(&sys, 0).is_err());
        assert!(balanced_truncation(&sys, 2).is_err());
    }

    #[test]
    fn unstable_system_rejected() {
        let sys = StateSpace::strictly_proper(
            Mat::from_fn(1, 1, |_, _| 1.0),
            Mat::from_fn(1, 1, |_, _| 1.0),
            Mat::from_fn(1, 1, |_, _| 1.0),
        )
        .unwrap();
        assert!(matches!(balanced_truncation(&sys, 1), Err(Error::Unstable { .. })));
    }
}
