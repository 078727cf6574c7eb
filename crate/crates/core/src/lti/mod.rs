//! Dense linear time-invariant system numerics.

pub mod balanced;
pub mod freq;
pub mod lyapunov;
pub mod riccati;
pub mod schur;

use faer::Mat;

use crate::error::{check_dim, Error, Result};

pub use balanced::{balanced_truncation, BalancedReduction};
pub use freq::{frequency_response, sample_frequency_error};
pub use lyapunov::{lyapunov_residual, solve_lyapunov, solve_lyapunov_with_schur, LyapunovKind};
pub use riccati::{
    solve_riccati_control, solve_riccati_filter, solve_riccati_hamiltonian, RiccatiOptions, RiccatiSolution,
};
pub use schur::RealSchur;

/// `x' = A x + B u`, `y = C x + D u` with dense matrices.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub a: Mat<f64>,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
    pub d: Mat<f64>,
}

impl StateSpace {
    pub fn new(a: Mat<f64>, b: Mat<f64>, c: Mat<f64>, d: Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        check_dim("state matrix (square)", n, a.ncols())?;
        check_dim("input matrix rows", n, b.nrows())?;
        check_dim("output matrix cols", n, c.ncols())?;
        check_dim("feedthrough rows", c.nrows(), d.nrows())?;
        check_dim("feedthrough cols", b.ncols(), d.ncols())?;
        Ok(StateSpace { a, b, c, d })
    }

    /// System without feedthrough.
    pub fn strictly_proper(a: Mat<f64>, b: Mat<f64>, c: Mat<f64>) -> Result<Self> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Largest real part of the eigenvalues of `a`.
pub fn abscissa(a: &Mat<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let eig = a
        .eigenvalues()
        .map_err(|e| Error::singular(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// `(a + a^T) / 2`.
pub fn symmetric_part(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}
