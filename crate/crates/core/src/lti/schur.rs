//! Real Schur decomposition through LAPACK `dgees`.

use faer::Mat;

use crate::error::{Error, Result};

/// `A = Z T Z^T` with `T` upper quasi-triangular (1x1 and 2x2 diagonal blocks)
/// and `Z` orthogonal.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub t: Mat<f64>,
    pub z: Mat<f64>,
}

impl RealSchur {
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "real Schur (square)",
                expected: n,
                found: a.ncols(),
            });
        }
        if n == 0 {
            return Ok(RealSchur {
                t: Mat::zeros(0, 0),
                z: Mat::zeros(0, 0),
            });
        }
        if (0..n).any(|j| a.col(j).iter().any(|v| !v.is_finite())) {
            return Err(Error::singular("real Schur of a matrix with non-finite entries"));
        }
        let ni = i32::try_from(n).map_err(|_| Error::invalid("matrix too large for LAPACK"))?;
        let mut t: Vec<f64> = (0..n).flat_map(|j| a.col(j).iter().copied().collect::<Vec<_>>()).collect();
        let mut wr = vec![0.0; n];
        let mut wi = vec![0.0; n];
        let mut vs = vec![0.0; n * n];
        let mut bwork = vec![0; n];
        let (mut sdim, mut info) = (0, 0);
        let mut work = vec![0.0; 1];
        // workspace query, then the decomposition
        for lwork in [-1, 0] {
            let lwork = if lwork == -1 {
                -1
            } else {
                let lw = work[0] as usize;
                work = vec![0.0; lw.max(3 * n)];
                work.len() as i32
            };
            // SAFETY: all buffers have the sizes LAPACK expects for order `n`.
            unsafe {
                lapack::dgees(
                    b'V', b'N', None, ni, &mut t, ni, &mut sdim, &mut wr, &mut wi, &mut vs, ni, &mut work, lwork,
                    &mut bwork, &mut info,
                );
            }
            if info != 0 {
                return Err(Error::NotConverged {
                    what: "real Schur decomposition (dgees)",
                    iterations: 0,
                    residual: info as f64,
                });
            }
        }
        Ok(RealSchur {
            t: Mat::from_fn(n, n, |i, j| if i > j + 1 { 0.0 } else { t[i + j * n] }),
            z: Mat::from_fn(n, n, |i, j| vs[i + j * n]),
        })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Largest real part among the eigenvalues.
    pub fn abscissa(&self) -> f64 {
        (0..self.dim()).map(|i| self.t[(i, i)]).fold(f64::NEG_INFINITY, f64::max)
    }
}
