//! Bartels-Stewart Lyapunov solver. The quasi-triangular Sylvester equation
//! is solved recursively so that almost all work happens in matrix products.

use faer::reborrow::{Reborrow, ReborrowMut};
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use super::schur::RealSchur;
use crate::error::{Error, Result};

const LEAF: usize = 48;

/// Diagonal block boundaries `(start, size)` of an upper quasi-triangular matrix.
fn diagonal_blocks(t: MatRef<'_, f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Split index near `k` that does not cut a 2x2 diagonal block.
fn split_point(t: MatRef<'_, f64>, k: usize) -> usize {
    if t[(k, k - 1)] != 0.0 {
        k + 1
    } else {
        k
    }
}

/// Solves the (at most 4x4) system `a_blk y + y b_blk = rhs` in place.
fn solve_small(a: MatRef<'_, f64>, b: MatRef<'_, f64>, rhs: &mut [f64]) -> Result<()> {
    let (p, q) = (a.nrows(), b.nrows());
    let n = p * q;
    // column-major vec(Y): index i + p*j
    let mut k = [[0.0f64; 4]; 4];
    for j in 0..q {
        for i in 0..p {
            let r = i + p * j;
            for l in 0..p {
                k[r][l + p * j] += a[(i, l)];
            }
            for l in 0..q {
                k[r][i + p * l] += b[(l, j)];
            }
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| k[x][col].abs().total_cmp(&k[y][col].abs()))
            .expect("nonempty range");
        if k[piv][col].abs() < f64::MIN_POSITIVE * 1e4 {
            return Err(Error::singular("Sylvester equation with common eigenvalues"));
        }
        k.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = k[r][col] / k[col][col];
            for c in col..n {
                k[r][c] -= f * k[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for c in col + 1..n {
            s -= k[col][c] * rhs[c];
        }
        rhs[col] = s / k[col][col];
    }
    Ok(())
}

fn solve_leaf(a: MatRef<'_, f64>, b: MatRef<'_, f64>, mut c: MatMut<'_, f64>) -> Result<()> {
    let ab = diagonal_blocks(a);
    let bb = diagonal_blocks(b);
    for &(j0, jq) in &bb {
        // eliminate contributions of already solved columns
        for j in j0..j0 + jq {
            for k in 0..j0 {
                let bkj = b[(k, j)];
                if bkj != 0.0 {
                    for i in 0..c.nrows() {
                        let v = c[(i, k)];
                        c[(i, j)] -= v * bkj;
                    }
                }
            }
        }
        for &(i0, ip) in ab.iter().rev() {
            let mut rhs = [0.0; 4];
            for jj in 0..jq {
                for ii in 0..ip {
                    let (i, j) = (i0 + ii, j0 + jj);
                    let mut s = c[(i, j)];
                    for l in i0 + ip..a.nrows() {
                        s -= a[(i, l)] * c[(l, j)];
                    }
                    rhs[ii + ip * jj] = s;
                }
            }
            solve_small(
                a.submatrix(i0, i0, ip, ip),
                b.submatrix(j0, j0, jq, jq),
                &mut rhs[..ip * jq],
            )?;
            for jj in 0..jq {
                for ii in 0..ip {
                    c[(i0 + ii, j0 + jj)] = rhs[ii + ip * jj];
                }
            }
        }
    }
    Ok(())
}

/// Solves `A Y + Y B = C` in place of `C` for upper quasi-triangular `A`, `B`.
pub fn solve_quasi_triangular_sylvester(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    c: MatMut<'_, f64>,
) -> Result<()> {
    let (m, n) = (a.nrows(), b.nrows());
    if m == 0 || n == 0 {
        return Ok(());
    }
    if m <= LEAF && n <= LEAF {
        return solve_leaf(a, b, c);
    }
    if m >= n {
        let s = split_point(a, m / 2);
        let (mut c1, mut c2) = c.split_at_row_mut(s);
        solve_quasi_triangular_sylvester(a.submatrix(s, s, m - s, m - s), b, c2.rb_mut())?;
        matmul(c1.rb_mut(), Accum::Add, a.submatrix(0, s, s, m - s), c2.rb(), -1.0, Par::Seq);
        solve_quasi_triangular_sylvester(a.submatrix(0, 0, s, s), b, c1)
    } else {
        let s = split_point(b, n / 2);
        let (mut c1, mut c2) = c.split_at_col_mut(s);
        solve_quasi_triangular_sylvester(a, b.submatrix(0, 0, s, s), c1.rb_mut())?;
        matmul(c2.rb_mut(), Accum::Add, c1.rb(), b.submatrix(0, s, s, n - s), -1.0, Par::Seq);
        solve_quasi_triangular_sylvester(a, b.submatrix(s, s, n - s, n - s), c2)
    }
}

fn symmetrize(x: &mut Mat<f64>) {
    let n = x.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

/// Which of the two Lyapunov equations to solve with a given Schur form of `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LyapunovKind {
    /// `A X + X A^T + Q = 0` (controllability type).
    Controllability,
    /// `A^T X + X A + Q = 0` (observability type).
    Observability,
}

/// Solves a Lyapunov equation with a precomputed Schur form of `A`. `q` must be
/// symmetric; the result is symmetrized.
pub fn solve_lyapunov_with_schur(schur: &RealSchur, q: &Mat<f64>, kind: LyapunovKind) -> Result<Mat<f64>> {
    let n = schur.dim();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "Lyapunov right-hand side",
            expected: n,
            found: q.nrows(),
        });
    }
    let abscissa = schur.abscissa();
    if !(abscissa < 0.0) {
        return Err(Error::Unstable {
            what: "Lyapunov coefficient matrix",
            abscissa,
        });
    }
    let z = &schur.z;
    let mut c = -(z.transpose() * q * z);
    // reverse the lower-triangular factor into upper quasi-triangular form
    let t_rev = schur.t.transpose().reverse_rows_and_cols().to_owned();
    let y = match kind {
        LyapunovKind::Controllability => {
            // T Y + Y T^T = C  <=>  T (Y J) + (Y J)(J T^T J) = C J
            let mut w = c.as_ref().reverse_cols().to_owned();
            solve_quasi_triangular_sylvester(schur.t.as_ref(), t_rev.as_ref(), w.as_mut())?;
            w.as_ref().reverse_cols().to_owned()
        }
        LyapunovKind::Observability => {
            // T^T Y + Y T = C  <=>  (J T^T J)(J Y) + (J Y) T = J C
            c = c.as_ref().reverse_rows().to_owned();
            solve_quasi_triangular_sylvester(t_rev.as_ref(), schur.t.as_ref(), c.as_mut())?;
            c.as_ref().reverse_rows().to_owned()
        }
    };
    let mut x = z * y * z.transpose();
    symmetrize(&mut x);
    Ok(x)
}

/// Solves `A X + X A^T + Q = 0` for stable `A`.
pub fn solve_lyapunov(a: &Mat<f64>, q: &Mat<f64>) -> Result<Mat<f64>> {
    solve_lyapunov_with_schur(&RealSchur::new(a)?, q, LyapunovKind::Controllability)
}

/// `||A X + X A^T + Q||_F / max(||X||_F, ||Q||_F)`.
pub fn lyapunov_residual(a: &Mat<f64>, x: &Mat<f64>, q: &Mat<f64>) -> f64 {
    let ax = a * x;
    let r = &ax + ax.transpose() + q;
    r.norm_l2() / x.norm_l2().max(q.norm_l2()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = a.eigenvalues().unwrap().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        &a - Mat::<f64>::identity(n, n) * (shift + rng.gen_range(0.1..1.0))
    }

    /// Kronecker oracle: (I (x) A + A (x) I) vec X = -vec Q.
    fn kronecker_lyapunov(a: &Mat<f64>, q: &Mat<f64>) -> Mat<f64> {
        let n = a.nrows();
        let k = Mat::from_fn(n * n, n * n, |r, c| {
            let (i, j) = (r % n, r / n);
            let (l, m) = (c % n, c / n);
            let mut v = 0.0;
            if m == j {
                v += a[(i, l)];
            }
            if l == i {
                v += a[(j, m)];
            }
            v
        });
        let rhs = Mat::from_fn(n * n, 1, |r, _| -q[(r % n, r / n)]);
        let x = faer::linalg::solvers::Solve::solve(&k.partial_piv_lu(), &rhs);
        Mat::from_fn(n, n, |i, j| x[(i + n * j, 0)])
    }

    #[test]
    fn scalar_case() {
        let a = Mat::from_fn(1, 1, |_, _| -1.0);
        let q = Mat::from_fn(1, 1, |_, _| 2.0);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_kronecker_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 5, 9] {
            let a = random_stable(n, &mut rng);
            let g = Mat::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
            let q = &g * g.transpose();
            let x = solve_lyapunov(&a, &q).unwrap();
            let oracle = kronecker_lyapunov(&a, &q);
            assert!((&x - &oracle).norm_l2() <= 1e-10 * oracle.norm_l2(), "n={n}");
            assert!(lyapunov_residual(&a, &x, &q) <= 1e-10);
            let eig = x.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
            assert!(eig[0] >= -1e-12 * eig[n - 1]);
        }
    }

    #[test]
    fn observability_kind_solves_transposed_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_stable(6, &mut rng);
        let q = Mat::from_fn(6, 6, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let s = RealSchur::new(&a).unwrap();
        let x = solve_lyapunov_with_schur(&s, &q, LyapunovKind::Observability).unwrap();
        let oracle = kronecker_lyapunov(&a.transpose().to_owned(), &q);
        assert!((&x - &oracle).norm_l2() <= 1e-10 * oracle.norm_l2());
    }

    #[test]
    fn recursive_path_matches_leaf_path() {
        // large enough to recurse; residual checked directly
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 150;
        let a = random_stable(n, &mut rng);
        let g = Mat::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let q = &g * g.transpose();
        let x = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &x, &q) <= 1e-10);
        let s = RealSchur::new(&a).unwrap();
        let xo = solve_lyapunov_with_schur(&s, &q, LyapunovKind::Observability).unwrap();
        let ax = a.transpose() * &xo;
        let r = &ax + ax.transpose() + &q;
        assert!(r.norm_l2() <= 1e-10 * xo.norm_l2());
    }

    #[test]
    fn unstable_matrix_rejected() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 });
        let q = Mat::<f64>::identity(2, 2);
        assert!(matches!(solve_lyapunov(&a, &q), Err(Error::Unstable { .. })));
    }

    #[test]
    fn sylvester_with_rectangular_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_stable(70, &mut rng);
        let b = random_stable(55, &mut rng);
        let sa = RealSchur::new(&a).unwrap();
        let sb = RealSchur::new(&b).unwrap();
        let c = Mat::from_fn(70, 55, |_, _| rng.gen_range(-1.0..1.0));
        let mut y = c.clone();
        solve_quasi_triangular_sylvester(sa.t.as_ref(), sb.t.as_ref(), y.as_mut()).unwrap();
        let r = &sa.t * &y + &y * &sb.t - &c;
        assert!(r.norm_l2() < 1e-11 * c.norm_l2());
    }
}
