//! Continuous-time algebraic Riccati equations by Newton-Kleinman iteration.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};
use log::{debug, info};

use super::lyapunov::{solve_lyapunov_with_schur, LyapunovKind};
use super::schur::RealSchur;
use super::{abscissa, symmetric_part};
use crate::error::{check_dim, Error, Result};

/// Stabilizing solution of a Riccati equation.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub x: Mat<f64>,
    /// `||Ric(X)||_F / ||X||_F`.
    pub residual_norm: f64,
    /// Spectral abscissa of the (unshifted) closed loop.
    pub closed_loop_decay: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct RiccatiOptions {
    /// Iteration stops once the relative residual drops below this.
    pub target: f64,
    /// Largest relative residual accepted when the iteration stagnates.
    pub accept: f64,
    pub max_iter: usize,
    pub line_search: bool,
    /// Eigenvalues of the shifted matrix with real part above `-delta` are
    /// moved by the initial gain.
    pub init_delta: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions {
            target: 1e-13,
            accept: 1e-9,
            max_iter: 60,
            line_search: true,
            init_delta: 0.05,
        }
    }
}

fn shifted(a: &Mat<f64>, alpha: f64) -> Mat<f64> {
    let n = a.nrows();
    a + Mat::<f64>::identity(n, n) * alpha
}

fn check_inputs(a: &Mat<f64>, b: &Mat<f64>, r: &Mat<f64>, q: &Mat<f64>) -> Result<()> {
    let n = a.nrows();
    check_dim("Riccati A (square)", n, a.ncols())?;
    check_dim("Riccati B rows", n, b.nrows())?;
    check_dim("Riccati R rows", b.ncols(), r.nrows())?;
    check_dim("Riccati R cols", b.ncols(), r.ncols())?;
    check_dim("Riccati Q rows", n, q.nrows())?;
    check_dim("Riccati Q cols", n, q.ncols())?;
    Ok(())
}

fn inverse_spd(r: &Mat<f64>) -> Result<Mat<f64>> {
    let m = r.nrows();
    let llt = r
        .llt(Side::Lower)
        .map_err(|_| Error::invalid("Riccati weight R is not positive definite"))?;
    Ok(llt.solve(Mat::<f64>::identity(m, m)))
}

/// `A^T X + X A - X G X + Q`.
fn riccati_residual(a: &Mat<f64>, g: &Mat<f64>, q: &Mat<f64>, x: &Mat<f64>) -> Mat<f64> {
    let xa = x * a;
    let xg = x * g;
    xa.transpose() + &xa - &xg * x + q
}

/// Gain `K` with `A - B K` stable. Only the eigenvalues of `A` with real part
/// above `-delta` are moved; they are reflected across the imaginary axis
/// (after an extra shift by `2 delta`) on their left-invariant subspace.
pub fn stabilizing_gain(a: &Mat<f64>, b: &Mat<f64>, r_inv: &Mat<f64>, delta: f64) -> Result<Mat<f64>> {
    let n = a.nrows();
    let eig = a
        .transpose()
        .eigen()
        .map_err(|e| Error::singular(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        let lam = s[k];
        if lam.re < -delta {
            continue;
        }
        let is_real = lam.im.abs() <= 1e-12 * lam.norm().max(1.0);
        if is_real {
            cols.push((0..n).map(|i| u[(i, k)].re).collect());
        } else if lam.im > 0.0 {
            cols.push((0..n).map(|i| u[(i, k)].re).collect());
            cols.push((0..n).map(|i| u[(i, k)].im).collect());
        }
    }
    let m = b.ncols();
    if cols.is_empty() {
        return Ok(Mat::zeros(m, n));
    }
    let k = cols.len();
    debug!("stabilizing initializer moves {k} eigenvalues");
    let v_raw = Mat::from_fn(n, k, |i, j| cols[j][i]);
    let v = v_raw.qr().compute_thin_Q();
    // A^T V = V M on the invariant subspace, so V^T A = M^T V^T
    let m_t = (v.transpose() * a.transpose() * &v).transpose().to_owned();
    let gamma = 2.0 * delta;
    let a_hat = shifted(&m_t, gamma);
    let b_r = v.transpose() * b;
    // (-A_hat) Y + Y (-A_hat)^T + B_r R^-1 B_r^T = 0
    let schur = RealSchur::new(&(-&a_hat))?;
    let rhs = symmetric_part(&(&b_r * r_inv * b_r.transpose()));
    let y = solve_lyapunov_with_schur(&schur, &rhs, LyapunovKind::Controllability)
        .map_err(|e| Error::singular(format!("initializer Lyapunov solve: {e}")))?;
    let y_inv = y
        .llt(Side::Lower)
        .map_err(|_| Error::singular("unstable modes are not controllable (initializer Gramian singular)"))?
        .solve(Mat::<f64>::identity(k, k));
    let k_u = r_inv * b_r.transpose() * y_inv;
    Ok(k_u * v.transpose())
}

/// Minimizer over `t in [0, 2]` of `||(1 - t) R - t^2 V||_F^2`.
fn line_search_step(r: &Mat<f64>, v: &Mat<f64>) -> f64 {
    let alpha = r.squared_norm_l2();
    let gamma = v.squared_norm_l2();
    let beta: f64 = (0..r.ncols())
        .map(|j| r.col(j).iter().zip(v.col(j).iter()).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    let f = |t: f64| alpha * (1.0 - t).powi(2) - 2.0 * beta * (1.0 - t) * t * t + gamma * t.powi(4);
    let mut best = (1.0, f(1.0));
    for i in 0..=2000 {
        let t = i as f64 * 1e-3;
        let val = f(t);
        if val < best.1 {
            best = (t, val);
        }
    }
    best.0
}

/// Stabilizing solution of
/// `(A + alpha I)^T X + X (A + alpha I) - X B R^-1 B^T X + Q = 0`.
pub fn solve_riccati_control(
    a: &Mat<f64>,
    b: &Mat<f64>,
    r: &Mat<f64>,
    q: &Mat<f64>,
    alpha: f64,
    opts: &RiccatiOptions,
) -> Result<RiccatiSolution> {
    check_inputs(a, b, r, q)?;
    let n = a.nrows();
    let a_s = shifted(a, alpha);
    let r_inv = inverse_spd(r)?;
    let g = symmetric_part(&(b * &r_inv * b.transpose()));
    let q = symmetric_part(q);

    let open_abscissa = abscissa(&a_s)?;
    let mut gain = if open_abscissa < -opts.init_delta {
        Mat::zeros(b.ncols(), n)
    } else {
        debug!("shifted open loop abscissa {open_abscissa:.3e}; using eigenstructure initializer");
        stabilizing_gain(&a_s, b, &r_inv, opts.init_delta)?
    };

    let mut x_prev: Option<(Mat<f64>, Mat<f64>)> = None; // (X, Ric(X))
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for it in 1..=opts.max_iter {
        let a_k = &a_s - b * &gain;
        let schur = RealSchur::new(&a_k)?;
        if schur.abscissa() >= 0.0 {
            return Err(Error::Unstable {
                what: "Newton-Kleinman closed loop",
                abscissa: schur.abscissa(),
            });
        }
        let rhs = &q + gain.transpose() * r * &gain;
        let x_new = solve_lyapunov_with_schur(&schur, &symmetric_part(&rhs), LyapunovKind::Observability)?;
        let x = match (&x_prev, opts.line_search) {
            (Some((x_old, res_old)), true) => {
                let step = &x_new - x_old;
                let v = &step * &g * &step;
                let t = line_search_step(res_old, &v);
                x_old + step * t
            }
            _ => x_new,
        };
        let res = riccati_residual(&a_s, &g, &q, &x);
        let rel = res.norm_l2() / x.norm_l2().max(f64::MIN_POSITIVE);
        debug!("Newton-Kleinman iteration {it}: relative residual {rel:.3e}");
        gain = &r_inv * b.transpose() * &x;
        if rel <= opts.target || (rel <= opts.accept && stall >= 2) {
            return finish(a, b, &r_inv, x, rel, it);
        }
        if rel < 0.5 * best {
            best = rel;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= 4 {
            if rel <= opts.accept {
                return finish(a, b, &r_inv, x, rel, it);
            }
            break;
        }
        x_prev = Some((x, res));
    }
    Err(Error::NotConverged {
        what: "Newton-Kleinman Riccati iteration",
        iterations: opts.max_iter,
        residual: best,
    })
}

fn finish(
    a: &Mat<f64>,
    b: &Mat<f64>,
    r_inv: &Mat<f64>,
    x: Mat<f64>,
    rel: f64,
    iterations: usize,
) -> Result<RiccatiSolution> {
    let closed = a - b * r_inv * b.transpose() * &x;
    let decay = abscissa(&closed)?;
    info!("Riccati solved in {iterations} iterations (residual {rel:.2e}, closed-loop abscissa {decay:.4e})");
    Ok(RiccatiSolution {
        x,
        residual_norm: rel,
        closed_loop_decay: decay,
        iterations,
    })
}

/// Stabilizing solution of the filter equation
/// `(A + alpha I) P + P (A + alpha I)^T - P C^T R^-1 C P + Q = 0`, obtained as
/// the control equation of the transposed data.
pub fn solve_riccati_filter(
    a: &Mat<f64>,
    c: &Mat<f64>,
    r: &Mat<f64>,
    q: &Mat<f64>,
    alpha: f64,
    opts: &RiccatiOptions,
) -> Result<RiccatiSolution> {
    solve_riccati_control(&a.transpose().to_owned(), &c.transpose().to_owned(), r, q, alpha, opts)
}

/// Reference solution from the stable invariant subspace of the Hamiltonian
/// matrix. Dense eigenvectors are used, so this is only suitable for small
/// well-conditioned problems.
pub fn solve_riccati_hamiltonian(
    a: &Mat<f64>,
    b: &Mat<f64>,
    r: &Mat<f64>,
    q: &Mat<f64>,
    alpha: f64,
) -> Result<Mat<f64>> {
    check_inputs(a, b, r, q)?;
    let n = a.nrows();
    let a_s = shifted(a, alpha);
    let g = b * inverse_spd(r)? * b.transpose();
    let h = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => a_s[(i, j)],
        (true, false) => -g[(i, j - n)],
        (false, true) => -q[(i - n, j)],
        (false, false) => -a_s[(j - n, i - n)],
    });
    let eig = h
        .eigen()
        .map_err(|e| Error::singular(format!("Hamiltonian eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let stable: Vec<usize> = (0..2 * n).filter(|&k| s[k].re < 0.0).collect();
    if stable.len() != n {
        return Err(Error::singular(format!(
            "Hamiltonian has {} stable eigenvalues, expected {n}",
            stable.len()
        )));
    }
    let u = eig.U();
    let u1 = Mat::from_fn(n, n, |i, j| u[(i, stable[j])]);
    let u2 = Mat::from_fn(n, n, |i, j| u[(n + i, stable[j])]);
    // X = U2 U1^-1  <=>  U1^T X^T = U2^T
    let xt: Mat<c64> = u1.transpose().partial_piv_lu().solve(u2.transpose());
    let x = Mat::from_fn(n, n, |i, j| xt[(j, i)].re);
    Ok(symmetric_part(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat1(v: f64) -> Mat<f64> {
        Mat::from_fn(1, 1, |_, _| v)
    }

    #[test]
    fn scalar_closed_form() {
        let s = solve_riccati_control(&mat1(0.0), &mat1(1.0), &mat1(1.0), &mat1(1.0), 0.0, &Default::default())
            .unwrap();
        assert!((s.x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.closed_loop_decay + 1.0).abs() < 1e-12);
        let f = solve_riccati_filter(&mat1(0.0), &mat1(1.0), &mat1(1.0), &mat1(1.0), 0.0, &Default::default())
            .unwrap();
        assert!((f.x[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_reduces_to_lyapunov() {
        let a = Mat::from_fn(2, 2, |i, j| [[-1.0, 0.5], [0.0, -2.0]][i][j]);
        let b = Mat::zeros(2, 1);
        let q = Mat::<f64>::identity(2, 2);
        let s = solve_riccati_control(&a, &b, &mat1(1.0), &q, 0.0, &Default::default()).unwrap();
        let l = crate::lti::lyapunov::solve_lyapunov(&a.transpose().to_owned(), &q).unwrap();
        assert!((&s.x - &l).norm_l2() < 1e-12);
    }

    #[test]
    fn unstable_plant_needs_initializer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = Mat::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let r = Mat::<f64>::identity(2, 2);
        let q = Mat::<f64>::identity(n, n);
        let alpha = 0.7;
        let s = solve_riccati_control(&a, &b, &r, &q, alpha, &Default::default()).unwrap();
        assert!(s.residual_norm <= 1e-9);
        assert!(s.closed_loop_decay < -alpha + 1e-10);
        let oracle = solve_riccati_hamiltonian(&a, &b, &r, &q, alpha).unwrap();
        assert!((&s.x - &oracle).norm_l2() <= 1e-8 * oracle.norm_l2());
    }

    #[test]
    fn filter_is_dual_of_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let c = Mat::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
        let r = mat1(2.0);
        let q = Mat::<f64>::identity(n, n);
        let f = solve_riccati_filter(&a, &c, &r, &q, 0.3, &Default::default()).unwrap();
        let ct = solve_riccati_control(&a.transpose().to_owned(), &c.transpose().to_owned(), &r, &q, 0.3, &Default::default())
            .unwrap();
        assert!((&f.x - &ct.x).norm_l2() <= 1e-14 * ct.x.norm_l2());
        let closed = &a - &f.x * c.transpose() * c.as_ref() * 0.5;
        assert!(abscissa(&closed).unwrap() < -0.3);
    }

    #[test]
    fn stabilizing_gain_moves_only_unstable_modes() {
        let a = Mat::from_fn(3, 3, |i, j| [[1.0, 1.0, 0.0], [0.0, -3.0, 0.0], [0.0, 0.0, 0.5]][i][j]);
        let b = Mat::from_fn(3, 1, |_, _| 1.0);
        let k = stabilizing_gain(&a, &b, &mat1(1.0), 0.05).unwrap();
        let eig = (&a - &b * &k).eigenvalues().unwrap();
        assert!(eig.iter().all(|l| l.re < 0.0));
        assert!(eig.iter().any(|l| (l.re + 3.0).abs() < 1e-10));
    }
}
