use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use super::{closed_loop_matrix, ControllerKind, ControllerRealization, InternalModel};
use crate::error::{check_dim, Error, Result};
use crate::lti::{abscissa, StateSpace};

fn complex_inverse(p: &Mat<c64>) -> Result<Mat<c64>> {
    let n = p.nrows();
    check_dim("transfer value (square)", n, p.ncols())?;
    let sv = p
        .singular_values()
        .map_err(|e| Error::singular(format!("SVD of transfer value failed: {e:?}")))?;
    let (hi, lo) = (sv[0], sv[n - 1]);
    if !(lo > 1e-14 * hi) || hi == 0.0 {
        return Err(Error::singular("plant transfer value is singular at a regulated frequency (transmission zero)"));
    }
    Ok(p.partial_piv_lu().solve(Mat::<c64>::identity(n, n)))
}

/// Minimal internal model controller `G1' = G1`, `G2'` with blocks
/// `[-I_p; 0]` and `K = eps [Re P(i w_k)^-1, Im P(i w_k)^-1]_k`.
pub fn synthesize_low_gain(transfer_values: &[Mat<c64>], im: &InternalModel, epsilon: f64) -> Result<ControllerRealization> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("low-gain epsilon must be positive, got {epsilon}")));
    }
    let q = im.frequencies.len();
    check_dim("transfer values per frequency", q, transfer_values.len())?;
    let p = im.p;
    let m = transfer_values[0].ncols();
    let dim = im.dim();
    let mut g2 = Mat::zeros(dim, p);
    let mut k = Mat::zeros(m, dim);
    for (blk, pv) in transfer_values.iter().enumerate() {
        check_dim("transfer value rows", p, pv.nrows())?;
        let inv = complex_inverse(pv)?;
        let o = 2 * p * blk;
        for i in 0..p {
            g2[(o + i, i)] = -1.0;
        }
        for i in 0..m {
            for j in 0..p {
                k[(i, o + j)] = epsilon * inv[(i, j)].re;
                k[(i, o + p + j)] = epsilon * inv[(i, j)].im;
            }
        }
    }
    ControllerRealization::new(
        ControllerKind::LowGain,
        im.g1.clone(),
        g2,
        k,
        serde_json::json!({ "epsilon": epsilon }),
    )
}

/// Closed-loop spectral abscissa with a dense plant for each `eps` of the grid.
pub fn low_gain_margin_sweep(
    plant: &StateSpace,
    transfer_values: &[Mat<c64>],
    im: &InternalModel,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&eps| {
            let ctrl = synthesize_low_gain(transfer_values, im, eps)?;
            Ok((eps, abscissa(&closed_loop_matrix(plant, &ctrl)?)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::build_internal_model;
    use crate::lti::freq::frequency_response;

    #[test]
    fn unit_plant_gain() {
        let im = build_internal_model(&[1.0, 2.0, 3.0], 1).unwrap();
        let ones = vec![Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0)); 3];
        let c = synthesize_low_gain(&ones, &im, 1.0).unwrap();
        assert_eq!(c.dim(), 6);
        for blk in 0..3 {
            assert_eq!(c.k[(0, 2 * blk)], 1.0);
            assert_eq!(c.k[(0, 2 * blk + 1)], 0.0);
            assert_eq!(c.g2[(2 * blk, 0)], -1.0);
            assert_eq!(c.g2[(2 * blk + 1, 0)], 0.0);
        }
        assert_eq!(c.g1, im.g1);
    }

    #[test]
    fn transmission_zero_rejected() {
        let im = build_internal_model(&[1.0], 1).unwrap();
        let zero = vec![Mat::from_fn(1, 1, |_, _| c64::new(0.0, 0.0))];
        assert!(matches!(synthesize_low_gain(&zero, &im, 0.1), Err(Error::Singular(_))));
        let one = vec![Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0))];
        assert!(synthesize_low_gain(&one, &im, 0.0).is_err());
    }

    #[test]
    fn small_gains_stabilize_stable_plant() {
        // first order lag with some phase at the regulated frequencies
        let n = 3;
        let a = Mat::from_fn(n, n, |i, j| if i == j { -(1.0 + i as f64) } else if j == i + 1 { 0.5 } else { 0.0 });
        let plant = StateSpace::strictly_proper(a, Mat::from_fn(n, 1, |_, _| 1.0), Mat::from_fn(1, n, |_, _| 1.0)).unwrap();
        let im = build_internal_model(&[1.0, 2.0], 1).unwrap();
        let pv: Vec<_> = im.frequencies.iter().map(|&w| frequency_response(&plant, w).unwrap()).collect();
        let sweep = low_gain_margin_sweep(&plant, &pv, &im, &[0.01, 0.02, 0.05, 0.1]).unwrap();
        for (eps, a) in &sweep {
            assert!(*a < 0.0, "eps {eps}: abscissa {a}");
        }
        // first-order estimate: decay rate about eps / 2 for small eps
        assert!((sweep[0].1 + 0.005).abs() < 0.002, "{sweep:?}");
    }
}
