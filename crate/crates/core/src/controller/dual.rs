use faer::Mat;
use log::info;
use serde::{Deserialize, Serialize};

use super::{ControllerKind, ControllerRealization, InternalModel};
use crate::error::{check_dim, Error, Result};
use crate::lti::{
    balanced_truncation, solve_riccati_control, solve_riccati_filter, BalancedReduction, RiccatiOptions,
    RiccatiSolution, StateSpace,
};

/// Weights of the two Riccati equations (`Q1 = Q2 = I`, `R_i = r_i I`) and
/// the reduced observer order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualObserverParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r1: f64,
    pub r2: f64,
    pub order: usize,
}

impl DualObserverParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.order == 0 {
            return Err(Error::invalid("reduced order must be at least 1"));
        }
        Ok(())
    }
}

/// State feedback `K2 = -R1^-1 B^T Sigma` of the shifted control Riccati equation.
#[derive(Clone, Debug)]
pub struct ControlGain {
    pub k2: Mat<f64>,
    pub riccati: RiccatiSolution,
    pub alpha1: f64,
    pub r1: f64,
}

#[derive(Clone, Debug)]
pub struct DualObserverDesign {
    pub full: ControllerRealization,
    pub reduced: ControllerRealization,
    pub reduction: BalancedReduction,
    pub control: ControlGain,
    pub filter: RiccatiSolution,
}

pub fn synthesize_control_gain(plant: &StateSpace, params: &DualObserverParams, opts: &RiccatiOptions) -> Result<ControlGain> {
    params.validate()?;
    let (n, m) = (plant.order(), plant.inputs());
    let r = Mat::<f64>::identity(m, m) * params.r1;
    let q = Mat::<f64>::identity(n, n);
    let riccati = solve_riccati_control(&plant.a, &plant.b, &r, &q, params.alpha1, opts)?;
    let k2 = plant.b.transpose() * &riccati.x * (-1.0 / params.r1);
    Ok(ControlGain {
        k2,
        riccati,
        alpha1: params.alpha1,
        r1: params.r1,
    })
}

fn block2(a: &Mat<f64>, b: &Mat<f64>, c: &Mat<f64>, d: &Mat<f64>) -> Mat<f64> {
    let (r1, c1) = (a.nrows(), a.ncols());
    Mat::from_fn(r1 + c.nrows(), c1 + b.ncols(), |i, j| match (i < r1, j < c1) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - c1)],
        (false, true) => c[(i - r1, j)],
        (false, false) => d[(i - r1, j - c1)],
    })
}

/// `G1' = [[G1, G2 C_K], [0, A_K + L C_K]]`, `G2' = [G2; L]`, `K' = [K1, -K2]`.
fn wire(
    kind: ControllerKind,
    im: &InternalModel,
    g2: &Mat<f64>,
    a_k: &Mat<f64>,
    l: &Mat<f64>,
    c_k: &Mat<f64>,
    k2: &Mat<f64>,
    params: serde_json::Value,
) -> Result<ControllerRealization> {
    let nz = a_k.nrows();
    let top_right = g2 * c_k;
    let bottom_right = a_k + l * c_k;
    let g1 = block2(&im.g1, &top_right, &Mat::zeros(nz, im.dim()), &bottom_right);
    let g2f = Mat::from_fn(im.dim() + nz, g2.ncols(), |i, j| if i < im.dim() { g2[(i, j)] } else { l[(i - im.dim(), j)] });
    let k = Mat::from_fn(im.k1.nrows(), im.dim() + nz, |i, j| {
        if j < im.dim() {
            im.k1[(i, j)]
        } else {
            -k2[(i, j - im.dim())]
        }
    });
    ControllerRealization::new(kind, g1, g2f, k, params)
}

/// Dual observer based controller and its balanced-truncation reduction.
/// A precomputed control gain (which does not depend on the output map) may
/// be passed in to share it between sensor setups.
pub fn synthesize_dual_observer(
    plant: &StateSpace,
    im: &InternalModel,
    params: &DualObserverParams,
    control: Option<&ControlGain>,
    opts: &RiccatiOptions,
) -> Result<DualObserverDesign> {
    params.validate()?;
    let (n, m, p) = (plant.order(), plant.inputs(), plant.outputs());
    check_dim("plant inputs vs outputs", p, m)?;
    check_dim("internal model outputs", p, im.p)?;
    let control = match control {
        Some(c) => {
            check_dim("precomputed gain states", n, c.k2.ncols())?;
            if c.alpha1 != params.alpha1 || c.r1 != params.r1 {
                return Err(Error::invalid("precomputed control gain was designed with other weights"));
            }
            c.clone()
        }
        None => synthesize_control_gain(plant, params, opts)?,
    };
    let k2 = &control.k2;
    let nim = im.dim();

    // cascade of internal model and plant
    let bk1 = &plant.b * &im.k1;
    let a_s = block2(&im.g1, &Mat::zeros(nim, n), &bk1, &plant.a);
    let dk1 = &plant.d * &im.k1;
    let c_s = Mat::from_fn(p, nim + n, |i, j| if j < nim { dk1[(i, j)] } else { plant.c[(i, j - nim)] });
    let r2 = Mat::<f64>::identity(p, p) * params.r2;
    let filter = solve_riccati_filter(&a_s, &c_s, &r2, &Mat::<f64>::identity(nim + n, nim + n), params.alpha2, opts)?;
    let gain = &filter.x * c_s.transpose() * (-1.0 / params.r2);
    let g2 = gain.subrows(0, nim).to_owned();
    let l = gain.subrows(nim, n).to_owned();

    // stabilized plant observed through [C_K; K2]
    let a_k = &plant.a + &plant.b * k2;
    let c_k = &plant.c + &plant.d * k2;
    let outputs = Mat::from_fn(p + m, n, |i, j| if i < p { c_k[(i, j)] } else { k2[(i - p, j)] });
    let stabilized = StateSpace::strictly_proper(a_k.clone(), l.clone(), outputs)?;
    let order = params.order.min(n);
    let reduction = balanced_truncation(&stabilized, order)?;
    let red = &reduction.reduced;
    let c_kr = red.c.subrows(0, p).to_owned();
    let k2r = red.c.subrows(p, m).to_owned();

    let base = serde_json::json!({
        "alpha1": params.alpha1,
        "alpha2": params.alpha2,
        "r1": params.r1,
        "r2": params.r2,
        "design_order": n,
        "control_residual": control.riccati.residual_norm,
        "filter_residual": filter.residual_norm,
    });
    let mut full_params = base.clone();
    full_params["order"] = n.into();
    let full = wire(ControllerKind::DualFull, im, &g2, &a_k, &l, &c_k, k2, full_params)?;
    let mut red_params = base;
    red_params["order"] = red.order().into();
    red_params["error_bound"] = reduction.error_bound.into();
    let reduced = wire(ControllerKind::DualReduced, im, &g2, &red.a, &red.b, &c_kr, &k2r, red_params)?;
    info!(
        "dual observer controller: full dim {}, reduced dim {} (truncation bound {:.3e})",
        full.dim(),
        reduced.dim(),
        reduction.error_bound
    );
    Ok(DualObserverDesign {
        full,
        reduced,
        reduction,
        control,
        filter,
    })
}
