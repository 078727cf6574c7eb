//! Internal model based robust output regulators.

mod dual;
mod low_gain;
mod registry;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lti::StateSpace;
use crate::plant::dense_to_csr;
use crate::sparse::CsrMatrix;

pub use dual::{
    synthesize_control_gain, synthesize_dual_observer, ControlGain, DualObserverDesign, DualObserverParams,
};
pub use low_gain::{low_gain_margin_sweep, synthesize_low_gain};
pub use registry::{ControllerDesign, ControllerRegistry, DesignContext};

/// Copy of the exosystem: `G1 = diag(J_k)` with
/// `J_k = [[0, w_k I_p], [-w_k I_p, 0]]` and `K1 = [I_p, 0, I_p, 0, ...]`.
#[derive(Clone, Debug)]
pub struct InternalModel {
    pub frequencies: Vec<f64>,
    pub p: usize,
    pub g1: Mat<f64>,
    pub k1: Mat<f64>,
}

pub fn build_internal_model(frequencies: &[f64], p: usize) -> Result<InternalModel> {
    if p == 0 || frequencies.is_empty() {
        return Err(Error::invalid("internal model needs p >= 1 and at least one frequency"));
    }
    for (i, &w) in frequencies.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("frequency {w} must be positive")));
        }
        if frequencies[..i].iter().any(|&v| v == w) {
            return Err(Error::invalid(format!("repeated frequency {w}")));
        }
    }
    let q = frequencies.len();
    let dim = 2 * p * q;
    let mut g1 = Mat::zeros(dim, dim);
    let mut k1 = Mat::zeros(p, dim);
    for (k, &w) in frequencies.iter().enumerate() {
        let o = 2 * p * k;
        for i in 0..p {
            g1[(o + i, o + p + i)] = w;
            g1[(o + p + i, o + i)] = -w;
            k1[(i, o + i)] = 1.0;
        }
    }
    Ok(InternalModel {
        frequencies: frequencies.to_vec(),
        p,
        g1,
        k1,
    })
}

impl InternalModel {
    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }

    /// Rank of the observability matrix of `(K1, G1)`.
    pub fn observability_rank(&self) -> usize {
        let n = self.dim();
        let mut rows = Mat::zeros(n * self.p, n);
        let mut block = self.k1.clone();
        for k in 0..n {
            for i in 0..self.p {
                for j in 0..n {
                    rows[(k * self.p + i, j)] = block[(i, j)];
                }
            }
            block = &block * &self.g1;
        }
        let sv = rows.singular_values().unwrap_or_default();
        let tol = sv.first().copied().unwrap_or(0.0) * 1e-10;
        sv.iter().filter(|&&s| s > tol).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    DualFull,
    DualReduced,
    LowGain,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::DualFull, ControllerKind::DualReduced, ControllerKind::LowGain];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::DualFull => "dual-full",
            ControllerKind::DualReduced => "dual-reduced",
            ControllerKind::LowGain => "low-gain",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown controller `{s}`")))
    }
}

/// `z' = G1 z + G2 e`, `u = K z`.
#[derive(Clone, Debug)]
pub struct ControllerRealization {
    pub kind: ControllerKind,
    pub g1: Mat<f64>,
    pub g2: Mat<f64>,
    pub k: Mat<f64>,
    /// Free-form design parameters kept for reports and exports.
    pub params: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ControllerMeta {
    kind: ControllerKind,
    dim: usize,
    inputs: usize,
    outputs: usize,
    params: serde_json::Value,
}

impl ControllerRealization {
    pub fn new(kind: ControllerKind, g1: Mat<f64>, g2: Mat<f64>, k: Mat<f64>, params: serde_json::Value) -> Result<Self> {
        let n = g1.nrows();
        check_dim("controller G1 (square)", n, g1.ncols())?;
        check_dim("controller G2 rows", n, g2.nrows())?;
        check_dim("controller K cols", n, k.ncols())?;
        Ok(ControllerRealization { kind, g1, g2, k, params })
    }

    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }

    /// Number of error inputs.
    pub fn inputs(&self) -> usize {
        self.g2.ncols()
    }

    /// Number of control outputs.
    pub fn outputs(&self) -> usize {
        self.k.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        self.g1
            .eigenvalues()
            .map_err(|e| Error::singular(format!("controller eigenvalues: {e:?}")))
    }

    /// Largest distance from any of `±i w_k` to the controller spectrum.
    pub fn internal_model_defect(&self, frequencies: &[f64]) -> Result<f64> {
        let eig = self.eigenvalues()?;
        let mut worst = 0.0f64;
        for &w in frequencies {
            for target in [c64::new(0.0, w), c64::new(0.0, -w)] {
                let d = eig.iter().map(|l| (*l - target).norm()).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        Ok(worst)
    }

    pub fn as_state_space(&self) -> Result<StateSpace> {
        StateSpace::strictly_proper(self.g1.clone(), self.g2.clone(), self.k.clone())
    }

    /// Writes `g1.coo`, `g2.coo`, `k.coo` and `controller.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in [("g1.coo", &self.g1), ("g2.coo", &self.g2), ("k.coo", &self.k)] {
            dense_to_csr(m).write_coo(BufWriter::new(File::create(dir.join(name))?))?;
        }
        let meta = ControllerMeta {
            kind: self.kind,
            dim: self.dim(),
            inputs: self.inputs(),
            outputs: self.outputs(),
            params: self.params.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("controller.json"))?), &meta)?;
        Ok(())
    }

    pub fn import(dir: &Path) -> Result<Self> {
        let meta: ControllerMeta = serde_json::from_reader(BufReader::new(File::open(dir.join("controller.json"))?))?;
        let read = |name: &str, r: usize, c: usize| -> Result<Mat<f64>> {
            Ok(CsrMatrix::read_coo(BufReader::new(File::open(dir.join(name))?), r, c)?.to_dense())
        };
        let n = meta.dim;
        Self::new(
            meta.kind,
            read("g1.coo", n, n)?,
            read("g2.coo", n, meta.inputs)?,
            read("k.coo", meta.outputs, n)?,
            meta.params,
        )
    }
}

/// Dense closed loop `[[A, B K], [G2 C, G1]]` of a standard-form plant without
/// feedthrough and a controller.
pub fn closed_loop_matrix(plant: &StateSpace, ctrl: &ControllerRealization) -> Result<Mat<f64>> {
    check_dim("controller inputs vs plant outputs", plant.outputs(), ctrl.inputs())?;
    check_dim("controller outputs vs plant inputs", plant.inputs(), ctrl.outputs())?;
    let (n, nc) = (plant.order(), ctrl.dim());
    let bk = &plant.b * &ctrl.k;
    let gc = &ctrl.g2 * &plant.c;
    Ok(Mat::from_fn(n + nc, n + nc, |i, j| match (i < n, j < n) {
        (true, true) => plant.a[(i, j)],
        (true, false) => bk[(i, j - n)],
        (false, true) => gc[(i - n, j)],
        (false, false) => ctrl.g1[(i - n, j - n)],
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_model_dimensions_and_spectrum() {
        let im = build_internal_model(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(im.dim(), 6);
        let mut eig: Vec<f64> = im.g1.eigenvalues().unwrap().iter().map(|l| {
            assert!(l.re.abs() < 1e-14);
            l.im
        }).collect();
        eig.sort_by(f64::total_cmp);
        for (e, x) in eig.iter().zip([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]) {
            assert!((e - x).abs() < 1e-13);
        }
        assert_eq!(im.observability_rank(), 6);
    }

    #[test]
    fn single_frequency_blocks() {
        let im = build_internal_model(&[2.0], 1).unwrap();
        assert_eq!(im.g1, Mat::from_fn(2, 2, |i, j| [[0.0, 2.0], [-2.0, 0.0]][i][j]));
        assert_eq!(im.k1, Mat::from_fn(1, 2, |_, j| [1.0, 0.0][j]));
    }

    #[test]
    fn bad_frequencies_rejected() {
        assert!(build_internal_model(&[1.0, 1.0], 1).is_err());
        assert!(build_internal_model(&[-1.0], 1).is_err());
        assert!(build_internal_model(&[], 1).is_err());
    }

    #[test]
    fn kind_parsing() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("lqg".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn export_import_roundtrip() {
        let im = build_internal_model(&[1.0, 2.0], 1).unwrap();
        let c = ControllerRealization::new(
            ControllerKind::LowGain,
            im.g1.clone(),
            Mat::from_fn(4, 1, |i, _| -(i as f64) / 3.0),
            Mat::from_fn(1, 4, |_, j| 0.1 * j as f64 + 1e-17),
            serde_json::json!({"epsilon": 0.08}),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.export(dir.path()).unwrap();
        let d = ControllerRealization::import(dir.path()).unwrap();
        assert_eq!(d.kind, c.kind);
        assert_eq!(d.g1, c.g1);
        assert_eq!(d.g2, c.g2);
        assert_eq!(d.k, c.k);
        assert_eq!(d.params, c.params);
    }
}
