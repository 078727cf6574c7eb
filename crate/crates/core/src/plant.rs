//! Semi-discrete temperature model `M x' = A x + B u + B_d w_d`, `y = C x`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{c64, Mat, Par, Side};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fem::{
    assemble_advection, assemble_load_boundary, assemble_load_domain, assemble_mass, assemble_stiffness, DofMap,
    ShapeSpec, Space,
};
use crate::lti::StateSpace;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{CsrMatrix, SparseLu, TripletBuilder};

/// Spatial profiles of actuator, inlet disturbance and sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantShapes {
    pub b: ShapeSpec,
    pub b_d: ShapeSpec,
    pub c: ShapeSpec,
}

impl PlantShapes {
    /// Room actuator, inlet indicator disturbance and the chosen sensor.
    pub fn room(sensor: ShapeSpec) -> Self {
        PlantShapes {
            b: ShapeSpec::room_actuator(),
            b_d: ShapeSpec::boundary_indicator(crate::mesh::Geometry::room().inlet),
            c: sensor,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedPlant {
    pub mass: CsrMatrix,
    /// `-(alpha K + N)` on the free DOFs.
    pub a: CsrMatrix,
    pub b: Mat<f64>,
    pub b_d: Mat<f64>,
    pub c: Mat<f64>,
    pub d: Mat<f64>,
    pub d_d: Mat<f64>,
    pub dofs: DofMap,
    pub alpha: f64,
    pub re: f64,
    pub pr: f64,
    pub shapes: PlantShapes,
}

/// Metadata written next to an exported plant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantMeta {
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub disturbances: usize,
    pub re: f64,
    pub pr: f64,
    pub alpha: f64,
    pub shapes: PlantShapes,
    pub n_full: usize,
    pub free: Vec<usize>,
}

fn column(v: Vec<f64>) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Assembles the plant with walls as the only Dirichlet boundary.
pub fn build_plant(mesh: &Mesh, velocity: &[[f64; 2]], re: f64, pr: f64, shapes: &PlantShapes) -> Result<GeneralizedPlant> {
    if !(re > 0.0 && pr > 0.0) {
        return Err(Error::invalid(format!("Re and Pr must be positive (got {re}, {pr})")));
    }
    let alpha = 1.0 / (re * pr);
    let mut plant = build_plant_with(mesh, velocity, alpha, &[BoundaryTag::Wall], shapes)?;
    plant.re = re;
    plant.pr = pr;
    Ok(plant)
}

/// Assembles the plant with diffusion coefficient `alpha` and the given
/// Dirichlet tags.
pub fn build_plant_with(
    mesh: &Mesh,
    velocity: &[[f64; 2]],
    alpha: f64,
    dirichlet: &[BoundaryTag],
    shapes: &PlantShapes,
) -> Result<GeneralizedPlant> {
    check_dim("plant velocity field", mesh.num_nodes(), velocity.len())?;
    if shapes.b.is_boundary() || shapes.c.is_boundary() {
        return Err(Error::invalid("actuator and sensor shapes must be domain shapes"));
    }
    if !shapes.b_d.is_boundary() {
        return Err(Error::invalid("disturbance shape must be a boundary shape"));
    }
    let dofs = DofMap::from_tags(mesh, dirichlet)?;
    let mass = dofs.reduce_matrix(&assemble_mass(mesh, Space::P2))?.with_symmetric_flag(true);
    let k = assemble_stiffness(mesh, Space::P2);
    let n = assemble_advection(mesh, velocity)?;
    let a = dofs.reduce_matrix(&k.linear_combination(-alpha, &n, -1.0)?)?;
    let b = column(dofs.reduce_vector(&assemble_load_domain(mesh, &shapes.b)?)?);
    let c = column(dofs.reduce_vector(&assemble_load_domain(mesh, &shapes.c)?)?).transpose().to_owned();
    let bd_full = assemble_load_boundary(mesh, BoundaryTag::Inlet, &shapes.b_d)?;
    let b_d = column(dofs.reduce_vector(&bd_full)?.into_iter().map(|v| alpha * v).collect());
    debug!("plant assembled: {} states, alpha = {alpha}", dofs.n_free());
    Ok(GeneralizedPlant {
        mass,
        a,
        b,
        b_d,
        c,
        d: Mat::zeros(1, 1),
        d_d: Mat::zeros(1, 1),
        dofs,
        alpha,
        re: f64::NAN,
        pr: f64::NAN,
        shapes: *shapes,
    })
}

impl GeneralizedPlant {
    pub fn states(&self) -> usize {
        self.mass.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn disturbances(&self) -> usize {
        self.b_d.ncols()
    }

    /// Dense lower Cholesky factor of `M`.
    pub fn mass_cholesky(&self) -> Result<Mat<f64>> {
        let m = self.mass.to_dense();
        let llt = m
            .llt(Side::Lower)
            .map_err(|_| Error::Consistency("mass matrix is not positive definite".into()))?;
        Ok(llt.L().to_owned())
    }

    /// `(L^-1 A L^-T, L^-1 B, C L^-T, D)` with `M = L L^T`.
    pub fn to_standard_form(&self) -> Result<StateSpace> {
        let l = self.mass_cholesky()?;
        let inv_l = |mut x: Mat<f64>| {
            solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), Par::Seq);
            x
        };
        let la = inv_l(self.a.to_dense());
        let a_std = inv_l(la.transpose().to_owned()).transpose().to_owned();
        let b_std = inv_l(self.b.clone());
        let c_std = inv_l(self.c.transpose().to_owned()).transpose().to_owned();
        StateSpace::new(a_std, b_std, c_std, self.d.clone())
    }

    /// `C (s M - A)^-1 B + D` via a real sparse block solve.
    pub fn transfer_value(&self, s: c64) -> Result<Mat<c64>> {
        let n = self.states();
        let mut tb = TripletBuilder::with_capacity(2 * n, 2 * n, 4 * (self.mass.nnz() + self.a.nnz()));
        for (i, j, v) in self.mass.iter() {
            tb.add(i, j, s.re * v);
            tb.add(n + i, n + j, s.re * v);
            tb.add(i, n + j, -s.im * v);
            tb.add(n + i, j, s.im * v);
        }
        for (i, j, v) in self.a.iter() {
            tb.add(i, j, -v);
            tb.add(n + i, n + j, -v);
        }
        let lu = SparseLu::factor(&tb.build())
            .map_err(|e| Error::singular(format!("shift {s:?} is (close to) an eigenvalue: {e}")))?;
        let (p, m) = (self.outputs(), self.inputs());
        let mut out = Mat::<c64>::zeros(p, m);
        for j in 0..m {
            let mut rhs = vec![0.0; 2 * n];
            for i in 0..n {
                rhs[i] = self.b[(i, j)];
            }
            let x = lu.solve(&rhs)?;
            for i in 0..p {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..n {
                    re += self.c[(i, k)] * x[k];
                    im += self.c[(i, k)] * x[n + k];
                }
                out[(i, j)] = c64::new(re + self.d[(i, j)], im);
            }
        }
        Ok(out)
    }

    /// The `k` eigenvalues of `(A, M)` with largest real part, sorted by
    /// decreasing real part. Dense for up to 2000 states, shift-invert Arnoldi
    /// beyond.
    pub fn rightmost_spectrum(&self, k: usize) -> Result<Vec<c64>> {
        if k == 0 {
            return Err(Error::invalid("requested zero eigenvalues"));
        }
        let mut eig = if self.states() <= 2000 {
            let sys = self.to_standard_form()?;
            sys.a
                .eigenvalues()
                .map_err(|e| Error::singular(format!("eigenvalue computation failed: {e:?}")))?
        } else {
            shift_invert_arnoldi(&self.a, &self.mass, k)?
        };
        eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        eig.truncate(k);
        Ok(eig)
    }

    pub fn meta(&self) -> PlantMeta {
        PlantMeta {
            states: self.states(),
            inputs: self.inputs(),
            outputs: self.outputs(),
            disturbances: self.disturbances(),
            re: self.re,
            pr: self.pr,
            alpha: self.alpha,
            shapes: self.shapes,
            n_full: self.dofs.n_full(),
            free: self.dofs.free().to_vec(),
        }
    }

    /// Writes `mass.coo`, `a.coo`, `b.coo`, `bd.coo`, `c.coo` and `plant.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.mass.write_coo(BufWriter::new(File::create(dir.join("mass.coo"))?))?;
        self.a.write_coo(BufWriter::new(File::create(dir.join("a.coo"))?))?;
        for (name, m) in [("b.coo", &self.b), ("bd.coo", &self.b_d), ("c.coo", &self.c)] {
            dense_to_csr(m).write_coo(BufWriter::new(File::create(dir.join(name))?))?;
        }
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("plant.json"))?), &self.meta())?;
        Ok(())
    }

    pub fn import(dir: &Path) -> Result<Self> {
        let meta: PlantMeta = serde_json::from_reader(BufReader::new(File::open(dir.join("plant.json"))?))?;
        let n = meta.states;
        let read = |name: &str, r: usize, c: usize| -> Result<CsrMatrix> {
            CsrMatrix::read_coo(BufReader::new(File::open(dir.join(name))?), r, c)
        };
        let mut mask = vec![true; meta.n_full];
        for &i in &meta.free {
            *mask.get_mut(i).ok_or_else(|| Error::Artifact {
                path: dir.join("plant.json").display().to_string(),
                reason: format!("free index {i} out of range"),
            })? = false;
        }
        let dofs = DofMap::from_mask(&mask)?;
        check_dim("imported plant states", n, dofs.n_free())?;
        Ok(GeneralizedPlant {
            mass: read("mass.coo", n, n)?.with_symmetric_flag(true),
            a: read("a.coo", n, n)?,
            b: read("b.coo", n, meta.inputs)?.to_dense(),
            b_d: read("bd.coo", n, meta.disturbances)?.to_dense(),
            c: read("c.coo", meta.outputs, n)?.to_dense(),
            d: Mat::zeros(meta.outputs, meta.inputs),
            d_d: Mat::zeros(meta.outputs, meta.disturbances),
            dofs,
            alpha: meta.alpha,
            re: meta.re,
            pr: meta.pr,
            shapes: meta.shapes,
        })
    }
}

pub(crate) fn dense_to_csr(m: &Mat<f64>) -> CsrMatrix {
    let mut tb = TripletBuilder::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            tb.add(i, j, m[(i, j)]);
        }
    }
    tb.build()
}

/// Eigenvalues of `(A, M)` closest to the origin via Arnoldi on
/// `(A - sigma M)^-1 M`, mapped back to `sigma + 1/mu`.
fn shift_invert_arnoldi(a: &CsrMatrix, m: &CsrMatrix, k: usize) -> Result<Vec<c64>> {
    let n = a.nrows();
    let sigma = 0.0;
    let shifted = if sigma == 0.0 { a.clone() } else { a.linear_combination(1.0, m, -sigma)? };
    let lu = SparseLu::factor(&shifted)?;
    let dim = (4 * k + 40).min(n);
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut h = Mat::<f64>::zeros(dim + 1, dim);
    // deterministic start vector
    let mut start: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut ritz_prev: Vec<c64> = Vec::new();
    for restart in 0..20 {
        let nrm = start.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.clear();
        v.push(start.iter().map(|x| x / nrm).collect());
        let mut steps = dim;
        for j in 0..dim {
            let mut w = lu.solve(&m.mul_vec(&v[j]))?;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let d: f64 = vi.iter().zip(&w).map(|(x, y)| x * y).sum();
                    h[(i, j)] += d;
                    for (wk, vk) in w.iter_mut().zip(vi) {
                        *wk -= d * vk;
                    }
                }
            }
            let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            h[(j + 1, j)] = beta;
            if beta < 1e-14 {
                steps = j + 1;
                break;
            }
            v.push(w.into_iter().map(|x| x / beta).collect());
        }
        let hm = h.submatrix(0, 0, steps, steps).to_owned();
        let eig = hm
            .eigen()
            .map_err(|e| Error::singular(format!("Arnoldi Ritz problem failed: {e:?}")))?;
        let mu = eig.S().column_vector();
        let mut order: Vec<usize> = (0..steps).collect();
        // rightmost lambda = sigma + 1/mu
        let lam = |i: usize| c64::new(sigma, 0.0) + c64::new(1.0, 0.0) / mu[i];
        order.sort_by(|&x, &y| lam(y).re.total_cmp(&lam(x).re));
        let ritz: Vec<c64> = order.iter().take(k).map(|&i| lam(i)).collect();
        let converged = ritz_prev.len() == ritz.len()
            && ritz.iter().zip(&ritz_prev).all(|(x, y)| (*x - *y).norm() <= 1e-10 * x.norm().max(1.0));
        if converged || steps < dim {
            return Ok(ritz);
        }
        debug!("Arnoldi restart {restart}");
        ritz_prev = ritz;
        // restart with the real part of the leading Ritz vector combination
        let u = eig.U();
        start = vec![0.0; n];
        for &i in order.iter().take(k) {
            for (j, vj) in v.iter().take(steps).enumerate() {
                let coef = u[(j, i)].re + u[(j, i)].im;
                for (s, x) in start.iter_mut().zip(vj) {
                    *s += coef * x;
                }
            }
        }
        h = Mat::zeros(dim + 1, dim);
    }
    Err(Error::NotConverged {
        what: "shift-invert Arnoldi",
        iterations: 20,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{solve_navier_stokes, solve_stokes, InletProfile, NewtonOptions};
    use crate::lti::freq::transfer_at;
    use crate::mesh::{build_structured_mesh, Geometry};

    fn room_plant(n: usize) -> GeneralizedPlant {
        let mesh = build_structured_mesh(&Geometry::room(), n).unwrap();
        let stokes = solve_stokes(&mesh, &InletProfile::default(), 100.0).unwrap();
        let flow = solve_navier_stokes(&mesh, 100.0, &stokes, NewtonOptions::default()).unwrap();
        build_plant(&mesh, &flow.velocity, 100.0, 0.7, &PlantShapes::room(ShapeSpec::room_sensor_1())).unwrap()
    }

    #[test]
    fn operators_are_nonzero_and_alpha_matches() {
        let p = room_plant(11);
        assert!((p.alpha - 1.0 / 70.0).abs() < 1e-16);
        assert!(p.b.norm_l2() > 0.0 && p.b_d.norm_l2() > 0.0 && p.c.norm_l2() > 0.0);
        assert_eq!(p.d.norm_l2(), 0.0);
        assert_eq!(p.d_d.norm_l2(), 0.0);
        assert!(p.mass.asymmetry() < 1e-16);
    }

    #[test]
    fn standard_form_preserves_transfer_function() {
        let p = room_plant(11);
        let sys = p.to_standard_form().unwrap();
        for w in [1.0, 2.0, 3.0] {
            let g = p.transfer_value(c64::new(0.0, w)).unwrap()[(0, 0)];
            let s = transfer_at(&sys, c64::new(0.0, w)).unwrap()[(0, 0)];
            assert!((g - s).norm() <= 1e-10 * g.norm().max(1e-3), "w={w}: {g:?} {s:?}");
            let gm = p.transfer_value(c64::new(0.0, -w)).unwrap()[(0, 0)];
            assert!((gm - g.conj()).norm() <= 1e-12 * g.norm());
        }
        let far = p.transfer_value(c64::new(1e9, 0.0)).unwrap()[(0, 0)];
        assert!(far.norm() < 1e-8);
    }

    #[test]
    fn standard_eigenvalues_match_generalized_oracle() {
        let p = room_plant(11);
        let mut std_eig = p.to_standard_form().unwrap().a.eigenvalues().unwrap();
        let gen = p.a.to_dense().generalized_eigen(p.mass.to_dense()).unwrap();
        let (sa, sb) = (gen.S_a().column_vector(), gen.S_b().column_vector());
        let mut gen_eig: Vec<c64> = (0..sa.nrows()).map(|i| sa[i] / sb[i]).collect();
        let key = |x: &c64, y: &c64| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        std_eig.sort_by(key);
        gen_eig.sort_by(key);
        for (x, y) in std_eig.iter().zip(&gen_eig) {
            assert!((*x - *y).norm() <= 1e-8 * x.norm().max(1.0), "{x:?} {y:?}");
        }
    }

    #[test]
    fn identity_mass_standard_form_is_identity_map() {
        let n = 4;
        let a = CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, -(i as f64) - 1.0)).collect());
        let plant = GeneralizedPlant {
            mass: CsrMatrix::identity(n),
            a: a.clone(),
            b: Mat::from_fn(n, 1, |i, _| i as f64),
            b_d: Mat::zeros(n, 1),
            c: Mat::from_fn(1, n, |_, j| 1.0 + j as f64),
            d: Mat::zeros(1, 1),
            d_d: Mat::zeros(1, 1),
            dofs: DofMap::identity(n),
            alpha: 1.0,
            re: 1.0,
            pr: 1.0,
            shapes: PlantShapes::room(ShapeSpec::room_sensor_1()),
        };
        let s = plant.to_standard_form().unwrap();
        assert_eq!(s.a, a.to_dense());
        assert_eq!(s.b, plant.b);
        assert_eq!(s.c, plant.c);
    }

    #[test]
    fn pure_diffusion_rightmost_eigenvalue() {
        let mesh = build_structured_mesh(&Geometry::room(), 11).unwrap();
        let zero = vec![[0.0, 0.0]; mesh.num_nodes()];
        let alpha = 1.0 / 70.0;
        let tags = [BoundaryTag::Wall, BoundaryTag::Inlet, BoundaryTag::Outlet];
        let p = build_plant_with(&mesh, &zero, alpha, &tags, &PlantShapes::room(ShapeSpec::room_sensor_1())).unwrap();
        let eig = p.rightmost_spectrum(3).unwrap();
        let exact = -alpha * 2.0 * std::f64::consts::PI.powi(2);
        assert!((eig[0].re - exact).abs() <= 0.05 * exact.abs(), "{eig:?}");
        assert!(eig[0].im.abs() < 1e-10);
    }

    #[test]
    fn arnoldi_agrees_with_dense() {
        let p = room_plant(13);
        let dense = p.rightmost_spectrum(4).unwrap();
        let arn = shift_invert_arnoldi(&p.a, &p.mass, 4).unwrap();
        for (d, a) in dense.iter().zip(&arn) {
            assert!((d.re - a.re).abs() < 1e-8 && (d.im.abs() - a.im.abs()).abs() < 1e-8, "{dense:?} {arn:?}");
        }
    }

    #[test]
    fn spectrum_is_conjugate_closed_and_stable() {
        let p = room_plant(11);
        let eig = p.to_standard_form().unwrap().a.eigenvalues().unwrap();
        for l in &eig {
            assert!(l.re < 0.0);
            if l.im != 0.0 {
                assert!(eig.iter().any(|m| (*m - l.conj()).norm() < 1e-9 * l.norm()));
            }
        }
    }

    #[test]
    fn export_import_roundtrip() {
        let p = room_plant(7);
        let dir = tempfile::tempdir().unwrap();
        p.export(dir.path()).unwrap();
        let q = GeneralizedPlant::import(dir.path()).unwrap();
        assert_eq!(q.mass.to_dense(), p.mass.to_dense());
        assert_eq!(q.a.to_dense(), p.a.to_dense());
        assert_eq!(q.b, p.b);
        assert_eq!(q.c, p.c);
        assert_eq!(q.b_d, p.b_d);
        assert_eq!(q.dofs, p.dofs);
    }
}
