//! Steady incompressible flow with Taylor-Hood (P2 velocity / P1 pressure)
//! elements and a do-nothing outlet.

use std::io::{BufRead, Write};
use std::str::FromStr;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fem::element::{p2_gradients, p2_values, ElementGeometry};
use crate::fem::{evaluate, DofMap, TriangleRule};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{SparseLu, TripletBuilder};

/// How the printed inlet profile (supported on `0.5 < s < 0.9`) is placed on
/// the inlet segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InletRemap {
    /// `s = y + 0.4`.
    #[default]
    Shifted,
    /// Affine map of `[0.1, 0.4]` onto `[0.5, 0.9]`.
    Scaled,
    /// `s = y`: no inflow through the room inlet.
    Literal,
}

impl FromStr for InletRemap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shifted" => Ok(InletRemap::Shifted),
            "scaled" => Ok(InletRemap::Scaled),
            "literal" => Ok(InletRemap::Literal),
            other => Err(Error::Config(format!("unknown inlet remap `{other}`"))),
        }
    }
}

/// Dirichlet velocity prescribed on the inlet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InletProfile {
    Room { remap: InletRemap },
    /// `peak * 4 s (1 - s)` with `s = (y - lo) / (hi - lo)`.
    Parabolic { lo: f64, hi: f64, peak: f64 },
    Zero,
}

impl Default for InletProfile {
    fn default() -> Self {
        InletProfile::Room {
            remap: InletRemap::default(),
        }
    }
}

/// `exp(-1e-4 / ((0.5 - s)(0.9 - s))^2)` on `(0.5, 0.9)`, zero elsewhere.
pub fn room_profile(s: f64) -> f64 {
    if s <= 0.5 || s >= 0.9 {
        return 0.0;
    }
    let d = (0.5 - s) * (0.9 - s);
    (-1e-4 / (d * d)).exp()
}

impl InletProfile {
    pub fn eval(&self, y: f64) -> [f64; 2] {
        match *self {
            InletProfile::Room { remap } => {
                let s = match remap {
                    InletRemap::Shifted => y + 0.4,
                    InletRemap::Scaled => 0.5 + (y - 0.1) * 4.0 / 3.0,
                    InletRemap::Literal => y,
                };
                [room_profile(s), 0.0]
            }
            InletProfile::Parabolic { lo, hi, peak } => {
                let s = (y - lo) / (hi - lo);
                if (0.0..=1.0).contains(&s) {
                    [peak * 4.0 * s * (1.0 - s), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            InletProfile::Zero => [0.0, 0.0],
        }
    }
}

/// Converged (or initial) flow on a P2 mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    /// Velocity at every P2 node.
    pub velocity: Vec<[f64; 2]>,
    /// Pressure at every vertex (P1 numbering).
    pub pressure: Vec<f64>,
    /// Nonlinear residual norms, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

impl FlowState {
    pub fn residual_norm(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    /// Number of Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.residual_history.len().saturating_sub(1)
    }

    pub fn write_velocity_csv<W: Write>(&self, mesh: &Mesh, mut w: W) -> Result<()> {
        check_dim("velocity field", mesh.num_nodes(), self.velocity.len())?;
        writeln!(w, "x,y,vx,vy")?;
        for (p, v) in mesh.nodes().iter().zip(&self.velocity) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], v[0], v[1])?;
        }
        Ok(())
    }
}

/// Reads a velocity CSV written by [`FlowState::write_velocity_csv`] for the
/// same mesh.
pub fn read_velocity_csv<R: BufRead>(mesh: &Mesh, r: R) -> Result<Vec<[f64; 2]>> {
    let bad = |reason: String| Error::Artifact {
        path: "velocity csv".into(),
        reason,
    };
    let mut out = Vec::with_capacity(mesh.num_nodes());
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", lineno + 1)));
        }
        let k = out.len();
        let p = mesh.nodes().get(k).ok_or_else(|| bad("too many rows".into()))?;
        if (p[0] - vals[0]).abs() > 1e-12 || (p[1] - vals[1]).abs() > 1e-12 {
            return Err(bad(format!("row {k} does not match mesh node coordinates")));
        }
        out.push([vals[2], vals[3]]);
    }
    check_dim("velocity csv rows", mesh.num_nodes(), out.len())?;
    Ok(out)
}

/// Options of the steady solver.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Relative to the residual of the initial guess.
    pub tol: f64,
    /// Absolute residual below which the iterate is accepted regardless.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            abs_tol: 1e-12,
            max_iter: 25,
        }
    }
}

/// Unknowns `[vx; vy; p]` with Dirichlet velocity eliminated.
struct Layout {
    n: usize,
    nv: usize,
    map: DofMap,
}

impl Layout {
    fn new(mesh: &Mesh) -> Result<Self> {
        let n = mesh.num_nodes();
        let nv = mesh.num_vertices();
        let mut mask = vec![false; 2 * n + nv];
        for (i, tag) in mesh.node_tags().iter().enumerate() {
            if matches!(tag, Some(BoundaryTag::Wall | BoundaryTag::Inlet)) {
                mask[i] = true;
                mask[n + i] = true;
            }
        }
        Ok(Layout {
            n,
            nv,
            map: DofMap::from_mask(&mask)?,
        })
    }

    fn pack(&self, velocity: &[[f64; 2]], pressure: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; 2 * self.n + self.nv];
        for (i, v) in velocity.iter().enumerate() {
            x[i] = v[0];
            x[self.n + i] = v[1];
        }
        x[2 * self.n..].copy_from_slice(pressure);
        x
    }

    fn unpack(&self, x: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let v = (0..self.n).map(|i| [x[i], x[self.n + i]]).collect();
        (v, x[2 * self.n..].to_vec())
    }
}

/// Residual and Jacobian of the discrete steady equations
/// `(1/Re)(grad v, grad w) + ((v.grad) v, w) - (p, div w) = 0`, `-(div v, q) = 0`.
fn residual_and_jacobian(
    mesh: &Mesh,
    layout: &Layout,
    x: &[f64],
    re: f64,
    convection: bool,
    want_jacobian: bool,
) -> (Vec<f64>, Option<crate::sparse::CsrMatrix>) {
    let (n, nv) = (layout.n, layout.nv);
    let dim = 2 * n + nv;
    let nu = 1.0 / re;
    let rule = TriangleRule::degree5();
    let mut res = vec![0.0; dim];
    let mut tb = want_jacobian.then(|| TripletBuilder::with_capacity(dim, dim, 216 * mesh.triangles().len()));
    for (tri, dofs) in mesh.triangles().iter().enumerate() {
        let geo = ElementGeometry::new(mesh.vertex_coords(tri));
        let pdofs = [0, 1, 2].map(|k| 2 * n + mesh.p1_index(dofs[k]).expect("corner is a vertex"));
        let vdof = |a: usize, i: usize| a * n + dofs[i];
        let mut loc_v = [[0.0; 6]; 2];
        for a in 0..2 {
            for i in 0..6 {
                loc_v[a][i] = x[vdof(a, i)];
            }
        }
        let loc_p = pdofs.map(|d| x[d]);
        let mut r_loc = [0.0; 15];
        let mut j_loc = [[0.0; 15]; 15];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let jw = 2.0 * geo.area * w;
            let phi = p2_values(*l);
            let grad = p2_gradients(*l, &geo.grad_lambda);
            let psi = *l;
            let mut v = [0.0; 2];
            let mut gv = [[0.0; 2]; 2];
            for a in 0..2 {
                for i in 0..6 {
                    v[a] += loc_v[a][i] * phi[i];
                    gv[a][0] += loc_v[a][i] * grad[i][0];
                    gv[a][1] += loc_v[a][i] * grad[i][1];
                }
            }
            let p: f64 = (0..3).map(|k| loc_p[k] * psi[k]).sum();
            let div = gv[0][0] + gv[1][1];
            for a in 0..2 {
                let conv = if convection { v[0] * gv[a][0] + v[1] * gv[a][1] } else { 0.0 };
                for i in 0..6 {
                    r_loc[6 * a + i] += jw
                        * (nu * (gv[a][0] * grad[i][0] + gv[a][1] * grad[i][1]) + conv * phi[i]
                            - p * grad[i][a]);
                }
            }
            for k in 0..3 {
                r_loc[12 + k] -= jw * div * psi[k];
            }
            if !want_jacobian {
                continue;
            }
            for i in 0..6 {
                for j in 0..6 {
                    let visc = nu * (grad[j][0] * grad[i][0] + grad[j][1] * grad[i][1]);
                    let adv = if convection { (v[0] * grad[j][0] + v[1] * grad[j][1]) * phi[i] } else { 0.0 };
                    for a in 0..2 {
                        j_loc[6 * a + i][6 * a + j] += jw * (visc + adv);
                        if convection {
                            for b in 0..2 {
                                j_loc[6 * a + i][6 * b + j] += jw * phi[j] * gv[a][b] * phi[i];
                            }
                        }
                    }
                }
                for k in 0..3 {
                    for a in 0..2 {
                        let g = -jw * psi[k] * grad[i][a];
                        j_loc[6 * a + i][12 + k] += g;
                        j_loc[12 + k][6 * a + i] += g;
                    }
                }
            }
        }
        let global = |loc: usize| if loc < 12 { vdof(loc / 6, loc % 6) } else { pdofs[loc - 12] };
        for r in 0..15 {
            res[global(r)] += r_loc[r];
        }
        if let Some(tb) = tb.as_mut() {
            for r in 0..15 {
                for c in 0..15 {
                    if j_loc[r][c] != 0.0 {
                        tb.add(global(r), global(c), j_loc[r][c]);
                    }
                }
            }
        }
    }
    (res, tb.map(TripletBuilder::build))
}

fn free_norm(layout: &Layout, r: &[f64]) -> f64 {
    layout.map.free().iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt()
}

fn boundary_guess(mesh: &Mesh, layout: &Layout, profile: &InletProfile) -> Vec<f64> {
    let mut velocity = vec![[0.0; 2]; layout.n];
    for (i, tag) in mesh.node_tags().iter().enumerate() {
        if *tag == Some(BoundaryTag::Inlet) {
            velocity[i] = profile.eval(mesh.nodes()[i][1]);
        }
    }
    layout.pack(&velocity, &vec![0.0; layout.nv])
}

/// One Newton update on the free unknowns; returns the new residual.
fn newton_step(mesh: &Mesh, layout: &Layout, x: &mut [f64], re: f64, convection: bool) -> Result<()> {
    let (res, jac) = residual_and_jacobian(mesh, layout, x, re, convection, true);
    let jac = layout.map.reduce_matrix(&jac.expect("jacobian requested"))?;
    let rhs: Vec<f64> = layout.map.reduce_vector(&res)?.iter().map(|v| -v).collect();
    let lu = SparseLu::factor(&jac).map_err(|e| {
        Error::singular(format!("flow saddle-point system: {e} (check boundary tagging)"))
    })?;
    let delta = lu.solve(&rhs)?;
    for (k, &i) in layout.map.free().iter().enumerate() {
        x[i] += delta[k];
    }
    Ok(())
}

/// Stokes problem `-(1/Re) Lap v + grad p = 0`, `div v = 0` with the given
/// inlet profile, no-slip walls and a do-nothing outlet.
pub fn solve_stokes(mesh: &Mesh, profile: &InletProfile, re: f64) -> Result<FlowState> {
    if !(re > 0.0 && re.is_finite()) {
        return Err(Error::invalid(format!("Reynolds number must be positive, got {re}")));
    }
    let layout = Layout::new(mesh)?;
    let mut x = boundary_guess(mesh, &layout, profile);
    let (r0, _) = residual_and_jacobian(mesh, &layout, &x, re, false, false);
    newton_step(mesh, &layout, &mut x, re, false)?;
    let (r1, _) = residual_and_jacobian(mesh, &layout, &x, re, false, false);
    let (velocity, pressure) = layout.unpack(&x);
    Ok(FlowState {
        velocity,
        pressure,
        residual_history: vec![free_norm(&layout, &r0), free_norm(&layout, &r1)],
    })
}

/// Newton iteration on the steady Navier-Stokes equations starting from
/// `initial`. Stops when the residual falls below `opts.tol` relative to the
/// residual of the initial guess, or below `opts.abs_tol`.
pub fn solve_navier_stokes(
    mesh: &Mesh,
    re: f64,
    initial: &FlowState,
    opts: NewtonOptions,
) -> Result<FlowState> {
    if !(re > 0.0 && re.is_finite()) {
        return Err(Error::invalid(format!("Reynolds number must be positive, got {re}")));
    }
    check_dim("initial velocity", mesh.num_nodes(), initial.velocity.len())?;
    check_dim("initial pressure", mesh.num_vertices(), initial.pressure.len())?;
    let layout = Layout::new(mesh)?;
    let mut x = layout.pack(&initial.velocity, &initial.pressure);
    let (r0, _) = residual_and_jacobian(mesh, &layout, &x, re, true, false);
    let r0 = free_norm(&layout, &r0);
    let mut history = vec![r0];
    // scale for the relative test; a zero residual guess is already converged
    let scale = if r0 > 0.0 { r0 } else { 1.0 };
    let mut rel = r0 / scale;
    while rel > opts.tol && history.last().copied().unwrap_or(0.0) > opts.abs_tol {
        if history.len() > opts.max_iter {
            return Err(Error::NotConverged {
                what: "Navier-Stokes Newton iteration",
                iterations: opts.max_iter,
                residual: rel,
            });
        }
        newton_step(mesh, &layout, &mut x, re, true)?;
        let (r, _) = residual_and_jacobian(mesh, &layout, &x, re, true, false);
        let rn = free_norm(&layout, &r);
        if !rn.is_finite() {
            return Err(Error::NotConverged {
                what: "Navier-Stokes Newton iteration",
                iterations: history.len(),
                residual: rn,
            });
        }
        history.push(rn);
        rel = rn / scale;
        debug!("newton step {}: relative residual {rel:.3e}", history.len() - 1);
    }
    info!("Navier-Stokes converged in {} Newton steps (relative residual {rel:.3e})", history.len() - 1);
    let (velocity, pressure) = layout.unpack(&x);
    Ok(FlowState {
        velocity,
        pressure,
        residual_history: history,
    })
}

/// Euclidean norm of the discrete divergence `(div v, q_k)` over all P1
/// pressure test functions.
pub fn divergence_norm(mesh: &Mesh, velocity: &[[f64; 2]]) -> Result<f64> {
    check_dim("velocity field", mesh.num_nodes(), velocity.len())?;
    let layout = Layout::new(mesh)?;
    let x = layout.pack(velocity, &vec![0.0; layout.nv]);
    let (r, _) = residual_and_jacobian(mesh, &layout, &x, 1.0, false, false);
    Ok(r[2 * layout.n..].iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Net volume flux `int v.n` through the boundary edges carrying `tag`.
pub fn boundary_flux(mesh: &Mesh, velocity: &[[f64; 2]], tag: BoundaryTag) -> f64 {
    let x = mesh.nodes();
    let mut flux = 0.0;
    for e in mesh.boundary_edges().iter().filter(|e| e.tag == tag) {
        let [a, b, m] = e.nodes;
        // counter-clockwise traversal: outward normal is the tangent rotated
        let t = [x[b][0] - x[a][0], x[b][1] - x[a][1]];
        let nrm = [t[1], -t[0]];
        // Simpson is exact for the quadratic trace
        let vn = |i: usize| velocity[i][0] * nrm[0] + velocity[i][1] * nrm[1];
        flux += (vn(a) + 4.0 * vn(m) + vn(b)) / 6.0;
    }
    flux
}

/// Interpolates a velocity field from `source` onto the nodes of `target`.
/// Coinciding meshes return the field unchanged.
pub fn restrict_velocity(source: &Mesh, velocity: &[[f64; 2]], target: &Mesh) -> Result<Vec<[f64; 2]>> {
    check_dim("velocity field", source.num_nodes(), velocity.len())?;
    if source.n() == target.n() && source.geometry() == target.geometry() {
        return Ok(velocity.to_vec());
    }
    let vx: Vec<f64> = velocity.iter().map(|v| v[0]).collect();
    let vy: Vec<f64> = velocity.iter().map(|v| v[1]).collect();
    target
        .nodes()
        .iter()
        .map(|&p| match (evaluate(source, &vx, p), evaluate(source, &vy, p)) {
            (Some(a), Some(b)) => Ok([a, b]),
            _ => Err(Error::invalid(format!("target node {p:?} outside source mesh"))),
        })
        .collect()
}
