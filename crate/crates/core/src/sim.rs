//! Closed-loop time integration of the plant and a controller.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use faer::linalg::solvers::Solve;
use faer::Mat;
use log::debug;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerRealization;
use crate::error::{check_dim, Error, Result};
use crate::mesh::Mesh;
use crate::plant::GeneralizedPlant;
use crate::sparse::SparseLu;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Sin,
    Cos,
}

/// `amplitude * sin(omega t)` or `amplitude * cos(omega t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub waveform: Waveform,
    pub omega: f64,
    pub amplitude: f64,
}

/// Finite sum of harmonics plus a constant offset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub offset: f64,
    pub terms: Vec<Harmonic>,
}

impl SignalSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `sin t + 2 cos 2t`
    pub fn default_reference() -> Self {
        "sin:1:1, cos:2:2".parse().unwrap()
    }

    /// `1.5 cos 3t`
    pub fn default_disturbance() -> Self {
        "cos:3:1.5".parse().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|h| {
                    let arg = h.omega * t;
                    h.amplitude
                        * match h.waveform {
                            Waveform::Sin => arg.sin(),
                            Waveform::Cos => arg.cos(),
                        }
                })
                .sum::<f64>()
    }

    /// Frequencies appearing in the signal, in order of first appearance.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for h in &self.terms {
            if h.omega != 0.0 && !out.contains(&h.omega) {
                out.push(h.omega);
            }
        }
        out
    }
}

/// Comma separated terms `sin:OMEGA:AMP`, `cos:OMEGA:AMP` or `const:VALUE`;
/// `0` or an empty string is the zero signal.
impl FromStr for SignalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SignalSpec::zero();
        let bad = |t: &str| Error::Config(format!("malformed signal term `{t}`"));
        for term in s.split(',').map(str::trim).filter(|t| !t.is_empty() && *t != "0") {
            let parts: Vec<&str> = term.split(':').map(str::trim).collect();
            let num = |i: usize| -> Result<f64> {
                parts
                    .get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(term))
            };
            match parts[0] {
                "const" if parts.len() == 2 => spec.offset += num(1)?,
                "sin" | "cos" if parts.len() == 3 => {
                    let omega = num(1)?;
                    if omega < 0.0 {
                        return Err(bad(term));
                    }
                    spec.terms.push(Harmonic {
                        waveform: if parts[0] == "sin" { Waveform::Sin } else { Waveform::Cos },
                        omega,
                        amplitude: num(2)?,
                    });
                }
                _ => return Err(bad(term)),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for SignalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.offset != 0.0 {
            parts.push(format!("const:{}", self.offset));
        }
        for h in &self.terms {
            let w = match h.waveform {
                Waveform::Sin => "sin",
                Waveform::Cos => "cos",
            };
            parts.push(format!("{w}:{}:{}", h.omega, h.amplitude));
        }
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub dt: f64,
    pub t_end: f64,
    pub reference: SignalSpec,
    pub disturbance: SignalSpec,
    /// Value of every free temperature DOF at `t = 0`.
    pub initial_temperature: f64,
    /// Times at which the full temperature field is stored.
    pub snapshot_times: Vec<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            dt: 0.01,
            t_end: 20.0,
            reference: SignalSpec::default_reference(),
            disturbance: SignalSpec::default_disturbance(),
            initial_temperature: 1.0,
            snapshot_times: vec![20.0],
        }
    }
}

impl SimulationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::invalid(format!("horizon {} shorter than one step", self.t_end)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    /// Temperature on all P2 nodes, zero on constrained ones.
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub u: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Smallest and largest nodal temperature over all steps.
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Block Crank-Nicolson for
/// `M x' = A x + B K z + B_d w_d`, `z' = G1 z + G2 (C x - y_r)`.
/// The sparse plant block is factored once and the controller block is
/// eliminated through a dense Schur complement.
pub fn simulate(
    plant: &GeneralizedPlant,
    ctrl: &ControllerRealization,
    opts: &SimulationOptions,
) -> Result<SimulationResult> {
    simulate_from(plant, ctrl, opts, None)
}

/// As [`simulate`], with a given initial controller state (zero otherwise).
pub fn simulate_from(
    plant: &GeneralizedPlant,
    ctrl: &ControllerRealization,
    opts: &SimulationOptions,
    z0: Option<&[f64]>,
) -> Result<SimulationResult> {
    opts.validate()?;
    if plant.outputs() != 1 || plant.inputs() != 1 || plant.disturbances() != 1 {
        return Err(Error::invalid("simulation supports single-input single-output plants only"));
    }
    if plant.d[(0, 0)] != 0.0 || plant.d_d[(0, 0)] != 0.0 {
        return Err(Error::invalid("simulation requires zero feedthrough"));
    }
    check_dim("controller inputs", 1, ctrl.inputs())?;
    check_dim("controller outputs", 1, ctrl.outputs())?;
    let (n, nc) = (plant.states(), ctrl.dim());
    let dt = opts.dt;
    let steps = opts.steps();

    // P = M/dt - A/2, R = M/dt + A/2
    let p_mat = plant.mass.linear_combination(1.0 / dt, &plant.a, -0.5)?;
    let r_mat = plant.mass.linear_combination(1.0 / dt, &plant.a, 0.5)?;
    let lu = SparseLu::factor(&p_mat)?;
    let b: Vec<f64> = (0..n).map(|i| plant.b[(i, 0)]).collect();
    let bd: Vec<f64> = (0..n).map(|i| plant.b_d[(i, 0)]).collect();
    let c: Vec<f64> = (0..n).map(|i| plant.c[(0, i)]).collect();
    let w = lu.solve(&b)?;
    let cw: f64 = dot(&c, &w);

    let g2: Vec<f64> = (0..nc).map(|i| ctrl.g2[(i, 0)]).collect();
    let k: Vec<f64> = (0..nc).map(|j| ctrl.k[(0, j)]).collect();
    let q_plus = Mat::from_fn(nc, nc, |i, j| f64::from(i == j) / dt + 0.5 * ctrl.g1[(i, j)]);
    let qs = Mat::from_fn(nc, nc, |i, j| {
        f64::from(i == j) / dt - 0.5 * ctrl.g1[(i, j)] - 0.25 * g2[i] * cw * k[j]
    });
    let qs_lu = qs.partial_piv_lu();

    let mut x = vec![opts.initial_temperature; n];
    let mut z = match z0 {
        Some(z0) => {
            check_dim("initial controller state", nc, z0.len())?;
            z0.to_vec()
        }
        None => vec![0.0; nc],
    };

    let mut res = SimulationResult {
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        y_ref: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        theta_min: f64::INFINITY,
        theta_max: f64::NEG_INFINITY,
    };
    let mut pending: Vec<f64> = opts.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();

    let mut record = |step: usize, x: &[f64], z: &[f64], res: &mut SimulationResult| -> Result<()> {
        let t = step as f64 * dt;
        let y = dot(&c, x);
        let u = dot(&k, z);
        if !y.is_finite() || !u.is_finite() {
            return Err(Error::NonFinite { step });
        }
        for &v in x {
            res.theta_min = res.theta_min.min(v);
            res.theta_max = res.theta_max.max(v);
        }
        res.t.push(t);
        res.y.push(y);
        res.y_ref.push(opts.reference.eval(t));
        res.u.push(u);
        while let Some(&ts) = pending.peek() {
            if ts > t + 0.5 * dt {
                break;
            }
            pending.next();
            res.snapshots.push(Snapshot {
                t,
                theta: plant.dofs.inflate(x, 0.0)?,
            });
        }
        Ok(())
    };
    record(0, &x, &z, &mut res)?;

    let mut r1 = vec![0.0; n];
    let mut zrhs = Mat::<f64>::zeros(nc, 1);
    for step in 1..=steps {
        let t_mid = (step as f64 - 0.5) * dt;
        let (yr, wd) = (opts.reference.eval(t_mid), opts.disturbance.eval(t_mid));
        let u_old = dot(&k, &z);
        let y_old = dot(&c, &x);
        // r1 = R x + B u/2 + B_d w_d
        r1.fill(0.0);
        r_mat.mul_vec_into(&x, &mut r1);
        for i in 0..n {
            r1[i] += 0.5 * b[i] * u_old + bd[i] * wd;
        }
        if r1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        lu.solve_in_place(&mut r1)?;
        let cv = dot(&c, &r1);
        // Qs z+ = Q+ z + G2 (C x/2 - y_r) + G2 C P^-1 r1 / 2
        for i in 0..nc {
            let mut acc = 0.0;
            for j in 0..nc {
                acc += q_plus[(i, j)] * z[j];
            }
            zrhs[(i, 0)] = acc + g2[i] * (0.5 * y_old - yr + 0.5 * cv);
        }
        let z_new = qs_lu.solve(&zrhs);
        for i in 0..nc {
            z[i] = z_new[(i, 0)];
        }
        let ku = 0.5 * dot(&k, &z);
        for i in 0..n {
            x[i] = r1[i] + ku * w[i];
        }
        if x.iter().any(|v| !v.is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        record(step, &x, &z, &mut res)?;
    }
    debug!(
        "simulated {steps} steps, theta in [{:.3}, {:.3}]",
        res.theta_min, res.theta_max
    );
    Ok(res)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SimulationResult {
    pub fn error(&self) -> Vec<f64> {
        self.y.iter().zip(&self.y_ref).map(|(y, r)| y - r).collect()
    }

    /// `sup |e(t)|` over `t0 <= t <= t1`.
    pub fn sup_error(&self, t0: f64, t1: f64) -> f64 {
        let eps = 1e-9 * (1.0 + t1.abs());
        self.t
            .iter()
            .zip(&self.y)
            .zip(&self.y_ref)
            .filter(|((t, _), _)| **t >= t0 - eps && **t <= t1 + eps)
            .map(|((_, y), r)| (y - r).abs())
            .fold(0.0, f64::max)
    }

    /// Exponential decay rate of the tracking error: minus the least-squares
    /// slope of `log` of the running suffix maximum of `|e|`. Returns infinity
    /// when the envelope reaches zero.
    pub fn decay_rate(&self) -> f64 {
        let e = self.error();
        let mut env = vec![0.0; e.len()];
        let mut m = 0.0f64;
        for i in (0..e.len()).rev() {
            m = m.max(e[i].abs());
            env[i] = m;
        }
        if env.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let npts = env.len() as f64;
        let (mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0);
        for (t, v) in self.t.iter().zip(&env) {
            let l = v.ln();
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
        }
        let denom = npts * stt - st * st;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        -(npts * stl - st * sl) / denom
    }

    pub fn metrics(&self, window: f64) -> TrackingMetrics {
        let t_end = self.t.last().copied().unwrap_or(0.0);
        let initial = self.sup_error(0.0, window);
        let tail = self.sup_error(t_end - window, t_end);
        TrackingMetrics {
            window,
            sup_initial: initial,
            sup_tail: tail,
            ratio: tail / initial,
            decay_rate: self.decay_rate(),
            theta_min: self.theta_min,
            theta_max: self.theta_max,
        }
    }

    /// `t,y,y_r,e,u` with 17 significant digits.
    pub fn write_trajectory_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,y,y_r,e,u")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i],
                self.y[i],
                self.y_ref[i],
                self.y[i] - self.y_ref[i],
                self.u[i]
            )?;
        }
        Ok(())
    }
}

/// Nodal temperature field as `x,y,theta`.
pub fn write_snapshot_csv<W: Write>(mesh: &Mesh, theta: &[f64], mut w: W) -> Result<()> {
    check_dim("snapshot field", mesh.num_nodes(), theta.len())?;
    writeln!(w, "x,y,theta")?;
    for (p, v) in mesh.nodes().iter().zip(theta) {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?;
    }
    Ok(())
}

/// Summary of one closed-loop run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Width of the initial and final windows.
    pub window: f64,
    pub sup_initial: f64,
    pub sup_tail: f64,
    /// `sup_tail / sup_initial`
    pub ratio: f64,
    pub decay_rate: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}
