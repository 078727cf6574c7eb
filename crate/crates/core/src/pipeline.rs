//! Stages of the command-line workflow and their on-disk artifacts.
//!
//! Every stage writes into a `*.partial` directory that is renamed into place
//! on success and removed on failure, so an interrupted or failing stage
//! leaves no artifacts behind.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::controller::{build_internal_model, ControllerKind, ControllerRealization, ControllerRegistry, DesignContext};
use crate::error::{Error, Result};
use crate::flow::{
    divergence_norm, read_velocity_csv, restrict_velocity, solve_navier_stokes, solve_stokes, FlowState,
    InletProfile, NewtonOptions,
};
use crate::mesh::{build_structured_mesh, Geometry, Mesh};
use crate::plant::{build_plant, GeneralizedPlant};
use crate::sim::{simulate, write_snapshot_csv, TrackingMetrics};

/// Meshes for the simulation plant and the (coarser, nested) design plant.
pub fn build_meshes(cfg: &RunConfig) -> Result<(Mesh, Mesh)> {
    let g = Geometry::room();
    Ok((build_structured_mesh(&g, cfg.simulation_n)?, build_structured_mesh(&g, cfg.design_n)?))
}

/// Steady flow on the simulation mesh: Stokes initial guess, then Newton.
pub fn compute_flow(cfg: &RunConfig, mesh: &Mesh) -> Result<FlowState> {
    let profile = InletProfile::Room {
        remap: cfg.inlet_remap,
    };
    let stokes = solve_stokes(mesh, &profile, cfg.re)?;
    solve_navier_stokes(mesh, cfg.re, &stokes, NewtonOptions::default())
}

/// Simulation and design plants from velocity fields on the two meshes.
pub fn build_plants(
    cfg: &RunConfig,
    sim_mesh: &Mesh,
    sim_velocity: &[[f64; 2]],
    design_mesh: &Mesh,
    design_velocity: &[[f64; 2]],
) -> Result<(GeneralizedPlant, GeneralizedPlant)> {
    let shapes = cfg.shapes();
    Ok((
        build_plant(sim_mesh, sim_velocity, cfg.re, cfg.pr, &shapes)?,
        build_plant(design_mesh, design_velocity, cfg.re, cfg.pr, &shapes)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Mesh,
    Flow,
    Synth,
    Simulate,
    Report,
}

/// Artifact directory layout under the output root.
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Artifacts { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mesh_dir(&self) -> PathBuf {
        self.root.join("mesh")
    }

    pub fn flow_dir(&self) -> PathBuf {
        self.root.join("flow")
    }

    pub fn controller_dir(&self, kind: ControllerKind) -> PathBuf {
        self.root.join("synth").join(kind.as_str())
    }

    pub fn simulation_dir(&self, kind: ControllerKind) -> PathBuf {
        self.root.join("simulate").join(kind.as_str())
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

/// Runs `f` on a fresh staging directory and moves it to `target` on success.
fn staged<T>(target: &Path, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let mut name = target.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    let staging = target.with_file_name(name);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    match f(&staging) {
        Ok(v) => {
            if target.exists() {
                fs::remove_dir_all(target)?;
            }
            fs::rename(&staging, target)?;
            Ok(v)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        reason: format!("{e} (run the earlier stage first)"),
    })?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshInfo {
    n: usize,
    nodes: usize,
    triangles: usize,
    vertices: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowInfo {
    re: f64,
    simulation_n: usize,
    design_n: usize,
    inlet_remap: crate::flow::InletRemap,
    newton_iterations: usize,
    residual_history: Vec<f64>,
    divergence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthInfo {
    kind: ControllerKind,
    dim: usize,
    design_states: usize,
    simulation_states: usize,
    /// Rightmost eigenvalues of the design plant as `[re, im]`.
    design_rightmost: Vec<[f64; 2]>,
    internal_model_defect: f64,
}

/// Metrics file of one simulation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: ControllerKind,
    pub controller_dim: usize,
    pub plant_states: usize,
    pub metrics: TrackingMetrics,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub artifacts: Artifacts,
    pub registry: ControllerRegistry,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        let artifacts = Artifacts::new(cfg.out_dir.clone());
        Pipeline {
            cfg,
            artifacts,
            registry: ControllerRegistry::default(),
        }
    }

    /// Controllers selected on the command line, or all configured ones.
    fn kinds(&self, only: Option<ControllerKind>) -> Vec<ControllerKind> {
        match only {
            Some(k) => vec![k],
            None => self.cfg.controllers.clone(),
        }
    }

    /// Runs one stage and returns a human-readable summary.
    pub fn run(&self, stage: Stage, only: Option<ControllerKind>) -> Result<String> {
        fs::create_dir_all(self.artifacts.root())?;
        match stage {
            Stage::Mesh => self.mesh(),
            Stage::Flow => self.flow(),
            Stage::Synth => self.synth(&self.kinds(only)),
            Stage::Simulate => self.simulate(&self.kinds(only)),
            Stage::Report => self.report(),
        }
    }

    fn mesh(&self) -> Result<String> {
        let (sim, design) = build_meshes(&self.cfg)?;
        staged(&self.artifacts.mesh_dir(), |dir| {
            let mut out = String::new();
            for (label, m) in [("simulation", &sim), ("design", &design)] {
                m.write_nodes_csv(BufWriter::new(File::create(dir.join(format!("{label}_nodes.csv")))?))?;
                m.write_triangles_csv(BufWriter::new(File::create(dir.join(format!("{label}_triangles.csv")))?))?;
                let info = MeshInfo {
                    n: m.n(),
                    nodes: m.num_nodes(),
                    triangles: m.triangles().len(),
                    vertices: m.num_vertices(),
                };
                writeln!(out, "{label} mesh: n = {}, {} P2 nodes, {} triangles", info.n, info.nodes, info.triangles).unwrap();
                write_json(&dir.join(format!("{label}.json")), &info)?;
            }
            Ok(out)
        })
    }

    fn flow(&self) -> Result<String> {
        let (sim, design) = build_meshes(&self.cfg)?;
        let state = compute_flow(&self.cfg, &sim)?;
        let design_velocity = restrict_velocity(&sim, &state.velocity, &design)?;
        let divergence = divergence_norm(&sim, &state.velocity)?;
        staged(&self.artifacts.flow_dir(), |dir| {
            state.write_velocity_csv(&sim, BufWriter::new(File::create(dir.join("velocity_simulation.csv"))?))?;
            let coarse = FlowState {
                velocity: design_velocity.clone(),
                pressure: vec![0.0; design.num_vertices()],
                residual_history: vec![],
            };
            coarse.write_velocity_csv(&design, BufWriter::new(File::create(dir.join("velocity_design.csv"))?))?;
            let info = FlowInfo {
                re: self.cfg.re,
                simulation_n: self.cfg.simulation_n,
                design_n: self.cfg.design_n,
                inlet_remap: self.cfg.inlet_remap,
                newton_iterations: state.iterations(),
                residual_history: state.residual_history.clone(),
                divergence,
            };
            write_json(&dir.join("flow.json"), &info)?;
            Ok(format!(
                "flow: Newton converged in {} steps, residual {:.3e}, divergence {:.3e}\n",
                info.newton_iterations,
                state.residual_norm(),
                divergence
            ))
        })
    }

    /// Rebuilds both plants from the exported flow.
    fn load_plants(&self) -> Result<(Mesh, GeneralizedPlant, GeneralizedPlant)> {
        let dir = self.artifacts.flow_dir();
        let info: FlowInfo = read_json(&dir.join("flow.json"))?;
        if info.re != self.cfg.re
            || info.simulation_n != self.cfg.simulation_n
            || info.design_n != self.cfg.design_n
            || info.inlet_remap != self.cfg.inlet_remap
        {
            return Err(Error::Artifact {
                path: dir.display().to_string(),
                reason: "flow was computed for a different configuration; rerun `flow`".into(),
            });
        }
        let (sim, design) = build_meshes(&self.cfg)?;
        let open = |name: &str| File::open(dir.join(name)).map(BufReader::new);
        let v_sim = read_velocity_csv(&sim, open("velocity_simulation.csv")?)?;
        let v_design = read_velocity_csv(&design, open("velocity_design.csv")?)?;
        let (p_sim, p_design) = build_plants(&self.cfg, &sim, &v_sim, &design, &v_design)?;
        Ok((sim, p_sim, p_design))
    }

    fn synth(&self, kinds: &[ControllerKind]) -> Result<String> {
        let (_, p_sim, p_design) = self.load_plants()?;
        let rightmost = p_design.rightmost_spectrum(4)?;
        if rightmost[0].re >= 0.0 {
            warn!("design plant is not exponentially stable (rightmost eigenvalue {:?})", rightmost[0]);
        }
        let im = build_internal_model(&self.cfg.frequencies, p_design.outputs())?;
        let ctx = DesignContext::new(
            Arc::new(p_design.to_standard_form()?),
            Arc::new(p_sim),
            im.clone(),
            self.cfg.dual,
            self.cfg.epsilon,
        );
        let mut out = format!(
            "design plant: {} states, rightmost eigenvalue {:.6e}\n",
            ctx.design.order(),
            rightmost[0].re
        );
        for &kind in kinds {
            let ctrl = self.registry.get(kind.as_str())?.synthesize(&ctx)?;
            let defect = ctrl.internal_model_defect(&im.frequencies)?;
            staged(&self.artifacts.controller_dir(kind), |dir| {
                ctrl.export(dir)?;
                if kind != ControllerKind::LowGain {
                    let red = &ctx.dual_design()?.reduction;
                    let mut w = BufWriter::new(File::create(dir.join("hsv.csv"))?);
                    writeln!(w, "index,hsv")?;
                    for (i, h) in red.hsv.iter().enumerate() {
                        writeln!(w, "{},{:.16e}", i + 1, h)?;
                    }
                }
                write_json(
                    &dir.join("synth.json"),
                    &SynthInfo {
                        kind,
                        dim: ctrl.dim(),
                        design_states: ctx.design.order(),
                        simulation_states: ctx.simulation.states(),
                        design_rightmost: rightmost.iter().map(|l| [l.re, l.im]).collect(),
                        internal_model_defect: defect,
                    },
                )
            })?;
            writeln!(out, "{kind}: dimension {}, internal model defect {defect:.2e}", ctrl.dim()).unwrap();
        }
        Ok(out)
    }

    fn simulate(&self, kinds: &[ControllerKind]) -> Result<String> {
        let (mesh, plant, _) = self.load_plants()?;
        let mut out = String::new();
        for &kind in kinds {
            let cdir = self.artifacts.controller_dir(kind);
            if !cdir.join("controller.json").exists() {
                return Err(Error::Artifact {
                    path: cdir.display().to_string(),
                    reason: "controller missing (run the synth stage first)".into(),
                });
            }
            let ctrl = ControllerRealization::import(&cdir)?;
            let res = simulate(&plant, &ctrl, &self.cfg.sim)?;
            let window = 0.2 * self.cfg.sim.t_end;
            let summary = RunSummary {
                kind,
                controller_dim: ctrl.dim(),
                plant_states: plant.states(),
                metrics: res.metrics(window),
            };
            staged(&self.artifacts.simulation_dir(kind), |dir| {
                res.write_trajectory_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
                for s in &res.snapshots {
                    let name = format!("snapshot_t{:.2}.csv", s.t);
                    write_snapshot_csv(&mesh, &s.theta, BufWriter::new(File::create(dir.join(name))?))?;
                }
                write_json(&dir.join("metrics.json"), &summary)
            })?;
            let m = &summary.metrics;
            writeln!(
                out,
                "{kind}: sup|e| initial {:.4e}, tail {:.4e}, decay rate {:.4}, theta in [{:.3}, {:.3}]",
                m.sup_initial, m.sup_tail, m.decay_rate, m.theta_min, m.theta_max
            )
            .unwrap();
        }
        info!("simulation artifacts written to {}", self.artifacts.root().display());
        Ok(out)
    }

    /// Table of all simulated controllers, slowest decay flagged.
    fn report(&self) -> Result<String> {
        let mut runs: Vec<RunSummary> = Vec::new();
        for kind in ControllerKind::ALL {
            let path = self.artifacts.simulation_dir(kind).join("metrics.json");
            if path.exists() {
                runs.push(read_json(&path)?);
            }
        }
        if runs.is_empty() {
            return Err(Error::Artifact {
                path: self.artifacts.root().join("simulate").display().to_string(),
                reason: "no simulation results (run the simulate stage first)".into(),
            });
        }
        let slowest = runs
            .iter()
            .min_by(|a, b| a.metrics.decay_rate.total_cmp(&b.metrics.decay_rate))
            .map(|r| r.kind);
        let mut csv = String::from("controller,dim,sup_initial,sup_tail,ratio,decay_rate,theta_min,theta_max,slowest\n");
        let mut table = format!(
            "{:<14} {:>6} {:>12} {:>12} {:>10} {:>18}\n",
            "controller", "dim", "sup|e| tail", "tail ratio", "decay", "theta range"
        );
        for r in &runs {
            let m = &r.metrics;
            let slow = Some(r.kind) == slowest;
            writeln!(
                csv,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.kind, r.controller_dim, m.sup_initial, m.sup_tail, m.ratio, m.decay_rate, m.theta_min, m.theta_max, slow
            )
            .unwrap();
            writeln!(
                table,
                "{:<14} {:>6} {:>12.4e} {:>12.4e} {:>10.4} {:>8.2} .. {:<8.2}{}",
                r.kind.as_str(),
                r.controller_dim,
                m.sup_tail,
                m.ratio,
                m.decay_rate,
                m.theta_min,
                m.theta_max,
                if slow { "  (slowest decay)" } else { "" }
            )
            .unwrap();
        }
        fs::write(self.artifacts.report_path(), csv)?;
        Ok(table)
    }
}
