//! INI run configuration.
//!
//! ```ini
//! [physics]
//! re = 100
//! pr = 0.7
//! inlet_remap = shifted
//!
//! [controller]
//! alpha1 = 1
//! r1 = 1
//! ```
//!
//! Unknown sections or keys are rejected. `--override section.key=value`
//! replaces single entries after the file is read.

use std::path::{Path, PathBuf};

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerKind, DualObserverParams};
use crate::error::{Error, Result};
use crate::fem::ShapeSpec;
use crate::flow::InletRemap;
use crate::plant::PlantShapes;
use crate::sim::SimulationOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorChoice {
    C1,
    C2,
}

impl SensorChoice {
    pub fn shape(self) -> ShapeSpec {
        match self {
            SensorChoice::C1 => ShapeSpec::room_sensor_1(),
            SensorChoice::C2 => ShapeSpec::room_sensor_2(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub re: f64,
    pub pr: f64,
    pub inlet_remap: InletRemap,
    pub sensor: SensorChoice,
    pub simulation_n: usize,
    pub design_n: usize,
    pub frequencies: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    pub dual: DualObserverParams,
    pub epsilon: f64,
    pub sim: SimulationOptions,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "default".into(),
            re: 100.0,
            pr: 0.7,
            inlet_remap: InletRemap::Shifted,
            sensor: SensorChoice::C1,
            simulation_n: 81,
            design_n: 41,
            frequencies: vec![1.0, 2.0, 3.0],
            controllers: ControllerKind::ALL.to_vec(),
            dual: DualObserverParams {
                alpha1: 1.0,
                alpha2: 1.0,
                r1: 1.0,
                r2: 1.0,
                order: 10,
            },
            epsilon: 0.08,
            sim: SimulationOptions::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("run", &["name", "out_dir"]),
    ("physics", &["re", "pr", "inlet_remap"]),
    ("shapes", &["sensor"]),
    ("mesh", &["simulation_n", "design_n"]),
    (
        "controller",
        &["kinds", "frequencies", "alpha1", "alpha2", "r1", "r2", "order", "epsilon"],
    ),
    ("signals", &["reference", "disturbance"]),
    ("simulation", &["t_end", "dt", "initial_temperature", "snapshots"]),
];

fn parse<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{section}.{key}: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(section, key, s))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_with(&text, overrides)
    }

    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("INI syntax: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
            let (section, key) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key `{key}` is not section.key")))?;
            ini.with_section(Some(section)).set(key, value.trim());
        }
        let mut cfg = RunConfig::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside of a section".into()));
                }
                continue;
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
            for (key, value) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(Error::Config(format!("unknown key {section}.{key}")));
                }
                cfg.set(section, key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let s = section;
        match (section, key) {
            ("run", "name") => self.name = value.trim().to_string(),
            ("run", "out_dir") => self.out_dir = PathBuf::from(value.trim()),
            ("physics", "re") => self.re = parse(s, key, value)?,
            ("physics", "pr") => self.pr = parse(s, key, value)?,
            ("physics", "inlet_remap") => {
                self.inlet_remap = value.parse().map_err(|_| Error::Config(format!("unknown inlet remap `{value}`")))?
            }
            ("shapes", "sensor") => {
                self.sensor = match value.trim() {
                    "c1" => SensorChoice::C1,
                    "c2" => SensorChoice::C2,
                    v => return Err(Error::Config(format!("sensor must be c1 or c2, got `{v}`"))),
                }
            }
            ("mesh", "simulation_n") => self.simulation_n = parse(s, key, value)?,
            ("mesh", "design_n") => self.design_n = parse(s, key, value)?,
            ("controller", "kinds") => self.controllers = parse_list(s, key, value)?,
            ("controller", "frequencies") => self.frequencies = parse_list(s, key, value)?,
            ("controller", "alpha1") => self.dual.alpha1 = parse(s, key, value)?,
            ("controller", "alpha2") => self.dual.alpha2 = parse(s, key, value)?,
            ("controller", "r1") => self.dual.r1 = parse(s, key, value)?,
            ("controller", "r2") => self.dual.r2 = parse(s, key, value)?,
            ("controller", "order") => self.dual.order = parse(s, key, value)?,
            ("controller", "epsilon") => self.epsilon = parse(s, key, value)?,
            ("signals", "reference") => self.sim.reference = value.parse()?,
            ("signals", "disturbance") => self.sim.disturbance = value.parse()?,
            ("simulation", "t_end") => self.sim.t_end = parse(s, key, value)?,
            ("simulation", "dt") => self.sim.dt = parse(s, key, value)?,
            ("simulation", "initial_temperature") => self.sim.initial_temperature = parse(s, key, value)?,
            ("simulation", "snapshots") => self.sim.snapshot_times = parse_list(s, key, value)?,
            _ => unreachable!("key table and setter disagree on {section}.{key}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.re > 0.0 && self.pr > 0.0) {
            return cfg(format!("Re and Pr must be positive (got {}, {})", self.re, self.pr));
        }
        for n in [self.simulation_n, self.design_n] {
            if n < 5 || n % 2 == 0 {
                return cfg(format!("mesh sizes must be odd and at least 5, got {n}"));
            }
        }
        if self.controllers.is_empty() {
            return cfg("controller.kinds is empty".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return cfg(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.frequencies.is_empty() || self.frequencies.iter().any(|w| !(*w > 0.0)) {
            return cfg("frequencies must be positive".into());
        }
        for signal in [&self.sim.reference, &self.sim.disturbance] {
            for w in signal.frequencies() {
                if !self.frequencies.contains(&w) {
                    return cfg(format!("signal frequency {w} is not in the internal model"));
                }
            }
        }
        self.dual.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sim.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn shapes(&self) -> PlantShapes {
        PlantShapes::room(self.sensor.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_str_with("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn values_and_overrides() {
        let text = "[controller]\nalpha1 = 0.5\nr1 = 100\nkinds = dual-reduced, low-gain\n[shapes]\nsensor = c2\n";
        let cfg = RunConfig::from_str_with(text, &["controller.r1=7".into(), "simulation.dt = 0.02".into()]).unwrap();
        assert_eq!(cfg.dual.alpha1, 0.5);
        assert_eq!(cfg.dual.r1, 7.0);
        assert_eq!(cfg.sim.dt, 0.02);
        assert_eq!(cfg.sensor, SensorChoice::C2);
        assert_eq!(cfg.controllers, vec![ControllerKind::DualReduced, ControllerKind::LowGain]);
    }

    #[test]
    fn malformed_input_is_a_config_error() {
        for (text, ov) in [
            ("[physics]\nre = fast\n", vec![]),
            ("[physics]\nmach = 0.1\n", vec![]),
            ("[plasma]\n", vec![]),
            ("", vec!["nodot=1".to_string()]),
            ("", vec!["physics.re".to_string()]),
            ("[mesh]\ndesign_n = 40\n", vec![]),
            ("[signals]\nreference = sin:5:1\n", vec![]),
            ("[controller]\nkinds = lqr\n", vec![]),
            ("[shapes]\nsensor = c3\n", vec![]),
            ("[controller]\nr2 = 0\n", vec![]),
        ] {
            let err = RunConfig::from_str_with(text, &ov).unwrap_err();
            assert!(err.is_config_error(), "{text:?}: {err}");
        }
    }
}
