use std::cell::OnceCell;
use std::sync::Arc;

use faer::c64;

use super::{
    synthesize_dual_observer, synthesize_low_gain, ControlGain, ControllerKind, ControllerRealization,
    DualObserverDesign, DualObserverParams, InternalModel,
};
use crate::error::{Error, Result};
use crate::lti::{RiccatiOptions, StateSpace};
use crate::plant::GeneralizedPlant;

/// Inputs shared by all controller designs. The dual observer design is
/// computed at most once per context.
pub struct DesignContext {
    /// Standard-form plant used for the Riccati based designs.
    pub design: Arc<StateSpace>,
    /// Plant whose transfer values feed the low-gain design.
    pub simulation: Arc<GeneralizedPlant>,
    pub internal_model: InternalModel,
    pub dual: DualObserverParams,
    pub epsilon: f64,
    pub riccati: RiccatiOptions,
    /// Control gain shared between sensor setups, if already known.
    pub control_gain: Option<ControlGain>,
    dual_cache: OnceCell<DualObserverDesign>,
}

impl DesignContext {
    pub fn new(
        design: Arc<StateSpace>,
        simulation: Arc<GeneralizedPlant>,
        internal_model: InternalModel,
        dual: DualObserverParams,
        epsilon: f64,
    ) -> Self {
        DesignContext {
            design,
            simulation,
            internal_model,
            dual,
            epsilon,
            riccati: RiccatiOptions::default(),
            control_gain: None,
            dual_cache: OnceCell::new(),
        }
    }

    pub fn dual_design(&self) -> Result<&DualObserverDesign> {
        if let Some(d) = self.dual_cache.get() {
            return Ok(d);
        }
        let d = synthesize_dual_observer(
            &self.design,
            &self.internal_model,
            &self.dual,
            self.control_gain.as_ref(),
            &self.riccati,
        )?;
        Ok(self.dual_cache.get_or_init(|| d))
    }

    /// `P(i w_k)` of the simulation plant at the internal model frequencies.
    pub fn transfer_values(&self) -> Result<Vec<faer::Mat<c64>>> {
        self.internal_model
            .frequencies
            .iter()
            .map(|&w| self.simulation.transfer_value(c64::new(0.0, w)))
            .collect()
    }
}

/// A controller synthesis strategy selectable by name.
pub trait ControllerDesign: Send + Sync {
    fn kind(&self) -> ControllerKind;

    fn name(&self) -> &'static str {
        self.kind().as_str()
    }

    fn synthesize(&self, ctx: &DesignContext) -> Result<ControllerRealization>;
}

struct DualFull;
struct DualReduced;
struct LowGain;

impl ControllerDesign for DualFull {
    fn kind(&self) -> ControllerKind {
        ControllerKind::DualFull
    }

    fn synthesize(&self, ctx: &DesignContext) -> Result<ControllerRealization> {
        Ok(ctx.dual_design()?.full.clone())
    }
}

impl ControllerDesign for DualReduced {
    fn kind(&self) -> ControllerKind {
        ControllerKind::DualReduced
    }

    fn synthesize(&self, ctx: &DesignContext) -> Result<ControllerRealization> {
        Ok(ctx.dual_design()?.reduced.clone())
    }
}

impl ControllerDesign for LowGain {
    fn kind(&self) -> ControllerKind {
        ControllerKind::LowGain
    }

    fn synthesize(&self, ctx: &DesignContext) -> Result<ControllerRealization> {
        synthesize_low_gain(&ctx.transfer_values()?, &ctx.internal_model, ctx.epsilon)
    }
}

pub struct ControllerRegistry {
    designs: Vec<Box<dyn ControllerDesign>>,
}

impl Default for ControllerRegistry {
    fn default() -> Self {
        let mut r = ControllerRegistry { designs: Vec::new() };
        r.register(Box::new(DualFull));
        r.register(Box::new(DualReduced));
        r.register(Box::new(LowGain));
        r
    }
}

impl ControllerRegistry {
    /// Adds a design, replacing any previous design of the same name.
    pub fn register(&mut self, design: Box<dyn ControllerDesign>) {
        self.designs.retain(|d| d.name() != design.name());
        self.designs.push(design);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.designs.iter().map(|d| d.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ControllerDesign> {
        self.designs
            .iter()
            .find(|d| d.name() == name)
            .map(|d| d.as_ref())
            .ok_or_else(|| Error::Config(format!("unknown controller `{name}` (known: {})", self.names().join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_registry_lists_all_designs() {
        let r = ControllerRegistry::default();
        assert_eq!(r.names(), vec!["dual-full", "dual-reduced", "low-gain"]);
        assert_eq!(r.get("low-gain").unwrap().kind(), ControllerKind::LowGain);
        assert!(r.get("h-infinity").err().unwrap().is_config_error());
    }
}
