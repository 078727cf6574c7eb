use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::InletProfile;
use crate::mesh::Segment;

/// Spatial profile of an actuator, sensor or boundary disturbance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeSpec {
    /// `amplitude` on `[x0,x1] x [y0,y1]`, zero elsewhere.
    IndicatorRectangle {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        amplitude: f64,
    },
    /// `amplitude` on a boundary segment.
    BoundaryIndicator { segment: Segment, amplitude: f64 },
    /// Horizontal component of an inlet velocity profile, scaled.
    InletFluxProfile { profile: InletProfile, amplitude: f64 },
}

impl ShapeSpec {
    pub fn rectangle(x: [f64; 2], y: [f64; 2], amplitude: f64) -> Self {
        ShapeSpec::IndicatorRectangle {
            x0: x[0],
            x1: x[1],
            y0: y[0],
            y1: y[1],
            amplitude,
        }
    }

    /// Actuator `b = chi_[0,0.05]x[0.1,0.4]`.
    pub fn room_actuator() -> Self {
        ShapeSpec::rectangle([0.0, 0.05], [0.1, 0.4], 1.0)
    }

    /// Sensor `c1 = 0.2^-2 chi_[0.7,0.9]x[0.1,0.3]`.
    pub fn room_sensor_1() -> Self {
        ShapeSpec::rectangle([0.7, 0.9], [0.1, 0.3], 0.2f64.powi(-2))
    }

    /// Sensor `c2 = 0.2^-2 chi_[0.1,0.3]x[0.7,0.9]`.
    pub fn room_sensor_2() -> Self {
        ShapeSpec::rectangle([0.1, 0.3], [0.7, 0.9], 0.2f64.powi(-2))
    }

    pub fn boundary_indicator(segment: Segment) -> Self {
        ShapeSpec::BoundaryIndicator {
            segment,
            amplitude: 1.0,
        }
    }

    pub fn is_boundary(&self) -> bool {
        !matches!(self, ShapeSpec::IndicatorRectangle { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShapeSpec::IndicatorRectangle { x0, x1, y0, y1, amplitude } => {
                x0 <= x1 && y0 <= y1 && amplitude.is_finite()
            }
            ShapeSpec::BoundaryIndicator { segment, amplitude } => {
                segment.lo <= segment.hi && amplitude.is_finite()
            }
            ShapeSpec::InletFluxProfile { amplitude, .. } => amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed shape {self:?}")))
        }
    }

    /// Pointwise value on the boundary (boundary kinds only).
    pub fn boundary_value(&self, p: [f64; 2]) -> f64 {
        match *self {
            ShapeSpec::BoundaryIndicator { segment, amplitude } => {
                if segment.contains(p) {
                    amplitude
                } else {
                    0.0
                }
            }
            ShapeSpec::InletFluxProfile { profile, amplitude } => amplitude * profile.eval(p[1])[0],
            ShapeSpec::IndicatorRectangle { x0, x1, y0, y1, amplitude } => {
                if p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1 {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }
}
