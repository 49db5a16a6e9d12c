use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Listener/camera pose. Positions in meters, angles in radians.
///
/// `theta` is the heading in the horizontal plane (counter-clockwise from +x);
/// `phi` is the elevation (pitch) and is only used by the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, theta: f64, phi: f64) -> Self {
        Self { x, y, z, theta, phi }
    }

    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Self::new(x, y, 0.0, theta, 0.0)
    }

    pub fn position2(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn position3(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.theta, self.phi].iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Input(format!("pose has non-finite fields: {self:?}")))
        }
    }
}

/// Axis-aligned horizontal rectangle used to map positions onto `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl PlanarBounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i]);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bounds {:?} .. {:?}", self.min, self.max)))
        }
    }

    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|i| 2.0 * (p[i] - self.min[i]) / (self.max[i] - self.min[i]) - 1.0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> [f64; 2] {
        [0, 1].map(|i| 0.5 * (self.min[i] + self.max[i]))
    }
}

impl Default for PlanarBounds {
    fn default() -> Self {
        Self {
            min: [-1.0, -1.0],
            max: [1.0, 1.0],
        }
    }
}
