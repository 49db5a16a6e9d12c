//! Pinhole camera shared by the analytic renderer and the radiance field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;

/// Focal length and principal point, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Centered principal point and the focal length giving horizontal field of
    /// view `hfov` (radians) at `width` pixels.
    pub fn from_hfov(width: usize, height: usize, hfov: f64) -> Result<Self> {
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) || width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "cannot build intrinsics for {width}x{height} at field of view {hfov}"
            )));
        }
        Ok(Self {
            focal: 0.5 * width as f64 / (0.5 * hfov).tan(),
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.focal > 0.0 && self.focal.is_finite() && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid intrinsics {self:?}")))
        }
    }
}

pub fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Camera basis `(forward, right, up)` for heading `theta` and pitch `phi`.
pub fn basis(pose: &Pose) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (st, ct) = pose.theta.sin_cos();
    let (sp, cp) = pose.phi.sin_cos();
    let forward = [cp * ct, cp * st, sp];
    let right = [st, -ct, 0.0];
    let up = cross(right, forward);
    (forward, right, up)
}

/// Unit direction of the ray through the center of pixel `(row, col)`.
pub fn pixel_direction(pose: &Pose, k: &Intrinsics, row: usize, col: usize) -> [f64; 3] {
    let (f, r, u) = basis(pose);
    let x = (col as f64 + 0.5 - k.cx) / k.focal;
    let y = -(row as f64 + 0.5 - k.cy) / k.focal;
    normalize([0, 1, 2].map(|i| f[i] + x * r[i] + y * u[i]))
}

/// Heading and elevation of a unit direction.
pub fn direction_angles(d: [f64; 3]) -> (f64, f64) {
    (d[1].atan2(d[0]), d[2].clamp(-1.0, 1.0).asin())
}
