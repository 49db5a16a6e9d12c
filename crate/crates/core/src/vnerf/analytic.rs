//! Closed-form volumes used as rendering references.

use super::render::VolumeField;
use crate::error::Result;

/// Constant density and color everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homogeneous {
    pub sigma: f64,
    pub color: [f64; 3],
}

impl VolumeField for Homogeneous {
    fn query(&self, points: &[[f64; 3]], _: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        Ok((vec![self.sigma; points.len()], vec![self.color; points.len()]))
    }
}

/// Dense slab `lo <= p[axis] < hi`, empty elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slab {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub sigma: f64,
    pub color: [f64; 3],
}

impl VolumeField for Slab {
    fn query(&self, points: &[[f64; 3]], _: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let sigma = points
            .iter()
            .map(|p| if p[self.axis] >= self.lo && p[self.axis] < self.hi { self.sigma } else { 0.0 })
            .collect();
        Ok((sigma, vec![self.color; points.len()]))
    }
}

/// Sum of isotropic Gaussian density blobs with a position-dependent color.
#[derive(Clone, Debug, PartialEq)]
pub struct Blobs {
    pub centers: Vec<[f64; 3]>,
    pub scales: Vec<f64>,
    pub peaks: Vec<f64>,
}

impl VolumeField for Blobs {
    fn query(&self, points: &[[f64; 3]], _: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let sigma = points
            .iter()
            .map(|p| {
                self.centers
                    .iter()
                    .zip(&self.scales)
                    .zip(&self.peaks)
                    .map(|((c, s), a)| {
                        let d2: f64 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum();
                        a * (-d2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            })
            .collect();
        let color = points
            .iter()
            .map(|p| [0.5 + 0.4 * p[0].sin(), 0.5 + 0.4 * p[1].cos(), 0.5 + 0.4 * (p[2] * 0.7).sin()])
            .collect();
        Ok((sigma, color))
    }
}
