use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{pixel_direction, Intrinsics};
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::raster::Image;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: [f64; 3], direction: [f64; 3], t_near: f64, t_far: f64) -> Result<Self> {
        let r = Self {
            origin,
            direction,
            t_near,
            t_far,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let finite = self.origin.iter().chain(&self.direction).all(|v| v.is_finite());
        if !finite || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "ray needs a finite origin and unit direction, got {:?} / {:?}",
                self.origin, self.direction
            )));
        }
        if !(self.t_near >= 0.0 && self.t_near < self.t_far && self.t_far.is_finite()) {
            return Err(Error::Input(format!(
                "ray interval [{}, {}] is empty or invalid",
                self.t_near, self.t_far
            )));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        [0, 1, 2].map(|i| self.origin[i] + t * self.direction[i])
    }
}

/// Where samples sit inside each of the `n` equal bins of the ray interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Midpoint,
    /// Uniform jitter within each bin, reproducible from the seed.
    Stratified { seed: u64 },
}

impl Sampling {
    /// The same scheme with an independent jitter stream for ray `index`.
    pub fn for_ray(self, index: u64) -> Self {
        match self {
            Sampling::Midpoint => Sampling::Midpoint,
            Sampling::Stratified { seed } => Sampling::Stratified {
                seed: rng::derive(seed, index),
            },
        }
    }
}

/// Sample distances along a ray; each sample stands for its whole bin, so the
/// interval widths sum to `t_far - t_near`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
}

pub fn sample_ray(ray: &Ray, n: usize, sampling: Sampling) -> Result<RaySamples> {
    if n < 2 {
        return Err(Error::Input(format!("need at least 2 samples per ray, got {n}")));
    }
    ray.validate()?;
    let width = (ray.t_far - ray.t_near) / n as f64;
    let t = match sampling {
        Sampling::Midpoint => (0..n).map(|i| ray.t_near + (i as f64 + 0.5) * width).collect(),
        Sampling::Stratified { seed } => {
            let mut r = rng::seeded(seed);
            (0..n)
                .map(|i| ray.t_near + (i as f64 + r.random::<f64>()) * width)
                .collect()
        }
    };
    Ok(RaySamples {
        t,
        delta: vec![width; n],
    })
}

/// Result of alpha-compositing one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    /// Weighted sample distance; zero when nothing is hit.
    pub depth: f64,
    pub weights: Vec<f64>,
    /// Transmittance before each sample.
    pub transmittance: Vec<f64>,
}

pub fn composite(sigma: &[f64], color: &[[f64; 3]], s: &RaySamples) -> Composite {
    let n = s.t.len();
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut optical = 0.0f64;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    for i in 0..n {
        let t = (-optical).exp();
        let tau = sigma[i] * s.delta[i];
        let w = t * -(-tau).exp_m1();
        for ch in 0..3 {
            rgb[ch] += w * color[i][ch];
        }
        depth += w * s.t[i];
        weights.push(w);
        transmittance.push(t);
        optical += tau;
    }
    Composite {
        color: rgb,
        depth,
        weights,
        transmittance,
    }
}

/// Gradients of `<grad_color, C>` with respect to each sample's density and color.
pub fn composite_backward(
    sigma: &[f64],
    color: &[[f64; 3]],
    s: &RaySamples,
    c: &Composite,
    grad_color: [f64; 3],
) -> (Vec<f64>, Vec<[f64; 3]>) {
    let n = sigma.len();
    let mut d_sigma = vec![0.0; n];
    let d_color: Vec<[f64; 3]> = c.weights.iter().map(|&w| grad_color.map(|g| g * w)).collect();
    // Running sum of w_i <g, c_i> over samples behind the current one.
    let mut behind = 0.0;
    for k in (0..n).rev() {
        let gc = (0..3).map(|ch| grad_color[ch] * color[k][ch]).sum::<f64>();
        let t_next = c.transmittance[k] * (-sigma[k] * s.delta[k]).exp();
        d_sigma[k] = s.delta[k] * (t_next * gc - behind);
        behind += c.weights[k] * gc;
    }
    (d_sigma, d_color)
}

/// Anything that reports density and color at points seen from a direction.
pub trait VolumeField: Sync {
    fn query(&self, points: &[[f64; 3]], direction: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)>;
}

pub fn render_ray<F: VolumeField + ?Sized>(field: &F, ray: &Ray, n: usize, sampling: Sampling) -> Result<Composite> {
    let s = sample_ray(ray, n, sampling)?;
    let pts: Vec<[f64; 3]> = s.t.iter().map(|&t| ray.at(t)).collect();
    let (sigma, color) = field.query(&pts, ray.direction)?;
    Ok(composite(&sigma, &color, &s))
}

pub fn render_color<F: VolumeField + ?Sized>(field: &F, ray: &Ray, n: usize, sampling: Sampling) -> Result<[f64; 3]> {
    Ok(render_ray(field, ray, n, sampling)?.color)
}

pub fn render_depth<F: VolumeField + ?Sized>(field: &F, ray: &Ray, n: usize, sampling: Sampling) -> Result<f64> {
    Ok(render_ray(field, ray, n, sampling)?.depth)
}

/// Sampling parameters shared by every ray of a view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub samples: usize,
    pub t_near: f64,
    pub t_far: f64,
    pub sampling: Sampling,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            t_near: 0.05,
            t_far: 8.0,
            sampling: Sampling::Stratified { seed: 0 },
        }
    }
}

pub fn camera_ray(pose: &Pose, k: &Intrinsics, row: usize, col: usize, opts: &RenderOptions) -> Result<Ray> {
    Ray::new(pose.position3(), pixel_direction(pose, k, row, col), opts.t_near, opts.t_far)
}

/// Renders an RGB image and a ray-distance depth image, one ray per pixel
/// center, rows in parallel.
pub fn render_image<F: VolumeField + ?Sized>(
    field: &F,
    pose: &Pose,
    width: usize,
    height: usize,
    k: &Intrinsics,
    opts: &RenderOptions,
) -> Result<(Image, Image)> {
    k.validate()?;
    let rows: Vec<Vec<Composite>> = (0..height)
        .into_par_iter()
        .map(|r| {
            (0..width)
                .map(|c| {
                    let ray = camera_ray(pose, k, r, c, opts)?;
                    render_ray(field, &ray, opts.samples, opts.sampling.for_ray((r * width + c) as u64))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rgb = Image::new(width, height, 3);
    let mut depth = Image::new(width, height, 1);
    for (r, row) in rows.iter().enumerate() {
        for (c, comp) in row.iter().enumerate() {
            let px = rgb.pixel_mut(r, c);
            for ch in 0..3 {
                px[ch] = comp.color[ch] as f32;
            }
            depth.pixel_mut(r, c)[0] = comp.depth as f32;
        }
    }
    Ok((rgb, depth))
}
