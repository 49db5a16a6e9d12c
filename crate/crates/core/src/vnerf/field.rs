use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::render::{
    camera_ray, composite, composite_backward, render_image, sample_ray, Ray, RaySamples, RenderOptions, Sampling,
    VolumeField,
};
use crate::camera::{direction_angles, Intrinsics};
use crate::encoding::PositionalEncoding;
use crate::error::{Error, Result};
use crate::nn::{four_layer_block, sigmoid, softplus, Activation, MlpBlock, ParamSegment, Parameterized, Tape};
use crate::pose::Pose;
use crate::raster::Image;
use crate::rng;
use crate::simulator::SceneSpec;
use crate::train::{train, EpochStats, Objective, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VnerfConfig {
    pub width: usize,
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    /// Positions are mapped to `(p - center) / extent` before encoding.
    pub center: [f64; 3],
    pub extent: f64,
    pub render: RenderOptions,
}

impl Default for VnerfConfig {
    fn default() -> Self {
        Self {
            width: 64,
            position_frequencies: 10,
            direction_frequencies: 4,
            center: [0.0, 0.0, 1.5],
            extent: 5.0,
            render: RenderOptions::default(),
        }
    }
}

impl VnerfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || !(self.extent > 0.0) || self.render.samples < 2 {
            return Err(Error::Config(format!(
                "radiance field needs width >= 2, positive extent and >= 2 samples, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Normalization box and ray range covering the scene's room.
    pub fn for_scene(scene: &SceneSpec) -> Self {
        let mut cfg = Self::default();
        let diameter = scene.diameter();
        match scene.room.as_ref().and_then(|r| r.walls.as_ref()) {
            Some(w) => {
                cfg.center = [0, 1, 2].map(|i| 0.5 * (w.min[i] + w.max[i]));
                cfg.extent = (0..3).map(|i| 0.5 * (w.max[i] - w.min[i])).fold(0.0, f64::max) * 1.05;
            }
            None => {
                let c = scene.region.center();
                cfg.center = [c[0], c[1], scene.listener.height];
                cfg.extent = 0.5 * diameter;
            }
        }
        cfg.render.t_far = diameter;
        cfg
    }
}

/// Density network over encoded position and a color head over its features
/// plus the encoded viewing direction.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField {
    config: VnerfConfig,
    position_pe: PositionalEncoding,
    direction_pe: PositionalEncoding,
    density: MlpBlock,
    color: MlpBlock,
}

pub struct FieldTape {
    density: Tape,
    color: Tape,
    raw_sigma: Vec<f64>,
}

fn with_input(pe: PositionalEncoding) -> PositionalEncoding {
    PositionalEncoding {
        include_input: true,
        ..pe.lenient()
    }
}

impl RadianceField {
    pub fn new<R: rand::Rng + ?Sized>(config: VnerfConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let position_pe = with_input(PositionalEncoding::new(config.position_frequencies));
        let direction_pe = with_input(PositionalEncoding::new(config.direction_frequencies));
        let c = config.width;
        let density = four_layer_block(position_pe.output_dim(3), c, 1 + c, Activation::Identity, rng)?;
        let color = MlpBlock::init(
            &[c + direction_pe.output_dim(2), (c / 2).max(8), 3],
            &[Activation::Relu, Activation::Sigmoid],
            None,
            rng,
        )?;
        Ok(Self {
            config,
            position_pe,
            direction_pe,
            density,
            color,
        })
    }

    pub fn config(&self) -> &VnerfConfig {
        &self.config
    }

    /// Sets the density head to a large negative constant so the field is
    /// (numerically) empty.
    pub fn clear_density(&mut self) {
        let last = self.density.layers().len() - 1;
        let layer = self.density.layer_mut(last);
        layer.weight_mut().row_mut(0).fill(0.0);
        layer.bias_mut()[0] = -100.0;
    }

    fn encode_points(&self, points: &[[f64; 3]]) -> Result<Array2<f64>> {
        let dim = self.position_pe.output_dim(3);
        let mut out = Array2::zeros((points.len(), dim));
        for (p, mut row) in points.iter().zip(out.rows_mut()) {
            let q = [0, 1, 2].map(|i| (p[i] - self.config.center[i]) / self.config.extent);
            self.position_pe
                .encode_into(&q, row.as_slice_mut().expect("row-major"))?;
        }
        Ok(out)
    }

    fn encode_direction(&self, d: [f64; 3]) -> Result<Vec<f64>> {
        let (theta, phi) = direction_angles(d);
        self.direction_pe
            .encode(&[theta / std::f64::consts::PI, phi / std::f64::consts::FRAC_PI_2])
    }

    fn color_input(&self, raw: &Array2<f64>, dirs: &[Vec<f64>], per_dir: usize) -> Array2<f64> {
        let c = self.config.width;
        let dd = self.direction_pe.output_dim(2);
        let n = raw.nrows();
        let mut x = Array2::zeros((n, c + dd));
        x.slice_mut(s![.., ..c]).assign(&raw.slice(s![.., 1..]));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            for (j, v) in dirs[i / per_dir].iter().enumerate() {
                row[c + j] = *v;
            }
        }
        x
    }

    /// Density and color at `points`, where consecutive groups of `per_dir`
    /// points share the viewing direction `dirs[group]`.
    pub fn forward(&self, points: &[[f64; 3]], dirs: &[[f64; 3]], per_dir: usize) -> Result<(Vec<f64>, Vec<[f64; 3]>, FieldTape)> {
        let enc = self.encode_points(points)?;
        let (raw, density) = self.density.forward_batch(enc.view(), &[])?;
        let dir_enc = dirs.iter().map(|&d| self.encode_direction(d)).collect::<Result<Vec<_>>>()?;
        let (rgb, color) = self
            .color
            .forward_batch(self.color_input(&raw, &dir_enc, per_dir).view(), &[])?;
        let raw_sigma: Vec<f64> = raw.column(0).to_vec();
        let sigma = raw_sigma.iter().map(|&z| softplus(z)).collect();
        let colors = rgb.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        Ok((
            sigma,
            colors,
            FieldTape {
                density,
                color,
                raw_sigma,
            },
        ))
    }

    /// Parameter gradient, in `param_segments` order, for upstream gradients on
    /// every sample's density and color.
    pub fn backward(&self, tape: &FieldTape, d_sigma: &[f64], d_color: &[[f64; 3]], out: &mut Vec<f64>) -> Result<()> {
        let n = d_sigma.len();
        let c = self.config.width;
        let g_rgb = Array2::from_shape_fn((n, 3), |(i, ch)| d_color[i][ch]);
        let color_grads = self.color.backward_batch(&tape.color, g_rgb.view())?;
        let mut g_raw = Array2::zeros((n, 1 + c));
        g_raw
            .slice_mut(s![.., 1..])
            .assign(&color_grads.input.slice(s![.., ..c]));
        for (i, (&g, &z)) in d_sigma.iter().zip(&tape.raw_sigma).enumerate() {
            g_raw[[i, 0]] = g * sigmoid(z);
        }
        let density_grads = self.density.backward_batch(&tape.density, g_raw.view())?;
        density_grads.write_flat(out);
        color_grads.write_flat(out);
        Ok(())
    }
}

impl VolumeField for RadianceField {
    fn query(&self, points: &[[f64; 3]], direction: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let enc = self.encode_points(points)?;
        let raw = self.density.infer_batch(enc.view(), &[])?;
        let dir = self.encode_direction(direction)?;
        let rgb = self
            .color
            .infer_batch(self.color_input(&raw, &[dir], points.len().max(1)).view(), &[])?;
        let sigma = raw.column(0).iter().map(|&z| softplus(z)).collect();
        Ok((sigma, rgb.axis_iter(Axis(0)).map(|r| [r[0], r[1], r[2]]).collect()))
    }
}

impl Parameterized for RadianceField {
    fn param_segments(&self) -> Vec<ParamSegment> {
        let mut segs: Vec<ParamSegment> = self
            .density
            .param_segments()
            .into_iter()
            .map(|s| s.prefixed("density"))
            .collect();
        segs.extend(self.color.param_segments().into_iter().map(|s| s.prefixed("color")));
        segs
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.density.write_params(out);
        self.color.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let used = self.density.read_params(src)?;
        Ok(used + self.color.read_params(&src[used..])?)
    }
}

/// Pixel rays with their target colors, trained together as one example.
#[derive(Clone, Debug)]
pub struct RayBundle {
    pub rays: Vec<Ray>,
    pub targets: Vec<[f64; 3]>,
    pub sampling: Sampling,
}

/// Mean over rays and channels of the squared color error.
pub fn color_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (0..3).map(|ch| (p[ch] - t[ch]).powi(2)).sum::<f64>())
        .sum();
    s / (3 * pred.len().max(1)) as f64
}

impl Objective for RadianceField {
    type Example = RayBundle;

    fn accumulate(&self, ex: &RayBundle, grad: &mut [f64]) -> Result<f64> {
        let n = self.config.render.samples;
        let samples: Vec<RaySamples> = ex
            .rays
            .iter()
            .enumerate()
            .map(|(i, r)| sample_ray(r, n, ex.sampling.for_ray(i as u64)))
            .collect::<Result<_>>()?;
        let points: Vec<[f64; 3]> = ex
            .rays
            .iter()
            .zip(&samples)
            .flat_map(|(r, s)| s.t.iter().map(move |&t| r.at(t)))
            .collect();
        let dirs: Vec<[f64; 3]> = ex.rays.iter().map(|r| r.direction).collect();
        let (sigma, color, tape) = self.forward(&points, &dirs, n)?;

        let scale = 2.0 / (3 * ex.rays.len()) as f64;
        let mut d_sigma = Vec::with_capacity(points.len());
        let mut d_color = Vec::with_capacity(points.len());
        let mut pred = Vec::with_capacity(ex.rays.len());
        for (i, s) in samples.iter().enumerate() {
            let span = i * n..(i + 1) * n;
            let comp = composite(&sigma[span.clone()], &color[span.clone()], s);
            let g = [0, 1, 2].map(|ch| scale * (comp.color[ch] - ex.targets[i][ch]));
            let (ds, dc) = composite_backward(&sigma[span.clone()], &color[span], s, &comp, g);
            d_sigma.extend(ds);
            d_color.extend(dc);
            pred.push(comp.color);
        }
        let mut flat = Vec::with_capacity(grad.len());
        self.backward(&tape, &d_sigma, &d_color, &mut flat)?;
        grad.iter_mut().zip(&flat).for_each(|(a, b)| *a += b);
        Ok(color_loss(&pred, &ex.targets))
    }
}

/// A posed ground-truth RGB view.
#[derive(Clone, Debug)]
pub struct View {
    pub pose: Pose,
    pub rgb: Image,
}

/// Every pixel ray of `views`, shuffled with `seed` and grouped into bundles of
/// `bundle` rays.
pub fn ray_bundles(views: &[View], hfov: f64, opts: &RenderOptions, bundle: usize, seed: u64) -> Result<Vec<RayBundle>> {
    if bundle == 0 {
        return Err(Error::Config("ray bundle size must be positive".into()));
    }
    let mut all = Vec::new();
    for v in views {
        let k = Intrinsics::from_hfov(v.rgb.width(), v.rgb.height(), hfov)?;
        for r in 0..v.rgb.height() {
            for c in 0..v.rgb.width() {
                let px = v.rgb.pixel(r, c);
                all.push((camera_ray(&v.pose, &k, r, c, opts)?, [px[0] as f64, px[1] as f64, px[2] as f64]));
            }
        }
    }
    all.shuffle(&mut rng::seeded(rng::derive(seed, 0x7261_7973)));
    Ok(all
        .chunks(bundle)
        .enumerate()
        .map(|(i, chunk)| RayBundle {
            rays: chunk.iter().map(|x| x.0).collect(),
            targets: chunk.iter().map(|x| x.1).collect(),
            sampling: opts.sampling.for_ray(i as u64),
        })
        .collect())
}

/// Fits the field to posed RGB views by minimizing the per-ray color error.
pub fn train_vnerf<F>(
    field: &mut RadianceField,
    views: &[View],
    hfov: f64,
    cfg: &TrainConfig,
    bundle: usize,
    on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &RadianceField, &crate::nn::AdamState) -> Result<()>,
{
    let bundles = ray_bundles(views, hfov, &field.config.render, bundle, cfg.seed)?;
    let (stats, _) = train(field, &bundles, cfg, None, on_epoch)?;
    Ok(stats)
}

/// Renders `view`'s pose at its resolution and returns the PSNR against it.
pub fn view_psnr(field: &RadianceField, view: &View, hfov: f64) -> Result<f64> {
    let k = Intrinsics::from_hfov(view.rgb.width(), view.rgb.height(), hfov)?;
    let opts = RenderOptions {
        sampling: Sampling::Midpoint,
        ..field.config.render
    };
    let (rgb, _) = render_image(field, &view.pose, view.rgb.width(), view.rgb.height(), &k, &opts)?;
    rgb.psnr(&view.rgb)
}
