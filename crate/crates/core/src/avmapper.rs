//! Frozen convolutional image features and the trainable projector that turns
//! them into the acoustic field's conditioning embedding.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, MlpBlock, ParamSegment, Parameterized, Tape};
use crate::raster::Image;
use crate::rng;

pub const ENCODER_INPUT: usize = 64;
pub const FEATURE_DIM: usize = 512;

const CHANNELS: [usize; 5] = [3, 16, 32, 64, 128];

struct Conv {
    in_ch: usize,
    out_ch: usize,
    // [out][in][3][3]
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv {
    /// 3x3, stride 2, zero padding 1, ReLU.
    fn apply(&self, input: &[f64], size: usize) -> Vec<f64> {
        let out_size = size / 2;
        let mut out = vec![0.0; self.out_ch * out_size * out_size];
        for o in 0..self.out_ch {
            let plane = &mut out[o * out_size * out_size..(o + 1) * out_size * out_size];
            plane.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let src = &input[i * size * size..(i + 1) * size * size];
                let k = &self.weight[(o * self.in_ch + i) * 9..(o * self.in_ch + i + 1) * 9];
                for y in 0..out_size {
                    for x in 0..out_size {
                        let mut acc = 0.0;
                        for ky in 0..3 {
                            let sy = (2 * y + ky) as isize - 1;
                            if sy < 0 || sy >= size as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let sx = (2 * x + kx) as isize - 1;
                                if sx < 0 || sx >= size as isize {
                                    continue;
                                }
                                acc += k[ky * 3 + kx] * src[sy as usize * size + sx as usize];
                            }
                        }
                        plane[y * out_size + x] += acc;
                    }
                }
            }
            plane.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        out
    }
}

/// Fixed random-weight convolution stack: four stride-2 stages
/// (3 -> 16 -> 32 -> 64 -> 128 channels, 64 -> 4 pixels) and a final 2x2 average
/// pool, giving 128 x 2 x 2 = 512 features per image.
pub struct FrozenEncoder {
    seed: u64,
    stages: Vec<Conv>,
}

impl std::fmt::Debug for FrozenEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrozenEncoder").field("seed", &self.seed).finish()
    }
}

impl FrozenEncoder {
    pub fn new(seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let stages = CHANNELS
            .windows(2)
            .map(|w| {
                let (in_ch, out_ch) = (w[0], w[1]);
                let bound = (6.0 / (in_ch * 9) as f64).sqrt();
                Conv {
                    in_ch,
                    out_ch,
                    weight: (0..out_ch * in_ch * 9).map(|_| r.random_range(-bound..bound)).collect(),
                    bias: (0..out_ch).map(|_| r.random_range(0.0..0.05)).collect(),
                }
            })
            .collect();
        Self { seed, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encodes a 64x64 image with 3 channels, or 1 channel replicated to 3.
    pub fn encode(&self, image: &Image) -> Result<Vec<f64>> {
        if image.width() != ENCODER_INPUT || image.height() != ENCODER_INPUT {
            return Err(Error::Input(format!(
                "encoder expects {ENCODER_INPUT}x{ENCODER_INPUT} images, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let ch = image.channels();
        if ch != 1 && ch != 3 {
            return Err(Error::Input(format!("encoder expects 1 or 3 channels, got {ch}")));
        }
        let n = ENCODER_INPUT * ENCODER_INPUT;
        let mut x = vec![0.0; 3 * n];
        for (p, px) in image.data().chunks_exact(ch).enumerate() {
            for c in 0..3 {
                x[c * n + p] = px[if ch == 1 { 0 } else { c }] as f64;
            }
        }
        let mut size = ENCODER_INPUT;
        for stage in &self.stages {
            x = stage.apply(&x, size);
            size /= 2;
        }
        // size == 4: average 2x2 blocks.
        let mut out = Vec::with_capacity(FEATURE_DIM);
        for c in 0..CHANNELS[4] {
            let plane = &x[c * 16..(c + 1) * 16];
            for by in 0..2 {
                for bx in 0..2 {
                    let s = plane[(2 * by) * 4 + 2 * bx]
                        + plane[(2 * by) * 4 + 2 * bx + 1]
                        + plane[(2 * by + 1) * 4 + 2 * bx]
                        + plane[(2 * by + 1) * 4 + 2 * bx + 1];
                    out.push(0.25 * s);
                }
            }
        }
        Ok(out)
    }
}

/// Frozen features of one rendered view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualFeatures {
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
}

impl VisualFeatures {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.rgb.len() + self.depth.len());
        v.extend_from_slice(&self.rgb);
        v.extend_from_slice(&self.depth);
        v
    }
}

/// Encodes an RGB view and its depth map. Depth is divided by `depth_scale`
/// (the scene diameter) and clamped to `[0, 1]` first. Both images must already
/// be at the encoder resolution; see [`prepare_view`].
pub fn encode_views(enc: &FrozenEncoder, rgb: &Image, depth: &Image, depth_scale: f64) -> Result<VisualFeatures> {
    if rgb.channels() != 3 || depth.channels() != 1 {
        return Err(Error::Input(format!(
            "expected rgb (3 channels) and depth (1 channel), got {} and {}",
            rgb.channels(),
            depth.channels()
        )));
    }
    if !(depth_scale > 0.0) {
        return Err(Error::Input(format!("depth scale must be positive, got {depth_scale}")));
    }
    let s = depth_scale as f32;
    let depth = depth.map(|d| (d / s).clamp(0.0, 1.0));
    Ok(VisualFeatures {
        rgb: enc.encode(rgb)?,
        depth: enc.encode(&depth)?,
    })
}

/// Resizes a rendered view to the encoder's input resolution.
pub fn prepare_view(img: &Image) -> Image {
    img.resize(ENCODER_INPUT, ENCODER_INPUT)
}

/// Three-layer projector `1024 -> c -> c -> c` (ReLU, ReLU, identity).
#[derive(Clone, Debug, PartialEq)]
pub struct AvMapper {
    mlp: MlpBlock,
}

impl AvMapper {
    pub fn new<R: rand::Rng + ?Sized>(width: usize, rng: &mut R) -> Result<Self> {
        let mlp = MlpBlock::init(
            &[2 * FEATURE_DIM, width, width, width],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            None,
            rng,
        )?;
        Ok(Self { mlp })
    }

    pub fn width(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn mlp(&self) -> &MlpBlock {
        &self.mlp
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.mlp.layers().len() - 1;
        let layer = self.mlp.layer_mut(last);
        layer.weight_mut().fill(0.0);
        layer.bias_mut().fill(0.0);
    }

    pub fn map(&self, features: &VisualFeatures) -> Result<Array1<f64>> {
        Ok(self.forward(features)?.0)
    }

    pub fn forward(&self, features: &VisualFeatures) -> Result<(Array1<f64>, Tape)> {
        if features.rgb.len() != FEATURE_DIM || features.depth.len() != FEATURE_DIM {
            return Err(Error::Input(format!(
                "mapper expects two {FEATURE_DIM}-feature vectors, got {} and {}",
                features.rgb.len(),
                features.depth.len()
            )));
        }
        let x = Array2::from_shape_vec((1, 2 * FEATURE_DIM), features.concat()).expect("shape checked");
        let (y, tape) = self.mlp.forward_batch(x.view(), &[])?;
        Ok((y.row(0).to_owned(), tape))
    }

    /// Parameter gradient (flat, in `param_segments` order) for an upstream
    /// gradient on the embedding.
    pub fn backward(&self, tape: &Tape, grad: &Array1<f64>, out: &mut Vec<f64>) -> Result<()> {
        let g: ArrayView2<f64> = grad.view().insert_axis(ndarray::Axis(0));
        self.mlp.backward_batch(tape, g)?.write_flat(out);
        Ok(())
    }
}

pub fn map_features(mapper: &AvMapper, features: &VisualFeatures) -> Result<Array1<f64>> {
    mapper.map(features)
}

impl Parameterized for AvMapper {
    fn param_segments(&self) -> Vec<ParamSegment> {
        self.mlp.param_segments()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.mlp.write_params(out)
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        self.mlp.read_params(src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_output_has_fixed_width() {
        let enc = FrozenEncoder::new(7);
        let f = enc.encode(&Image::new(64, 64, 3)).unwrap();
        assert_eq!(f.len(), FEATURE_DIM);
        assert!(enc.encode(&Image::new(32, 32, 3)).is_err());
    }

    #[test]
    fn zeroed_mapper_emits_zero() {
        let mut m = AvMapper::new(16, &mut rng::seeded(1)).unwrap();
        m.zero_output_layer();
        let feats = VisualFeatures {
            rgb: vec![0.3; FEATURE_DIM],
            depth: vec![0.1; FEATURE_DIM],
        };
        let e = m.map(&feats).unwrap();
        assert_eq!(e.len(), 16);
        assert!(e.iter().all(|&v| v == 0.0));
    }
}
