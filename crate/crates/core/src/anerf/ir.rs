//! Impulse-response variant: the frequency query becomes a time query and the
//! second network emits two-channel IR samples directly.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::DirectionInjection;
use crate::dsp::{StftConfig, StftPlan};
use crate::encoding::{relative_direction, wrap_angle, Blend, DirectionEmbedding, PositionalEncoding};
use crate::error::{Error, Result};
use crate::nn::{four_layer_block, Activation, Injection, MlpBlock, ParamSegment, Parameterized, Tape};
use crate::pose::{PlanarBounds, Pose};
use crate::train::Objective;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrConfig {
    pub width: usize,
    /// IR length `T` in samples.
    pub ir_length: usize,
    pub pe_frequencies: usize,
    pub time_frequencies: usize,
    pub coordinate_transform: bool,
    pub direction_injection: DirectionInjection,
    pub bounds: PlanarBounds,
    /// Spectrogram settings of the magnitude loss.
    pub stft: StftConfig,
}

impl Default for IrConfig {
    fn default() -> Self {
        Self {
            width: 128,
            ir_length: 4096,
            pe_frequencies: 10,
            time_frequencies: 10,
            coordinate_transform: true,
            direction_injection: DirectionInjection::PerLayer,
            bounds: PlanarBounds::default(),
            stft: StftConfig::default(),
        }
    }
}

const OUTPUT_INIT_SCALE: f64 = 0.01;

pub struct IrTape {
    feature_tape: Tape,
    sample_tape: Tape,
    blend: Blend,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrANerfModel {
    config: IrConfig,
    pe: PositionalEncoding,
    time_codes: Array2<f64>,
    mlp1: MlpBlock,
    mlp2: MlpBlock,
    direction: DirectionEmbedding,
}

impl IrANerfModel {
    pub fn new<R: Rng + ?Sized>(config: &IrConfig, rng: &mut R) -> Result<Self> {
        config.bounds.validate()?;
        config.stft.validate()?;
        let t_len = config.ir_length;
        if t_len < 2 || config.width == 0 {
            return Err(Error::Config(format!(
                "IR length ({t_len}) must be at least 2 and width ({}) positive",
                config.width
            )));
        }
        let c = config.width;
        let pe = PositionalEncoding::new(config.pe_frequencies).lenient();
        let tpe = PositionalEncoding::new(config.time_frequencies);
        let mut time_codes = Array2::zeros((t_len, tpe.output_dim(1)));
        for t in 0..t_len {
            let tn = 2.0 * t as f64 / (t_len - 1) as f64 - 1.0;
            tpe.encode_into(&[tn], time_codes.row_mut(t).as_slice_mut().expect("contiguous"))?;
        }
        let mlp1 = four_layer_block(pe.output_dim(2) + time_codes.ncols(), c, c, Activation::Identity, rng)?;
        let in2 = match config.direction_injection {
            DirectionInjection::PerLayer => c,
            DirectionInjection::Concat => 2 * c,
        };
        let mut mlp2 = four_layer_block(in2, c, 2, Activation::Identity, rng)?;
        // Start near silence: impulse responses are mostly a quiet tail.
        let last = mlp2.layers().len() - 1;
        mlp2.layer_mut(last).weight_mut().mapv_inplace(|w| w * OUTPUT_INIT_SCALE);
        mlp2.layer_mut(last).bias_mut().fill(0.0);
        let direction = DirectionEmbedding::init(c, rng);
        Ok(Self {
            config: config.clone(),
            pe,
            time_codes,
            mlp1,
            mlp2,
            direction,
        })
    }

    pub fn config(&self) -> &IrConfig {
        &self.config
    }

    pub fn ir_length(&self) -> usize {
        self.config.ir_length
    }

    pub fn zero_output_layers(&mut self) {
        let last = self.mlp2.layers().len() - 1;
        let layer = self.mlp2.layer_mut(last);
        layer.weight_mut().fill(0.0);
        layer.bias_mut().fill(0.0);
    }

    fn angle(&self, pose: &Pose, source: [f64; 2]) -> Result<f64> {
        let rel = relative_direction(pose.position2(), pose.theta, source)?;
        Ok(if self.config.coordinate_transform {
            rel
        } else {
            wrap_angle(pose.theta)
        })
    }

    pub fn predict_ir(&self, pose: &Pose, source: [f64; 2]) -> Result<[Vec<f64>; 2]> {
        Ok(self.forward(pose, source)?.0)
    }

    pub fn forward(&self, pose: &Pose, source: [f64; 2]) -> Result<([Vec<f64>; 2], IrTape)> {
        let blend = Blend::for_angle(self.angle(pose, source)?);
        let dir = self.direction.blend(&blend);
        let pos = self.pe.encode(&self.config.bounds.normalize(pose.position2()))?;
        let t_len = self.config.ir_length;
        let mut x = Array2::zeros((t_len, self.mlp1.input_dim()));
        let p = pos.len();
        for (t, mut row) in x.outer_iter_mut().enumerate() {
            row.slice_mut(s![..p]).assign(&ArrayView1::from(&pos));
            row.slice_mut(s![p..]).assign(&self.time_codes.row(t));
        }
        let (feature, feature_tape) = self.mlp1.forward_batch(x.view(), &[])?;
        let d2 = dir.view().insert_axis(Axis(0));
        let (y, sample_tape) = match self.config.direction_injection {
            DirectionInjection::PerLayer => {
                let inj: Vec<Injection> = (0..4).map(|layer| Injection { layer, values: d2 }).collect();
                self.mlp2.forward_batch(feature.view(), &inj)?
            }
            DirectionInjection::Concat => {
                let c = self.config.width;
                let mut x2 = Array2::zeros((t_len, 2 * c));
                x2.slice_mut(s![.., ..c]).assign(&feature);
                x2.slice_mut(s![.., c..]).assign(&d2.broadcast((t_len, c)).expect("row broadcast"));
                self.mlp2.forward_batch(x2.view(), &[])?
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("IR prediction produced non-finite samples".into()));
        }
        let ir = [y.column(0).to_vec(), y.column(1).to_vec()];
        Ok((
            ir,
            IrTape {
                feature_tape,
                sample_tape,
                blend,
            },
        ))
    }

    /// Appends the parameter gradient for upstream gradients on both channels.
    pub fn backward(&self, tape: &IrTape, grad: [&[f64]; 2], out: &mut Vec<f64>) -> Result<()> {
        let t_len = self.config.ir_length;
        let c = self.config.width;
        if grad.iter().any(|g| g.len() != t_len) {
            return Err(Error::Input(format!("IR gradients must have {t_len} samples")));
        }
        let mut g = Array2::zeros((t_len, 2));
        for ch in 0..2 {
            g.column_mut(ch).assign(&ArrayView1::from(grad[ch]));
        }
        let b2 = self.mlp2.backward_batch(&tape.sample_tape, g.view())?;
        let mut dir_grad = Array1::zeros(c);
        let g_feature = match self.config.direction_injection {
            DirectionInjection::PerLayer => {
                for inj in &b2.injections {
                    dir_grad += &inj.row(0);
                }
                b2.input.clone()
            }
            DirectionInjection::Concat => {
                dir_grad += &b2.input.slice(s![.., c..]).sum_axis(Axis(0));
                b2.input.slice(s![.., ..c]).to_owned()
            }
        };
        let b1 = self.mlp1.backward_batch(&tape.feature_tape, g_feature.view())?;
        b1.write_flat(out);
        b2.write_flat(out);
        let mut table = Array2::zeros((4, c));
        self.direction.accumulate_grad(&tape.blend, dir_grad.view(), &mut table);
        out.extend(table.iter().copied());
        Ok(())
    }
}

impl Parameterized for IrANerfModel {
    fn param_segments(&self) -> Vec<ParamSegment> {
        let mut segs: Vec<ParamSegment> = self
            .mlp1
            .param_segments()
            .into_iter()
            .map(|s| s.prefixed("feature_mlp"))
            .collect();
        segs.extend(self.mlp2.param_segments().into_iter().map(|s| s.prefixed("sample_mlp")));
        segs.extend(self.direction.param_segments().into_iter().map(|s| s.prefixed("direction")));
        segs
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.mlp1.write_params(out);
        self.mlp2.write_params(out);
        self.direction.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let mut used = self.mlp1.read_params(src)?;
        used += self.mlp2.read_params(&src[used..])?;
        used += self.direction.read_params(&src[used..])?;
        Ok(used)
    }
}

/// A ground-truth two-channel IR at a pose, with its magnitude spectrograms
/// precomputed for the loss.
#[derive(Clone, Debug)]
pub struct IrExample {
    pub pose: Pose,
    pub target: [Vec<f64>; 2],
    pub target_magnitude: [Array2<f64>; 2],
}

impl IrExample {
    pub fn new(pose: Pose, target: [Vec<f64>; 2], stft: StftConfig) -> Result<Self> {
        let plan = StftPlan::new(stft)?;
        let target_magnitude = [plan.analyze(&target[0])?.magnitude, plan.analyze(&target[1])?.magnitude];
        Ok(Self {
            pose,
            target,
            target_magnitude,
        })
    }
}

/// An IR model bound to the position of its source.
#[derive(Clone, Debug, PartialEq)]
pub struct IrField {
    pub model: IrANerfModel,
    pub source: [f64; 2],
}

impl IrField {
    pub fn predict(&self, pose: &Pose) -> Result<[Vec<f64>; 2]> {
        self.model.predict_ir(pose, self.source)
    }
}

/// Mean over both channels of the per-element squared STFT-magnitude error.
pub fn ir_magnitude_loss(pred: &[Vec<f64>; 2], target: &[Array2<f64>; 2], stft: StftConfig) -> Result<f64> {
    let plan = StftPlan::new(stft)?;
    let mut total = 0.0;
    for ch in 0..2 {
        let m = plan.analyze(&pred[ch])?.magnitude;
        if m.dim() != target[ch].dim() {
            return Err(Error::Input("IR spectrogram shapes differ".into()));
        }
        total += (&m - &target[ch]).mapv(|d| d * d).mean().unwrap_or(0.0);
    }
    Ok(0.5 * total)
}

impl Objective for IrField {
    type Example = IrExample;

    fn accumulate(&self, ex: &IrExample, grad: &mut [f64]) -> Result<f64> {
        let stft = self.model.config.stft;
        let plan = StftPlan::new(stft)?;
        let (ir, tape) = self.model.forward(&ex.pose, self.source)?;
        let mut loss = 0.0;
        let mut sample_grads: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for ch in 0..2 {
            let m = plan.analyze(&ir[ch])?.magnitude;
            let diff = &m - &ex.target_magnitude[ch];
            let n = diff.len() as f64;
            loss += 0.5 * diff.mapv(|d| d * d).sum() / n;
            let g = diff * (1.0 / n);
            sample_grads[ch] = plan.magnitude_vjp(&ir[ch], &g)?;
        }
        let mut flat = Vec::with_capacity(grad.len());
        self.model
            .backward(&tape, [&sample_grads[0], &sample_grads[1]], &mut flat)?;
        grad.iter_mut().zip(&flat).for_each(|(a, b)| *a += b);
        Ok(loss)
    }
}

impl Parameterized for IrField {
    fn param_segments(&self) -> Vec<ParamSegment> {
        self.model.param_segments()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.model.write_params(out)
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        self.model.read_params(src)
    }
}
