use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{relative_direction, wrap_angle, Blend, DirectionEmbedding, PositionalEncoding};
use crate::error::{Error, Result};
use crate::nn::{four_layer_block, sigmoid, Activation, Injection, MlpBlock, ParamSegment, Parameterized, Tape};
use crate::pose::{PlanarBounds, Pose};

/// Where the visual embedding enters the first MLP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Added to the input of the first hidden layer.
    AddInput,
    /// Appended to the encoded position/frequency input.
    Concat,
    /// Added to the inputs of every hidden layer.
    AddAll,
}

/// How the direction embedding enters the second MLP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionInjection {
    /// Added to the input of each of its linear layers.
    PerLayer,
    /// Concatenated with the feature vector.
    Concat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ANerfConfig {
    pub width: usize,
    /// Number of frequency bins `F` (`n_fft / 2 + 1`).
    pub num_bins: usize,
    pub pe_frequencies: usize,
    /// Use the source-relative heading instead of the absolute heading.
    pub coordinate_transform: bool,
    pub direction_injection: DirectionInjection,
    pub fusion: Fusion,
    /// Condition on rendered views through the AV mapper.
    pub av_mapper: bool,
    /// Apply a trainable 3x3 convolution to the composed left/right magnitudes.
    pub refine: bool,
    /// Region mapped onto `[-1, 1]^2` before encoding positions.
    pub bounds: PlanarBounds,
}

impl Default for ANerfConfig {
    fn default() -> Self {
        Self {
            width: 128,
            num_bins: 257,
            pe_frequencies: 10,
            coordinate_transform: true,
            direction_injection: DirectionInjection::PerLayer,
            fusion: Fusion::AddInput,
            av_mapper: false,
            refine: false,
            bounds: PlanarBounds::default(),
        }
    }
}

impl ANerfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.num_bins < 2 {
            return Err(Error::Config(format!(
                "width ({}) must be positive and bins ({}) at least 2",
                self.width, self.num_bins
            )));
        }
        self.bounds.validate()
    }
}

/// Per-frequency mixture mask (`mix`, in `[0, 1]`) and difference mask
/// (`diff`, in `[-1, 1]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPair {
    pub mix: Vec<f64>,
    pub diff: Vec<f64>,
}

impl MaskPair {
    pub fn identity(bins: usize) -> Self {
        Self {
            mix: vec![1.0; bins],
            diff: vec![0.0; bins],
        }
    }

    pub fn constant(bins: usize, mix: f64, diff: f64) -> Self {
        Self {
            mix: vec![mix; bins],
            diff: vec![diff; bins],
        }
    }

    pub fn len(&self) -> usize {
        self.mix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mix.is_empty()
    }

    pub fn mean_diff(&self) -> f64 {
        self.diff.iter().sum::<f64>() / self.diff.len().max(1) as f64
    }

    pub fn mean_mix(&self) -> f64 {
        self.mix.iter().sum::<f64>() / self.mix.len().max(1) as f64
    }
}

/// Everything needed to backpropagate one mask prediction.
pub struct MaskTape {
    mix_tape: Tape,
    diff_tape: Tape,
    blend: Blend,
    mix: Vec<f64>,
    diff: Vec<f64>,
}

/// One acoustic field for one sound source: position and frequency in, masks out.
#[derive(Clone, Debug, PartialEq)]
pub struct ANerfModel {
    config: ANerfConfig,
    pe: PositionalEncoding,
    freq_codes: Array2<f64>,
    mlp1: MlpBlock,
    mlp2: MlpBlock,
    direction: DirectionEmbedding,
}

impl ANerfModel {
    pub fn new<R: Rng + ?Sized>(config: &ANerfConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.width;
        let pe = PositionalEncoding::new(config.pe_frequencies).lenient();
        let f = config.num_bins;
        let mut freq_codes = Array2::zeros((f, pe.output_dim(1)));
        for k in 0..f {
            let fnorm = 2.0 * k as f64 / (f - 1) as f64 - 1.0;
            pe.encode_into(&[fnorm], freq_codes.row_mut(k).as_slice_mut().expect("contiguous"))?;
        }
        let visual_cols = if config.av_mapper && config.fusion == Fusion::Concat { c } else { 0 };
        let in1 = pe.output_dim(3) + visual_cols;
        let mlp1 = four_layer_block(in1, c, 1 + c, Activation::Identity, rng)?;
        let in2 = match config.direction_injection {
            DirectionInjection::PerLayer => c,
            DirectionInjection::Concat => 2 * c,
        };
        let mlp2 = four_layer_block(in2, c, 1, Activation::Identity, rng)?;
        let direction = DirectionEmbedding::init(c, rng);
        Ok(Self {
            config: config.clone(),
            pe,
            freq_codes,
            mlp1,
            mlp2,
            direction,
        })
    }

    pub fn config(&self) -> &ANerfConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins
    }

    pub fn mlp1(&self) -> &MlpBlock {
        &self.mlp1
    }

    pub fn mlp2(&self) -> &MlpBlock {
        &self.mlp2
    }

    pub fn direction_embedding(&self) -> &DirectionEmbedding {
        &self.direction
    }

    /// Zeroes the final layer of both MLPs so every mask starts at
    /// `mix = 0.5`, `diff = 0`.
    pub fn zero_output_layers(&mut self) {
        for mlp in [&mut self.mlp1, &mut self.mlp2] {
            let last = mlp.layers().len() - 1;
            let layer = mlp.layer_mut(last);
            layer.weight_mut().fill(0.0);
            layer.bias_mut().fill(0.0);
        }
    }

    /// Angle fed to the direction embedding: heading relative to the source
    /// bearing, or the raw heading when the coordinate transform is disabled.
    pub fn direction_angle(&self, pose: &Pose, source: [f64; 2]) -> Result<f64> {
        let rel = relative_direction(pose.position2(), pose.theta, source)?;
        Ok(if self.config.coordinate_transform {
            rel
        } else {
            wrap_angle(pose.theta)
        })
    }

    fn first_inputs(&self, pose: &Pose, embedding: Option<ArrayView1<f64>>) -> Result<Array2<f64>> {
        let f = self.config.num_bins;
        let pos = self.config.bounds.normalize(pose.position2());
        let pos_code = self.pe.encode(&pos)?;
        let pos_dim = pos_code.len();
        let freq_dim = self.freq_codes.ncols();
        let mut x = Array2::zeros((f, self.mlp1.input_dim()));
        for (k, mut row) in x.outer_iter_mut().enumerate() {
            row.slice_mut(s![..pos_dim]).assign(&ArrayView1::from(&pos_code));
            row.slice_mut(s![pos_dim..pos_dim + freq_dim]).assign(&self.freq_codes.row(k));
            if let (Some(e), true) = (embedding, self.mlp1.input_dim() > pos_dim + freq_dim) {
                row.slice_mut(s![pos_dim + freq_dim..]).assign(&e);
            }
        }
        Ok(x)
    }

    fn check_embedding(&self, embedding: Option<ArrayView1<f64>>) -> Result<()> {
        match embedding {
            Some(e) if e.len() != self.config.width => Err(Error::Input(format!(
                "visual embedding has {} values, model width is {}",
                e.len(),
                self.config.width
            ))),
            _ => Ok(()),
        }
    }

    pub fn predict_masks(&self, pose: &Pose, source: [f64; 2], embedding: Option<ArrayView1<f64>>) -> Result<MaskPair> {
        let (m, tape) = self.forward(pose, source, embedding)?;
        drop(tape);
        Ok(m)
    }

    pub fn forward(
        &self,
        pose: &Pose,
        source: [f64; 2],
        embedding: Option<ArrayView1<f64>>,
    ) -> Result<(MaskPair, MaskTape)> {
        self.check_embedding(embedding)?;
        let angle = self.direction_angle(pose, source)?;
        let blend = Blend::for_angle(angle);
        let dir = self.direction.blend(&blend);

        let x1 = self.first_inputs(pose, embedding)?;
        let e2 = embedding.map(|e| e.insert_axis(Axis(0)));
        let inj1: Vec<Injection> = match (e2, self.config.fusion) {
            (Some(v), Fusion::AddInput) => vec![Injection { layer: 1, values: v }],
            (Some(v), Fusion::AddAll) => (1..4).map(|layer| Injection { layer, values: v }).collect(),
            _ => Vec::new(),
        };
        let (y1, mix_tape) = self.mlp1.forward_batch(x1.view(), &inj1)?;
        let mix: Vec<f64> = y1.column(0).iter().map(|&z| sigmoid(z)).collect();
        let feature = y1.slice(s![.., 1..]);

        let dir2 = dir.view().insert_axis(Axis(0));
        let (y2, diff_tape) = match self.config.direction_injection {
            DirectionInjection::PerLayer => {
                let inj: Vec<Injection> = (0..4).map(|layer| Injection { layer, values: dir2 }).collect();
                self.mlp2.forward_batch(feature, &inj)?
            }
            DirectionInjection::Concat => {
                let c = self.config.width;
                let mut x2 = Array2::zeros((feature.nrows(), 2 * c));
                x2.slice_mut(s![.., ..c]).assign(&feature);
                x2.slice_mut(s![.., c..]).assign(&dir2.broadcast((feature.nrows(), c)).expect("row broadcast"));
                self.mlp2.forward_batch(x2.view(), &[])?
            }
        };
        let diff: Vec<f64> = y2.column(0).iter().map(|&z| 2.0 * sigmoid(z) - 1.0).collect();
        if mix.iter().chain(&diff).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("mask prediction produced non-finite values".into()));
        }
        let masks = MaskPair {
            mix: mix.clone(),
            diff: diff.clone(),
        };
        Ok((
            masks,
            MaskTape {
                mix_tape,
                diff_tape,
                blend,
                mix,
                diff,
            },
        ))
    }

    /// Appends the parameter gradient (in `param_segments` order) to `out` and
    /// returns the gradient with respect to the visual embedding.
    pub fn backward(
        &self,
        tape: &MaskTape,
        grad_mix: &[f64],
        grad_diff: &[f64],
        out: &mut Vec<f64>,
    ) -> Result<Array1<f64>> {
        let f = self.config.num_bins;
        let c = self.config.width;
        if grad_mix.len() != f || grad_diff.len() != f {
            return Err(Error::Input(format!(
                "mask gradients have lengths {}/{}, expected {f}",
                grad_mix.len(),
                grad_diff.len()
            )));
        }
        let mut g2 = Array2::zeros((f, 1));
        for k in 0..f {
            let s = 0.5 * (tape.diff[k] + 1.0);
            g2[[k, 0]] = grad_diff[k] * 2.0 * s * (1.0 - s);
        }
        let b2 = self.mlp2.backward_batch(&tape.diff_tape, g2.view())?;
        let mut dir_grad = Array1::zeros(c);
        match self.config.direction_injection {
            DirectionInjection::PerLayer => {
                for g in &b2.injections {
                    dir_grad += &g.row(0);
                }
            }
            DirectionInjection::Concat => {
                dir_grad += &b2.input.slice(s![.., c..]).sum_axis(Axis(0));
            }
        }

        let mut g1 = Array2::zeros((f, 1 + c));
        for k in 0..f {
            let m = tape.mix[k];
            g1[[k, 0]] = grad_mix[k] * m * (1.0 - m);
        }
        g1.slice_mut(s![.., 1..]).assign(&b2.input.slice(s![.., ..c]));
        let b1 = self.mlp1.backward_batch(&tape.mix_tape, g1.view())?;

        let emb_grad = match self.config.fusion {
            Fusion::AddInput | Fusion::AddAll => {
                let mut g = Array1::zeros(c);
                for inj in &b1.injections {
                    g += &inj.row(0);
                }
                g
            }
            Fusion::Concat if self.config.av_mapper => {
                let start = self.mlp1.input_dim() - c;
                b1.input.slice(s![.., start..]).sum_axis(Axis(0))
            }
            Fusion::Concat => Array1::zeros(c),
        };

        b1.write_flat(out);
        b2.write_flat(out);
        let mut table_grad = Array2::zeros((4, c));
        self.direction.accumulate_grad(&tape.blend, dir_grad.view(), &mut table_grad);
        out.extend(table_grad.iter().copied());
        Ok(emb_grad)
    }
}

impl Parameterized for ANerfModel {
    fn param_segments(&self) -> Vec<ParamSegment> {
        let mut segs: Vec<ParamSegment> = self
            .mlp1
            .param_segments()
            .into_iter()
            .map(|s| s.prefixed("mix_mlp"))
            .collect();
        segs.extend(self.mlp2.param_segments().into_iter().map(|s| s.prefixed("diff_mlp")));
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
