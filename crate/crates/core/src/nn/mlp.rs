use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::layer::{Activation, DenseLayer};
use super::params::{take, ParamSegment, Parameterized};
use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Skip connection: the input of layer `from` is added to the output of layer `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualSpan {
    pub from: usize,
    pub to: usize,
}

/// Additive conditioning applied to the input of a given layer.
///
/// `values` has either one row (broadcast over the batch) or one row per batch entry.
#[derive(Clone, Copy, Debug)]
pub struct Injection<'a> {
    pub layer: usize,
    pub values: ArrayView2<'a, f64>,
}

/// Activations recorded by [`MlpBlock::forward_batch`], sufficient to replay gradients exactly.
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
    output: Array2<f64>,
    injections: Vec<(usize, bool)>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    /// Final output of the block, identical to what `forward_batch` returned.
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

#[derive(Clone, Debug)]
pub struct BlockGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
    /// One entry per injection, in the order they were passed to the forward pass.
    pub injections: Vec<Array2<f64>>,
}

impl BlockGradients {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.write_flat(&mut out);
        out
    }
}

/// A fixed stack of dense layers with an optional residual span.
#[derive(Clone, Debug)]
pub struct MlpBlock {
    layers: Vec<DenseLayer>,
    residual: Option<ResidualSpan>,
    version: u64,
}

impl PartialEq for MlpBlock {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.residual == other.residual
    }
}

impl MlpBlock {
    pub fn new(layers: Vec<DenseLayer>, residual: Option<ResidualSpan>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("block needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if let Some(span) = residual {
            if span.from > span.to || span.to >= layers.len() {
                return Err(Error::Config(format!("residual span {span:?} out of range")));
            }
            if layers[span.from].in_dim() != layers[span.to].out_dim() {
                return Err(Error::Config(format!(
                    "residual span {span:?} joins widths {} and {}",
                    layers[span.from].in_dim(),
                    layers[span.to].out_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            residual,
            version: fresh_version(),
        })
    }

    /// Builds a randomly initialized block with widths `dims[0] -> dims[1] -> ...`.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        residual: Option<ResidualSpan>,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::Config(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &act)| DenseLayer::init(d[0], d[1], act, rng))
            .collect();
        Self::new(layers, residual)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn residual(&self) -> Option<ResidualSpan> {
        self.residual
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Mutable access to one layer. Invalidates every tape recorded so far.
    pub fn layer_mut(&mut self, index: usize) -> &mut DenseLayer {
        self.version = fresh_version();
        &mut self.layers[index]
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Input(e.to_string()))?;
        let (out, tape) = self.forward_batch(x, &[])?;
        Ok((out.into_raw_vec_and_offset().0, tape))
    }

    pub fn backward(&self, tape: &Tape, output_gradient: &[f64]) -> Result<BlockGradients> {
        let g = ArrayView2::from_shape((1, output_gradient.len()), output_gradient)
            .map_err(|e| Error::Input(e.to_string()))?;
        self.backward_batch(tape, g)
    }

    pub fn forward_batch(
        &self,
        input: ArrayView2<f64>,
        injections: &[Injection],
    ) -> Result<(Array2<f64>, Tape)> {
        let mut tape = Tape {
            version: self.version,
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            output: Array2::zeros((0, 0)),
            injections: injections
                .iter()
                .map(|inj| (inj.layer, inj.values.nrows() == 1 && input.nrows() != 1))
                .collect(),
        };
        let out = self.run(input, injections, Some(&mut tape))?;
        Ok((out, tape))
    }

    /// Forward pass without recording a tape.
    pub fn infer_batch(&self, input: ArrayView2<f64>, injections: &[Injection]) -> Result<Array2<f64>> {
        self.run(input, injections, None)
    }

    fn run(
        &self,
        input: ArrayView2<f64>,
        injections: &[Injection],
        mut tape: Option<&mut Tape>,
    ) -> Result<Array2<f64>> {
        let n = input.nrows();
        if input.ncols() != self.input_dim() {
            return Err(Error::Config(format!(
                "block expects input width {}, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        for inj in injections {
            let layer = self.layers.get(inj.layer).ok_or_else(|| {
                Error::Config(format!("injection targets missing layer {}", inj.layer))
            })?;
            if inj.values.ncols() != layer.in_dim() || (inj.values.nrows() != 1 && inj.values.nrows() != n) {
                return Err(Error::Config(format!(
                    "injection of shape {:?} does not fit layer {} input ({n}x{})",
                    inj.values.dim(),
                    inj.layer,
                    layer.in_dim()
                )));
            }
        }

        let mut x = input.to_owned();
        let mut skip: Option<Array2<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            for inj in injections.iter().filter(|inj| inj.layer == i) {
                x += &inj.values;
            }
            if self.residual.is_some_and(|s| s.from == i) {
                skip = Some(x.clone());
            }
            let mut y = x.dot(&layer.weight.t());
            y += &layer.bias;
            let act = layer.activation;
            if act != Activation::Identity {
                y.mapv_inplace(|z| act.apply(z));
            }
            let mut next = match tape.as_deref_mut() {
                Some(t) => {
                    t.inputs.push(x);
                    t.outputs.push(y.clone());
                    y
                }
                None => y,
            };
            if self.residual.is_some_and(|s| s.to == i) {
                next += skip.as_ref().expect("residual start precedes its end");
            }
            x = next;
        }
        if let Some(t) = tape {
            t.output = x.clone();
        }
        Ok(x)
    }

    pub fn backward_batch(&self, tape: &Tape, output_gradient: ArrayView2<f64>) -> Result<BlockGradients> {
        if tape.version != self.version {
            return Err(Error::Usage(
                "tape was recorded before the block's parameters changed".into(),
            ));
        }
        let n = tape.batch_size();
        if output_gradient.dim() != (n, self.output_dim()) {
            return Err(Error::Config(format!(
                "output gradient has shape {:?}, expected ({n}, {})",
                output_gradient.dim(),
                self.output_dim()
            )));
        }
        let mut weights = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut biases = vec![Array1::zeros(0); self.layers.len()];
        let mut injection_grads: Vec<Option<Array2<f64>>> = vec![None; tape.injections.len()];

        let mut g = output_gradient.to_owned();
        let mut skip_grad: Option<Array2<f64>> = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if self.residual.is_some_and(|s| s.to == i) {
                skip_grad = Some(g.clone());
            }
            let act = layer.activation;
            if act != Activation::Identity {
                Zip::from(&mut g)
                    .and(&tape.outputs[i])
                    .for_each(|gz, &y| *gz *= act.derivative_at_output(y));
            }
            weights[i] = g.t().dot(&tape.inputs[i]);
            biases[i] = g.sum_axis(Axis(0));
            let mut gx = g.dot(&layer.weight);
            if self.residual.is_some_and(|s| s.from == i) {
                gx += skip_grad.as_ref().expect("residual end visited first");
            }
            for (k, &(layer_idx, broadcast)) in tape.injections.iter().enumerate() {
                if layer_idx == i {
                    injection_grads[k] = Some(if broadcast {
                        gx.sum_axis(Axis(0)).insert_axis(Axis(0))
                    } else {
                        gx.clone()
                    });
                }
            }
            g = gx;
        }
        Ok(BlockGradients {
            weights,
            biases,
            input: g,
            injections: injection_grads.into_iter().map(|g| g.expect("every injection visited")).collect(),
        })
    }
}

impl Parameterized for MlpBlock {
    fn param_segments(&self) -> Vec<ParamSegment> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamSegment::new(format!("layer{i}.weight"), vec![l.out_dim(), l.in_dim()]),
                    ParamSegment::new(format!("layer{i}.bias"), vec![l.out_dim()]),
                ]
            })
            .collect()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let mut used = 0;
        for (i, l) in self.layers.iter_mut().enumerate() {
            let w = take(&src[used..], l.weight.len(), &format!("layer{i}.weight"))?;
            for (dst, &v) in l.weight.iter_mut().zip(w) {
                *dst = v;
            }
            used += w.len();
            let b = take(&src[used..], l.bias.len(), &format!("layer{i}.bias"))?;
            for (dst, &v) in l.bias.iter_mut().zip(b) {
                *dst = v;
            }
            used += b.len();
        }
        self.version = fresh_version();
        Ok(used)
    }
}
