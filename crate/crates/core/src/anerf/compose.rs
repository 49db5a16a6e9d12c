use ndarray::{Array2, ArrayView2, Zip};

use super::model::MaskPair;
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::nn::params::take;
use crate::nn::{ParamSegment, Parameterized};

/// Mixture, left and right magnitude spectrograms (`F x W` each).
#[derive(Clone, Debug, PartialEq)]
pub struct BinauralMagnitudes {
    pub mixture: Array2<f64>,
    pub left: Array2<f64>,
    pub right: Array2<f64>,
}

impl BinauralMagnitudes {
    /// Target triple from recorded channels; the mixture is their mean.
    pub fn from_channels(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if left.dim() != right.dim() {
            return Err(Error::Input(format!(
                "channel spectrograms differ in shape: {:?} vs {:?}",
                left.dim(),
                right.dim()
            )));
        }
        let mixture = (&left + &right) * 0.5;
        Ok(Self { mixture, left, right })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mixture.dim()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        let d = self.dim();
        if [self.left.dim(), self.right.dim(), other.mixture.dim(), other.left.dim(), other.right.dim()]
            .iter()
            .any(|&o| o != d)
        {
            return Err(Error::Input("prediction and target spectrograms differ in shape".into()));
        }
        Ok(())
    }
}

/// Optional learnable 3x3 smoothing of the composed left/right magnitudes,
/// followed by clamping at zero. Starts as the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineConv {
    kernels: [Array2<f64>; 2],
}

impl Default for RefineConv {
    fn default() -> Self {
        let mut k = Array2::zeros((3, 3));
        k[[1, 1]] = 1.0;
        Self {
            kernels: [k.clone(), k],
        }
    }
}

impl RefineConv {
    pub fn kernel(&self, channel: usize) -> &Array2<f64> {
        &self.kernels[channel]
    }

    fn conv(&self, channel: usize, x: &Array2<f64>) -> Array2<f64> {
        let k = &self.kernels[channel];
        let (f, w) = x.dim();
        let mut out = Array2::zeros((f, w));
        for i in 0..f {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..3 {
                    let ii = i as isize + a as isize - 1;
                    if ii < 0 || ii >= f as isize {
                        continue;
                    }
                    for b in 0..3 {
                        let jj = j as isize + b as isize - 1;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        acc += k[[a, b]] * x[[ii as usize, jj as usize]];
                    }
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    pub fn apply(&self, channel: usize, x: &Array2<f64>) -> Array2<f64> {
        self.conv(channel, x).mapv(|v| v.max(0.0))
    }

    /// Returns (gradient w.r.t. `x`, gradient w.r.t. the 3x3 kernel).
    pub fn backward(&self, channel: usize, x: &Array2<f64>, grad_out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = self.conv(channel, x);
        let g = Zip::from(grad_out).and(&pre).map_collect(|&g, &p| if p > 0.0 { g } else { 0.0 });
        let k = &self.kernels[channel];
        let (f, w) = x.dim();
        let mut gx = Array2::zeros((f, w));
        let mut gk = Array2::zeros((3, 3));
        for i in 0..f {
            for j in 0..w {
                let gij = g[[i, j]];
                if gij == 0.0 {
                    continue;
                }
                for a in 0..3 {
                    let ii = i as isize + a as isize - 1;
                    if ii < 0 || ii >= f as isize {
                        continue;
                    }
                    for b in 0..3 {
                        let jj = j as isize + b as isize - 1;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let (ii, jj) = (ii as usize, jj as usize);
                        gk[[a, b]] += gij * x[[ii, jj]];
                        gx[[ii, jj]] += gij * k[[a, b]];
                    }
                }
            }
        }
        (gx, gk)
    }
}

impl Parameterized for RefineConv {
    fn param_segments(&self) -> Vec<ParamSegment> {
        vec![
            ParamSegment::new("refine.left", vec![3, 3]),
            ParamSegment::new("refine.right", vec![3, 3]),
        ]
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for k in &self.kernels {
            out.extend(k.iter().copied());
        }
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let vals = take(src, 18, "refine kernels")?;
        for (k, chunk) in self.kernels.iter_mut().zip(vals.chunks(9)) {
            k.iter_mut().zip(chunk).for_each(|(d, &v)| *d = v);
        }
        Ok(18)
    }
}

fn check_inputs(sources: &[ArrayView2<f64>], masks: &[MaskPair]) -> Result<(usize, usize)> {
    if sources.is_empty() || sources.len() != masks.len() {
        return Err(Error::Input(format!(
            "{} source spectrograms for {} mask pairs",
            sources.len(),
            masks.len()
        )));
    }
    let dim = sources[0].dim();
    for (s, m) in sources.iter().zip(masks) {
        if s.dim() != dim || m.mix.len() != dim.0 || m.diff.len() != dim.0 {
            return Err(Error::Input(format!(
                "source of shape {:?} cannot take masks of length {}/{}",
                s.dim(),
                m.mix.len(),
                m.diff.len()
            )));
        }
    }
    Ok(dim)
}

/// Mixture and (unrefined) left/right magnitudes summed over sources.
fn compose_raw(sources: &[ArrayView2<f64>], masks: &[MaskPair]) -> Result<BinauralMagnitudes> {
    let (f, w) = check_inputs(sources, masks)?;
    let mut mixture = Array2::<f64>::zeros((f, w));
    let mut diff = Array2::<f64>::zeros((f, w));
    for (s, m) in sources.iter().zip(masks) {
        for k in 0..f {
            let (mm, md) = (m.mix[k], m.diff[k]);
            for t in 0..w {
                let sm = mm * s[[k, t]];
                mixture[[k, t]] += sm;
                diff[[k, t]] += md * sm;
            }
        }
    }
    let left = &mixture + &diff;
    let right = &mixture - &diff;
    Ok(BinauralMagnitudes { mixture, left, right })
}

/// Applies each source's masks to its own magnitude spectrogram and sums
/// the results; the refinement (if any) acts on the summed left/right channels.
pub fn compose_magnitudes(
    sources: &[ArrayView2<f64>],
    masks: &[MaskPair],
    refine: Option<&RefineConv>,
) -> Result<BinauralMagnitudes> {
    let mut out = compose_raw(sources, masks)?;
    if let Some(r) = refine {
        out.left = r.apply(0, &out.left);
        out.right = r.apply(1, &out.right);
    }
    Ok(out)
}

/// Single-source composition on full spectrograms; all outputs carry the source
/// phase. Returns `(left, right, mixture)`.
pub fn compose_binaural(
    source: &Spectrogram,
    masks: &MaskPair,
    refine: Option<&RefineConv>,
) -> Result<(Spectrogram, Spectrogram, Spectrogram)> {
    let m = compose_magnitudes(&[source.magnitude.view()], std::slice::from_ref(masks), refine)?;
    Ok((
        source.with_magnitude(m.left)?,
        source.with_magnitude(m.right)?,
        source.with_magnitude(m.mixture)?,
    ))
}

fn mean_sq(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y) * (x - y));
    acc / a.len().max(1) as f64
}

/// Sum of the three per-element mean squared errors (mixture, left, right).
pub fn acoustic_loss(pred: &BinauralMagnitudes, target: &BinauralMagnitudes) -> Result<f64> {
    pred.check_same(target)?;
    Ok(mean_sq(&pred.mixture, &target.mixture) + mean_sq(&pred.left, &target.left) + mean_sq(&pred.right, &target.right))
}

/// Loss gradients with respect to every source's masks (and the refinement
/// kernels, when present).
#[derive(Clone, Debug)]
pub struct MaskGradients {
    pub mix: Vec<Vec<f64>>,
    pub diff: Vec<Vec<f64>>,
    pub refine: Option<Vec<f64>>,
}

pub fn loss_and_mask_grads(
    sources: &[ArrayView2<f64>],
    masks: &[MaskPair],
    refine: Option<&RefineConv>,
    target: &BinauralMagnitudes,
) -> Result<(f64, MaskGradients)> {
    let raw = compose_raw(sources, masks)?;
    let (left, right) = match refine {
        Some(r) => (r.apply(0, &raw.left), r.apply(1, &raw.right)),
        None => (raw.left.clone(), raw.right.clone()),
    };
    let pred = BinauralMagnitudes {
        mixture: raw.mixture.clone(),
        left,
        right,
    };
    let loss = acoustic_loss(&pred, target)?;

    let n = pred.mixture.len() as f64;
    let gm = (&pred.mixture - &target.mixture) * (2.0 / n);
    let mut gl = (&pred.left - &target.left) * (2.0 / n);
    let mut gr = (&pred.right - &target.right) * (2.0 / n);
    let refine_grad = match refine {
        Some(r) => {
            let (gxl, gkl) = r.backward(0, &raw.left, &gl);
            let (gxr, gkr) = r.backward(1, &raw.right, &gr);
            gl = gxl;
            gr = gxr;
            Some(gkl.iter().chain(gkr.iter()).copied().collect())
        }
        None => None,
    };

    let (f, w) = gm.dim();
    let mut grads = MaskGradients {
        mix: Vec::with_capacity(masks.len()),
        diff: Vec::with_capacity(masks.len()),
        refine: refine_grad,
    };
    for (s, m) in sources.iter().zip(masks) {
        let mut dmix = vec![0.0; f];
        let mut ddiff = vec![0.0; f];
        for k in 0..f {
            let (mm, md) = (m.mix[k], m.diff[k]);
            let (mut a, mut b) = (0.0, 0.0);
            for t in 0..w {
                let sv = s[[k, t]];
                let (l, r) = (gl[[k, t]], gr[[k, t]]);
                a += sv * (gm[[k, t]] + l * (1.0 + md) + r * (1.0 - md));
                b += sv * (l - r);
            }
            dmix[k] = a;
            ddiff[k] = b * mm;
        }
        grads.mix.push(dmix);
        grads.diff.push(ddiff);
    }
    Ok((loss, grads))
}
