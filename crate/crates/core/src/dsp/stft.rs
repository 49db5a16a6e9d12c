use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            win_length: 512,
            hop_length: 128,
            window: WindowKind::Hann,
            sample_rate: 22050,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_length == 0
            || self.hop_length > self.win_length
            || self.win_length > self.n_fft
            || self.sample_rate == 0
            || self.n_fft < 2
        {
            return Err(Error::Config(format!("invalid STFT configuration {self:?}")));
        }
        Ok(())
    }

    /// One-sided bin count, `n_fft / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// `1 + ceil(len / hop)` frames for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop_length)
    }

    /// Periodic window of `win_length` samples, zero-padded symmetrically to `n_fft`.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        match self.window {
            WindowKind::Hann => {
                for n in 0..self.win_length {
                    w[offset + n] = 0.5 - 0.5 * (2.0 * PI * n as f64 / self.win_length as f64).cos();
                }
            }
        }
        w
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.n_fft as f64
    }
}

/// One-sided magnitude/phase spectrogram, `F x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub magnitude: Array2<f64>,
    pub phase: Array2<f64>,
    pub config: StftConfig,
    /// Length of the analyzed signal, used to trim the inverse transform.
    pub signal_len: Option<usize>,
}

impl Spectrogram {
    pub fn num_bins(&self) -> usize {
        self.magnitude.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.magnitude.ncols()
    }

    /// Same phase and config, new magnitude.
    pub fn with_magnitude(&self, magnitude: Array2<f64>) -> Result<Self> {
        if magnitude.dim() != self.magnitude.dim() {
            return Err(Error::Input(format!(
                "magnitude shape {:?} does not match spectrogram {:?}",
                magnitude.dim(),
                self.magnitude.dim()
            )));
        }
        Ok(Self {
            magnitude,
            phase: self.phase.clone(),
            config: self.config,
            signal_len: self.signal_len,
        })
    }
}

/// Planned forward/inverse FFTs plus the analysis window for one configuration.
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: config.window(),
            forward: planner.plan_fft_forward(config.n_fft),
            inverse: planner.plan_fft_inverse(config.n_fft),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    fn pad(&self, audio: &[f64]) -> Vec<f64> {
        let p = self.config.n_fft / 2;
        let len = audio.len();
        let frames = self.config.num_frames(len);
        let needed = (frames - 1) * self.config.hop_length + self.config.n_fft;
        let mut padded = Vec::with_capacity(needed.max(len + 2 * p));
        padded.extend((0..p).map(|i| audio[p - i]));
        padded.extend_from_slice(audio);
        padded.extend((0..p).map(|i| audio[len - 2 - i]));
        if padded.len() < needed {
            padded.resize(needed, 0.0);
        }
        padded
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let min = self.config.win_length.max(self.config.n_fft / 2 + 1);
        if len < min {
            return Err(Error::Input(format!(
                "signal of {len} samples is shorter than the {min}-sample minimum"
            )));
        }
        Ok(())
    }

    /// Complex one-sided STFT, `F x W`, with centered reflect padding.
    pub fn complex(&self, audio: &[f64]) -> Result<Array2<Complex64>> {
        self.check_len(audio.len())?;
        let cfg = self.config;
        let padded = self.pad(audio);
        let frames = cfg.num_frames(audio.len());
        let bins = cfg.num_bins();
        let mut out = Array2::zeros((bins, frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
        for w in 0..frames {
            let start = w * cfg.hop_length;
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[start + n] * self.window[n], 0.0);
            }
            self.forward.process(&mut buf);
            for k in 0..bins {
                out[[k, w]] = buf[k];
            }
        }
        Ok(out)
    }

    pub fn analyze(&self, audio: &[f64]) -> Result<Spectrogram> {
        let c = self.complex(audio)?;
        let magnitude = c.mapv(|z| z.norm());
        let phase = c.mapv(|z| {
            let a = z.im.atan2(z.re);
            if a <= -PI {
                PI
            } else {
                a
            }
        });
        Ok(Spectrogram {
            magnitude,
            phase,
            config: self.config,
            signal_len: Some(audio.len()),
        })
    }

    /// Magnitudes of several equal-length signals plus the phase of their summed
    /// spectra.
    pub fn analyze_mixture(&self, signals: &[&[f64]]) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
        let first = signals
            .first()
            .ok_or_else(|| Error::Input("no signals to analyze".into()))?;
        if signals.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Input("signals differ in length".into()));
        }
        let mut mags = Vec::with_capacity(signals.len());
        let mut sum: Option<Array2<Complex64>> = None;
        for s in signals {
            let c = self.complex(s)?;
            mags.push(c.mapv(|z| z.norm()));
            sum = Some(match sum {
                Some(acc) => acc + c,
                None => c,
            });
        }
        let phase = sum.expect("at least one signal").mapv(|z| {
            let a = z.im.atan2(z.re);
            if a <= -PI {
                PI
            } else {
                a
            }
        });
        Ok((mags, phase))
    }

    /// Weighted overlap-add inverse with window-power normalization.
    pub fn synthesize(
        &self,
        magnitude: &Array2<f64>,
        phase: &Array2<f64>,
        signal_len: Option<usize>,
    ) -> Result<Vec<f64>> {
        let cfg = self.config;
        let (bins, frames) = magnitude.dim();
        if bins != cfg.num_bins() || phase.dim() != magnitude.dim() || frames == 0 {
            return Err(Error::Input(format!(
                "spectrogram of shape {:?}/{:?} does not fit n_fft {}",
                magnitude.dim(),
                phase.dim(),
                cfg.n_fft
            )));
        }
        let n = cfg.n_fft;
        let total = (frames - 1) * cfg.hop_length + n;
        let mut acc = vec![0.0; total];
        let mut wsum = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for w in 0..frames {
            for k in 0..bins {
                buf[k] = Complex64::from_polar(magnitude[[k, w]], phase[[k, w]]);
            }
            // Hermitian completion; DC and Nyquist bins must be real for a real signal.
            buf[0].im = 0.0;
            if n % 2 == 0 {
                buf[n / 2].im = 0.0;
            }
            for k in 1..n.div_ceil(2) {
                buf[n - k] = buf[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = w * cfg.hop_length;
            for i in 0..n {
                let win = self.window[i];
                acc[start + i] += buf[i].re / n as f64 * win;
                wsum[start + i] += win * win;
            }
        }
        let p = n / 2;
        let len = signal_len.unwrap_or((frames - 1) * cfg.hop_length);
        if p + len > total {
            return Err(Error::Input(format!(
                "requested length {len} exceeds the {} samples the frames cover",
                total - p
            )));
        }
        (p..p + len)
            .map(|i| {
                if wsum[i] > 1e-10 {
                    Ok(acc[i] / wsum[i])
                } else {
                    Err(Error::Numerical(format!(
                        "window overlap vanishes at sample {}",
                        i - p
                    )))
                }
            })
            .collect()
    }

    /// Gradient of a scalar loss w.r.t. the waveform, given its gradient w.r.t. the
    /// STFT magnitude of that waveform. Bins with zero magnitude pass no gradient.
    pub fn magnitude_vjp(&self, audio: &[f64], grad_magnitude: &Array2<f64>) -> Result<Vec<f64>> {
        let cfg = self.config;
        let spec = self.complex(audio)?;
        if grad_magnitude.dim() != spec.dim() {
            return Err(Error::Input(format!(
                "gradient shape {:?} does not match spectrogram {:?}",
                grad_magnitude.dim(),
                spec.dim()
            )));
        }
        let n = cfg.n_fft;
        let p = n / 2;
        let len = audio.len();
        let (bins, frames) = spec.dim();
        let mut padded_grad = vec![0.0; (frames - 1) * cfg.hop_length + n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for w in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for k in 0..bins {
                let z = spec[[k, w]];
                let m = z.norm();
                if m > 0.0 {
                    buf[k] = z.conj() * (grad_magnitude[[k, w]] / m);
                }
            }
            // sum_k G_k e^{-2 pi i k n / N} is a forward transform of G.
            self.forward.process(&mut buf);
            let start = w * cfg.hop_length;
            for i in 0..n {
                padded_grad[start + i] += self.window[i] * buf[i].re;
            }
        }
        let mut grad = padded_grad[p..p + len].to_vec();
        for i in 0..p {
            grad[p - i] += padded_grad[i];
            grad[len - 2 - i] += padded_grad[p + len + i];
        }
        Ok(grad)
    }
}

pub fn stft(audio: &[f64], config: StftConfig) -> Result<Spectrogram> {
    StftPlan::new(config)?.analyze(audio)
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    istft_with_phase(&spec.magnitude, &spec.phase, spec.config, spec.signal_len)
}

pub fn istft_with_phase(
    magnitude: &Array2<f64>,
    phase: &Array2<f64>,
    config: StftConfig,
    signal_len: Option<usize>,
) -> Result<Vec<f64>> {
    StftPlan::new(config)?.synthesize(magnitude, phase, signal_len)
}

pub fn magnitude_vjp(audio: &[f64], grad_magnitude: &Array2<f64>, config: StftConfig) -> Result<Vec<f64>> {
    StftPlan::new(config)?.magnitude_vjp(audio, grad_magnitude)
}
