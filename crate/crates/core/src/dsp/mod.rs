//! Time-frequency machinery: STFT/ISTFT, magnitude/phase, Hilbert envelope.

mod hilbert;
mod stft;

pub use hilbert::hilbert_envelope;
pub use stft::{
    istft, istft_with_phase, magnitude_vjp, stft, Spectrogram, StftConfig, StftPlan, WindowKind,
};

/// Root-mean-square of a signal; zero for an empty slice.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// `rms(a - b) / rms(b)`.
pub fn relative_rms_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    rms(&diff) / rms(b).max(f64::MIN_POSITIVE)
}
