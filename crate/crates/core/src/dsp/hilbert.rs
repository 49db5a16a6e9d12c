use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Modulus of the analytic signal, computed in the frequency domain: negative
/// frequencies are zeroed and positive ones doubled (DC and Nyquist kept).
pub fn hilbert_envelope(audio: &[f64]) -> Vec<f64> {
    let n = audio.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = audio.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n.div_ceil(2);
    for (k, b) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < half {
            2.0
        } else {
            0.0
        };
        *b *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.norm() / n as f64).collect()
}
