use crate::dsp::{hilbert_envelope, StftConfig, StftPlan};
use crate::error::{Error, Result};

fn check_pair(pred: &[Vec<f64>; 2], gt: &[Vec<f64>; 2]) -> Result<()> {
    let n = gt[0].len();
    if pred.iter().chain(gt.iter()).any(|c| c.len() != n) {
        return Err(Error::Input(format!(
            "stereo signals differ in length: pred {}/{}, gt {}/{}",
            pred[0].len(),
            pred[1].len(),
            gt[0].len(),
            gt[1].len()
        )));
    }
    Ok(())
}

/// Squared STFT-magnitude distance: the per-element mean over `F x W` for
/// each channel, summed over the two channels.
pub fn mag_distance(pred: &[Vec<f64>; 2], gt: &[Vec<f64>; 2], cfg: StftConfig) -> Result<f64> {
    check_pair(pred, gt)?;
    let plan = StftPlan::new(cfg)?;
    let mut total = 0.0;
    for ch in 0..2 {
        let p = plan.complex(&pred[ch])?;
        let g = plan.complex(&gt[ch])?;
        let mut acc = 0.0;
        for (a, b) in p.iter().zip(g.iter()) {
            let d = a.norm() - b.norm();
            acc += d * d;
        }
        total += acc / p.len() as f64;
    }
    Ok(total)
}

/// Squared Hilbert-envelope distance, mean over samples, averaged over channels.
pub fn env_distance(pred: &[Vec<f64>; 2], gt: &[Vec<f64>; 2]) -> Result<f64> {
    check_pair(pred, gt)?;
    let mut total = 0.0;
    for ch in 0..2 {
        let a = hilbert_envelope(&pred[ch]);
        let b = hilbert_envelope(&gt[ch]);
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        total += s / a.len().max(1) as f64;
    }
    Ok(0.5 * total)
}
