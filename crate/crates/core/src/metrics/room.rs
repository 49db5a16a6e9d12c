use crate::error::{Error, Result};

/// Clamp applied to the early-to-late ratio when either part has no energy.
pub const C50_LIMIT_DB: f64 = 60.0;

/// Backward-integrated energy decay in dB relative to the total energy.
pub fn schroeder_db(ir: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut energy = vec![0.0; ir.len()];
    for i in (0..ir.len()).rev() {
        acc += ir[i] * ir[i];
        energy[i] = acc;
    }
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::MetricUndefined("impulse response has no energy".into()));
    }
    Ok(energy
        .iter()
        .map(|&e| if e > 0.0 { 10.0 * (e / acc).log10() } else { f64::NEG_INFINITY })
        .collect())
}

/// Least-squares decay slope (dB per second) of the Schroeder curve between
/// the first samples at or below `start_db` and `end_db`.
fn decay_slope(curve: &[f64], sample_rate: u32, start_db: f64, end_db: f64) -> Result<f64> {
    let first_below = |level: f64| curve.iter().position(|&v| v <= level);
    let i0 = first_below(start_db).ok_or_else(|| {
        Error::MetricUndefined(format!("decay never reaches {start_db} dB"))
    })?;
    let i1 = first_below(end_db).ok_or_else(|| {
        Error::MetricUndefined(format!("decay range is shorter than {} dB", -end_db))
    })?;
    let pts: Vec<(f64, f64)> = (i0..=i1)
        .filter(|&i| curve[i].is_finite())
        .map(|i| (i as f64 / sample_rate as f64, curve[i]))
        .collect();
    if pts.len() < 2 {
        return Err(Error::MetricUndefined("too few samples in the fit range".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::MetricUndefined("energy decay is not decreasing".into()));
    }
    Ok(slope)
}

/// Reverberation time from the -5 to -35 dB span of the Schroeder curve,
/// extrapolated to 60 dB.
pub fn t60(ir: &[f64], sample_rate: u32) -> Result<f64> {
    let curve = schroeder_db(ir)?;
    Ok(-60.0 / decay_slope(&curve, sample_rate, -5.0, -35.0)?)
}

/// Early decay time: the 0 to -10 dB span extrapolated to 60 dB.
pub fn edt(ir: &[f64], sample_rate: u32) -> Result<f64> {
    let curve = schroeder_db(ir)?;
    Ok(-60.0 / decay_slope(&curve, sample_rate, 0.0, -10.0)?)
}

/// Early (first 50 ms) to late energy ratio in dB, clamped to +-60 dB.
pub fn c50(ir: &[f64], sample_rate: u32) -> Result<f64> {
    let split = ((0.05 * sample_rate as f64).round() as usize).min(ir.len());
    if split >= ir.len() {
        return Err(Error::MetricUndefined("impulse response is shorter than 50 ms".into()));
    }
    let early: f64 = ir[..split].iter().map(|v| v * v).sum();
    let late: f64 = ir[split..].iter().map(|v| v * v).sum();
    if late <= 0.0 || early <= 0.0 {
        log::debug!("C50 clamped (early {early}, late {late})");
        return Ok(if late <= 0.0 && early > 0.0 { C50_LIMIT_DB } else if early <= 0.0 && late > 0.0 {
            -C50_LIMIT_DB
        } else {
            0.0
        });
    }
    Ok((10.0 * (early / late).log10()).clamp(-C50_LIMIT_DB, C50_LIMIT_DB))
}

/// Relative T60 error in percent.
pub fn t60_error(pred: &[f64], gt: &[f64], sample_rate: u32) -> Result<f64> {
    let g = t60(gt, sample_rate)?;
    Ok(100.0 * (t60(pred, sample_rate)? - g).abs() / g)
}

pub fn c50_error(pred: &[f64], gt: &[f64], sample_rate: u32) -> Result<f64> {
    Ok((c50(pred, sample_rate)? - c50(gt, sample_rate)?).abs())
}

pub fn edt_error(pred: &[f64], gt: &[f64], sample_rate: u32) -> Result<f64> {
    Ok((edt(pred, sample_rate)? - edt(gt, sample_rate)?).abs())
}
