use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::scene::{SceneSpec, SourceAudio};
use crate::anerf::{compose_magnitudes, MaskPair};
use crate::dsp::StftPlan;
use crate::encoding::relative_direction;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::rng;

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Interaural factor `alpha * sin(relative direction)`; positive means louder left.
pub fn ild_factor(scene: &SceneSpec, pose: &Pose, source: [f64; 2]) -> Result<f64> {
    let rel = relative_direction(pose.position2(), pose.theta, source)?;
    Ok(scene.ild_alpha * rel.sin())
}

/// The masks that generate the scene's recordings: one pair per source.
pub fn oracle_masks(scene: &SceneSpec, pose: &Pose) -> Result<Vec<MaskPair>> {
    let bins = scene.stft.num_bins();
    let zone = scene.zone_gain(pose.position2());
    scene
        .sources
        .iter()
        .map(|s| {
            let d = distance(pose.position2(), s.position);
            let rho = ild_factor(scene, pose, s.position)?;
            let g = scene.attenuation.gain(d) * zone;
            let mix = (0..bins)
                .map(|k| match scene.air_absorption {
                    Some(a) => g * a.factor(scene.stft.bin_frequency(k), d),
                    None => g,
                })
                .collect();
            Ok(MaskPair {
                mix,
                diff: vec![rho; bins],
            })
        })
        .collect()
}

/// Binaural recording of the scene at `pose` given one dry signal per source.
///
/// Works in the STFT domain: each source's magnitude is scaled by its oracle
/// masks, magnitudes add across sources, and the result is resynthesized with
/// the phase of the summed source spectra.
pub fn simulate_binaural(scene: &SceneSpec, pose: &Pose, source_audio: &[&[f64]]) -> Result<[Vec<f64>; 2]> {
    if source_audio.len() != scene.sources.len() {
        return Err(Error::Input(format!(
            "{} signals for {} sources",
            source_audio.len(),
            scene.sources.len()
        )));
    }
    let masks = oracle_masks(scene, pose)?;
    let plan = StftPlan::new(scene.stft)?;
    let (mags, phase) = plan.analyze_mixture(source_audio)?;
    let views: Vec<ArrayView2<f64>> = mags.iter().map(|m| m.view()).collect();
    let out = compose_magnitudes(&views, &masks, None)?;
    let len = Some(source_audio[0].len());
    Ok([plan.synthesize(&out.left, &phase, len)?, plan.synthesize(&out.right, &phase, len)?])
}

/// Direct-path delay in samples, rounded to the nearest sample (halves round up).
pub fn direct_delay_samples(scene: &SceneSpec, d: f64) -> usize {
    (d / scene.ir.speed_of_sound * scene.sample_rate as f64).round() as usize
}

/// Two-channel impulse response from the first source to `pose`.
///
/// A unit impulse scaled by the distance gain at the direct-path delay, then a
/// Gaussian tail whose energy decays as `exp(-13.8155 t / t60)` (60 dB over
/// `t60`), each channel weighted by `1 +- ild`.
pub fn simulate_ir(scene: &SceneSpec, pose: &Pose, seed: u64) -> Result<[Vec<f64>; 2]> {
    let src = scene
        .sources
        .first()
        .ok_or_else(|| Error::Config("scene has no source".into()))?
        .position;
    let d = distance(pose.position2(), src);
    let rho = ild_factor(scene, pose, src)?;
    let g = scene.attenuation.gain(d) * scene.zone_gain(pose.position2());
    let len = scene.ir.length;
    let n0 = direct_delay_samples(scene, d);
    let t60 = scene.t60_at(pose.position2());
    let decay = 3.0 * std::f64::consts::LN_10 / (t60 * scene.sample_rate as f64);
    let mut out = [vec![0.0; len], vec![0.0; len]];
    for (ch, sign) in [(0usize, 1.0), (1, -1.0)] {
        let gain = 1.0 + sign * rho;
        let mut r = rng::seeded(rng::derive(seed, ch as u64));
        if n0 < len {
            out[ch][n0] = g * gain;
        }
        for n in n0 + 1..len {
            let noise: f64 = r.sample(StandardNormal);
            out[ch][n] = gain * scene.ir.tail_level * noise * (-decay * (n - n0) as f64).exp();
        }
    }
    Ok(out)
}

/// Dry clip for source `k` at pose index `index`.
pub fn source_clip(scene: &SceneSpec, k: usize, index: u64, seed: u64) -> Result<Vec<f64>> {
    let len = scene.clip_len();
    let sr = scene.sample_rate as f64;
    match &scene.sources[k].audio {
        SourceAudio::WhiteNoise { amplitude } => {
            let mut r = rng::seeded(rng::derive(rng::derive(seed, index), k as u64));
            Ok((0..len)
                .map(|_| (amplitude * r.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
                .collect())
        }
        SourceAudio::Sine { frequency, amplitude } => Ok((0..len)
            .map(|n| amplitude * (2.0 * std::f64::consts::PI * frequency * n as f64 / sr).sin())
            .collect()),
        SourceAudio::Wav { path } => {
            let wav = crate::dataio::read_wav_resampled(path, scene.sample_rate)?;
            let mono = wav.mono();
            if mono.is_empty() {
                return Err(Error::Input(format!("{} holds no samples", path.display())));
            }
            let start = (index as usize * len) % mono.len();
            Ok((0..len).map(|i| mono[(start + i) % mono.len()]).collect())
        }
    }
}
