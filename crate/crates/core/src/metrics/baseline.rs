use serde::{Deserialize, Serialize};

use crate::dsp::rms;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// The source, duplicated to both channels.
    MonoMono,
    /// The source rescaled to the target's mean channel RMS, duplicated.
    MonoEnergy,
    /// The source rescaled per channel to each target channel's RMS.
    StereoEnergy,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::MonoMono, BaselineKind::MonoEnergy, BaselineKind::StereoEnergy];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::MonoMono => "mono_mono",
            BaselineKind::MonoEnergy => "mono_energy",
            BaselineKind::StereoEnergy => "stereo_energy",
        }
    }
}

fn scaled(source: &[f64], s: f64) -> Vec<f64> {
    source.iter().map(|v| v * s).collect()
}

pub fn baseline(kind: BaselineKind, source: &[f64], gt: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
    let src_rms = rms(source);
    let ratio = |target: f64| {
        if src_rms > 0.0 {
            target / src_rms
        } else {
            if target > 0.0 {
                log::warn!("silent source cannot be scaled to a nonzero target; returning silence");
            }
            0.0
        }
    };
    match kind {
        BaselineKind::MonoMono => [source.to_vec(), source.to_vec()],
        BaselineKind::MonoEnergy => {
            let s = ratio(0.5 * (rms(&gt[0]) + rms(&gt[1])));
            let out = scaled(source, s);
            [out.clone(), out]
        }
        BaselineKind::StereoEnergy => [scaled(source, ratio(rms(&gt[0]))), scaled(source, ratio(rms(&gt[1])))],
    }
}
