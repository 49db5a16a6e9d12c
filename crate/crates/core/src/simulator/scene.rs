use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::pose::PlanarBounds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceAudio {
    /// Gaussian noise with standard deviation `amplitude`, reseeded per pose.
    WhiteNoise { amplitude: f64 },
    Sine { frequency: f64, amplitude: f64 },
    /// A recording, cut into consecutive clips (wrapping around).
    Wav { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub position: [f64; 2],
    pub audio: SourceAudio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttenuationLaw {
    InverseDistance,
}

/// Gain `1 / max(d, d_min)`; unity at and inside `d_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attenuation {
    pub law: AttenuationLaw,
    pub d_min: f64,
}

impl Default for Attenuation {
    fn default() -> Self {
        Self {
            law: AttenuationLaw::InverseDistance,
            d_min: 1.0,
        }
    }
}

impl Attenuation {
    pub fn gain(&self, d: f64) -> f64 {
        match self.law {
            AttenuationLaw::InverseDistance => 1.0 / d.max(self.d_min),
        }
    }
}

/// Frequency-dependent decay `exp(-k(f) d)` with `k(f) = per_khz * f / 1000` (1/m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirAbsorption {
    pub per_khz: f64,
}

impl AirAbsorption {
    pub fn factor(&self, freq_hz: f64, d: f64) -> f64 {
        (-self.per_khz * freq_hz / 1000.0 * d).exp()
    }
}

/// A floor patch with its own surface: it scales the received level when the
/// listener stands on it and has its own color in rendered views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub gain: f64,
    pub color: [f64; 3],
}

impl Zone {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] < self.max[0] && p[1] >= self.min[1] && p[1] < self.max[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64, color: [f64; 3] },
    Cuboid { min: [f64; 3], max: [f64; 3], color: [f64; 3] },
}

/// Enclosing box seen from the inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Walls {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub wall_color: [f64; 3],
    pub floor_color: [f64; 3],
    pub ceiling_color: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Room {
    pub walls: Option<Walls>,
    pub primitives: Vec<Primitive>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrParams {
    pub t60: f64,
    /// Change of `t60` per meter along x and y, measured from the region center.
    pub t60_gradient: [f64; 2],
    pub speed_of_sound: f64,
    /// Standard deviation of the reverberant tail at its onset.
    pub tail_level: f64,
    /// IR length in samples.
    pub length: usize,
}

impl Default for IrParams {
    fn default() -> Self {
        Self {
            t60: 0.5,
            t60_gradient: [0.0, 0.0],
            speed_of_sound: 343.0,
            tail_level: 0.05,
            length: 16384,
        }
    }
}

/// Listener/camera rig: eye height, camera pitch and image geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenerSpec {
    pub height: f64,
    pub pitch: f64,
    pub hfov: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for ListenerSpec {
    fn default() -> Self {
        Self {
            height: 1.2,
            pitch: -0.35,
            hfov: 1.2,
            image_width: 32,
            image_height: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub stft: StftConfig,
    pub sources: Vec<SourceSpec>,
    pub attenuation: Attenuation,
    pub ild_alpha: f64,
    pub air_absorption: Option<AirAbsorption>,
    pub zones: Vec<Zone>,
    pub room: Option<Room>,
    pub ir: IrParams,
    /// Where listener poses may be sampled; also the position normalization box.
    pub region: PlanarBounds,
    /// Poses closer than this to any source are rejected.
    pub min_source_distance: f64,
    pub listener: ListenerSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            name: "default".into(),
            sample_rate: 22050,
            clip_seconds: 1.0,
            stft: StftConfig::default(),
            sources: vec![SourceSpec {
                position: [0.0, 0.0],
                audio: SourceAudio::WhiteNoise { amplitude: 0.1 },
            }],
            attenuation: Attenuation::default(),
            ild_alpha: 0.6,
            air_absorption: None,
            zones: Vec::new(),
            room: None,
            ir: IrParams::default(),
            region: PlanarBounds {
                min: [-3.0, -3.0],
                max: [3.0, 3.0],
            },
            min_source_distance: 0.3,
            listener: ListenerSpec::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Schema(format!("scene `{}`: {m}", self.name)));
        if self.sources.is_empty() {
            return fail("at least one source is required".into());
        }
        if !(self.attenuation.d_min > 0.0) {
            return fail(format!("d_min must be positive, got {}", self.attenuation.d_min));
        }
        if !(0.0..=1.0).contains(&self.ild_alpha) {
            return fail(format!("ild_alpha must lie in [0, 1], got {}", self.ild_alpha));
        }
        if !(self.ir.t60 > 0.0) || !(self.ir.speed_of_sound > 0.0) || self.ir.length == 0 {
            return fail("IR parameters need t60 > 0, speed of sound > 0 and a nonzero length".into());
        }
        if !(self.clip_seconds > 0.0) || self.sample_rate == 0 {
            return fail("clip length and sample rate must be positive".into());
        }
        if self.stft.sample_rate != self.sample_rate {
            return fail(format!(
                "STFT sample rate {} differs from scene rate {}",
                self.stft.sample_rate, self.sample_rate
            ));
        }
        if self.zones.iter().any(|z| !(0.0..=1.0).contains(&z.gain)) {
            return fail("zone gains must lie in [0, 1]".into());
        }
        if self.air_absorption.is_some_and(|a| !(a.per_khz >= 0.0)) {
            return fail("air absorption must be non-negative".into());
        }
        if self.region.validate().is_err() {
            return fail(format!("invalid region {:?}", self.region));
        }
        self.stft.validate().map_err(|e| Error::Schema(e.to_string()))?;
        Ok(())
    }

    pub fn clip_len(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn source_positions(&self) -> Vec<[f64; 2]> {
        self.sources.iter().map(|s| s.position).collect()
    }

    /// Product of the gains of every zone containing `p`.
    pub fn zone_gain(&self, p: [f64; 2]) -> f64 {
        self.zones.iter().filter(|z| z.contains(p)).map(|z| z.gain).product()
    }

    pub fn t60_at(&self, p: [f64; 2]) -> f64 {
        let c = self.region.center();
        (self.ir.t60 + self.ir.t60_gradient[0] * (p[0] - c[0]) + self.ir.t60_gradient[1] * (p[1] - c[1])).max(0.05)
    }

    /// Largest distance inside the visual scene, used to normalize depth.
    pub fn diameter(&self) -> f64 {
        let walls = self.room.as_ref().and_then(|r| r.walls.as_ref());
        match walls {
            Some(w) => (0..3).map(|i| (w.max[i] - w.min[i]).powi(2)).sum::<f64>().sqrt(),
            None => {
                let dx = self.region.max[0] - self.region.min[0];
                let dy = self.region.max[1] - self.region.min[1];
                2.0 * dx.hypot(dy)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let mut scene: SceneSpec =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut scene.sources {
            if let SourceAudio::Wav { path } = &mut s.audio {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
