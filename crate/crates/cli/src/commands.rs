use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use avfield::avmapper::{FrozenEncoder, VisualFeatures};
use avfield::dataio::{load_dataset, load_split, read_wav_resampled, save_dataset, to_sorted_json, write_png, write_wav_with, SamplePolicy, Split};
use avfield::dsp::rms;
use avfield::error::{Error, Result};
use avfield::metrics::MetricReport;
use avfield::nn::{AdamState, Checkpoint};
use avfield::pose::Pose;
use avfield::simulator::{generate, DatasetKind, SceneSpec};
use avfield::train::EpochStats;
use avfield::vnerf::RadianceField;

use crate::config::RunConfig;
use crate::lock::DirLock;
use crate::pipeline::{self, FieldModel, RunMeta, ACOUSTIC_KIND, IR_KIND, RADIANCE_KIND};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RADIANCE_FILE: &str = "radiance.json";
pub const CONFIG_FILE: &str = "config.json";
pub const CURVE_FILE: &str = "train_curve.csv";
pub const RADIANCE_CURVE_FILE: &str = "radiance_curve.csv";
pub const REPORT_JSON: &str = "metrics.json";
pub const REPORT_CSV: &str = "metrics.csv";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes through a temporary file so a crash never leaves a torn file behind.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp, text)?;
    fs::rename(&tmp, path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Clone, Debug)]
pub struct GenDataArgs {
    pub scene: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub split: f64,
    pub kind: DatasetKind,
    pub out: PathBuf,
}

/// Simulates a dataset from a scene file and writes it under `out`.
pub fn gen_data(a: &GenDataArgs) -> Result<(usize, usize)> {
    let scene = SceneSpec::load(&a.scene)?;
    let data = generate(&scene, a.kind, a.n, a.seed, a.split)?;
    let _lock = DirLock::acquire(&a.out)?;
    save_dataset(&a.out, &scene, &data)?;
    log::info!("wrote {} train / {} val samples to {}", data.train.len(), data.val.len(), a.out.display());
    Ok((data.train.len(), data.val.len()))
}

fn curve_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,learning_rate\n");
    for h in history {
        let _ = writeln!(s, "{},{},{}", h.epoch, h.loss, h.learning_rate);
    }
    s
}

fn field_checkpoint(field: &FieldModel, adam: Option<AdamState>, meta: &RunMeta) -> Result<Checkpoint> {
    let meta = serde_json::to_value(meta)?;
    Ok(match field {
        FieldModel::Acoustic(f) => Checkpoint::from_model(ACOUSTIC_KIND, f, adam, meta),
        FieldModel::Ir(f) => Checkpoint::from_model(IR_KIND, f, adam, meta),
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub radiance_history: Vec<EpochStats>,
    pub checkpoint: PathBuf,
}

/// Trains the radiance field (when the AV mapper is on), then the acoustic or
/// IR field, writing the resolved config, loss curves and checkpoints to `out`.
///
/// The checkpoint is rewritten after every epoch. A non-finite loss stops the
/// run with the last finished epoch's checkpoint on disk.
pub fn train_run(data: &Path, out: &Path, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (scene, ds) = load_dataset(data)?;
    pipeline::check_compatible(cfg, &scene)?;
    let _lock = DirLock::acquire(out)?;
    write(&out.join(CONFIG_FILE), &cfg.to_json()?)?;

    let uses_visual = cfg.anerf.av_mapper && ds.kind == DatasetKind::Binaural;
    let mut radiance_history = Vec::new();
    let features = if uses_visual {
        let curve = out.join(RADIANCE_CURVE_FILE);
        let radiance = pipeline::train_visual(cfg, &scene, &ds.train, |s, _, _| {
            radiance_history.push(s.clone());
            write(&curve, &curve_csv(&radiance_history))
        })?;
        write(&curve, &curve_csv(&radiance_history))?;
        let meta = serde_json::json!({ "config": cfg, "scene": scene });
        write_atomic(&out.join(RADIANCE_FILE), &Checkpoint::from_model(RADIANCE_KIND, &radiance, None, meta).to_json()?)?;
        let enc = FrozenEncoder::new(cfg.encoder_seed);
        let poses: Vec<Pose> = ds.train.iter().map(|o| o.pose).collect();
        Some(pipeline::visual_features(&radiance, &scene, &enc, &poses)?)
    } else {
        None
    };

    let mut field = pipeline::init_field(cfg, &scene, ds.kind)?;
    let mut meta = RunMeta {
        config: cfg.clone(),
        scene: scene.clone(),
        epochs_completed: 0,
        radiance: uses_visual.then(|| RADIANCE_FILE.to_string()),
    };
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let curve = out.join(CURVE_FILE);
    write_atomic(&ckpt_path, &field_checkpoint(&field, None, &meta)?.to_json()?)?;
    write(&curve, &curve_csv(&[]))?;

    let mut history = Vec::new();
    let result = pipeline::train_field(&mut field, cfg, &ds.train, features.as_deref(), |s, m, st| {
        history.push(s.clone());
        meta.epochs_completed = s.epoch;
        write_atomic(&ckpt_path, &field_checkpoint(m, Some(st.clone()), &meta)?.to_json()?)?;
        write(&curve, &curve_csv(&history))
    });
    if let Err(e) = result {
        log::error!(
            "training stopped: {e}; keeping the checkpoint from epoch {} at {}",
            meta.epochs_completed,
            ckpt_path.display()
        );
        return Err(e);
    }
    Ok(TrainOutcome {
        history,
        radiance_history,
        checkpoint: ckpt_path,
    })
}

/// A trained run restored from its checkpoint.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub meta: RunMeta,
    pub field: FieldModel,
    pub radiance: Option<RadianceField>,
}

impl LoadedRun {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let meta: RunMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| Error::Schema(format!("{}: bad run metadata: {e}", path.display())))?;
        let kind = match ckpt.kind.as_str() {
            ACOUSTIC_KIND => DatasetKind::Binaural,
            IR_KIND => DatasetKind::ImpulseResponse,
            other => return Err(Error::Schema(format!("{}: not a field checkpoint (kind `{other}`)", path.display()))),
        };
        let mut field = pipeline::init_field(&meta.config, &meta.scene, kind)?;
        match &mut field {
            FieldModel::Acoustic(f) => ckpt.restore_into(f)?,
            FieldModel::Ir(f) => ckpt.restore_into(f)?,
        }
        let radiance = match &meta.radiance {
            Some(name) => {
                let p = path.parent().unwrap_or(Path::new(".")).join(name);
                let rc = Checkpoint::load(&p)?;
                if rc.kind != RADIANCE_KIND {
                    return Err(Error::Schema(format!("{}: expected a radiance field", p.display())));
                }
                let mut r = pipeline::init_radiance(&meta.config, &meta.scene)?;
                rc.restore_into(&mut r)?;
                Some(r)
            }
            None => None,
        };
        Ok(Self { meta, field, radiance })
    }

    /// Encoded views at `poses`, when the run has a visual branch.
    pub fn features(&self, poses: &[Pose]) -> Result<Option<Vec<VisualFeatures>>> {
        match &self.radiance {
            Some(r) => {
                let enc = FrozenEncoder::new(self.meta.config.encoder_seed);
                Ok(Some(pipeline::visual_features(r, &self.meta.scene, &enc, poses)?))
            }
            None => Ok(None),
        }
    }
}

pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut s = format!("{}\n", MetricReport::CSV_HEADER);
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Scores a checkpoint and the baselines on one split of a dataset and writes
/// `metrics.json` and `metrics.csv` to `out`.
pub fn eval_run(checkpoint: &Path, data: &Path, out: &Path, split: Split) -> Result<Vec<MetricReport>> {
    let run = LoadedRun::load(checkpoint)?;
    let (_, obs) = load_split(data, split)?;
    let cfg = &run.meta.config;
    let reports = match &run.field {
        FieldModel::Acoustic(f) => {
            let poses: Vec<Pose> = obs.iter().map(|o| o.pose).collect();
            let features = run.features(&poses)?;
            pipeline::evaluate_binaural(f, cfg, &obs, features.as_deref())?
        }
        FieldModel::Ir(f) => {
            let (_, train) = load_split(data, Split::Train)?;
            pipeline::evaluate_ir(f, cfg, &train, &obs)?
        }
    };
    let _lock = DirLock::acquire(out)?;
    write(&out.join(REPORT_JSON), &to_sorted_json(&reports)?)?;
    write(&out.join(REPORT_CSV), &reports_csv(&reports))?;
    Ok(reports)
}

/// One row of the trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEnergy {
    pub pose: Pose,
    pub left_rms: f64,
    pub right_rms: f64,
}

impl FrameEnergy {
    /// Mean power over both channels.
    pub fn energy(&self) -> f64 {
        0.5 * (self.left_rms * self.left_rms + self.right_rms * self.right_rms)
    }
}

pub const TRAJECTORY_HEADER: &str = "index,x,y,z,theta,phi,left_rms,right_rms,energy";

pub fn load_poses(path: &Path) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let poses: Vec<Pose> =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: expected a list of poses: {e}", path.display())))?;
    poses.iter().try_for_each(Pose::validate)?;
    Ok(poses)
}

/// Renders audio (and views, when the run has a radiance field) along a pose
/// list. Acoustic runs spatialize the given source clips; IR runs write the
/// predicted impulse responses. An empty pose list writes nothing.
pub fn render_trajectory(checkpoint: &Path, poses: &[Pose], sources: &[PathBuf], out: &Path) -> Result<Vec<FrameEnergy>> {
    if poses.is_empty() {
        return Ok(Vec::new());
    }
    let run = LoadedRun::load(checkpoint)?;
    let scene = &run.meta.scene;
    let sr = scene.sample_rate;
    let clips = match &run.field {
        FieldModel::Acoustic(f) => {
            if sources.len() != f.sources().len() {
                return Err(Error::Usage(format!(
                    "the model has {} sources, {} source clips given",
                    f.sources().len(),
                    sources.len()
                )));
            }
            let mut clips = sources
                .iter()
                .map(|p| Ok(read_wav_resampled(p, sr)?.mono()))
                .collect::<Result<Vec<_>>>()?;
            let n = clips.iter().map(Vec::len).min().unwrap_or(0);
            if n == 0 {
                return Err(Error::Input("source clips are empty".into()));
            }
            clips.iter_mut().for_each(|c| c.truncate(n));
            clips
        }
        FieldModel::Ir(_) => Vec::new(),
    };
    let _lock = DirLock::acquire(out)?;
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let visual = match &run.radiance {
            Some(r) => {
                let (rgb, depth) = pipeline::render_view(r, scene, pose)?;
                write_png(&out.join(format!("rgb_{i:04}.png")), &rgb, 1.0)?;
                write_png(&out.join(format!("depth_{i:04}.png")), &depth, scene.diameter() as f32)?;
                let enc = FrozenEncoder::new(run.meta.config.encoder_seed);
                Some(pipeline::encode_view(&enc, scene, &rgb, &depth)?)
            }
            None => None,
        };
        let audio = match &run.field {
            FieldModel::Acoustic(f) => {
                let refs: Vec<&[f64]> = clips.iter().map(Vec::as_slice).collect();
                f.synthesize(pose, &refs, visual.as_ref(), run.meta.config.stft)?
            }
            FieldModel::Ir(f) => f.predict(pose)?,
        };
        write_wav_with(&out.join(format!("frame_{i:04}.wav")), &audio, sr, SamplePolicy::Clamp)?;
        frames.push(FrameEnergy {
            pose: *pose,
            left_rms: rms(&audio[0]),
            right_rms: rms(&audio[1]),
        });
    }
    let mut csv = format!("{TRAJECTORY_HEADER}\n");
    for (i, f) in frames.iter().enumerate() {
        let p = f.pose;
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{},{}",
            p.x,
            p.y,
            p.z,
            p.theta,
            p.phi,
            f.left_rms,
            f.right_rms,
            f.energy()
        );
    }
    write(&out.join(TRAJECTORY_CSV), &csv)?;
    Ok(frames)
}
