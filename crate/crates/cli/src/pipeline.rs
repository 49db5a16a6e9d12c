//! Library side of the subcommands: model construction from a run config,
//! example preparation, the visual stage and evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use avfield::anerf::ir::{IrANerfModel, IrConfig, IrExample, IrField};
use avfield::anerf::{ANerfConfig, AcousticExample, AcousticField, BinauralMagnitudes};
use avfield::avmapper::{encode_views, prepare_view, FrozenEncoder, VisualFeatures};
use avfield::camera::Intrinsics;
use avfield::dsp::StftPlan;
use avfield::error::{Error, Result};
use avfield::metrics::{baseline, binaural_metrics, ir_metrics, BaselineKind, MetricReport};
use avfield::nn::AdamState;
use avfield::pose::Pose;
use avfield::raster::Image;
use avfield::rng;
use avfield::simulator::{DatasetKind, Observation, SceneSpec};
use avfield::train::{train, EpochStats, TrainConfig};
use avfield::vnerf::{render_image, train_vnerf, RadianceField, RenderOptions, Sampling, View, VnerfConfig};

use crate::config::RunConfig;

pub const ACOUSTIC_KIND: &str = "acoustic_field";
pub const IR_KIND: &str = "ir_field";
pub const RADIANCE_KIND: &str = "radiance_field";

/// Acoustic field settings for a scene: bins from the run's STFT, position
/// normalization from the scene region.
pub fn acoustic_config(cfg: &RunConfig, scene: &SceneSpec) -> ANerfConfig {
    ANerfConfig {
        num_bins: cfg.stft.num_bins(),
        bounds: scene.region,
        ..cfg.anerf.clone()
    }
}

pub fn ir_config(cfg: &RunConfig, scene: &SceneSpec) -> IrConfig {
    IrConfig {
        width: cfg.ir.width,
        ir_length: scene.ir.length,
        pe_frequencies: cfg.ir.pe_frequencies,
        time_frequencies: cfg.ir.time_frequencies,
        coordinate_transform: cfg.anerf.coordinate_transform,
        direction_injection: cfg.anerf.direction_injection,
        bounds: scene.region,
        stft: cfg.stft,
    }
}

pub fn visual_config(cfg: &RunConfig, scene: &SceneSpec) -> VnerfConfig {
    let mut v = VnerfConfig::for_scene(scene);
    v.width = cfg.vnerf.width;
    v.position_frequencies = cfg.vnerf.position_frequencies;
    v.direction_frequencies = cfg.vnerf.direction_frequencies;
    v.render.samples = cfg.vnerf.samples;
    v
}

pub fn check_compatible(cfg: &RunConfig, scene: &SceneSpec) -> Result<()> {
    cfg.validate()?;
    if cfg.stft.sample_rate != scene.sample_rate {
        return Err(Error::Config(format!(
            "run STFT sample rate {} differs from the scene's {}",
            cfg.stft.sample_rate, scene.sample_rate
        )));
    }
    Ok(())
}

/// Everything needed to rebuild a trained model besides its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub config: RunConfig,
    pub scene: SceneSpec,
    pub epochs_completed: usize,
    /// File name of the radiance-field checkpoint next to this one, if any.
    pub radiance: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldModel {
    Acoustic(AcousticField),
    Ir(IrField),
}

impl FieldModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FieldModel::Acoustic(_) => ACOUSTIC_KIND,
            FieldModel::Ir(_) => IR_KIND,
        }
    }
}

/// Freshly initialized field for a dataset kind.
pub fn init_field(cfg: &RunConfig, scene: &SceneSpec, kind: DatasetKind) -> Result<FieldModel> {
    check_compatible(cfg, scene)?;
    match kind {
        DatasetKind::Binaural => Ok(FieldModel::Acoustic(AcousticField::new(
            acoustic_config(cfg, scene),
            scene.source_positions(),
            cfg.seed,
        )?)),
        DatasetKind::ImpulseResponse => {
            let [source] = scene.source_positions()[..] else {
                return Err(Error::Config(format!(
                    "impulse-response fields need exactly one source, scene `{}` has {}",
                    scene.name,
                    scene.sources.len()
                )));
            };
            let mut r = rng::seeded(rng::derive(cfg.seed, 0x6972));
            Ok(FieldModel::Ir(IrField {
                model: IrANerfModel::new(&ir_config(cfg, scene), &mut r)?,
                source,
            }))
        }
    }
}

pub fn init_radiance(cfg: &RunConfig, scene: &SceneSpec) -> Result<RadianceField> {
    RadianceField::new(visual_config(cfg, scene), &mut rng::seeded(rng::derive(cfg.seed, 0x766e)))
}

fn views(obs: &[Observation]) -> Result<Vec<View>> {
    obs.iter()
        .map(|o| match &o.rgb {
            Some(rgb) => Ok(View {
                pose: o.pose,
                rgb: rgb.clone(),
            }),
            None => Err(Error::Config(format!(
                "sample `{}` has no RGB view; the AV mapper needs a scene with visual geometry",
                o.id
            ))),
        })
        .collect()
}

/// Fits the radiance field to the training views.
pub fn train_visual<F>(cfg: &RunConfig, scene: &SceneSpec, obs: &[Observation], on_epoch: F) -> Result<RadianceField>
where
    F: FnMut(&EpochStats, &RadianceField, &AdamState) -> Result<()>,
{
    let views = views(obs)?;
    let mut field = init_radiance(cfg, scene)?;
    let tc = TrainConfig {
        epochs: cfg.vnerf.epochs,
        batch_size: cfg.vnerf.batch_size,
        adam: cfg.vnerf.adam,
        seed: rng::derive(cfg.seed, 0x766e),
    };
    train_vnerf(&mut field, &views, scene.listener.hfov, &tc, cfg.vnerf.bundle, on_epoch)?;
    Ok(field)
}

/// RGB and depth rendered by the radiance field at the listener's camera.
pub fn render_view(field: &RadianceField, scene: &SceneSpec, pose: &Pose) -> Result<(Image, Image)> {
    let l = &scene.listener;
    let k = Intrinsics::from_hfov(l.image_width, l.image_height, l.hfov)?;
    let opts = RenderOptions {
        sampling: Sampling::Midpoint,
        ..field.config().render
    };
    render_image(field, pose, l.image_width, l.image_height, &k, &opts)
}

pub fn encode_view(enc: &FrozenEncoder, scene: &SceneSpec, rgb: &Image, depth: &Image) -> Result<VisualFeatures> {
    encode_views(enc, &prepare_view(rgb), &prepare_view(depth), scene.diameter())
}

/// Encoded radiance-field renders at every pose.
pub fn visual_features(field: &RadianceField, scene: &SceneSpec, enc: &FrozenEncoder, poses: &[Pose]) -> Result<Vec<VisualFeatures>> {
    poses
        .iter()
        .map(|p| {
            let (rgb, depth) = render_view(field, scene, p)?;
            encode_view(enc, scene, &rgb, &depth)
        })
        .collect()
}

pub fn acoustic_examples(
    cfg: &RunConfig,
    obs: &[Observation],
    visual: Option<&[VisualFeatures]>,
) -> Result<Vec<AcousticExample>> {
    if let Some(v) = visual {
        if v.len() != obs.len() {
            return Err(Error::Input(format!("{} views for {} samples", v.len(), obs.len())));
        }
    }
    let plan = StftPlan::new(cfg.stft)?;
    obs.par_iter()
        .enumerate()
        .map(|(i, o)| {
            let sources = o
                .source_audio
                .iter()
                .map(|a| Ok(plan.analyze(a)?.magnitude))
                .collect::<Result<Vec<_>>>()?;
            let target = BinauralMagnitudes::from_channels(
                plan.analyze(&o.target[0])?.magnitude,
                plan.analyze(&o.target[1])?.magnitude,
            )?;
            Ok(AcousticExample {
                pose: o.pose,
                sources,
                target,
                visual: visual.map(|v| v[i].clone()),
            })
        })
        .collect()
}

pub fn ir_examples(cfg: &RunConfig, obs: &[Observation]) -> Result<Vec<IrExample>> {
    obs.par_iter()
        .map(|o| IrExample::new(o.pose, o.target.clone(), cfg.stft))
        .collect()
}

/// Trains the field on the examples of its kind. `visual` is used only by
/// acoustic fields with an AV mapper.
pub fn train_field<F>(
    field: &mut FieldModel,
    cfg: &RunConfig,
    obs: &[Observation],
    visual: Option<&[VisualFeatures]>,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &FieldModel, &AdamState) -> Result<()>,
{
    let tc = cfg.train_config();
    match field {
        FieldModel::Acoustic(f) => {
            let ex = acoustic_examples(cfg, obs, visual)?;
            let mut snapshot = FieldModel::Acoustic(f.clone());
            let (h, _) = train(f, &ex, &tc, None, |s, m, st| {
                snapshot = FieldModel::Acoustic(m.clone());
                on_epoch(s, &snapshot, st)
            })?;
            Ok(h)
        }
        FieldModel::Ir(f) => {
            let ex = ir_examples(cfg, obs)?;
            let mut snapshot = FieldModel::Ir(f.clone());
            let (h, _) = train(f, &ex, &tc, None, |s, m, st| {
                snapshot = FieldModel::Ir(m.clone());
                on_epoch(s, &snapshot, st)
            })?;
            Ok(h)
        }
    }
}

/// Sum of the dry source signals, the mono input the baselines see.
pub fn dry_mix(obs: &Observation) -> Vec<f64> {
    let n = obs.source_audio.iter().map(Vec::len).min().unwrap_or(0);
    (0..n).map(|i| obs.source_audio.iter().map(|s| s[i]).sum()).collect()
}

pub fn predict_binaural(
    field: &AcousticField,
    cfg: &RunConfig,
    obs: &Observation,
    visual: Option<&VisualFeatures>,
) -> Result<[Vec<f64>; 2]> {
    let srcs: Vec<&[f64]> = obs.source_audio.iter().map(Vec::as_slice).collect();
    field.synthesize(&obs.pose, &srcs, visual, cfg.stft)
}

/// Reports for the model and the three energy baselines.
pub fn evaluate_binaural(
    field: &AcousticField,
    cfg: &RunConfig,
    obs: &[Observation],
    visual: Option<&[VisualFeatures]>,
) -> Result<Vec<MetricReport>> {
    let model = obs
        .par_iter()
        .enumerate()
        .map(|(i, o)| {
            let pred = predict_binaural(field, cfg, o, visual.map(|v| &v[i]))?;
            binaural_metrics(&o.id, &pred, &o.target, cfg.stft)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = vec![MetricReport::from_samples("model", model)];
    for kind in BaselineKind::ALL {
        let samples = obs
            .par_iter()
            .map(|o| binaural_metrics(&o.id, &baseline(kind, &dry_mix(o), &o.target), &o.target, cfg.stft))
            .collect::<Result<Vec<_>>>()?;
        reports.push(MetricReport::from_samples(kind.name(), samples));
    }
    Ok(reports)
}

/// Index of the training pose closest in the horizontal plane; ties go to the
/// lower index.
pub fn nearest_pose(train: &[Observation], pose: &Pose) -> Option<usize> {
    let d = |o: &Observation| (o.pose.x - pose.x).hypot(o.pose.y - pose.y);
    (0..train.len()).min_by(|&a, &b| d(&train[a]).total_cmp(&d(&train[b])))
}

/// Reports for the IR field and the nearest-training-pose baseline.
pub fn evaluate_ir(field: &IrField, cfg: &RunConfig, train_obs: &[Observation], obs: &[Observation]) -> Result<Vec<MetricReport>> {
    let model = obs
        .par_iter()
        .map(|o| ir_metrics(&o.id, &field.predict(&o.pose)?, &o.target, cfg.stft))
        .collect::<Result<Vec<_>>>()?;
    if train_obs.is_empty() {
        return Err(Error::Input("nearest-pose baseline needs training samples".into()));
    }
    let nearest = obs
        .par_iter()
        .map(|o| {
            let j = nearest_pose(train_obs, &o.pose).expect("non-empty");
            ir_metrics(&o.id, &train_obs[j].target, &o.target, cfg.stft)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        MetricReport::from_samples("model", model),
        MetricReport::from_samples("nearest", nearest),
    ])
}
