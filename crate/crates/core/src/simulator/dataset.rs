use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::audio::{simulate_binaural, simulate_ir, source_clip};
use super::render::render_analytic;
use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::raster::Image;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Binaural,
    ImpulseResponse,
}

/// One posed sample: the dry source clips, the stereo target (a recording or an
/// impulse response), and the views rendered from the pose when the scene has
/// visual geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub id: String,
    pub pose: Pose,
    pub source_audio: Vec<Vec<f64>>,
    pub target: [Vec<f64>; 2],
    pub rgb: Option<Image>,
    pub depth: Option<Image>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub train: Vec<Observation>,
    pub val: Vec<Observation>,
}

/// `n` poses drawn uniformly from the scene region (rejecting any closer than
/// `min_source_distance` to a source), with uniform headings.
pub fn sample_poses(scene: &SceneSpec, n: usize, seed: u64) -> Result<Vec<Pose>> {
    let mut r = rng::seeded(rng::derive(seed, 0x706f_7365));
    let b = scene.region;
    let mut poses = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = 1000 * n.max(1);
    while poses.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(Error::Config(format!(
                "could not place {n} poses in region {:?} away from the sources",
                b
            )));
        }
        let x = r.random_range(b.min[0]..b.max[0]);
        let y = r.random_range(b.min[1]..b.max[1]);
        let theta = r.random_range(0.0..std::f64::consts::TAU);
        if scene
            .sources
            .iter()
            .any(|s| (s.position[0] - x).hypot(s.position[1] - y) < scene.min_source_distance.max(1e-6))
        {
            continue;
        }
        poses.push(Pose::new(x, y, scene.listener.height, theta, scene.listener.pitch));
    }
    Ok(poses)
}

/// Seeded shuffle of `0..n`; the first `round(n * ratio)` go to training. Each
/// side is returned in ascending order.
pub fn split_indices(n: usize, seed: u64, ratio: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio must lie in [0, 1], got {ratio}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(rng::derive(seed, 0x7370_6c74)));
    let n_train = (n as f64 * ratio).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn observe(scene: &SceneSpec, kind: DatasetKind, i: usize, pose: Pose, seed: u64) -> Result<Observation> {
    let (source_audio, target) = match kind {
        DatasetKind::Binaural => {
            let clips = (0..scene.sources.len())
                .map(|k| source_clip(scene, k, i as u64, seed))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f64]> = clips.iter().map(Vec::as_slice).collect();
            let target = simulate_binaural(scene, &pose, &refs)?;
            (clips, target)
        }
        DatasetKind::ImpulseResponse => (Vec::new(), simulate_ir(scene, &pose, rng::derive(seed, 0x1_0000 + i as u64))?),
    };
    let (rgb, depth) = if scene.room.is_some() {
        let (a, b) = render_analytic(scene, &pose, scene.listener.image_width, scene.listener.image_height)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    Ok(Observation {
        id: format!("pose_{i:05}"),
        pose,
        source_audio,
        target,
        rgb,
        depth,
    })
}

pub fn generate(scene: &SceneSpec, kind: DatasetKind, n_poses: usize, seed: u64, split_ratio: f64) -> Result<Dataset> {
    scene.validate()?;
    if n_poses < 10 {
        return Err(Error::Config(format!("need at least 10 poses, got {n_poses}")));
    }
    let poses = sample_poses(scene, n_poses, seed)?;
    let obs = poses
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| observe(scene, kind, i, p, seed))
        .collect::<Result<Vec<_>>>()?;
    let (train, val) = split_indices(n_poses, seed, split_ratio)?;
    Ok(Dataset {
        kind,
        train: train.iter().map(|&i| obs[i].clone()).collect(),
        val: val.iter().map(|&i| obs[i].clone()).collect(),
    })
}

/// Posed binaural recordings (plus views when the scene has geometry).
pub fn generate_dataset(scene: &SceneSpec, n_poses: usize, seed: u64, split_ratio: f64) -> Result<Dataset> {
    generate(scene, DatasetKind::Binaural, n_poses, seed, split_ratio)
}

/// Posed two-channel impulse responses.
pub fn generate_ir_dataset(scene: &SceneSpec, n_poses: usize, seed: u64, split_ratio: f64) -> Result<Dataset> {
    generate(scene, DatasetKind::ImpulseResponse, n_poses, seed, split_ratio)
}
