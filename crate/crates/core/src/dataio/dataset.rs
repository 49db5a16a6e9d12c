use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::images::{read_image, write_image, write_png};
use super::manifest::{load_manifest, save_manifest, to_sorted_json, DatasetManifest, SampleRecord, Split, MANIFEST_VERSION};
use super::wav::{read_wav, write_wav_with, SamplePolicy};
use crate::error::{Error, Result};
use crate::simulator::{Dataset, DatasetKind, Observation, SceneSpec};

pub const SCENE_FILE: &str = "scene.json";

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.json", split.name()))
}

fn write_observation(dir: &Path, o: &Observation, sample_rate: u32) -> Result<SampleRecord> {
    let mut source_wavs = Vec::new();
    for (k, clip) in o.source_audio.iter().enumerate() {
        let rel = PathBuf::from(format!("audio/{}_source{k}.wav", o.id));
        write_wav_with(&dir.join(&rel), std::slice::from_ref(clip), sample_rate, SamplePolicy::Clamp)?;
        source_wavs.push(rel);
    }
    let target_wav = PathBuf::from(format!("audio/{}_target.wav", o.id));
    write_wav_with(&dir.join(&target_wav), &o.target, sample_rate, SamplePolicy::Clamp)?;
    let mut rgb = None;
    let mut depth = None;
    if let (Some(c), Some(d)) = (&o.rgb, &o.depth) {
        let rc = PathBuf::from(format!("images/{}_rgb.avimg", o.id));
        let rd = PathBuf::from(format!("images/{}_depth.avimg", o.id));
        write_image(&dir.join(&rc), c)?;
        write_image(&dir.join(&rd), d)?;
        write_png(&dir.join(format!("images/{}_rgb.png", o.id)), c, 1.0)?;
        let max_depth = d.data().iter().copied().fold(0.0f32, f32::max).max(1e-6);
        write_png(&dir.join(format!("images/{}_depth.png", o.id)), d, max_depth)?;
        rgb = Some(rc);
        depth = Some(rd);
    }
    Ok(SampleRecord {
        id: o.id.clone(),
        pose: o.pose,
        source_wavs,
        target_wav,
        rgb,
        depth,
    })
}

/// Writes `scene.json`, `train.json`, `val.json` and the referenced audio and
/// image files under `dir`.
pub fn save_dataset(dir: &Path, scene: &SceneSpec, data: &Dataset) -> Result<()> {
    for sub in ["audio", "images"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    std::fs::write(dir.join(SCENE_FILE), to_sorted_json(scene)?).map_err(|e| Error::io(dir.join(SCENE_FILE), e))?;
    for (split, obs) in [(Split::Train, &data.train), (Split::Val, &data.val)] {
        let samples = obs
            .par_iter()
            .map(|o| write_observation(dir, o, scene.sample_rate))
            .collect::<Result<Vec<_>>>()?;
        let manifest = DatasetManifest {
            version: MANIFEST_VERSION.into(),
            kind: data.kind,
            scene: PathBuf::from(SCENE_FILE),
            split,
            samples,
        };
        save_manifest(&manifest, &manifest_path(dir, split))?;
    }
    Ok(())
}

fn read_observation(dir: &Path, s: &SampleRecord) -> Result<Observation> {
    let source_audio = s
        .source_wavs
        .iter()
        .map(|p| Ok(read_wav(&dir.join(p))?.mono()))
        .collect::<Result<Vec<_>>>()?;
    let t = read_wav(&dir.join(&s.target_wav))?;
    if t.num_channels() != 2 {
        return Err(Error::Schema(format!(
            "target of `{}` has {} channels, expected 2",
            s.id,
            t.num_channels()
        )));
    }
    let mut ch = t.channels.into_iter();
    let target = [ch.next().expect("two channels"), ch.next().expect("two channels")];
    let rgb = s.rgb.as_ref().map(|p| read_image(&dir.join(p))).transpose()?;
    let depth = s.depth.as_ref().map(|p| read_image(&dir.join(p))).transpose()?;
    Ok(Observation {
        id: s.id.clone(),
        pose: s.pose,
        source_audio,
        target,
        rgb,
        depth,
    })
}

pub fn load_split(dir: &Path, split: Split) -> Result<(DatasetManifest, Vec<Observation>)> {
    let m = load_manifest(&manifest_path(dir, split))?;
    let obs = m
        .samples
        .par_iter()
        .map(|s| read_observation(dir, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, obs))
}

/// Reads back a directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(SceneSpec, Dataset)> {
    let (tm, train) = load_split(dir, Split::Train)?;
    let (vm, val) = load_split(dir, Split::Val)?;
    if tm.kind != vm.kind {
        return Err(Error::Schema("train and val manifests disagree on the dataset kind".into()));
    }
    let scene = SceneSpec::load(&dir.join(&tm.scene))?;
    Ok((
        scene,
        Dataset {
            kind: tm.kind,
            train,
            val,
        },
    ))
}

pub fn dataset_kind(dir: &Path) -> Result<DatasetKind> {
    Ok(load_manifest(&manifest_path(dir, Split::Train))?.kind)
}
