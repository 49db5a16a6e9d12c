use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::simulator::DatasetKind;

pub const MANIFEST_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// One sample; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub pose: Pose,
    /// One dry clip per source (empty for impulse-response datasets).
    pub source_wavs: Vec<PathBuf>,
    pub target_wav: PathBuf,
    pub rgb: Option<PathBuf>,
    pub depth: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: String,
    pub kind: DatasetKind,
    /// Scene description the samples were generated from.
    pub scene: PathBuf,
    pub split: Split,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    fn referenced(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.scene).chain(self.samples.iter().flat_map(|s| {
            s.source_wavs
                .iter()
                .chain(std::iter::once(&s.target_wav))
                .chain(s.rgb.iter())
                .chain(s.depth.iter())
        }))
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "manifest version `{}` is not supported (expected `{MANIFEST_VERSION}`)",
                self.version
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if !s.pose.is_finite() {
                return Err(Error::Schema(format!("sample `{}` has a non-finite pose", s.id)));
            }
        }
        for p in self.referenced() {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::MissingFile(full));
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    m.validate(path.parent().unwrap_or(Path::new(".")))?;
    Ok(m)
}

/// Writes pretty JSON with object keys in sorted order.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    std::fs::write(path, to_sorted_json(manifest)?).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // `serde_json::Value` keeps object keys in a sorted map.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}
