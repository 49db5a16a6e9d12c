//! Persistence: WAV audio, raw and PNG images, dataset manifests.

mod dataset;
mod images;
mod manifest;
mod wav;

pub use dataset::{dataset_kind, load_dataset, load_split, manifest_path, save_dataset, SCENE_FILE};
pub use images::{read_image, write_image, write_png};
pub use manifest::{load_manifest, save_manifest, to_sorted_json, DatasetManifest, SampleRecord, Split, MANIFEST_VERSION};
pub use wav::{decode_wav, encode_wav, read_wav, read_wav_resampled, resample, write_wav, write_wav_with, SamplePolicy, Wav};
