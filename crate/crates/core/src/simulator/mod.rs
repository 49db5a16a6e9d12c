//! Synthetic audio-visual scenes: the ground truth for training and the oracle
//! for every derived test value.

mod audio;
mod dataset;
mod render;
mod scene;

pub use audio::{direct_delay_samples, ild_factor, oracle_masks, simulate_binaural, simulate_ir, source_clip};
pub use dataset::{
    generate, generate_dataset, generate_ir_dataset, sample_poses, split_indices, Dataset, DatasetKind, Observation,
};
pub use render::{render_analytic, render_with, trace};
pub use scene::{
    AirAbsorption, Attenuation, AttenuationLaw, IrParams, ListenerSpec, Primitive, Room, SceneSpec, SourceAudio,
    SourceSpec, Walls, Zone,
};
