//! Neural acoustic fields for novel-pose binaural audio synthesis.
//!
//! The crate learns, from posed binaural recordings of a scene with a known
//! source position, a continuous map from listener pose to per-frequency
//! magnitude masks, and uses it to render direction-aware stereo audio (or
//! impulse responses) at unseen poses. A small radiance field renders RGB and
//! depth views whose features condition the acoustic model.

pub mod anerf;
pub mod avmapper;
pub mod camera;
pub mod dataio;
pub mod dsp;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pose;
pub mod raster;
pub mod rng;
pub mod simulator;
pub mod train;
pub mod vnerf;

pub use error::{Error, Result};
