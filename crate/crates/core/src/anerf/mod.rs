//! The acoustic field: pose-conditioned mask prediction, binaural composition,
//! the acoustic loss, multi-source stacking and the impulse-response variant.

mod compose;
mod field;
pub mod ir;
mod model;

pub use crate::pose::Pose;
pub use compose::{
    acoustic_loss, compose_binaural, compose_magnitudes, loss_and_mask_grads, BinauralMagnitudes, MaskGradients,
    RefineConv,
};
pub use field::{multi_source_masks, AcousticExample, AcousticField};
pub use model::{ANerfConfig, ANerfModel, DirectionInjection, Fusion, MaskPair, MaskTape};
