//! Minimal dense-network engine: layers, fixed-architecture blocks with exact
//! reverse-mode gradients, Adam, finite-difference checking and checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod layer;
mod mlp;
pub(crate) mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{finite_difference_check, max_relative_error, numeric_gradient};
pub use layer::{sigmoid, softplus, Activation, DenseLayer};
pub use mlp::{BlockGradients, Injection, MlpBlock, ResidualSpan, Tape};
pub use params::{locate_param, ParamSegment, Parameterized};

/// The standard four-layer block used by the acoustic and visual fields:
/// `in -> width -> width -> width -> out`, ReLU on hidden layers, residual over
/// the two hidden-to-hidden layers.
pub fn four_layer_block<R: rand::Rng + ?Sized>(
    input: usize,
    width: usize,
    output: usize,
    output_activation: Activation,
    rng: &mut R,
) -> crate::Result<MlpBlock> {
    MlpBlock::init(
        &[input, width, width, width, output],
        &[Activation::Relu, Activation::Relu, Activation::Relu, output_activation],
        Some(ResidualSpan { from: 1, to: 2 }),
        rng,
    )
}
