//! Minibatch Adam training loop shared by every model in the crate.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, Parameterized};
use crate::rng;

/// A model that can report the loss and parameter gradient of one example.
pub trait Objective: Parameterized + Sync {
    type Example: Sync;

    /// Adds the example's parameter gradient into `grad` (in `param_segments`
    /// order) and returns its loss.
    fn accumulate(&self, example: &Self::Example, grad: &mut [f64]) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.adam.validate()
    }

    pub fn total_steps(&self, examples: usize) -> u64 {
        (self.epochs * examples.div_ceil(self.batch_size)) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

// Examples per parallel work item. Fixed so the reduction order (and therefore
// every bit of the result) does not depend on the thread count.
const CHUNK: usize = 4;

/// Mean loss and gradient over `batch`.
pub fn batch_gradient<M: Objective>(model: &M, batch: &[&M::Example]) -> Result<(f64, Vec<f64>)> {
    let n = model.num_params();
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let mut loss = 0.0;
            for ex in chunk {
                loss += model.accumulate(ex, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for part in parts {
        let (l, g) = part?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// Mean loss over `examples` without updating anything.
pub fn evaluate_loss<M: Objective>(model: &M, examples: &[M::Example]) -> Result<f64> {
    let refs: Vec<&M::Example> = examples.iter().collect();
    let mut total = 0.0;
    for chunk in refs.chunks(64) {
        total += batch_gradient(model, chunk)?.0 * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Runs `cfg.epochs` epochs of shuffled minibatch Adam.
///
/// `on_epoch` sees the model after every epoch; returning an error stops training.
/// A non-finite loss aborts with a training error before the parameters are
/// touched, so whatever `on_epoch` last persisted stays valid.
pub fn train<M, F>(
    model: &mut M,
    examples: &[M::Example],
    cfg: &TrainConfig,
    resume: Option<AdamState>,
    mut on_epoch: F,
) -> Result<(Vec<EpochStats>, AdamState)>
where
    M: Objective,
    F: FnMut(&EpochStats, &M, &AdamState) -> Result<()>,
{
    cfg.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => AdamState::new(model.num_params(), cfg.adam)?,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((history, state));
    }
    if examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let total = cfg.total_steps(examples.len());
    let segments = model.param_segments();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive(cfg.seed, 0x7368_7566));
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut lr = state.learning_rate(total);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&M::Example> = idx.iter().map(|&i| &examples[i]).collect();
            let (loss, grad) = batch_gradient(model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    param: "loss".into(),
                    msg: format!("non-finite loss {loss} in epoch {}", epoch + 1),
                });
            }
            lr = state.learning_rate(total);
            let mut params = model.flat_params();
            adam_step(&mut params, &grad, &mut state, total, &segments)?;
            model.load_flat_params(&params)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: epoch_loss / examples.len() as f64,
            learning_rate: lr,
        };
        log::info!("epoch {} loss {:.6e} lr {:.3e}", stats.epoch, stats.loss, stats.learning_rate);
        on_epoch(&stats, model, &state)?;
        history.push(stats);
    }
    Ok((history, state))
}
