//! Per-(speaker, attack) filter optimisation: Adam on the cosine objective
//! over batches of spoofed utterances, one checkpoint per epoch.

use rayon::prelude::*;

use crate::embedder::Embedder;
use crate::error::{Error, Result};
use crate::grad::{backward, forward_with_tape, Gradient};
use crate::rng::{derive_seed, SplitMix64};
use crate::signal::{MalacopulaFilter, Signal};

/// Largest absolute value of the noise seeded into branches 2..K at
/// initialization.
pub const INIT_NOISE_MAGNITUDE: f64 = 1e-4;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub branches: usize,
    pub filter_len: usize,
    pub seed: u64,
    /// Emit a checkpoint after every batch instead of every epoch.
    pub checkpoint_each_batch: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 60,
            batch_size: 12,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            branches: 5,
            filter_len: 257,
            seed: 0,
            checkpoint_each_batch: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::invalid(format!("adam {name} must be in [0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        if self.branches == 0 {
            return Err(Error::invalid("filter needs at least one branch"));
        }
        if self.filter_len == 0 || self.filter_len % 2 == 0 {
            return Err(Error::invalid("filter length must be odd and positive"));
        }
        Ok(())
    }
}

/// First and second gradient moments plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(branches: usize, length: usize) -> Self {
        AdamState {
            m: vec![0.0; branches * length],
            v: vec![0.0; branches * length],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One snapshot of the filter during training, with the mean loss over the
/// utterances seen since the previous snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCheckpoint {
    pub epoch: usize,
    pub filter: MalacopulaFilter,
    pub mean_loss: f64,
}

/// Starting filter: branch 1 is an exact centered unit impulse, so the
/// initial filter reproduces the unfiltered (peak-normalized) attack;
/// branches 2..K get seeded noise within [`INIT_NOISE_MAGNITUDE`] so their
/// gradients are not trapped at the all-zero saddle.
pub fn init_filter(branches: usize, length: usize, seed: u64) -> Result<MalacopulaFilter> {
    let mut filter = MalacopulaFilter::identity(branches, length)?;
    let mut rng = SplitMix64::new(derive_seed(seed, "filter-init"));
    let coeffs = filter.coeffs_mut();
    for c in coeffs.iter_mut().skip(length) {
        *c = rng.uniform(-INIT_NOISE_MAGNITUDE, INIT_NOISE_MAGNITUDE);
    }
    Ok(filter)
}

/// One bias-corrected Adam update, applied to the coefficients in place.
pub fn adam_step(
    filter: &mut MalacopulaFilter,
    grad: &Gradient,
    state: &mut AdamState,
    cfg: &TrainingConfig,
) -> Result<()> {
    let n = filter.branches() * filter.len();
    if grad.branches() != filter.branches() || grad.len() != filter.len() {
        return Err(Error::invalid(format!(
            "gradient shape {}x{} does not match filter shape {}x{}",
            grad.branches(),
            grad.len(),
            filter.branches(),
            filter.len()
        )));
    }
    if state.m.len() != n {
        return Err(Error::invalid("optimiser state shape does not match filter"));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    let coeffs = filter.coeffs_mut();
    for (i, g) in grad.d_coeffs().iter().enumerate() {
        state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * g;
        state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        coeffs[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Mean of per-utterance losses and gradients over one batch. Utterances
/// are processed concurrently; the reduction order is fixed, so results do
/// not depend on the thread count.
fn batch_gradient(
    batch: &[&Signal],
    filter: &MalacopulaFilter,
    embedder: &Embedder,
    target: &[f64],
) -> Result<(f64, Gradient)> {
    let per_utt: Vec<(f64, Gradient)> = batch
        .par_iter()
        .map(|x| {
            let (loss, tape) = forward_with_tape(x, filter, embedder, target)?;
            Ok((loss, backward(&tape)))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / per_utt.len() as f64;
    let mut loss_sum = 0.0;
    let mut d_coeffs = vec![0.0; filter.branches() * filter.len()];
    for (loss, grad) in per_utt.iter() {
        loss_sum += loss;
        for (acc, g) in d_coeffs.iter_mut().zip(grad.d_coeffs()) {
            *acc += g * scale;
        }
    }
    Ok((
        loss_sum * scale,
        Gradient::from_parts(filter.branches(), filter.len(), d_coeffs),
    ))
}

/// Optimises one filter against one enrolment target, emitting a deep-copy
/// checkpoint per epoch (or per batch when configured). The embedder is
/// never modified.
pub fn train_filter(
    spoof_utts: &[Signal],
    enrol_embedding: &[f64],
    cfg: &TrainingConfig,
    embedder: &Embedder,
) -> Result<Vec<FilterCheckpoint>> {
    cfg.validate()?;
    if spoof_utts.is_empty() {
        return Err(Error::invalid("training needs at least one spoofed utterance"));
    }

    let mut filter = init_filter(cfg.branches, cfg.filter_len, cfg.seed)?;
    let mut state = AdamState::new(cfg.branches, cfg.filter_len);
    let mut shuffle_rng = SplitMix64::new(derive_seed(cfg.seed, "epoch-shuffle"));
    let mut order: Vec<usize> = (0..spoof_utts.len()).collect();
    let mut checkpoints = Vec::new();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss_sum = 0.0;
        let mut epoch_count = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Signal> = chunk.iter().map(|&i| &spoof_utts[i]).collect();
            let (mean_loss, grad) = batch_gradient(&batch, &filter, embedder, enrol_embedding)?;
            adam_step(&mut filter, &grad, &mut state, cfg)?;
            epoch_loss_sum += mean_loss * batch.len() as f64;
            epoch_count += batch.len();

            if cfg.checkpoint_each_batch {
                checkpoints.push(FilterCheckpoint {
                    epoch,
                    filter: filter.clone(),
                    mean_loss,
                });
            }
        }

        if !cfg.checkpoint_each_batch {
            checkpoints.push(FilterCheckpoint {
                epoch,
                filter: filter.clone(),
                mean_loss: epoch_loss_sum / epoch_count as f64,
            });
        }
    }
    Ok(checkpoints)
}
