//! Truncated-BPTT training with a stability penalty.
//!
//! Each epoch shuffles the training subsequences, splits them into batches and
//! takes one RMSProp step per batch on `MSE + ρ(ν)`. Validation MSE is tracked
//! every epoch; the weights with the lowest validation MSE are returned, and
//! training halts after `patience` epochs without improvement.

mod loss;
mod rmsprop;

pub use loss::{loss, loss_gradient, mse_washout, regularizer, regularizer_slopes, LossAndGrad, Penalty};
pub use rmsprop::RmsProp;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certifier;
use crate::datasets::Subsequence;
use crate::error::{Error, Result};
use crate::model::{DeepLstmModel, ModelState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Subsequence length in steps (each subsequence has `t_s + 1` samples).
    pub t_s: usize,
    /// Washout steps excluded from the error.
    pub tau_w: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub pi_bar: f64,
    pub pi_underbar: f64,
    pub eps_nu: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before halting.
    pub patience: usize,
    /// Shuffling seed. Not read from config files: pipelines derive it from
    /// their single top-level seed.
    #[serde(skip)]
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_s: 200,
            tau_w: 20,
            batch_size: 50,
            learning_rate: 1e-3,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            pi_bar: 2e-4,
            pi_underbar: 1e-6,
            eps_nu: 0.02,
            max_epochs: 300,
            patience: 50,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn penalty(&self) -> Penalty {
        Penalty {
            pi_bar: self.pi_bar,
            pi_underbar: self.pi_underbar,
            eps_nu: self.eps_nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.tau_w >= self.t_s {
            return fail(format!("tau_w ({}) must be < t_s ({})", self.tau_w, self.t_s));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be ≥ 1".into());
        }
        if !(self.pi_bar > self.pi_underbar && self.pi_underbar > 0.0) {
            return fail(format!(
                "need pi_bar > pi_underbar > 0 (got {} and {})",
                self.pi_bar, self.pi_underbar
            ));
        }
        if !(self.eps_nu > 0.0) {
            return fail(format!("eps_nu must be > 0 (got {})", self.eps_nu));
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be > 0 (got {})", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return fail(format!("rmsprop_decay must lie in [0, 1) (got {})", self.rmsprop_decay));
        }
        if !(self.rmsprop_epsilon >= 0.0) {
            return fail("rmsprop_epsilon must be ≥ 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses (MSE + penalty) seen during the epoch.
    pub train_loss: f64,
    pub val_mse: f64,
    /// `max_i ν_i` at the end of the epoch.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that was run.
    pub stopping_epoch: usize,
    /// Epoch whose weights are returned (0 = initial weights).
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// `max_i ν_i` of the returned weights.
    pub final_margin: f64,
    pub batches_per_epoch: usize,
    /// Test FIT of the returned weights, when a test sequence was scored.
    pub final_fit: Option<f64>,
}

/// Trains `init` and returns the weights with the best validation MSE.
pub fn train(
    init: &DeepLstmModel,
    train_set: &[Subsequence],
    val_set: &[Subsequence],
    cfg: &TrainConfig,
) -> Result<(DeepLstmModel, TrainReport)> {
    train_with_observer(init, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_observer(
    init: &DeepLstmModel,
    train_set: &[Subsequence],
    val_set: &[Subsequence],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(DeepLstmModel, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Dataset("empty validation set".into()));
    }
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if let Some(bad) = set.iter().position(|s| s.len() != cfg.t_s + 1) {
            return Err(Error::Dataset(format!(
                "{name} subsequence {bad} has {} samples, expected t_s + 1 = {}",
                set[bad].len(),
                cfg.t_s + 1
            )));
        }
    }

    let penalty = cfg.penalty();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut model = init.clone();
    let mut opt = RmsProp::new(&model, cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon);
    let x0 = ModelState::zeros(&model);

    let mut best = model.clone();
    let mut best_val = mse_washout(&model, val_set, cfg.tau_w, &x0)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let mut epochs = Vec::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_set[i].clone()));
            let lg = loss_gradient(&model, &batch, cfg.tau_w, &penalty)?;
            let l = lg.loss();
            if !l.is_finite() || !lg.grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss: l,
                });
            }
            loss_sum += l;
            opt.step(&mut model, &lg.grad);
        }
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: batches_per_epoch,
                loss: f64::NAN,
            });
        }
        let val_mse = mse_washout(&model, val_set, cfg.tau_w, &x0)?;
        let margin = certifier::certify(&model).margin;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches_per_epoch as f64,
            val_mse,
            margin,
        };
        observer(&record);
        epochs.push(record);

        if val_mse < best_val {
            best_val = val_mse;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let stopping_epoch = epochs.last().map_or(0, |r| r.epoch);
    let final_margin = certifier::certify(&best).margin;
    Ok((
        best,
        TrainReport {
            epochs,
            stopping_epoch,
            best_epoch,
            best_val_mse: best_val,
            final_margin,
            batches_per_epoch,
            final_fit: None,
        },
    ))
}
