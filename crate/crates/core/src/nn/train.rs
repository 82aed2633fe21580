//! Masked-LM training loop with validation-based model selection.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlm::apply_mlm_masking;
use super::model::{Model, ModelConfig};
use super::optim::Adam;
use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// 0 trains on everything and selects by training loss.
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    /// Linear learning-rate warmup, in optimizer steps.
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            learning_rate: 3e-4,
            validation_fraction: 0.10,
            early_stop_patience: 5,
            warmup_steps: 0,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy per masked position.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_count: usize,
    pub validation_count: usize,
}

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<f32>,
    pub log: Vec<EpochLog>,
}

impl Checkpoint {
    pub fn from_outcome<T: Real>(outcome: &TrainOutcome<T>) -> Self {
        let model = outcome.model.to_f32();
        Self {
            config: model.config().clone(),
            params: model.params().to_vec(),
            log: outcome.log.clone(),
        }
    }

    pub fn model(&self) -> Result<Model<f32>> {
        Model::from_params(self.config.clone(), self.params.clone())
    }
}

/// Number of sequences held out for validation: `floor(fraction · n)`.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    libm::floor(fraction * n as f64) as usize
}

/// Seeded shuffle, then the last `validation_count` indices are held out.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = validation_count(n, fraction);
    let val = idx.split_off(n - held);
    (idx, val)
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss sum and gradient sum over one masked batch. Sequence `i` uses a
/// dropout stream seeded from `(seed, stream + i)`; the reduction runs in
/// sequence order so the result does not depend on threading.
fn batch_gradient<T: Real>(
    model: &Model<T>,
    inputs: &[Vec<u32>],
    labels: &[Vec<(usize, u32)>],
    seed: u64,
    stream: u64,
) -> Result<(f64, Vec<T>)> {
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(T, Vec<T>)>> = {
        use rayon::prelude::*;
        (0..inputs.len())
            .into_par_iter()
            .map(|i| {
                let mut grad = alloc::vec![T::zero(); model.param_count()];
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stream + i as u64, 1));
                let loss = model.loss_and_grad(&inputs[i], &labels[i], Some(&mut rng), Some(&mut grad))?;
                Ok((loss, grad))
            })
            .collect()
    };
    // Single-threaded: accumulate in place, in the same order.
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(T, Vec<T>)>> = {
        let mut grad = alloc::vec![T::zero(); model.param_count()];
        let mut loss = T::zero();
        for i in 0..inputs.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stream + i as u64, 1));
            loss += model.loss_and_grad(&inputs[i], &labels[i], Some(&mut rng), Some(&mut grad))?;
        }
        alloc::vec![Ok((loss, grad))]
    };
    let mut total = alloc::vec![T::zero(); model.param_count()];
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l.to_f64().unwrap_or(f64::NAN);
        for (t, x) in total.iter_mut().zip(&g) {
            *t += *x;
        }
    }
    Ok((loss, total))
}

/// Mean masked-LM loss with dropout disabled and masks drawn from `seed`.
pub fn evaluate_loss<T: Real>(model: &Model<T>, sequences: &[Vec<u32>], seed: u64) -> Result<Option<f64>> {
    let cfg = model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masked = apply_mlm_masking(sequences, cfg.mask_rate, cfg.vocab_size, &mut rng);
    let count = masked.label_count();
    if count == 0 {
        return Ok(None);
    }
    let mut total = 0.0;
    for (ids, labels) in masked.inputs.iter().zip(&masked.labels) {
        total += model.loss_and_grad(ids, labels, None, None)?.to_f64().unwrap_or(f64::NAN);
    }
    Ok(Some(total / count as f64))
}

/// Trains on token sequences (already wrapped in `<s> … </s>` and no longer
/// than the model's maximum length). A `validation_fraction` share of the
/// sequences is held out; training stops after `max_epochs` or when the
/// validation loss has not improved for `early_stop_patience` epochs.
pub fn train<T: Real>(
    mut model: Model<T>,
    sequences: &[Vec<u32>],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (train_idx, val_idx) = split_indices(sequences.len(), cfg.validation_fraction, cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let train_set: Vec<Vec<u32>> = train_idx.iter().map(|&i| sequences[i].clone()).collect();
    let val_set: Vec<Vec<u32>> = val_idx.iter().map(|&i| sequences[i].clone()).collect();
    let val_seed = mix(cfg.seed, 0xA11CE, 7);

    let mask_rate = model.config().mask_rate;
    let vocab_size = model.config().vocab_size;
    let mut opt = Adam::<T>::new(model.param_count());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5EED, 3));
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Vec<T>)> = None;
    let mut since_best = 0usize;
    let mut stream = 0u64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_labels = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let masked = apply_mlm_masking(&batch, mask_rate, vocab_size, &mut rng);
            let labels = masked.label_count();
            stream += batch.len() as u64;
            if labels == 0 {
                continue;
            }
            let (loss, mut grad) = batch_gradient(&model, &masked.inputs, &masked.labels, cfg.seed, stream)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            epoch_loss += loss;
            epoch_labels += labels;
            let inv = T::lit(1.0 / labels as f64);
            let mut norm2 = 0.0f64;
            for g in grad.iter_mut() {
                *g *= inv;
                let x = g.to_f64().unwrap_or(f64::NAN);
                norm2 += x * x;
            }
            if cfg.grad_clip > 0.0 {
                let norm = libm::sqrt(norm2);
                if norm > cfg.grad_clip {
                    let s = T::lit(cfg.grad_clip / norm);
                    for g in grad.iter_mut() {
                        *g *= s;
                    }
                }
            }
            let warm = if cfg.warmup_steps > 0 {
                ((opt.steps() + 1) as f64 / cfg.warmup_steps as f64).min(1.0)
            } else {
                1.0
            };
            opt.update(model.params_mut(), &grad, cfg.learning_rate * warm);
        }
        let train_loss = if epoch_labels > 0 { epoch_loss / epoch_labels as f64 } else { 0.0 };
        let validation_loss = if val_set.is_empty() {
            None
        } else {
            evaluate_loss(&model, &val_set, val_seed)?
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            validation_loss,
        };
        on_epoch(&entry);
        log.push(entry);
        let score = validation_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: 0 });
        }
        match &best {
            Some((b, _, _)) if score >= *b => {
                since_best += 1;
                if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((score, epoch, model.params().to_vec()));
                since_best = 0;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params_mut().copy_from_slice(&params);
            epoch
        }
        None => log.len(),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        train_count: train_set.len(),
        validation_count: val_set.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_is_floor_of_fraction() {
        assert_eq!(validation_count(10, 0.1), 1);
        assert_eq!(validation_count(19, 0.1), 1);
        assert_eq!(validation_count(200, 0.1), 20);
        let (tr, va) = split_indices(37, 0.1, 5);
        assert_eq!(va.len(), 3);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(split_indices(37, 0.1, 5), (tr, va));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let model = Model::<f32>::init(ModelConfig::tiny(300), 0).unwrap();
        assert!(matches!(
            train(model, &[], &TrainConfig::default(), &mut |_| {}),
            Err(Error::EmptyCorpus)
        ));
    }
}
