//! ELBO training loop: KL annealing, sub-sampling/truncation augmentation,
//! gradient clipping, Adamax, and plateau learning-rate decay.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{uniform_count, Trajectory};
use crate::error::{Error, Result};
use crate::ode::SolverConfig;
use crate::optim::{adamax_step, clip_grad_norm, AdamaxState};
use crate::rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::LatentOdeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplied into the learning rate when validation loss plateaus.
    pub lr_decay_factor: f64,
    /// Epochs without validation improvement before decaying.
    pub lr_plateau_patience: usize,
    /// KL weight ramps linearly from 0 to 1 over this many epochs.
    pub kl_anneal_epochs: usize,
    /// Reparameterized z0 samples per trajectory.
    pub z0_samples: usize,
    pub grad_clip_norm: f64,
    /// Observation count to keep per trajectory, drawn uniformly per batch.
    pub subsample_range: Option<(usize, usize)>,
    /// Leading observations to crop, drawn uniformly per batch.
    pub truncate_range: Option<(usize, usize)>,
    pub seed: u64,
    /// Override the model's latent solver for training and thereafter.
    pub latent_solver: Option<SolverConfig>,
    /// Override the model's encoder Euler substeps.
    pub encoder_substeps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 256,
            learning_rate: 0.01,
            lr_decay_factor: 0.1,
            lr_plateau_patience: 10,
            kl_anneal_epochs: 5,
            z0_samples: 1,
            grad_clip_norm: 2.0,
            subsample_range: None,
            truncate_range: None,
            seed: 0,
            latent_solver: None,
            encoder_substeps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.z0_samples < 1 {
            return Err(Error::invalid("z0_samples must be >= 1"));
        }
        if self.grad_clip_norm <= 0.0 {
            return Err(Error::invalid("grad_clip_norm must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_factor) {
            return Err(Error::invalid("lr_decay_factor must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_neg_elbo: f64,
    pub val_neg_elbo: f64,
    pub kl_weight: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_neg_elbo: f64,
    /// Snapshot of the model at the best validation epoch.
    pub best_model: LatentOdeModel,
}

struct VisibleSdf {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

fn prepare(set: &[Trajectory], what: &str) -> Result<Vec<VisibleSdf>> {
    set.iter()
        .enumerate()
        .map(|(i, t)| {
            if !t.changepoints.is_empty() {
                return Err(Error::invalid(format!(
                    "{what} trajectory {i} has internal changepoints; train on extracted SDFs"
                )));
            }
            t.validate()?;
            let (times, values, _) = t.visible();
            if times.len() < 2 {
                return Err(Error::invalid(format!(
                    "{what} trajectory {i} has fewer than 2 visible observations"
                )));
            }
            Ok(VisibleSdf { times, values })
        })
        .collect()
}

fn augment(
    sdf: &VisibleSdf,
    config: &TrainConfig,
    rng: &mut rng::Rng,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut times = sdf.times.clone();
    let mut values = sdf.values.clone();
    if let Some(range) = config.truncate_range {
        let drop = uniform_count(rng, range).min(times.len().saturating_sub(2));
        if drop > 0 {
            times.drain(..drop);
            values.drain(..drop);
        }
    }
    if let Some(range) = config.subsample_range {
        let keep = uniform_count(rng, range).clamp(2, times.len());
        if keep < times.len() {
            let mut idx: Vec<usize> = (0..times.len()).collect();
            for k in 0..keep {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
            }
            let mut chosen = idx[..keep].to_vec();
            chosen.sort_unstable();
            times = chosen.iter().map(|&i| times[i]).collect();
            values = chosen.iter().map(|&i| values[i].clone()).collect();
        }
    }
    (times, values)
}

fn neg_elbo_and_grads(
    model: &LatentOdeModel,
    times: &[f64],
    values: &[Vec<f64>],
    kl_weight: f64,
    z0_samples: usize,
    seed: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let mut rng = rng::rng_from_seed(seed);
    let elbo = bound.elbo(
        &tape,
        values,
        times,
        kl_weight,
        z0_samples,
        model.config.obs_variance,
        &model.config.latent_solver,
        &mut rng,
    )?;
    let loss = elbo.neg();
    let grads = tape.backward(loss)?;
    let out = bound.leaf_vars().iter().map(|v| grads.get(*v)).collect();
    Ok((loss.value().item(), out))
}

fn neg_elbo_only(
    model: &LatentOdeModel,
    times: &[f64],
    values: &[Vec<f64>],
    kl_weight: f64,
    z0_samples: usize,
    seed: u64,
) -> Result<f64> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let mut rng = rng::rng_from_seed(seed);
    let elbo = bound.elbo(
        &tape,
        values,
        times,
        kl_weight,
        z0_samples,
        model.config.obs_variance,
        &model.config.latent_solver,
        &mut rng,
    )?;
    Ok(-elbo.value().item())
}

/// Train in place on a set of smooth dynamical flows. Returns the loss
/// history and a snapshot of the best-validation model.
///
/// Deterministic for a fixed seed regardless of worker-thread count:
/// per-trajectory gradients are reduced in dataset order.
pub fn train(
    model: &mut LatentOdeModel,
    train_set: &[Trajectory],
    val_set: &[Trajectory],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if config.epochs == 0 {
        return Ok(TrainReport {
            history: Vec::new(),
            best_epoch: 0,
            best_val_neg_elbo: f64::INFINITY,
            best_model: model.clone(),
        });
    }
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(solver) = config.latent_solver {
        solver.validate()?;
        model.config.latent_solver = solver;
    }
    if let Some(substeps) = config.encoder_substeps {
        if substeps == 0 {
            return Err(Error::invalid("encoder_substeps must be >= 1"));
        }
        model.config.encoder_substeps = substeps;
    }
    model.seed_lineage.push(config.seed);

    let train_sdfs = prepare(train_set, "train")?;
    let val_sdfs = prepare(val_set, "validation")?;
    let names = model.param_names();
    let mut opt = AdamaxState::new(&model.param_shapes(), config.learning_rate);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_model = model.clone();
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..config.epochs {
        let kl_weight = if config.kl_anneal_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / config.kl_anneal_epochs as f64).min(1.0)
        };

        let mut order: Vec<usize> = (0..train_sdfs.len()).collect();
        let mut shuffle_rng = rng::rng_for(config.seed, &[0x73687566, epoch as u64]);
        for k in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=k);
            order.swap(k, j);
        }

        let mut epoch_loss_sum = 0.0;
        let mut epoch_count = 0usize;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f64, Vec<Tensor>)>> = batch
                .par_iter()
                .map(|&idx| {
                    let aug_seed = rng::derive_seed(config.seed, &[0x617567, epoch as u64, idx as u64]);
                    let mut aug_rng = rng::rng_from_seed(aug_seed);
                    let (times, values) = augment(&train_sdfs[idx], config, &mut aug_rng);
                    let z0_seed =
                        rng::derive_seed(config.seed, &[0x7a30, epoch as u64, idx as u64]);
                    neg_elbo_and_grads(
                        model,
                        &times,
                        &values,
                        kl_weight,
                        config.z0_samples,
                        z0_seed,
                    )
                })
                .collect();

            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            let mut grads: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss * scale;
                match &mut grads {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g.iter()) {
                            a.axpy(scale, b);
                        }
                    }
                    None => {
                        grads = Some(g.into_iter().map(|t| t.scale(scale)).collect());
                    }
                }
            }
            let mut grads = grads.expect("non-empty batch");

            if !batch_loss.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite training loss at epoch {epoch}, batch {batch_no}"
                )));
            }

            clip_grad_norm(&mut grads, config.grad_clip_norm);
            let mut params = model.params_mut();
            adamax_step(&mut opt, &mut params, &grads, &names)?;

            epoch_loss_sum += batch_loss * batch.len() as f64;
            epoch_count += batch.len();
        }
        let train_neg_elbo = epoch_loss_sum / epoch_count as f64;

        // validation at full KL weight with fixed per-trajectory noise
        let val_neg_elbo = if val_sdfs.is_empty() {
            f64::NAN
        } else {
            let vals: Vec<Result<f64>> = val_sdfs
                .par_iter()
                .enumerate()
                .map(|(idx, sdf)| {
                    let seed = rng::derive_seed(config.seed, &[0x76616c, idx as u64]);
                    neg_elbo_only(model, &sdf.times, &sdf.values, 1.0, config.z0_samples, seed)
                })
                .collect();
            let mut acc = 0.0;
            for v in vals {
                acc += v?;
            }
            acc / val_sdfs.len() as f64
        };

        history.push(EpochStats {
            epoch,
            train_neg_elbo,
            val_neg_elbo,
            kl_weight,
            learning_rate: opt.learning_rate,
        });

        let monitored = if val_neg_elbo.is_nan() { train_neg_elbo } else { val_neg_elbo };
        if monitored < best_val {
            best_val = monitored;
            best_epoch = epoch;
            best_model = model.clone();
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= config.lr_plateau_patience {
                opt.learning_rate *= config.lr_decay_factor;
                epochs_since_improvement = 0;
            }
        }
    }

    Ok(TrainReport { history, best_epoch, best_val_neg_elbo: best_val, best_model })
}
