//! Training procedures: CADA and the all-source / target-only / fine-tune
//! baselines.
//!
//! Every procedure shares one mini-batch loop with early stopping: the model
//! is evaluated after every epoch (epoch 0 is the initial model), and when a
//! holdout exists the parameters with the lowest holdout loss are returned.
//! Without a holdout the loop runs a fixed number of epochs and returns the
//! last parameters.

mod baselines;
mod cada;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use baselines::{train_finetune, train_source_only, train_target_only, FinetuneOutcome};
pub use cada::{compute_la, compute_ld, train_cada, train_cada_observed, AdversarialStep};

use crate::datasets::{adversarial_relabel, holdout_split, CategoryLabel};
use crate::model::{backward_pass, forward, ModelParams};
use crate::numerics::{cross_entropy_unchecked, Matrix};
use crate::optimizer::{AdamConfig, AdamState};
use crate::{seed, Error, Result};

/// When the adversarial (encoder-only) stage runs relative to the
/// discriminative stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternation {
    /// Both stages on every mini-batch.
    #[default]
    PerBatch,
    /// A full discriminative epoch, then a full adversarial epoch.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of the training examples kept aside for early stopping.
    pub holdout_fraction: f64,
    /// Epoch budget for target-only training when there are too few
    /// examples (< 10) for a holdout.
    pub fixed_epochs: usize,
    /// Fine-tune phase-2 budget: fixed without a holdout, a cap with one.
    pub finetune_epochs: usize,
    /// Use one Adam state for the encoder across both CADA stages.
    pub shared_encoder_optimizer: bool,
    pub alternation: Alternation,
    /// Repeat the target examples in every CADA epoch so they make up about
    /// half of the pooled data.
    pub target_oversampling: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            holdout_fraction: 0.1,
            fixed_epochs: 100,
            finetune_epochs: 100,
            shared_encoder_optimizer: false,
            alternation: Alternation::PerBatch,
            target_oversampling: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("train.patience", "must be >= 1"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::config("train.holdout_fraction", "must lie in (0, 1)"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example L_d on the fit set.
    pub ld_fit: f64,
    pub ld_holdout: Option<f64>,
    /// Mean per-example L_a on the fit set (CADA only).
    pub la_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub chosen_epoch: usize,
}

impl TrainHistory {
    pub fn best_holdout(&self) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.epoch == self.chosen_epoch)
            .and_then(|r| r.ld_holdout)
    }

    /// `epoch,ld_fit,ld_holdout,la_fit`; absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,ld_fit,ld_holdout,la_fit\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                r.ld_fit,
                opt(r.ld_holdout),
                opt(r.la_fit)
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Rows and their target output indices.
pub(crate) struct Pool {
    pub features: Matrix,
    pub targets: Vec<usize>,
}

impl Pool {
    fn len(&self) -> usize {
        self.targets.len()
    }
}

pub(crate) struct LoopOptions {
    pub max_epochs: usize,
    pub patience: usize,
    /// `Some(K)`: run the adversarial stage, swapping categories `c ↔ c ± K`.
    pub adversarial: Option<usize>,
    /// Extra copies of each target-category row per epoch.
    pub target_repeats: usize,
}

fn swap_targets(targets: &[usize], k: usize) -> Vec<usize> {
    targets
        .iter()
        .map(|&c| adversarial_relabel(CategoryLabel::new(c, k), k).index())
        .collect()
}

/// Mean per-example cross-entropy of `params` on `pool`, optionally also
/// against the domain-swapped targets.
fn evaluate(params: &ModelParams, pool: &Pool, swap: Option<usize>) -> Result<(f64, Option<f64>)> {
    let probs = forward(params, &pool.features)?;
    let n = pool.len().max(1) as f64;
    let out = params.config.output_dim();
    let ld = cross_entropy_unchecked(&probs, &Matrix::one_hot(&pool.targets, out)?) / n;
    let la = match swap {
        Some(k) => {
            let swapped = swap_targets(&pool.targets, k);
            Some(cross_entropy_unchecked(&probs, &Matrix::one_hot(&swapped, out)?) / n)
        }
        None => None,
    };
    Ok((ld, la))
}

/// Split `indices` for early stopping, or keep them all when there are too
/// few for a holdout.
pub(crate) fn early_stop_split(
    indices: &[usize],
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Option<Vec<usize>>)> {
    if indices.len() < 10 {
        return Ok((indices.to_vec(), None));
    }
    let (fit, hold) = holdout_split(indices, labels, num_classes, fraction, seed)?;
    Ok((fit, Some(hold)))
}

pub(crate) type StepHook<'a> = Option<&'a mut dyn FnMut(AdversarialStep<'_>)>;

/// The shared mini-batch loop.
pub(crate) fn run_loop(
    mut params: ModelParams,
    fit: &Pool,
    holdout: Option<&Pool>,
    config: &TrainConfig,
    opts: &LoopOptions,
    seed: u64,
    mut hook: StepHook<'_>,
) -> Result<Trained> {
    if fit.len() == 0 {
        return Err(Error::Precondition("empty training pool".into()));
    }
    let mut rng = seed::rng(seed);
    let enc_shapes = [params.encoder.weights.data().len(), params.encoder.bias.len()];
    let pred_shapes = [params.predictor.weights.data().len(), params.predictor.bias.len()];
    let mut opt_enc = AdamState::new(config.adam, &enc_shapes);
    let mut opt_pred = AdamState::new(config.adam, &pred_shapes);
    let mut opt_adv = AdamState::new(config.adam, &enc_shapes);
    let out = params.config.output_dim();

    let mut base_order: Vec<usize> = (0..fit.len()).collect();
    if let Some(k) = opts.adversarial {
        for _ in 0..opts.target_repeats {
            base_order.extend((0..fit.len()).filter(|&i| fit.targets[i] >= k));
        }
    }

    let mut history = TrainHistory::default();
    let record = |params: &ModelParams, epoch: usize| -> Result<EpochRecord> {
        let (ld_fit, la_fit) = evaluate(params, fit, opts.adversarial)?;
        if !ld_fit.is_finite() {
            return Err(Error::NonFinite {
                context: format!("fit-set L_d after epoch {epoch}"),
            });
        }
        let ld_holdout = match holdout {
            Some(h) => Some(evaluate(params, h, None)?.0),
            None => None,
        };
        Ok(EpochRecord {
            epoch,
            ld_fit,
            ld_holdout,
            la_fit,
        })
    };

    let first = record(&params, 0)?;
    let mut best_loss = first.ld_holdout;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    history.records.push(first);

    for epoch in 1..=opts.max_epochs {
        let mut order = base_order.clone();
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();

        let discriminative = |params: &mut ModelParams,
                                  opt_enc: &mut AdamState,
                                  opt_pred: &mut AdamState,
                                  b: usize,
                                  idx: &[usize]|
         -> Result<()> {
            let x = fit.features.select_rows(idx);
            let t: Vec<usize> = idx.iter().map(|&i| fit.targets[i]).collect();
            let (loss, mut g) = backward_pass(params, &x, &Matrix::one_hot(&t, out)?)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("L_d at epoch {epoch}, batch {b}"),
                });
            }
            g.scale_in_place(1.0 / idx.len() as f64);
            opt_enc
                .step(&mut params.encoder.tensors_mut(), &g.encoder.tensors())
                .map_err(|e| with_position(e, epoch, b))?;
            opt_pred
                .step(&mut params.predictor.tensors_mut(), &g.predictor.tensors())
                .map_err(|e| with_position(e, epoch, b))
        };

        let adversarial = |params: &mut ModelParams,
                               opt: &mut AdamState,
                               k: usize,
                               b: usize,
                               idx: &[usize],
                               hook: &mut StepHook<'_>|
         -> Result<()> {
            let x = fit.features.select_rows(idx);
            let t: Vec<usize> = idx.iter().map(|&i| fit.targets[i]).collect();
            let swapped = swap_targets(&t, k);
            let (loss, mut g) = backward_pass(params, &x, &Matrix::one_hot(&swapped, out)?)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("L_a at epoch {epoch}, batch {b}"),
                });
            }
            g.encoder.scale_in_place(1.0 / idx.len() as f64);
            let before = hook.as_ref().map(|_| params.predictor.clone());
            opt.step(&mut params.encoder.tensors_mut(), &g.encoder.tensors())
                .map_err(|e| with_position(e, epoch, b))?;
            if let (Some(h), Some(before)) = (hook.as_mut(), before.as_ref()) {
                h(AdversarialStep {
                    epoch,
                    batch: b,
                    predictor_before: before,
                    params_after: params,
                });
            }
            Ok(())
        };

        match (opts.adversarial, config.alternation) {
            (None, _) => {
                for (b, idx) in batches.iter().enumerate() {
                    discriminative(&mut params, &mut opt_enc, &mut opt_pred, b, idx)?;
                }
            }
            (Some(k), Alternation::PerBatch) => {
                for (b, idx) in batches.iter().enumerate() {
                    discriminative(&mut params, &mut opt_enc, &mut opt_pred, b, idx)?;
                    let opt = if config.shared_encoder_optimizer {
                        &mut opt_enc
                    } else {
                        &mut opt_adv
                    };
                    adversarial(&mut params, opt, k, b, idx, &mut hook)?;
                }
            }
            (Some(k), Alternation::PerEpoch) => {
                for (b, idx) in batches.iter().enumerate() {
                    discriminative(&mut params, &mut opt_enc, &mut opt_pred, b, idx)?;
                }
                for (b, idx) in batches.iter().enumerate() {
                    let opt = if config.shared_encoder_optimizer {
                        &mut opt_enc
                    } else {
                        &mut opt_adv
                    };
                    adversarial(&mut params, opt, k, b, idx, &mut hook)?;
                }
            }
        }

        let rec = record(&params, epoch)?;
        history.records.push(rec);
        if let (Some(loss), Some(best)) = (rec.ld_holdout, best_loss) {
            if loss < best {
                best_loss = Some(loss);
                best_epoch = epoch;
                best_params = params.clone();
            } else if epoch - best_epoch >= opts.patience {
                break;
            }
        }
    }

    if holdout.is_some() {
        history.chosen_epoch = best_epoch;
        Ok(Trained {
            params: best_params,
            history,
        })
    } else {
        history.chosen_epoch = history.records.last().map_or(0, |r| r.epoch);
        Ok(Trained { params, history })
    }
}

fn with_position(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context}; epoch {epoch}, batch {batch}"),
        },
        other => other,
    }
}
