//! Class-wise adversarial training.
//!
//! Each mini-batch of the pooled, relabelled data gets two updates:
//!
//! 1. encoder and predictor minimize `L_d`, the cross-entropy against the
//!    true domain-class categories;
//! 2. the encoder alone minimizes `L_a`, the cross-entropy against the
//!    categories with their domain swapped (`d_k ↔ d_{K+k}`), with the
//!    predictor held fixed.

use super::{early_stop_split, run_loop, LoopOptions, Pool, TrainConfig, Trained};
use crate::datasets::{adversarial_relabel, relabel, CategoryLabel, Domain, DomainDataset};
use crate::model::{init_params, loss, Dense, Head, ModelConfig, ModelParams};
use crate::numerics::Matrix;
use crate::{seed, Error, Result};

/// Summed `L_d` over a batch with the given true categories.
pub fn compute_ld(params: &ModelParams, batch: &Matrix, categories: &[CategoryLabel]) -> Result<f64> {
    let idx: Vec<usize> = categories.iter().map(|c| c.index()).collect();
    loss(params, batch, &Matrix::one_hot(&idx, params.config.output_dim())?)
}

/// Summed `L_a`: `L_d` evaluated against the domain-swapped categories.
pub fn compute_la(params: &ModelParams, batch: &Matrix, categories: &[CategoryLabel]) -> Result<f64> {
    let k = params.config.num_classes;
    let swapped: Vec<CategoryLabel> = categories.iter().map(|&c| adversarial_relabel(c, k)).collect();
    compute_ld(params, batch, &swapped)
}

/// Snapshot handed to an observer after every adversarial update.
pub struct AdversarialStep<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub predictor_before: &'a Dense,
    pub params_after: &'a ModelParams,
}

pub fn train_cada(
    source: &DomainDataset,
    target_examples: &DomainDataset,
    hidden_dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    train_cada_observed(source, target_examples, hidden_dim, config, seed, None)
}

/// [`train_cada`] with a callback after each adversarial update.
pub fn train_cada_observed(
    source: &DomainDataset,
    target_examples: &DomainDataset,
    hidden_dim: usize,
    config: &TrainConfig,
    seed: u64,
    observer: Option<&mut dyn FnMut(AdversarialStep<'_>)>,
) -> Result<Trained> {
    config.validate()?;
    let k = source.num_classes;
    if source.is_empty() {
        return Err(Error::Precondition("source dataset is empty".into()));
    }
    if target_examples.num_classes != k {
        return Err(Error::Precondition(format!(
            "source has {k} classes, target {}",
            target_examples.num_classes
        )));
    }
    if let Some(missing) = target_examples.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::Precondition(format!(
            "target examples contain no example of class {missing}"
        )));
    }
    if source.feature_dim() != target_examples.feature_dim() {
        return Err(Error::dim(
            "train_cada",
            format!(
                "source has {} features, target {}",
                source.feature_dim(),
                target_examples.feature_dim()
            ),
        ));
    }

    let all: Vec<usize> = (0..source.len()).collect();
    let (fit_idx, hold_idx) = early_stop_split(
        &all,
        &source.labels,
        k,
        config.holdout_fraction,
        seed::derive(seed, &[seed::tag("holdout")]),
    )?;

    let categories = |ds: &DomainDataset, idx: &[usize], domain: Domain| -> Vec<usize> {
        idx.iter().map(|&i| relabel(ds.labels[i], domain, k).index()).collect()
    };
    let target_all: Vec<usize> = (0..target_examples.len()).collect();
    let mut targets = categories(source, &fit_idx, Domain::Source);
    targets.extend(categories(target_examples, &target_all, Domain::Target));
    let fit = Pool {
        features: source.features.select_rows(&fit_idx).vstack(&target_examples.features)?,
        targets,
    };
    let holdout = hold_idx.map(|h| Pool {
        features: source.features.select_rows(&h),
        targets: categories(source, &h, Domain::Source),
    });

    let target_repeats = if config.target_oversampling {
        (fit_idx.len() / target_examples.len()).saturating_sub(1)
    } else {
        0
    };
    let model = ModelConfig::new(source.feature_dim(), hidden_dim, k, Head::DomainClass)?;
    let params = init_params(model, seed::derive(seed, &[seed::tag("init")]))?;
    let max_epochs = if holdout.is_some() {
        config.max_epochs
    } else {
        config.fixed_epochs
    };
    run_loop(
        params,
        &fit,
        holdout.as_ref(),
        config,
        &LoopOptions {
            max_epochs,
            patience: config.patience,
            adversarial: Some(k),
            target_repeats,
        },
        seed::derive(seed, &[seed::tag("shuffle")]),
        observer,
    )
}
