//! Non-adversarial baselines, all with a plain `K`-way head.

use super::{early_stop_split, run_loop, LoopOptions, Pool, TrainConfig, TrainHistory, Trained};
use crate::datasets::DomainDataset;
use crate::model::{init_params, Head, ModelConfig, ModelParams};
use crate::{seed, Error, Result};

fn class_pools(
    data: &DomainDataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Pool, Option<Pool>)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (fit, hold) = early_stop_split(
        &all,
        &data.labels,
        data.num_classes,
        config.holdout_fraction,
        seed::derive(seed, &[seed::tag("holdout")]),
    )?;
    let pool = |idx: &[usize]| Pool {
        features: data.features.select_rows(idx),
        targets: idx.iter().map(|&i| data.labels[i]).collect(),
    };
    Ok((pool(&fit), hold.as_deref().map(pool)))
}

fn supervised(
    params: ModelParams,
    data: &DomainDataset,
    config: &TrainConfig,
    fixed_budget: usize,
    seed: u64,
) -> Result<Trained> {
    let (fit, holdout) = class_pools(data, config, seed)?;
    let max_epochs = if holdout.is_some() {
        config.max_epochs
    } else {
        fixed_budget
    };
    run_loop(
        params,
        &fit,
        holdout.as_ref(),
        config,
        &LoopOptions {
            max_epochs,
            patience: config.patience,
            adversarial: None,
            target_repeats: 0,
        },
        seed::derive(seed, &[seed::tag("shuffle")]),
        None,
    )
}

fn class_model(data: &DomainDataset, hidden_dim: usize, seed: u64) -> Result<ModelParams> {
    let cfg = ModelConfig::new(data.feature_dim(), hidden_dim, data.num_classes, Head::Class)?;
    init_params(cfg, seed::derive(seed, &[seed::tag("init")]))
}

/// The all-source baseline: supervised training on the source corpus only,
/// early-stopped on a source holdout.
pub fn train_source_only(
    source: &DomainDataset,
    hidden_dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    config.validate()?;
    if source.is_empty() {
        return Err(Error::Precondition("source dataset is empty".into()));
    }
    let params = class_model(source, hidden_dim, seed)?;
    supervised(params, source, config, config.fixed_epochs, seed)
}

/// The all-target / label-target baselines: supervised training on the given
/// target rows only. Fewer than 10 rows means no holdout and a fixed budget
/// of `fixed_epochs`.
pub fn train_target_only(
    target: &DomainDataset,
    hidden_dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    config.validate()?;
    if let Some(missing) = target.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::Precondition(format!(
            "target subset contains no example of class {missing}"
        )));
    }
    let params = class_model(target, hidden_dim, seed)?;
    supervised(params, target, config, config.fixed_epochs, seed)
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: ModelParams,
    pub source_history: TrainHistory,
    pub finetune_history: TrainHistory,
}

/// Source pre-training followed by training all layers on the target
/// examples with a fresh optimizer.
pub fn train_finetune(
    source: &DomainDataset,
    target_examples: &DomainDataset,
    hidden_dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if let Some(missing) = target_examples.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::Precondition(format!(
            "target examples contain no example of class {missing}"
        )));
    }
    let pre = train_source_only(source, hidden_dim, config, seed)?;
    let phase_two = TrainConfig {
        max_epochs: config.finetune_epochs,
        ..config.clone()
    };
    let tuned = supervised(
        pre.params,
        target_examples,
        &phase_two,
        config.finetune_epochs,
        seed::derive(seed, &[seed::tag("finetune")]),
    )?;
    Ok(FinetuneOutcome {
        params: tuned.params,
        source_history: pre.history,
        finetune_history: tuned.history,
    })
}
