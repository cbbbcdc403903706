//! The few-shot adaptation experiment.
//!
//! The target corpus is cross-validated; the source corpus is used whole in
//! every fold. For each fold and trial the labelled target examples are drawn
//! once per budget `n` from the fold's training side and shared by every
//! adaptation method, then each method is trained and scored by UA on the
//! fold's test side.
//!
//! Each (fold, trial, method, n) run is an independent work item seeded from
//! the master seed and its coordinates, so the output is identical for any
//! worker count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, unweighted_accuracy};
use crate::adaptation::{
    train_cada, train_finetune, train_source_only, train_target_only, TrainConfig, TrainHistory,
};
use crate::datasets::{
    sample_target_examples, speaker_kfold, DomainDataset, NormalizationStats, SampleCount,
};
use crate::model::{predict_classes, ModelParams};
use crate::{seed, Error, Result};

/// Smallest per-class budget at which the label-target baseline is reported.
pub const LABEL_TARGET_MIN_PER_CLASS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AllSource,
    AllTarget,
    LabelTarget,
    FineTune,
    Cada,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::AllSource,
        Method::AllTarget,
        Method::LabelTarget,
        Method::FineTune,
        Method::Cada,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Method::AllSource => "all-source",
            Method::AllTarget => "all-target",
            Method::LabelTarget => "label-target",
            Method::FineTune => "fine-tune",
            Method::Cada => "cada",
        }
    }

    /// Row label in the summary table.
    pub fn label(self) -> &'static str {
        match self {
            Method::Cada => "CADA",
            m => m.slug(),
        }
    }

    /// Whether the method consumes the few-shot budget `n`.
    pub fn uses_budget(self) -> bool {
        matches!(self, Method::LabelTarget | Method::FineTune | Method::Cada)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.slug() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// How trials relate to the cross-validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Every trial is repeated inside every fold.
    #[default]
    Nested,
    /// All trials use the first fold's split only.
    FixedSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub folds: usize,
    pub master_seed: u64,
    pub count_unit: SampleCount,
    pub speaker_disjoint_folds: bool,
    pub protocol: Protocol,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::AllSource, Method::AllTarget, Method::FineTune, Method::Cada],
            n_values: vec![1, 2, 3, 4, 5, 6],
            trials: 20,
            folds: 5,
            master_seed: 0,
            count_unit: SampleCount::PerClass,
            speaker_disjoint_folds: false,
            protocol: Protocol::Nested,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("experiment.methods", "at least one method is required"));
        }
        if self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be >= 1"));
        }
        if self.folds == 0 {
            return Err(Error::config("experiment.folds", "must be >= 1"));
        }
        if self.methods.iter().any(|m| m.uses_budget()) && self.n_values.is_empty() {
            return Err(Error::config("experiment.n_values", "needed by the selected methods"));
        }
        if self.n_values.contains(&0) {
            return Err(Error::config("experiment.n_values", "values must be >= 1"));
        }
        Ok(())
    }

    fn per_class_equivalent(&self, n: usize, num_classes: usize) -> usize {
        match self.count_unit {
            SampleCount::PerClass => n,
            SampleCount::Total => n / num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub fold: usize,
    pub trial: usize,
    pub ua: f64,
}

/// All runs of one method at one budget (`None` for reference baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub method: Method,
    pub n_per_class: Option<usize>,
    pub records: Vec<TrialRecord>,
    pub mean: f64,
    pub std: f64,
}

impl TrialReport {
    pub fn from_records(method: Method, n_per_class: Option<usize>, records: Vec<TrialRecord>) -> Result<Self> {
        let uas: Vec<f64> = records.iter().map(|r| r.ua).collect();
        let (mean, std) = aggregate(&uas)?;
        Ok(Self {
            method,
            n_per_class,
            records,
            mean,
            std,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub source_name: String,
    pub target_name: String,
    pub source_priors: Vec<f64>,
    pub target_priors: Vec<f64>,
    pub count_unit: SampleCount,
    pub trials: usize,
    pub folds: usize,
    /// Reference baselines first, then per-budget cells in method order.
    pub cells: Vec<TrialReport>,
    pub warnings: Vec<String>,
}

impl SweepReport {
    pub fn cell(&self, method: Method, n_per_class: Option<usize>) -> Option<&TrialReport> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.n_per_class == n_per_class)
    }
}

/// One training history produced during the experiment.
#[derive(Debug, Clone)]
pub struct RunHistory {
    pub method: Method,
    pub n_per_class: Option<usize>,
    pub fold: usize,
    pub trial: usize,
    pub phase: &'static str,
    pub history: TrainHistory,
}

impl RunHistory {
    pub fn file_stem(&self) -> String {
        let n = self.n_per_class.map_or_else(|| "all".to_owned(), |n| format!("n{n}"));
        format!(
            "{}_{}_f{}_t{}_{}",
            self.method.slug(),
            n,
            self.fold,
            self.trial,
            self.phase
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: SweepReport,
    pub histories: Vec<RunHistory>,
}

#[derive(Debug, Clone, Copy)]
struct WorkItem {
    fold: usize,
    trial: usize,
    method: Method,
    n: Option<usize>,
}

enum ItemOutcome {
    Done {
        ua: f64,
        histories: Vec<(&'static str, TrainHistory)>,
    },
    Skipped(String),
}

struct Context<'a> {
    source: &'a DomainDataset,
    target: &'a DomainDataset,
    folds: Vec<crate::datasets::Fold>,
    experiment: &'a ExperimentConfig,
    train: &'a TrainConfig,
    hidden_dim: usize,
}

fn normalized(ds: &DomainDataset, stats: &NormalizationStats) -> Result<DomainDataset> {
    ds.with_features(stats.apply(&ds.features)?)
}

fn score(params: &ModelParams, test: &DomainDataset) -> Result<f64> {
    let preds = predict_classes(params, &test.features)?;
    unweighted_accuracy(&preds, &test.labels, test.num_classes)
}

impl Context<'_> {
    fn run(&self, item: WorkItem) -> Result<ItemOutcome> {
        let master = self.experiment.master_seed;
        let fold = &self.folds[item.fold];
        let n_coord = item.n.map_or(u64::MAX, |n| n as u64);
        let run_seed = seed::derive(
            master,
            &[item.fold as u64, item.trial as u64, n_coord, seed::tag(item.method.slug())],
        );
        let test_raw = self.target.subset(&fold.test);

        match item.method {
            Method::AllSource => {
                let stats = NormalizationStats::fit(&self.source.features)?;
                let src = normalized(self.source, &stats)?;
                let out = train_source_only(&src, self.hidden_dim, self.train, run_seed)?;
                let ua = score(&out.params, &normalized(&test_raw, &stats)?)?;
                Ok(ItemOutcome::Done {
                    ua,
                    histories: vec![("source", out.history)],
                })
            }
            Method::AllTarget => {
                let train_raw = self.target.subset(&fold.train);
                let stats = NormalizationStats::fit(&train_raw.features)?;
                let out = train_target_only(&normalized(&train_raw, &stats)?, self.hidden_dim, self.train, run_seed)?;
                let ua = score(&out.params, &normalized(&test_raw, &stats)?)?;
                Ok(ItemOutcome::Done {
                    ua,
                    histories: vec![("target", out.history)],
                })
            }
            Method::LabelTarget | Method::FineTune | Method::Cada => {
                let n = item.n.expect("budgeted method carries n");
                let sample_seed = seed::derive(
                    master,
                    &[item.fold as u64, item.trial as u64, n as u64, seed::tag("sample")],
                );
                let picked = match sample_target_examples(
                    self.target,
                    &fold.train,
                    n,
                    self.experiment.count_unit,
                    sample_seed,
                ) {
                    Ok(p) => p,
                    Err(e) => {
                        return Ok(ItemOutcome::Skipped(format!(
                            "{} n={n} fold {} trial {}: skipped ({e})",
                            item.method, item.fold, item.trial
                        )))
                    }
                };
                let few_raw = self.target.subset(&picked);
                if item.method == Method::LabelTarget {
                    let stats = NormalizationStats::fit(&few_raw.features)?;
                    let out = train_target_only(&normalized(&few_raw, &stats)?, self.hidden_dim, self.train, run_seed)?;
                    let ua = score(&out.params, &normalized(&test_raw, &stats)?)?;
                    return Ok(ItemOutcome::Done {
                        ua,
                        histories: vec![("target", out.history)],
                    });
                }
                let stats = NormalizationStats::fit(&self.source.features.vstack(&few_raw.features)?)?;
                let src = normalized(self.source, &stats)?;
                let few = normalized(&few_raw, &stats)?;
                let test = normalized(&test_raw, &stats)?;
                if item.method == Method::FineTune {
                    let out = train_finetune(&src, &few, self.hidden_dim, self.train, run_seed)?;
                    let ua = score(&out.params, &test)?;
                    Ok(ItemOutcome::Done {
                        ua,
                        histories: vec![("source", out.source_history), ("finetune", out.finetune_history)],
                    })
                } else {
                    let out = train_cada(&src, &few, self.hidden_dim, self.train, run_seed)?;
                    let ua = score(&out.params, &test)?;
                    Ok(ItemOutcome::Done {
                        ua,
                        histories: vec![("cada", out.history)],
                    })
                }
            }
        }
    }
}

/// Run the configured sweep. `workers` bounds the number of concurrent
/// training runs; it has no effect on the results.
pub fn run_experiment(
    source: &DomainDataset,
    target: &DomainDataset,
    experiment: &ExperimentConfig,
    train: &TrainConfig,
    hidden_dim: usize,
    workers: usize,
) -> Result<ExperimentOutput> {
    experiment.validate()?;
    train.validate()?;
    if source.num_classes != target.num_classes {
        return Err(Error::Precondition(format!(
            "source has {} classes, target {}",
            source.num_classes, target.num_classes
        )));
    }
    if source.feature_dim() != target.feature_dim() {
        return Err(Error::dim(
            "run_experiment",
            format!("source has {} features, target {}", source.feature_dim(), target.feature_dim()),
        ));
    }
    let k = target.num_classes;
    let folds = if experiment.folds == 1 {
        // One fold: a single 80/20 split.
        let mut five = speaker_kfold(
            &target.labels,
            &target.speaker_ids,
            k,
            5,
            seed::derive(experiment.master_seed, &[seed::tag("folds")]),
            experiment.speaker_disjoint_folds,
        )?;
        five.truncate(1);
        five
    } else {
        speaker_kfold(
            &target.labels,
            &target.speaker_ids,
            k,
            experiment.folds,
            seed::derive(experiment.master_seed, &[seed::tag("folds")]),
            experiment.speaker_disjoint_folds,
        )?
    };
    let fold_count = match experiment.protocol {
        Protocol::Nested => folds.len(),
        Protocol::FixedSplit => 1,
    };

    let mut warnings = Vec::new();
    let mut methods = experiment.methods.clone();
    methods.dedup();
    let mut n_values = experiment.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();

    // Cell layout: reference baselines, then budgeted methods × n.
    let mut cells: Vec<(Method, Option<usize>)> = Vec::new();
    for &m in methods.iter().filter(|m| !m.uses_budget()) {
        cells.push((m, None));
    }
    for &m in methods.iter().filter(|m| m.uses_budget()) {
        for &n in &n_values {
            if m == Method::LabelTarget && experiment.per_class_equivalent(n, k) < LABEL_TARGET_MIN_PER_CLASS {
                warnings.push(format!(
                    "label-target n={n}: not run (reported only above 10 examples per class)"
                ));
                continue;
            }
            cells.push((m, Some(n)));
        }
    }

    let mut items = Vec::new();
    for fold in 0..fold_count {
        for trial in 0..experiment.trials {
            for &(method, n) in &cells {
                items.push(WorkItem { fold, trial, method, n });
            }
        }
    }

    let ctx = Context {
        source,
        target,
        folds,
        experiment,
        train,
        hidden_dim,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ItemOutcome>> =
        pool.install(|| items.par_iter().map(|&item| ctx.run(item)).collect());

    let mut per_cell: Vec<Vec<TrialRecord>> = vec![Vec::new(); cells.len()];
    let mut histories = Vec::new();
    for (item, outcome) in items.iter().zip(outcomes) {
        let cell = cells
            .iter()
            .position(|&(m, n)| m == item.method && n == item.n)
            .expect("item built from cells");
        match outcome? {
            ItemOutcome::Done { ua, histories: hs } => {
                per_cell[cell].push(TrialRecord {
                    fold: item.fold,
                    trial: item.trial,
                    ua,
                });
                for (phase, history) in hs {
                    histories.push(RunHistory {
                        method: item.method,
                        n_per_class: item.n,
                        fold: item.fold,
                        trial: item.trial,
                        phase,
                        history,
                    });
                }
            }
            ItemOutcome::Skipped(msg) => {
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let mut reports = Vec::new();
    for (&(method, n), records) in cells.iter().zip(per_cell) {
        if records.is_empty() {
            continue;
        }
        reports.push(TrialReport::from_records(method, n, records)?);
    }

    Ok(ExperimentOutput {
        report: SweepReport {
            source_name: source.name.clone(),
            target_name: target.name.clone(),
            source_priors: source.class_priors(),
            target_priors: target.class_priors(),
            count_unit: experiment.count_unit,
            trials: experiment.trials,
            folds: fold_count,
            cells: reports,
            warnings,
        },
        histories,
    })
}
