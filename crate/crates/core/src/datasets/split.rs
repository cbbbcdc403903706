//! Cross-validation folds, early-stopping holdouts and few-shot sampling.
//!
//! All routines are deterministic for a fixed seed and return sorted
//! index lists.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition `0..labels.len()` into `folds` train/test splits.
///
/// By default folds are stratified by class at the utterance level, so a
/// speaker may appear on both sides. With `speaker_disjoint` every speaker's
/// utterances land in a single test fold instead (no class stratification).
pub fn speaker_kfold(
    labels: &[usize],
    speakers: &[String],
    num_classes: usize,
    folds: usize,
    seed: u64,
    speaker_disjoint: bool,
) -> Result<Vec<Fold>> {
    let n = labels.len();
    if folds == 0 {
        return Err(Error::Precondition("number of folds must be >= 1".into()));
    }
    if n < folds {
        return Err(Error::Precondition(format!(
            "{n} examples cannot fill {folds} folds"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut assignment = vec![0usize; n];

    if speaker_disjoint {
        let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in speakers.iter().enumerate() {
            by_speaker.entry(s.as_str()).or_default().push(i);
        }
        if by_speaker.len() < folds {
            return Err(Error::Precondition(format!(
                "{} speakers cannot fill {folds} speaker-disjoint folds",
                by_speaker.len()
            )));
        }
        let mut groups: Vec<Vec<usize>> = by_speaker.into_values().collect();
        groups.shuffle(&mut rng);
        let mut sizes = vec![0usize; folds];
        for group in groups {
            let f = (0..folds).min_by_key(|&f| (sizes[f], f)).expect("folds >= 1");
            sizes[f] += group.len();
            for i in group {
                assignment[i] = f;
            }
        }
    } else {
        let mut next = 0;
        for class in 0..num_classes {
            let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[i] = next % folds;
                next += 1;
            }
        }
    }

    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Split `indices` into (fit, holdout) with roughly `fraction` held out,
/// stratified by `labels[i]`.
///
/// Holdout sizes per class use largest-remainder rounding of `fraction × n_c`.
/// A class that would get no holdout example but has at least two gets one
/// (with a warning).
pub fn holdout_split(
    indices: &[usize],
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() < 10 {
        return Err(Error::Precondition(format!(
            "holdout split needs >= 10 examples, got {}",
            indices.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in indices {
        per_class[labels[i]].push(i);
    }
    let n = indices.len() as f64;
    let total = ((fraction * n).round() as usize).max(1);
    let quotas: Vec<f64> = per_class.iter().map(|c| fraction * c.len() as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    for &c in order.iter().cycle().take(num_classes * 2) {
        if assigned >= total {
            break;
        }
        if alloc[c] + 1 < per_class[c].len() {
            alloc[c] += 1;
            assigned += 1;
        }
    }
    for (c, members) in per_class.iter().enumerate() {
        if alloc[c] == 0 && members.len() >= 2 {
            log::debug!(
                "holdout: class {c} has only {} examples; holding out 1",
                members.len()
            );
            alloc[c] = 1;
        } else if alloc[c] == 0 && !members.is_empty() {
            log::debug!("holdout: class {c} has a single example and is absent from the holdout");
        }
    }

    let mut rng = seed::rng(seed);
    let mut fit = Vec::new();
    let mut hold = Vec::new();
    for (c, mut members) in per_class.into_iter().enumerate() {
        members.shuffle(&mut rng);
        hold.extend_from_slice(&members[..alloc[c]]);
        fit.extend_from_slice(&members[alloc[c]..]);
    }
    fit.sort_unstable();
    hold.sort_unstable();
    Ok((fit, hold))
}

/// How the few-shot budget `n` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleCount {
    /// `n` examples of every class.
    #[default]
    PerClass,
    /// `n` examples overall, split as evenly as possible across classes.
    Total,
}

/// Draw the labelled target examples for one trial from `candidates`.
///
/// Within a class, each pick first chooses a speaker uniformly among those
/// with unpicked examples of that class, then one of that speaker's examples.
pub fn sample_target_examples(
    dataset: &DomainDataset,
    candidates: &[usize],
    n: usize,
    unit: SampleCount,
    seed: u64,
) -> Result<Vec<usize>> {
    let k = dataset.num_classes;
    let mut rng = seed::rng(seed);
    let need: Vec<usize> = match unit {
        SampleCount::PerClass => vec![n; k],
        SampleCount::Total => {
            if n < k {
                return Err(Error::Precondition(format!(
                    "total budget {n} cannot cover {k} classes"
                )));
            }
            let mut need = vec![n / k; k];
            let extra: Vec<usize> = (0..k).collect::<Vec<_>>().choose_multiple(&mut rng, n % k).copied().collect();
            for c in extra {
                need[c] += 1;
            }
            need
        }
    };
    if n == 0 {
        return Err(Error::Precondition("few-shot budget must be >= 1".into()));
    }

    let mut picked = Vec::with_capacity(need.iter().sum());
    for (class, &want) in need.iter().enumerate() {
        let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in candidates {
            if dataset.labels[i] == class {
                by_speaker.entry(dataset.speaker_ids[i].as_str()).or_default().push(i);
            }
        }
        let available: usize = by_speaker.values().map(Vec::len).sum();
        if available < want {
            return Err(Error::Precondition(format!(
                "class {class} has {available} candidate examples, {want} requested"
            )));
        }
        let mut pools: Vec<Vec<usize>> = by_speaker.into_values().collect();
        for _ in 0..want {
            let s = rng.random_range(0..pools.len());
            let pool = &mut pools[s];
            let j = rng.random_range(0..pool.len());
            picked.push(pool.swap_remove(j));
            if pool.is_empty() {
                pools.swap_remove(s);
            }
        }
    }
    picked.sort_unstable();
    Ok(picked)
}
