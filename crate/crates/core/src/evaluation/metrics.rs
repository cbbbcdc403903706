//! Unweighted accuracy and mean ± standard deviation.

use crate::{Error, Result};

/// Per-class recall averaged over the `K` classes.
///
/// Every class must occur in `truth`; otherwise its recall is undefined.
pub fn unweighted_accuracy(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::dim(
            "unweighted_accuracy",
            format!("{} predictions for {} labels", predictions.len(), truth.len()),
        ));
    }
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Precondition(format!(
                "class index outside [0, {num_classes}): prediction {p}, truth {t}"
            )));
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    if let Some(c) = totals.iter().position(|&n| n == 0) {
        return Err(Error::Precondition(format!(
            "class {c} absent from ground truth; UA undefined"
        )));
    }
    let recall_sum: f64 = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &n)| h as f64 / n as f64)
        .sum();
    Ok(recall_sum / num_classes as f64)
}

/// Arithmetic mean and sample standard deviation (`n − 1`); a single value
/// has standard deviation 0.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Precondition("cannot aggregate zero values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
