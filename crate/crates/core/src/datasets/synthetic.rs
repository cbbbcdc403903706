//! Gaussian source/target pairs with a class-conditional covariate shift.
//!
//! Source class `k` is `N(μ_k, s_k² I)`. The matching target class is the
//! same cluster with its spread inflated by `√inflation`, rotated by
//! `rotation_degrees` in the plane of the first two features and then
//! translated by `target_offset`. Both domains have equal class priors.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Rows per synthetic speaker.
pub const SPEAKER_BLOCK: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticShiftSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// `num_classes × feature_dim` source means.
    pub class_means: Vec<Vec<f64>>,
    /// Per-class standard deviation of the source clusters.
    pub class_scales: Vec<f64>,
    pub target_offset: Vec<f64>,
    #[serde(default)]
    pub rotation_degrees: f64,
    /// Multiplier on the target's per-class variance.
    pub variance_inflation: f64,
    /// Rows per class in each domain.
    pub examples_per_class: usize,
    pub seed: u64,
}

impl SyntheticShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("synthetic.{f}");
        if self.num_classes < 2 {
            return Err(Error::config(field("num_classes"), "must be >= 2"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config(field("feature_dim"), "must be >= 1"));
        }
        if self.class_means.len() != self.num_classes
            || self.class_means.iter().any(|m| m.len() != self.feature_dim)
        {
            return Err(Error::config(
                field("class_means"),
                format!("need {} rows of {} values", self.num_classes, self.feature_dim),
            ));
        }
        if self.class_means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::config(field("class_means"), "values must be finite"));
        }
        if self.class_scales.len() != self.num_classes
            || self.class_scales.iter().any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::config(
                field("class_scales"),
                format!("need {} finite values > 0", self.num_classes),
            ));
        }
        if self.target_offset.len() != self.feature_dim
            || self.target_offset.iter().any(|x| !x.is_finite())
        {
            return Err(Error::config(
                field("target_offset"),
                format!("need {} finite values", self.feature_dim),
            ));
        }
        if !self.rotation_degrees.is_finite() || (self.rotation_degrees != 0.0 && self.feature_dim < 2) {
            return Err(Error::config(
                field("rotation_degrees"),
                "must be finite; nonzero rotation needs feature_dim >= 2",
            ));
        }
        if !(self.variance_inflation > 0.0 && self.variance_inflation.is_finite()) {
            return Err(Error::config(field("variance_inflation"), "must be finite and > 0"));
        }
        if self.examples_per_class == 0 {
            return Err(Error::config(field("examples_per_class"), "must be >= 1"));
        }
        Ok(())
    }

    fn rotate(&self, x: &mut [f64]) {
        if self.rotation_degrees != 0.0 {
            let (s, c) = self.rotation_degrees.to_radians().sin_cos();
            let (a, b) = (x[0], x[1]);
            x[0] = c * a - s * b;
            x[1] = s * a + c * b;
        }
    }

    /// Mean of class `k` in `domain`.
    pub fn class_mean(&self, class: usize, domain: Domain) -> Vec<f64> {
        let mut mu = self.class_means[class].clone();
        if domain == Domain::Target {
            self.rotate(&mut mu);
            for (m, o) in mu.iter_mut().zip(&self.target_offset) {
                *m += o;
            }
        }
        mu
    }

    /// Per-dimension standard deviation of class `k` in `domain`.
    pub fn class_std(&self, class: usize, domain: Domain) -> f64 {
        match domain {
            Domain::Source => self.class_scales[class],
            Domain::Target => self.class_scales[class] * self.variance_inflation.sqrt(),
        }
    }

    /// Bayes-optimal class under the generator's densities (equal priors).
    pub fn bayes_predict(&self, x: &[f64], domain: Domain) -> usize {
        let d = self.feature_dim as f64;
        (0..self.num_classes)
            .map(|k| {
                let mu = self.class_mean(k, domain);
                let s = self.class_std(k, domain);
                let sq: f64 = x.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum();
                (k, -d * s.ln() - sq / (2.0 * s * s))
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }
}

/// Draw the (source, target) pair described by `spec`.
pub fn generate_synthetic_pair(spec: &SyntheticShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let mut rng = crate::seed::rng(spec.seed);
    let k = spec.num_classes;
    let n = k * spec.examples_per_class;
    let d = spec.feature_dim;

    let mut make = |domain: Domain, prefix: &str| -> Result<DomainDataset> {
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % k;
            let scale = spec.class_std(class, domain);
            let mut x: Vec<f64> = spec.class_means[class]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + scale * z
                })
                .collect();
            if domain == Domain::Target {
                spec.rotate(&mut x);
                for (xi, o) in x.iter_mut().zip(&spec.target_offset) {
                    *xi += o;
                }
            }
            data.extend(x);
            labels.push(class);
        }
        DomainDataset::new(
            format!("synthetic-{domain}"),
            domain,
            k,
            (0..n).map(|i| format!("{prefix}-{i:05}")).collect(),
            (0..n).map(|i| format!("{prefix}-spk{:03}", i / SPEAKER_BLOCK)).collect(),
            labels,
            Matrix::new(n, d, data)?,
        )
    };
    let source = make(Domain::Source, "src")?;
    let target = make(Domain::Target, "tgt")?;
    Ok((source, target))
}
