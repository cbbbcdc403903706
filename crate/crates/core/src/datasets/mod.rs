//! Labelled feature corpora and everything done to them before training.
//!
//! Feature tables are CSV with a mandatory header:
//!
//! ```text
//! utterance_id,speaker_id,label,f1,...,fD
//! ```
//!
//! `label` is an integer class in `[0, K)`. Malformed rows are rejected with
//! their line number; nothing is imputed.

mod labels;
mod normalize;
mod split;
mod synthetic;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use labels::{adversarial_relabel, relabel, CategoryLabel};
pub use normalize::NormalizationStats;
pub use split::{holdout_split, sample_target_examples, speaker_kfold, Fold, SampleCount};
pub use synthetic::{generate_synthetic_pair, SyntheticShiftSpec, SPEAKER_BLOCK};

use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

/// One corpus: features, class labels, speakers, and its domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub domain: Domain,
    pub num_classes: usize,
    pub utterance_ids: Vec<String>,
    pub speaker_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub features: Matrix,
}

impl DomainDataset {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        num_classes: usize,
        utterance_ids: Vec<String>,
        speaker_ids: Vec<String>,
        labels: Vec<usize>,
        features: Matrix,
    ) -> Result<Self> {
        let n = features.rows();
        if utterance_ids.len() != n || speaker_ids.len() != n || labels.len() != n {
            return Err(Error::dim(
                "DomainDataset::new",
                format!(
                    "{n} feature rows, {} utterances, {} speakers, {} labels",
                    utterance_ids.len(),
                    speaker_ids.len(),
                    labels.len()
                ),
            ));
        }
        if num_classes < 2 {
            return Err(Error::config("data.num_classes", "must be >= 2"));
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::Precondition(format!(
                "label {} at row {i} outside [0, {num_classes})",
                labels[i]
            )));
        }
        if !features.is_finite() {
            return Err(Error::Precondition("non-finite feature value".into()));
        }
        let ds = Self {
            name: name.into(),
            domain,
            num_classes,
            utterance_ids,
            speaker_ids,
            labels,
            features,
        };
        for (class, &count) in ds.class_counts().iter().enumerate() {
            if count == 0 && n > 0 {
                log::warn!("dataset `{}`: class {class} has no examples", ds.name);
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Fraction of examples per class.
    pub fn class_priors(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.class_counts().iter().map(|&c| c as f64 / n).collect()
    }

    pub fn has_every_class(&self) -> bool {
        self.class_counts().iter().all(|&c| c > 0)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            domain: self.domain,
            num_classes: self.num_classes,
            utterance_ids: indices.iter().map(|&i| self.utterance_ids[i].clone()).collect(),
            speaker_ids: indices.iter().map(|&i| self.speaker_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            features: self.features.select_rows(indices),
        }
    }

    /// Same rows with the features replaced (e.g. after normalization).
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::dim(
                "with_features",
                format!("{} rows for a dataset of {}", features.rows(), self.len()),
            ));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }
}

const FIXED_COLUMNS: [&str; 3] = ["utterance_id", "speaker_id", "label"];

/// Read a feature table. `expected_dim`, when given, must equal the number of
/// feature columns.
pub fn load_feature_csv(
    path: &Path,
    domain: Domain,
    num_classes: usize,
    expected_dim: Option<usize>,
) -> Result<DomainDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned());
    read_feature_csv(file, path, &name, domain, num_classes, expected_dim)
}

pub fn read_feature_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
    name: &str,
    domain: Domain,
    num_classes: usize,
    expected_dim: Option<usize>,
) -> Result<DomainDataset> {
    let csv_err = |row: u64, reason: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| csv_err(1, format!("unreadable header: {e}")))?
        .clone();
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(want) {
            return Err(csv_err(1, format!("missing column `{want}` at position {}", i + 1)));
        }
    }
    let dim = header.len().saturating_sub(FIXED_COLUMNS.len());
    if dim == 0 {
        return Err(csv_err(1, "no feature columns".into()));
    }
    if let Some(expect) = expected_dim {
        if expect != dim {
            return Err(csv_err(1, format!("{dim} feature columns, config declares {expect}")));
        }
    }

    let mut utterances = Vec::new();
    let mut speakers = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(csv_err(
                line,
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        let label_text = &record[2];
        let label: usize = label_text
            .parse()
            .map_err(|_| csv_err(line, format!("label `{label_text}` is not a class index")))?;
        if label >= num_classes {
            return Err(csv_err(
                line,
                format!("label {label} outside [0, {num_classes})"),
            ));
        }
        for (j, field) in record.iter().skip(3).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                csv_err(line, format!("feature `{}` value `{field}` is not numeric", &header[j + 3]))
            })?;
            if !v.is_finite() {
                return Err(csv_err(
                    line,
                    format!("feature `{}` value `{field}` is not finite", &header[j + 3]),
                ));
            }
            data.push(v);
        }
        utterances.push(record[0].to_owned());
        speakers.push(record[1].to_owned());
        labels.push(label);
    }
    let features = Matrix::new(labels.len(), dim, data)?;
    DomainDataset::new(name, domain, num_classes, utterances, speakers, labels, features)
}

/// Write a dataset in the feature-table schema. Feature columns are named
/// `f1..fD`; values use the shortest round-trip formatting.
pub fn write_feature_csv(dataset: &DomainDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| (*s).to_owned()).collect();
    header.extend((1..=dataset.feature_dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for i in 0..dataset.len() {
        let mut row = vec![
            dataset.utterance_ids[i].clone(),
            dataset.speaker_ids[i].clone(),
            dataset.labels[i].to_string(),
        ];
        row.extend(dataset.features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}
