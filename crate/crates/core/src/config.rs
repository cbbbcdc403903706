//! TOML run configuration shared by all CLI commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::TrainConfig;
use crate::datasets::{generate_synthetic_pair, load_feature_csv, Domain, DomainDataset, SyntheticShiftSpec};
use crate::evaluation::{ExperimentConfig, Method};
use crate::{Error, Result};

/// The frozen synthetic benchmark, used when no config file is given.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/benchmark.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_classes: usize,
    pub feature_dim: Option<usize>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_classes: 2,
            feature_dim: None,
            source: None,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden_dim: 256 }
    }
}

/// Settings for the single-model `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: Method,
    pub n_per_class: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: Method::Cada,
            n_per_class: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub data: DataConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticShiftSpec>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            workers: 1,
            data: DataConfig::default(),
            synthetic: None,
            model: ModelSection::default(),
            train: TrainConfig::default(),
            experiment: ExperimentConfig::default(),
            run: RunSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Read a config file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.source, &mut cfg.data.target].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn default_benchmark() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled config parses")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("config serialization: {e}")))
    }

    /// Check counts and data sources. File paths must exist.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        if self.data.num_classes < 2 {
            return Err(Error::config("data.num_classes", "must be >= 2"));
        }
        if self.data.feature_dim == Some(0) {
            return Err(Error::config("data.feature_dim", "must be >= 1"));
        }
        if self.model.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be >= 1"));
        }
        if self.run.n_per_class == 0 {
            return Err(Error::config("run.n_per_class", "must be >= 1"));
        }
        self.train.validate()?;
        self.experiment.validate()?;
        match (&self.synthetic, &self.data.source, &self.data.target) {
            (Some(spec), None, None) => {
                spec.validate()?;
                if spec.num_classes != self.data.num_classes {
                    return Err(Error::config(
                        "synthetic.num_classes",
                        format!("differs from data.num_classes = {}", self.data.num_classes),
                    ));
                }
            }
            (None, Some(s), Some(t)) => {
                for (field, p) in [("data.source", s), ("data.target", t)] {
                    if !p.is_file() {
                        return Err(Error::config(field, format!("no such file: {}", p.display())));
                    }
                }
            }
            (Some(_), _, _) => {
                return Err(Error::config("synthetic", "give either [synthetic] or data paths, not both"))
            }
            (None, _, _) => {
                return Err(Error::config(
                    "data",
                    "need both data.source and data.target, or a [synthetic] section",
                ))
            }
        }
        Ok(())
    }

    /// Load or generate the (source, target) pair.
    pub fn datasets(&self) -> Result<(DomainDataset, DomainDataset)> {
        if let Some(spec) = &self.synthetic {
            return generate_synthetic_pair(spec);
        }
        let k = self.data.num_classes;
        let dim = self.data.feature_dim;
        let path = |p: &Option<PathBuf>, field: &str| {
            p.clone().ok_or_else(|| Error::config(field, "missing"))
        };
        let source = load_feature_csv(&path(&self.data.source, "data.source")?, Domain::Source, k, dim)?;
        let target = load_feature_csv(
            &path(&self.data.target, "data.target")?,
            Domain::Target,
            k,
            Some(dim.unwrap_or(source.feature_dim())),
        )?;
        Ok((source, target))
    }
}
