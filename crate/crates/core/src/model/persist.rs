//! Plain-text model files.
//!
//! ```text
//! CADA-MODEL v1
//! input_dim 62
//! hidden_dim 256
//! num_classes 2
//! head domain-class
//! seed 1234
//! tensor encoder.weights 62 256
//! <62 lines of 256 values>
//! tensor encoder.bias 1 256
//! tensor predictor.weights 256 4
//! tensor predictor.bias 1 4
//! normalization 62          (optional)
//! min <62 values>
//! max <62 values>
//! end
//! ```
//!
//! Values are written with `{:e}`, which round-trips `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dense, Head, ModelConfig, ModelParams};
use crate::datasets::NormalizationStats;
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const MODEL_MAGIC: &str = "CADA-MODEL v1";

/// A persisted model plus the input normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: ModelParams,
    pub normalization: Option<NormalizationStats>,
}

fn write_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn write_tensor(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        write_values(out, m.row(r));
    }
}

pub fn render_model(file: &ModelFile) -> String {
    let p = &file.params;
    let c = &p.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "input_dim {}", c.input_dim);
    let _ = writeln!(out, "hidden_dim {}", c.hidden_dim);
    let _ = writeln!(out, "num_classes {}", c.num_classes);
    let head = match c.head {
        Head::DomainClass => "domain-class",
        Head::Class => "class",
    };
    let _ = writeln!(out, "head {head}");
    let _ = writeln!(out, "seed {}", p.seed);
    write_tensor(&mut out, "encoder.weights", &p.encoder.weights);
    write_tensor(&mut out, "encoder.bias", &row_matrix(&p.encoder.bias));
    write_tensor(&mut out, "predictor.weights", &p.predictor.weights);
    write_tensor(&mut out, "predictor.bias", &row_matrix(&p.predictor.bias));
    if let Some(norm) = &file.normalization {
        let _ = writeln!(out, "normalization {}", norm.min.len());
        out.push_str("min ");
        write_values(&mut out, &norm.min);
        out.push_str("max ");
        write_values(&mut out, &norm.max);
    }
    out.push_str("end\n");
    out
}

fn row_matrix(v: &[f64]) -> Matrix {
    Matrix::new(1, v.len(), v.to_vec()).expect("1 × n")
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    std::fs::write(path, render_model(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .ok_or_else(|| Error::ModelFormat(format!("unexpected end of file, expected {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::ModelFormat(format!("line {n}: expected `{key}`")));
        }
        Ok((n, parts.collect()))
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (n, rest) = self.keyed(key)?;
        match rest.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| Error::ModelFormat(format!("line {n}: bad {key} `{v}`"))),
            _ => Err(Error::ModelFormat(format!("line {n}: malformed {key}"))),
        }
    }

    fn values(&mut self, line_no: usize, parts: &[&str], expected: usize) -> Result<Vec<f64>> {
        if parts.len() != expected {
            return Err(Error::ModelFormat(format!(
                "line {line_no}: {} values, expected {expected}",
                parts.len()
            )));
        }
        parts
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::ModelFormat(format!("line {line_no}: bad value `{s}`")))
            })
            .collect()
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let (n, rest) = self.keyed("tensor")?;
        let dims: Vec<usize> = rest.iter().skip(1).filter_map(|s| s.parse().ok()).collect();
        if rest.first() != Some(&name) || dims != [rows, cols] {
            return Err(Error::ModelFormat(format!(
                "line {n}: expected tensor {name} {rows} {cols}"
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = self.next(name)?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            data.extend(self.values(ln, &parts, cols)?);
        }
        Matrix::new(rows, cols, data)
    }
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next("magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic `{magic}`, expected `{MODEL_MAGIC}`"
        )));
    }
    let input_dim = lines.count("input_dim")?;
    let hidden_dim = lines.count("hidden_dim")?;
    let num_classes = lines.count("num_classes")?;
    let (n, head) = lines.keyed("head")?;
    let head = match head.as_slice() {
        ["domain-class"] => Head::DomainClass,
        ["class"] => Head::Class,
        _ => return Err(Error::ModelFormat(format!("line {n}: unknown head"))),
    };
    let (n, seed) = lines.keyed("seed")?;
    let seed = seed
        .first()
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| Error::ModelFormat(format!("line {n}: bad seed")))?;
    let config = ModelConfig::new(input_dim, hidden_dim, num_classes, head)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    let out = config.output_dim();

    let ew = lines.tensor("encoder.weights", input_dim, hidden_dim)?;
    let eb = lines.tensor("encoder.bias", 1, hidden_dim)?.into_data();
    let pw = lines.tensor("predictor.weights", hidden_dim, out)?;
    let pb = lines.tensor("predictor.bias", 1, out)?.into_data();

    let (n, line) = lines.next("normalization or end")?;
    let normalization = if line == "end" {
        None
    } else {
        let mut parts = line.split_whitespace();
        let dim = match (parts.next(), parts.next().and_then(|s| s.parse::<usize>().ok())) {
            (Some("normalization"), Some(d)) if d == input_dim => d,
            _ => {
                return Err(Error::ModelFormat(format!(
                    "line {n}: expected `normalization {input_dim}` or `end`"
                )))
            }
        };
        let (n, min) = lines.keyed("min")?;
        let min = lines.values(n, &min, dim)?;
        let (n, max) = lines.keyed("max")?;
        let max = lines.values(n, &max, dim)?;
        let (n, end) = lines.next("end")?;
        if end != "end" {
            return Err(Error::ModelFormat(format!("line {n}: expected `end`")));
        }
        Some(NormalizationStats::new(min, max).map_err(|e| Error::ModelFormat(e.to_string()))?)
    };

    Ok(ModelFile {
        params: ModelParams {
            config,
            seed,
            encoder: Dense {
                weights: ew,
                bias: eb,
            },
            predictor: Dense {
                weights: pw,
                bias: pb,
            },
        },
        normalization,
    })
}
