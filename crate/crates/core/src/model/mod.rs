//! Encoder–predictor MLP.
//!
//! The encoder is `relu(x·We + be)`, the predictor `softmax(h·Wp + bp)`. In
//! domain-class mode the predictor has `2K` outputs (source classes first,
//! then target classes); the baselines use a plain `K`-way head.

mod persist;

pub use persist::{load_model, parse_model, render_model, save_model, ModelFile, MODEL_MAGIC};

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::numerics::{
    affine_backward_input, affine_backward_params, affine_forward, affine_unchecked,
    cross_entropy, relu, relu_backward, softmax, softmax_cross_entropy_backward, Matrix,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// `2K` outputs, one per (domain, class) category.
    DomainClass,
    /// `K` outputs.
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub head: Head,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize, head: Head) -> Result<Self> {
        let cfg = Self {
            input_dim,
            hidden_dim,
            num_classes,
            head,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model.input_dim", "must be >= 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("model.num_classes", "must be >= 2"));
        }
        Ok(())
    }

    pub fn num_categories(&self) -> usize {
        2 * self.num_classes
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::DomainClass => self.num_categories(),
            Head::Class => self.num_classes,
        }
    }
}

/// Weights `[in × out]` and bias `[out]` of one affine layer. Also used to
/// hold the matching gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.weights.data(), &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.data_mut(), &mut self.bias]
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub seed: u64,
    pub encoder: Dense,
    pub predictor: Dense,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = crate::seed::rng(seed);
    let mut layer = |fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        let mut d = Dense::zeros(fan_in, fan_out);
        for w in d.weights.data_mut() {
            *w = dist.sample(&mut rng);
        }
        d
    };
    let encoder = layer(config.input_dim, config.hidden_dim);
    let predictor = layer(config.hidden_dim, config.output_dim());
    Ok(ModelParams {
        config,
        seed,
        encoder,
        predictor,
    })
}

impl ModelParams {
    /// All-zero parameters; every forward row is uniform.
    pub fn zeros(config: ModelConfig) -> Self {
        Self {
            config,
            seed: 0,
            encoder: Dense::zeros(config.input_dim, config.hidden_dim),
            predictor: Dense::zeros(config.hidden_dim, config.output_dim()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.predictor.parameter_count()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.predictor.is_finite()
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.config.input_dim {
            return Err(Error::dim(
                "forward",
                format!(
                    "batch has {} features, model expects {}",
                    batch.cols(),
                    self.config.input_dim
                ),
            ));
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre_hidden: Matrix,
    pub hidden: Matrix,
    pub probabilities: Matrix,
}

pub fn forward_cached(params: &ModelParams, batch: &Matrix) -> Result<ForwardCache> {
    params.check_batch(batch)?;
    let pre_hidden = affine_forward(batch, &params.encoder.weights, &params.encoder.bias)?;
    let hidden = relu(&pre_hidden);
    let logits = affine_unchecked(&hidden, &params.predictor.weights, &params.predictor.bias);
    Ok(ForwardCache {
        pre_hidden,
        hidden,
        probabilities: softmax(&logits),
    })
}

/// Category (or class) probabilities, one row per example.
pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<Matrix> {
    Ok(forward_cached(params, batch)?.probabilities)
}

/// Summed cross-entropy of the model's predictions against one-hot targets.
pub fn loss(params: &ModelParams, batch: &Matrix, targets: &Matrix) -> Result<f64> {
    cross_entropy(&forward(params, batch)?, targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Dense,
    pub predictor: Dense,
}

impl Gradients {
    pub fn scale_in_place(&mut self, a: f64) {
        self.encoder.scale_in_place(a);
        self.predictor.scale_in_place(a);
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.predictor.is_finite()
    }
}

/// Exact gradients of the summed batch cross-entropy w.r.t. every parameter.
/// Returns the loss alongside.
pub fn backward_pass(
    params: &ModelParams,
    batch: &Matrix,
    targets: &Matrix,
) -> Result<(f64, Gradients)> {
    let cache = forward_cached(params, batch)?;
    let loss = cross_entropy(&cache.probabilities, targets)?;
    let d_logits = softmax_cross_entropy_backward(&cache.probabilities, targets);
    let (dwp, dbp) = affine_backward_params(&cache.hidden, &d_logits);
    let d_hidden = affine_backward_input(&d_logits, &params.predictor.weights);
    let d_pre = relu_backward(&cache.pre_hidden, &d_hidden);
    let (dwe, dbe) = affine_backward_params(batch, &d_pre);
    Ok((
        loss,
        Gradients {
            encoder: Dense {
                weights: dwe,
                bias: dbe,
            },
            predictor: Dense {
                weights: dwp,
                bias: dbp,
            },
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameter_count: usize,
}

/// Denominator floor in the relative error, so parameters with a
/// vanishing gradient are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare [`backward_pass`] against central differences on every parameter.
///
/// Relative error is `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn finite_difference_check(
    params: &ModelParams,
    batch: &Matrix,
    targets: &Matrix,
    epsilon: f64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Precondition(format!(
            "finite difference epsilon {epsilon} outside (0, 1e-2]"
        )));
    }
    let (_, analytic) = backward_pass(params, batch, targets)?;
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut count = 0;

    for layer in 0..2 {
        for tensor in 0..2 {
            let grads = match layer {
                0 => analytic.encoder.tensors()[tensor],
                _ => analytic.predictor.tensors()[tensor],
            };
            for (i, &a) in grads.iter().enumerate() {
                let original = slot(&mut probe, layer, tensor)[i];
                slot(&mut probe, layer, tensor)[i] = original + epsilon;
                let plus = loss(&probe, batch, targets)?;
                slot(&mut probe, layer, tensor)[i] = original - epsilon;
                let minus = loss(&probe, batch, targets)?;
                slot(&mut probe, layer, tensor)[i] = original;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                max_rel = max_rel.max((a - numeric).abs() / denom);
                count += 1;
            }
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_rel,
        parameter_count: count,
    })
}

fn slot(params: &mut ModelParams, layer: usize, tensor: usize) -> &mut [f64] {
    let dense = if layer == 0 {
        &mut params.encoder
    } else {
        &mut params.predictor
    };
    let [w, b] = dense.tensors_mut();
    if tensor == 0 {
        w
    } else {
        b
    }
}

/// Map a predicted category onto its class: `category mod K`.
pub fn collapse_prediction(category: usize, num_classes: usize) -> Result<usize> {
    if category >= 2 * num_classes {
        return Err(Error::Precondition(format!(
            "category {category} outside [0, {})",
            2 * num_classes
        )));
    }
    Ok(category % num_classes)
}

/// Row-wise argmax (lowest index wins ties) followed by category collapse.
pub fn predict_from_probabilities(probabilities: &Matrix, num_classes: usize) -> Vec<usize> {
    (0..probabilities.rows())
        .map(|r| {
            let row = probabilities.row(r);
            let mut best = 0;
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = c;
                }
            }
            best % num_classes
        })
        .collect()
}

pub fn predict_classes(params: &ModelParams, batch: &Matrix) -> Result<Vec<usize>> {
    let probs = forward(params, batch)?;
    Ok(predict_from_probabilities(&probs, params.config.num_classes))
}
