//! Class-wise adversarial domain adaptation (CADA) for few-shot supervised
//! transfer between two labelled feature corpora.
//!
//! The model is a one-hidden-layer MLP split into an encoder and a predictor.
//! The predictor is a domain-class discriminator over `2K` categories: source
//! classes occupy categories `0..K`, target classes `K..2K`. Training
//! alternates a discriminative stage (encoder and predictor learn the true
//! categories) with an adversarial stage (encoder alone learns to make each
//! class look like the same class of the other domain). At test time the
//! predicted category is collapsed back onto its class.
//!
//! Everything is hand-rolled on a small row-major `f64` matrix type:
//!
//! - [`numerics`] holds the matrix kernels (affine, ReLU, softmax, cross-entropy).
//! - [`model`] has parameters, forward/backward passes and persistence.
//! - [`optimizer`] implements Adam.
//! - [`datasets`] covers feature tables, normalization, splits and the synthetic shift.
//! - [`adaptation`] trains CADA and the baselines.
//! - [`evaluation`] provides unweighted accuracy, the experiment driver and reports.
//! - [`config`] and [`cli`] back the `cada` command-line tool.

pub mod adaptation;
pub mod cli;
pub mod config;
pub mod datasets;
mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod seed;

pub use error::{Error, Result};
