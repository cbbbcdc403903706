//! Dense row-major `f64` matrices and the kernels the model needs.
//!
//! Shapes are validated at every exported entry point and reported as
//! [`Error::Dimension`]. The backward kernels assume the caller already
//! validated the forward shapes.

use std::fmt;

use crate::{Error, Result};

/// Floor applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&self.row(r));
        }
        list.finish()
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::new",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Build from nested rows; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(
                    "Matrix::from_rows",
                    format!("row {i} has {} columns, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// One-hot encode class indices into a `len × classes` matrix.
    pub fn one_hot(indices: &[usize], classes: usize) -> Result<Self> {
        let mut m = Self::zeros(indices.len(), classes);
        for (r, &c) in indices.iter().enumerate() {
            if c >= classes {
                return Err(Error::Precondition(format!(
                    "one-hot index {c} at row {r} outside [0, {classes})"
                )));
            }
            m.data[r * classes + c] = 1.0;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Gather the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stack `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::dim(
                "vstack",
                format!("{:?} over {:?}", self.shape(), other.shape()),
            ));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|x| a * x)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn ensure_finite(op: &'static str, m: &Matrix) -> Result<()> {
    if let Some(pos) = m.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Precondition(format!(
            "{op}: non-finite input at row {}, col {}",
            pos / m.cols.max(1),
            pos % m.cols.max(1)
        )));
    }
    Ok(())
}

/// `out[b,h] = Σ_d input[b,d]·weights[d,h] + bias[h]`.
pub fn affine_forward(input: &Matrix, weights: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if input.cols != weights.rows || weights.cols != bias.len() {
        return Err(Error::dim(
            "affine_forward",
            format!(
                "input {:?}, weights {:?}, bias [{}]",
                input.shape(),
                weights.shape(),
                bias.len()
            ),
        ));
    }
    ensure_finite("affine_forward", input)?;
    Ok(affine_unchecked(input, weights, bias))
}

pub(crate) fn affine_unchecked(input: &Matrix, weights: &Matrix, bias: &[f64]) -> Matrix {
    let (b_rows, d_in) = input.shape();
    let h = weights.cols;
    let mut out = Matrix::zeros(b_rows, h);
    for b in 0..b_rows {
        let x = input.row(b);
        let o = &mut out.data[b * h..(b + 1) * h];
        o.copy_from_slice(bias);
        for (d, &xd) in x.iter().enumerate().take(d_in) {
            if xd == 0.0 {
                continue;
            }
            let w = weights.row(d);
            for (oj, &wj) in o.iter_mut().zip(w) {
                *oj += xd * wj;
            }
        }
    }
    out
}

pub fn relu(input: &Matrix) -> Matrix {
    input.map(|x| x.max(0.0))
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Summed categorical cross-entropy `−Σ_i Σ_c t[i,c]·ln p[i,c]`.
///
/// Probability rows must sum to 1 within 1e-6 and target rows must be
/// one-hot. Probabilities are floored at [`PROB_FLOOR`] before the log.
pub fn cross_entropy(probabilities: &Matrix, targets: &Matrix) -> Result<f64> {
    if probabilities.shape() != targets.shape() {
        return Err(Error::dim(
            "cross_entropy",
            format!(
                "probabilities {:?} vs targets {:?}",
                probabilities.shape(),
                targets.shape()
            ),
        ));
    }
    for r in 0..probabilities.rows {
        let p = probabilities.row(r);
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Precondition(format!(
                "cross_entropy: probability row {r} is not a distribution (sum {sum})"
            )));
        }
        let t = targets.row(r);
        let ones = t.iter().filter(|&&x| x == 1.0).count();
        let zeros = t.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != t.len() {
            return Err(Error::Precondition(format!(
                "cross_entropy: target row {r} is not one-hot"
            )));
        }
    }
    Ok(cross_entropy_unchecked(probabilities, targets))
}

pub(crate) fn cross_entropy_unchecked(probabilities: &Matrix, targets: &Matrix) -> f64 {
    probabilities
        .data
        .iter()
        .zip(&targets.data)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(PROB_FLOOR).ln())
        .sum()
}

/// Gradients of an affine map given the upstream gradient `grad_out`.
///
/// Returns `(d_weights, d_bias)`; `d_input` is computed separately by
/// [`affine_backward_input`] because the first layer never needs it.
pub fn affine_backward_params(input: &Matrix, grad_out: &Matrix) -> (Matrix, Vec<f64>) {
    let (b_rows, d_in) = input.shape();
    let h = grad_out.cols;
    let mut dw = Matrix::zeros(d_in, h);
    let mut db = vec![0.0; h];
    for b in 0..b_rows {
        let g = grad_out.row(b);
        for (dbj, &gj) in db.iter_mut().zip(g) {
            *dbj += gj;
        }
        for (d, &xd) in input.row(b).iter().enumerate() {
            if xd == 0.0 {
                continue;
            }
            let w = dw.row_mut(d);
            for (wj, &gj) in w.iter_mut().zip(g) {
                *wj += xd * gj;
            }
        }
    }
    (dw, db)
}

/// `d_input = grad_out · weightsᵀ`.
pub fn affine_backward_input(grad_out: &Matrix, weights: &Matrix) -> Matrix {
    let b_rows = grad_out.rows;
    let d_in = weights.rows;
    let mut dx = Matrix::zeros(b_rows, d_in);
    for b in 0..b_rows {
        let g = grad_out.row(b);
        let out = dx.row_mut(b);
        for (d, o) in out.iter_mut().enumerate() {
            *o = weights.row(d).iter().zip(g).map(|(w, gj)| w * gj).sum();
        }
    }
    dx
}

/// Mask the upstream gradient by `pre_activation > 0`.
pub fn relu_backward(pre_activation: &Matrix, grad_out: &Matrix) -> Matrix {
    let mut g = grad_out.clone();
    for (gi, &z) in g.data.iter_mut().zip(&pre_activation.data) {
        if z <= 0.0 {
            *gi = 0.0;
        }
    }
    g
}

/// Gradient of summed cross-entropy w.r.t. the logits feeding a softmax:
/// `probabilities − targets`.
pub fn softmax_cross_entropy_backward(probabilities: &Matrix, targets: &Matrix) -> Matrix {
    let mut g = probabilities.clone();
    for (gi, &t) in g.data.iter_mut().zip(&targets.data) {
        *gi -= t;
    }
    g
}
