//! Dense numeric core: tensors, activations, a reverse-mode tape, Adam and
//! a finite-difference gradient checker.

mod gradcheck;
mod param;
mod tape;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use param::{adam_step, AdamConfig, ParamStore, Parameter};
pub use tape::{Grads, Tape, Var};
pub use tensor::{gemm, matmul_t, Tensor, Trans};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(&softmax(x.row(r)));
    }
    out
}

/// Cumulative softmax: nondecreasing, ends at one.
pub fn cumax(x: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    softmax(x)
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// `w · x + b` for a single vector.
pub fn affine(w: &Tensor, x: &[f64], b: &[f64]) -> Result<Vec<f64>, NumError> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(NumError::Shape(format!(
            "affine: weight {}x{}, input {}, bias {}",
            w.rows(),
            w.cols(),
            x.len(),
            b.len()
        )));
    }
    Ok((0..w.rows())
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[r])
        .collect())
}

/// Softmax cross-entropy in nats and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), NumError> {
    if target >= logits.len() {
        return Err(NumError::TargetOutOfRange { target, classes: logits.len() });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((lse - logits[target], grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted-dropout mask: kept entries are `1 / (1 - rate)`, dropped are 0.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Tensor {
    let keep = 1.0 - rate;
    let mut m = Tensor::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
    }
    m
}

/// Inverted dropout; identity in eval mode or at rate zero.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, mode: DropoutMode, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    if mode == DropoutMode::Eval || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.rows(), x.cols(), rate, rng);
    x.zip_map(&mask, |a, b| a * b)
}
