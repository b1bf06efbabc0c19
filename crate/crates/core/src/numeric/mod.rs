//! Dense `f64` kernels, a small reverse-mode tape, and SGD.

mod matrix;
pub mod tape;

pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Var};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: shape mismatch between {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{rows}x{cols} matrix cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
    #[error("tape already differentiated; record a new forward pass first")]
    TapeConsumed,
}

/// Stable `m + ln(sum(exp(v - m)))` with `m = max(v)`.
pub fn logsumexp(values: &[f64]) -> Result<f64, NumericError> {
    let m = values
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(NumericError::EmptyInput("logsumexp"))?;
    if !m.is_finite() {
        return Err(NumericError::NonFinite("logsumexp"));
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + s.ln())
}

/// A trainable matrix with its accumulated gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            grad: Matrix::zeros(r, c),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate(&mut self, g: &Matrix) -> Result<(), NumericError> {
        self.grad.add_assign(g)
    }
}

/// `value -= lr * grad`, then zero the gradients.
pub fn sgd_step<'a>(params: impl IntoIterator<Item = &'a mut Parameter>, lr: f64) {
    for p in params {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
        p.zero_grad();
    }
}

/// Constant learning rate that decays geometrically once `decay_start`
/// epochs have completed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub decay_start: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 0.1,
            decay: 0.95,
            decay_start: 15,
        }
    }
}

impl LrSchedule {
    /// Rate in effect after `epoch` epochs (1-based) have completed.
    pub fn after_epoch(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_start {
            self.base * self.decay.powi((epoch - self.decay_start + 1) as i32)
        } else {
            self.base
        }
    }

    /// Rate used while running epoch `epoch` (1-based).
    pub fn for_epoch(&self, epoch: usize) -> f64 {
        if epoch <= 1 {
            self.base
        } else {
            self.after_epoch(epoch - 1)
        }
    }
}
