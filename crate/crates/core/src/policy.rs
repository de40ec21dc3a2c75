//! Deterministic feed-forward policies over a flat parameter vector.
//!
//! Parameters are stored flat: layer 0 weights (row-major, `fan_out × fan_in`),
//! layer 0 biases, layer 1 weights, and so on. The autoencoder, the archive
//! and the persisted snapshots all rely on this ordering.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("parameter vector length {actual} does not match shape ({expected})")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("policy parameters contain non-finite values")]
    NonFiniteParams,
    #[error("invalid policy shape: {0}")]
    InvalidShape(String),
}

/// Layer widths of a tanh MLP with a linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl PolicyShape {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self, PolicyError> {
        let shape = Self {
            input_dim,
            hidden,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(PolicyError::InvalidShape(format!(
                "all layer widths must be >= 1, got {} -> {:?} -> {}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    /// Index ranges of each layer's weights and biases inside the flat vector.
    pub fn layer_ranges(&self) -> Vec<(Range<usize>, Range<usize>)> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let w = offset..offset + fan_in * fan_out;
                let b = w.end..w.end + fan_out;
                offset = b.end;
                (w, b)
            })
            .collect()
    }
}

/// Weights (`fan_out × fan_in`) and biases of one affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Flat policy parameters `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(shape: &PolicyShape, values: Vec<f64>) -> Result<Self, PolicyError> {
        let expected = shape.param_count();
        if values.len() != expected {
            return Err(PolicyError::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { values })
    }

    /// Wraps raw values without a shape check. Used by operators that work on
    /// bare vectors; [`forward`] re-checks the length.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(shape: &PolicyShape) -> Self {
        Self {
            values: vec![0.0; shape.param_count()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Evaluates `π_θ(observation)`: tanh hidden layers, affine output.
pub fn forward(
    shape: &PolicyShape,
    params: &ParamVector,
    observation: &[f64],
) -> Result<Vec<f64>, PolicyError> {
    if params.len() != shape.param_count() {
        return Err(PolicyError::LengthMismatch {
            expected: shape.param_count(),
            actual: params.len(),
        });
    }
    if observation.len() != shape.input_dim {
        return Err(PolicyError::DimensionMismatch {
            expected: shape.input_dim,
            actual: observation.len(),
        });
    }
    if !params.is_finite() {
        return Err(PolicyError::NonFiniteParams);
    }
    let theta = params.as_slice();
    let dims = shape.layer_dims();
    let last = dims.len() - 1;
    let mut activation = observation.to_vec();
    let mut offset = 0;
    for (layer, (fan_in, fan_out)) in dims.into_iter().enumerate() {
        let weights = &theta[offset..offset + fan_in * fan_out];
        let biases = &theta[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let next: Vec<f64> = (0..fan_out)
            .map(|o| {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let pre = row
                    .iter()
                    .zip(&activation)
                    .fold(biases[o], |acc, (w, x)| acc + w * x);
                if layer == last {
                    pre
                } else {
                    pre.tanh()
                }
            })
            .collect();
        activation = next;
    }
    Ok(activation)
}

pub fn flatten(shape: &PolicyShape, layers: &[Layer]) -> Result<ParamVector, PolicyError> {
    let dims = shape.layer_dims();
    if layers.len() != dims.len() {
        return Err(PolicyError::LengthMismatch {
            expected: dims.len(),
            actual: layers.len(),
        });
    }
    let mut values = Vec::with_capacity(shape.param_count());
    for (layer, (fan_in, fan_out)) in layers.iter().zip(dims) {
        if layer.weights.rows() != fan_out || layer.weights.cols() != fan_in {
            return Err(PolicyError::LengthMismatch {
                expected: fan_in * fan_out,
                actual: layer.weights.rows() * layer.weights.cols(),
            });
        }
        if layer.biases.len() != fan_out {
            return Err(PolicyError::LengthMismatch {
                expected: fan_out,
                actual: layer.biases.len(),
            });
        }
        values.extend_from_slice(layer.weights.as_slice());
        values.extend_from_slice(&layer.biases);
    }
    Ok(ParamVector { values })
}

pub fn unflatten(shape: &PolicyShape, params: &ParamVector) -> Result<Vec<Layer>, PolicyError> {
    if params.len() != shape.param_count() {
        return Err(PolicyError::LengthMismatch {
            expected: shape.param_count(),
            actual: params.len(),
        });
    }
    let theta = params.as_slice();
    Ok(shape
        .layer_dims()
        .into_iter()
        .zip(shape.layer_ranges())
        .map(|((fan_in, fan_out), (w, b))| Layer {
            weights: Matrix::from_vec(fan_out, fan_in, theta[w].to_vec())
                .expect("range length matches layer dims"),
            biases: theta[b].to_vec(),
        })
        .collect())
}

/// Every entry drawn from `U(-1, 1)`.
pub fn init_uniform<R: Rng + ?Sized>(shape: &PolicyShape, rng: &mut R) -> ParamVector {
    ParamVector {
        values: (0..shape.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    }
}

/// Glorot-normal weights, `N(0, 2 / (fan_in + fan_out))`, and zero biases.
pub fn init_glorot<R: Rng + ?Sized>(shape: &PolicyShape, rng: &mut R) -> ParamVector {
    let mut values = Vec::with_capacity(shape.param_count());
    for (fan_in, fan_out) in shape.layer_dims() {
        values.extend(glorot_normal(fan_in, fan_out, rng));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector { values }
}

/// `fan_in * fan_out` draws from `N(0, 2 / (fan_in + fan_out))`.
pub(crate) fn glorot_normal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<f64> {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite positive std");
    (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect()
}
