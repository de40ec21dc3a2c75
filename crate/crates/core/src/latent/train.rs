use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autoencoder::{Adam, AeParams};
use super::LatentError;
use crate::numkit::fit_line_slope;
use crate::policy::ParamVector;

/// Mini-batch Adam schedule for the manifold learning phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Fraction of every mini-batch kept out of the gradient and used to
    /// track test loss.
    pub test_fraction: f64,
    /// Number of trailing epoch test losses the stopping slope is fitted to.
    pub early_stop_window: usize,
    /// Training stops once that slope exceeds this value.
    pub early_stop_slope: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 20_000,
            test_fraction: 0.3,
            early_stop_window: 100,
            early_stop_slope: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Collection-mean reconstruction error before the first update.
    pub initial_recon_error: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub stopped_early: bool,
    /// Collection-mean `‖θ - θ̂‖²` after training; the region-search threshold.
    pub mean_recon_error_over_collection: f64,
}

/// Rows are the flattened members of the collection.
pub fn collection_matrix(collection: &[ParamVector]) -> Result<Array2<f64>, LatentError> {
    let p = collection.first().map(|t| t.len()).ok_or(LatentError::EmptyCollection)?;
    let mut data = Vec::with_capacity(collection.len() * p);
    for theta in collection {
        if theta.len() != p {
            return Err(LatentError::DimensionMismatch {
                expected: p,
                actual: theta.len(),
            });
        }
        data.extend_from_slice(theta.as_slice());
    }
    Ok(Array2::from_shape_vec((collection.len(), p), data).expect("row-major collection"))
}

/// True once the line fitted to the last `window` test losses rises faster
/// than `max_slope` per epoch.
pub(crate) fn should_stop(history: &[f64], window: usize, max_slope: f64) -> bool {
    if window < 2 || history.len() < window {
        return false;
    }
    let slope = fit_line_slope(&history[history.len() - window..]).expect("window >= 2");
    slope > max_slope
}

pub(crate) fn train_autoencoder<R: Rng + ?Sized>(
    ae: &mut AeParams,
    collection: &[ParamVector],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<TrainReport, LatentError> {
    let data = collection_matrix(collection)?;
    if data.ncols() != ae.param_dim() {
        return Err(LatentError::DimensionMismatch {
            expected: ae.param_dim(),
            actual: data.ncols(),
        });
    }
    let n = data.nrows();
    let initial_recon_error = ae.reconstruction_errors(data.view()).mean().unwrap_or(0.0);

    // moments start from zero on every call
    let mut adam = Adam::new(ae.len(), opts.learning_rate, opts.beta1, opts.beta2, opts.epsilon);
    let mut order: Vec<usize> = (0..n).collect();
    let mut test_history: Vec<f64> = Vec::new();
    let mut report = TrainReport {
        epochs_run: 0,
        initial_recon_error,
        final_train_loss: initial_recon_error,
        final_test_loss: initial_recon_error,
        stopped_early: false,
        mean_recon_error_over_collection: initial_recon_error,
    };
    let batch_size = opts.batch_size.max(1);

    for _epoch in 0..opts.max_epochs {
        order.shuffle(rng);
        let mut train_sum = 0.0;
        let mut train_count = 0usize;
        let mut test_sum = 0.0;
        let mut test_count = 0usize;
        for chunk in order.chunks(batch_size) {
            let held_out = ((chunk.len() as f64 * opts.test_fraction).round() as usize)
                .min(chunk.len() - 1);
            let (test_idx, train_idx) = chunk.split_at(held_out);
            if !test_idx.is_empty() {
                let test = data.select(Axis(0), test_idx);
                test_sum += ae.reconstruction_errors(test.view()).sum();
                test_count += test_idx.len();
            }
            let train = data.select(Axis(0), train_idx);
            let (loss, grad) = ae.loss_and_grad(train.view());
            if !loss.is_finite() {
                report.final_train_loss = loss;
                return Err(LatentError::DivergedLoss(Box::new(report)));
            }
            train_sum += loss * train_idx.len() as f64;
            train_count += train_idx.len();
            adam.update(ae, &grad);
        }
        report.epochs_run += 1;
        report.final_train_loss = train_sum / train_count as f64;
        let test_loss = if test_count > 0 {
            test_sum / test_count as f64
        } else {
            report.final_train_loss
        };
        report.final_test_loss = test_loss;
        if !test_loss.is_finite() {
            return Err(LatentError::DivergedLoss(Box::new(report)));
        }
        test_history.push(test_loss);
        if should_stop(&test_history, opts.early_stop_window, opts.early_stop_slope) {
            report.stopped_early = true;
            break;
        }
    }

    let mean_err = ae.reconstruction_errors(data.view()).mean().unwrap_or(0.0);
    report.mean_recon_error_over_collection = mean_err;
    if !mean_err.is_finite() || !ae.is_finite() {
        return Err(LatentError::DivergedLoss(Box::new(report)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::should_stop;

    #[test]
    fn stop_rule_needs_a_full_window() {
        let rising: Vec<f64> = (0..99).map(|i| i as f64).collect();
        assert!(!should_stop(&rising, 100, 1e-5));
        let rising: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(should_stop(&rising, 100, 1e-5));
    }

    #[test]
    fn stop_rule_ignores_falling_and_flat_losses() {
        let falling: Vec<f64> = (0..150).map(|i| 10.0 - i as f64 * 0.01).collect();
        assert!(!should_stop(&falling, 100, 1e-5));
        assert!(!should_stop(&[3.0; 100], 100, 1e-5));
        // only the trailing window counts
        let mut hist: Vec<f64> = (0..100).map(|i| i as f64).collect();
        hist.extend((0..100).map(|i| 100.0 - i as f64));
        assert!(!should_stop(&hist, 100, 1e-5));
        let tiny: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 1e-6).collect();
        assert!(!should_stop(&tiny, 100, 1e-5));
    }
}
