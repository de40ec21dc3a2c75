//! Mutation operators in parameter space and in latent space.

use rand::Rng;
use rand_distr::StandardNormal;

use super::SearchError;
use crate::latent::{latent_covariance, LatentModel};
use crate::numkit::{cholesky, sample_mvn, Matrix, DEFAULT_JITTER_START};

/// `θ + ε`, `ε ~ N(0, σ_Θ·I)`. `sigma_theta` is a variance.
pub fn mutate_iso<R: Rng + ?Sized>(
    theta: &[f64],
    sigma_theta: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SearchError> {
    if !(sigma_theta >= 0.0) || !sigma_theta.is_finite() {
        return Err(SearchError::InvalidSigma(sigma_theta));
    }
    let std = sigma_theta.sqrt();
    Ok(theta
        .iter()
        .map(|t| {
            let u: f64 = rng.sample(StandardNormal);
            t + std * u
        })
        .collect())
}

/// `θ_i + σ1·ε + σ2·δ·(θ_j - θ_i)` with `ε ~ N(0, I)` and scalar `δ ~ N(0, 1)`.
/// Here `σ1` and `σ2` are standard deviations.
pub fn mutate_isolinedd<R: Rng + ?Sized>(
    theta_i: &[f64],
    theta_j: &[f64],
    sigma_iso: f64,
    sigma_line: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SearchError> {
    if theta_i.len() != theta_j.len() {
        return Err(SearchError::DimensionMismatch {
            expected: theta_i.len(),
            actual: theta_j.len(),
        });
    }
    let eps: Vec<f64> = (0..theta_i.len()).map(|_| rng.sample(StandardNormal)).collect();
    let delta: f64 = rng.sample(StandardNormal);
    Ok(theta_i
        .iter()
        .zip(theta_j)
        .zip(&eps)
        .map(|((a, b), e)| a + sigma_iso * e + sigma_line * delta * (b - a))
        .collect())
}

/// Latent mutation with Jacobian-scaled noise:
/// `z = f_E(θ)`, `Σ_Z = σ_Θ JᵀJ`, `z' ~ N(z, Σ_Z)`, `θ' = f_D(z')`.
pub fn mutate_latent<R: Rng + ?Sized>(
    theta: &[f64],
    model: &LatentModel,
    sigma_theta: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SearchError> {
    let z = model.encode(theta)?;
    let jacobian = model.decoder_jacobian(&z)?;
    let cov = latent_covariance(&jacobian, sigma_theta)?;
    latent_step(&z, model, &cov, rng)
}

/// Latent mutation with a fixed covariance, typically the per-dimension
/// latent ranges of the collection.
pub fn mutate_latent_range<R: Rng + ?Sized>(
    theta: &[f64],
    model: &LatentModel,
    range_cov: &Matrix,
    rng: &mut R,
) -> Result<Vec<f64>, SearchError> {
    let z = model.encode(theta)?;
    latent_step(&z, model, range_cov, rng)
}

fn latent_step<R: Rng + ?Sized>(
    z: &[f64],
    model: &LatentModel,
    cov: &Matrix,
    rng: &mut R,
) -> Result<Vec<f64>, SearchError> {
    let chol = cholesky(cov, DEFAULT_JITTER_START)?;
    let z_new = sample_mvn(z, &chol.lower, rng)?;
    Ok(model.decode(&z_new)?)
}
