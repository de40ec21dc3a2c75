//! Latent representations of policy parameters.
//!
//! A [`LatentModel`] maps `θ ∈ R^P` to `z ∈ R^M` and back, either through a
//! trained autoencoder or through a linear PCA projection, and exposes the
//! decoder Jacobian used to shape latent mutation noise.

mod autoencoder;
mod train;

pub use autoencoder::{elu, elu_grad, AeParams};
pub use train::{collection_matrix, TrainOptions, TrainReport};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{pca_fit, Matrix, NumError};
use crate::policy::ParamVector;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatentError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training collection is empty")]
    EmptyCollection,
    #[error("training diverged (non-finite loss after {} epochs)", .0.epochs_run)]
    DivergedLoss(Box<TrainReport>),
    #[error("need at least 2 latent points, got {0}")]
    InsufficientPoints(usize),
    #[error("sigma_theta must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("only an autoencoder model can be trained")]
    NotTrainable,
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
}

/// Linear latent map `z = Vᵀ(θ - μ)`, `θ = μ + V z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `P × M` with orthonormal columns.
    pub components: Matrix,
}

impl PcaModel {
    pub fn fit(collection: &[ParamVector], latent_dim: usize) -> Result<Self, LatentError> {
        let data = collection_matrix(collection)?;
        let (n, p) = data.dim();
        let data = Matrix::from_vec(n, p, data.into_iter().collect())?;
        let fit = pca_fit(&data, latent_dim)?;
        Ok(Self {
            mean: fit.mean,
            components: fit.components,
        })
    }

    /// `encode = decode = id` on `R^P`.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            components: Matrix::identity(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentModel {
    Autoencoder(AeParams),
    Pca(PcaModel),
}

impl LatentModel {
    pub fn param_dim(&self) -> usize {
        match self {
            LatentModel::Autoencoder(ae) => ae.param_dim(),
            LatentModel::Pca(pca) => pca.components.rows(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            LatentModel::Autoencoder(ae) => ae.latent_dim(),
            LatentModel::Pca(pca) => pca.components.cols(),
        }
    }

    pub fn encode(&self, theta: &[f64]) -> Result<Vec<f64>, LatentError> {
        check_dim(self.param_dim(), theta.len())?;
        match self {
            LatentModel::Autoencoder(ae) => Ok(ae.encode(ArrayView1::from(theta)).to_vec()),
            LatentModel::Pca(pca) => {
                let (p, m) = (pca.components.rows(), pca.components.cols());
                let centered: Vec<f64> = theta.iter().zip(&pca.mean).map(|(t, mu)| t - mu).collect();
                let mut z = vec![0.0; m];
                for (i, c) in centered.iter().enumerate().take(p) {
                    for (j, zj) in z.iter_mut().enumerate() {
                        *zj += pca.components[(i, j)] * c;
                    }
                }
                Ok(z)
            }
        }
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, LatentError> {
        check_dim(self.latent_dim(), z.len())?;
        match self {
            LatentModel::Autoencoder(ae) => Ok(ae.decode(ArrayView1::from(z)).to_vec()),
            LatentModel::Pca(pca) => {
                let p = pca.components.rows();
                Ok((0..p)
                    .map(|i| {
                        let mut acc = 0.0;
                        for (j, zj) in z.iter().enumerate() {
                            acc += pca.components[(i, j)] * zj;
                        }
                        pca.mean[i] + acc
                    })
                    .collect())
            }
        }
    }

    pub fn reconstruct(&self, theta: &[f64]) -> Result<Vec<f64>, LatentError> {
        self.decode(&self.encode(theta)?)
    }

    /// `J[i][j] = ∂f_D(z)_i / ∂z_j`, shape `P × M`.
    pub fn decoder_jacobian(&self, z: &[f64]) -> Result<Matrix, LatentError> {
        check_dim(self.latent_dim(), z.len())?;
        match self {
            LatentModel::Autoencoder(ae) => Ok(ae.decoder_jacobian(ArrayView1::from(z))),
            LatentModel::Pca(pca) => Ok(pca.components.clone()),
        }
    }

    /// `‖θ - f_D(f_E(θ))‖²` for every member.
    pub fn reconstruction_errors(&self, collection: &[ParamVector]) -> Result<Vec<f64>, LatentError> {
        if collection.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            LatentModel::Autoencoder(ae) => {
                let data = collection_matrix(collection)?;
                check_dim(ae.param_dim(), data.ncols())?;
                Ok(ae.reconstruction_errors(data.view()).to_vec())
            }
            LatentModel::Pca(_) => collection
                .iter()
                .map(|t| {
                    let back = self.reconstruct(t.as_slice())?;
                    Ok(crate::numkit::squared_distance(t.as_slice(), &back))
                })
                .collect(),
        }
    }

    /// Collection-mean squared reconstruction error (0 for an empty collection).
    pub fn mean_reconstruction_error(&self, collection: &[ParamVector]) -> Result<f64, LatentError> {
        let errors = self.reconstruction_errors(collection)?;
        if errors.is_empty() {
            return Ok(0.0);
        }
        Ok(errors.iter().sum::<f64>() / errors.len() as f64)
    }

    /// Latent codes of every member, as rows.
    pub fn encode_all(&self, collection: &[ParamVector]) -> Result<Vec<Vec<f64>>, LatentError> {
        match self {
            LatentModel::Autoencoder(ae) if !collection.is_empty() => {
                let data = collection_matrix(collection)?;
                check_dim(ae.param_dim(), data.ncols())?;
                let act = ae.forward_latent(data.view());
                Ok(act.outer_iter().map(|r| r.to_vec()).collect())
            }
            _ => collection.iter().map(|t| self.encode(t.as_slice())).collect(),
        }
    }

    /// Runs the manifold learning phase on an autoencoder model.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        collection: &[ParamVector],
        opts: &TrainOptions,
        rng: &mut R,
    ) -> Result<TrainReport, LatentError> {
        match self {
            LatentModel::Autoencoder(ae) => train::train_autoencoder(ae, collection, opts, rng),
            LatentModel::Pca(_) => Err(LatentError::NotTrainable),
        }
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let model = match self {
            LatentModel::Autoencoder(ae) => CheckpointModel::Autoencoder {
                param_dim: ae.param_dim(),
                hidden_dim: ae.hidden_dim(),
                latent_dim: ae.latent_dim(),
                params: ae.to_flat(),
            },
            LatentModel::Pca(pca) => CheckpointModel::Pca {
                param_dim: pca.components.rows(),
                latent_dim: pca.components.cols(),
                mean: pca.mean.clone(),
                components: pca.components.as_slice().to_vec(),
            },
        };
        ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            model,
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self, LatentError> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(LatentError::InvalidCheckpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        match &ckpt.model {
            CheckpointModel::Autoencoder {
                param_dim,
                hidden_dim,
                latent_dim,
                params,
            } => AeParams::from_flat(*param_dim, *hidden_dim, *latent_dim, params)
                .map(LatentModel::Autoencoder)
                .ok_or_else(|| LatentError::InvalidCheckpoint("parameter count".into())),
            CheckpointModel::Pca {
                param_dim,
                latent_dim,
                mean,
                components,
            } => {
                if mean.len() != *param_dim {
                    return Err(LatentError::InvalidCheckpoint("mean length".into()));
                }
                let components = Matrix::from_vec(*param_dim, *latent_dim, components.clone())
                    .map_err(|e| LatentError::InvalidCheckpoint(e.to_string()))?;
                Ok(LatentModel::Pca(PcaModel {
                    mean: mean.clone(),
                    components,
                }))
            }
        }
    }
}

impl AeParams {
    fn forward_latent(&self, x: ndarray::ArrayView2<f64>) -> Array2<f64> {
        let hidden = (x.dot(&self.enc_hidden_w.t()) + &self.enc_hidden_b).mapv_into(elu);
        hidden.dot(&self.enc_latent_w.t()) + &self.enc_latent_b
    }
}

/// Versioned, language-neutral model snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub model: CheckpointModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum CheckpointModel {
    /// `params` follow [`AeParams::to_flat`].
    Autoencoder {
        param_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        params: Vec<f64>,
    },
    /// `components` is `P × M`, row-major.
    Pca {
        param_dim: usize,
        latent_dim: usize,
        mean: Vec<f64>,
        components: Vec<f64>,
    },
}

/// `Σ_Z = σ_Θ · JᵀJ`, the latent covariance whose linear pushforward through
/// the decoder is `σ_Θ`-isotropic on the decoder's tangent space.
pub fn latent_covariance(jacobian: &Matrix, sigma_theta: f64) -> Result<Matrix, LatentError> {
    if !(sigma_theta > 0.0) || !sigma_theta.is_finite() {
        return Err(LatentError::InvalidSigma(sigma_theta));
    }
    Ok(jacobian.gram().scaled(sigma_theta))
}

/// Diagonal matrix of per-dimension latent ranges `max_j - min_j`.
pub fn range_covariance(latent_points: &[Vec<f64>]) -> Result<Matrix, LatentError> {
    if latent_points.len() < 2 {
        return Err(LatentError::InsufficientPoints(latent_points.len()));
    }
    let m = latent_points[0].len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for z in latent_points {
        check_dim(m, z.len())?;
        for j in 0..m {
            lo[j] = lo[j].min(z[j]);
            hi[j] = hi[j].max(z[j]);
        }
    }
    let ranges: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    Ok(Matrix::diagonal(&ranges))
}

fn check_dim(expected: usize, actual: usize) -> Result<(), LatentError> {
    if expected != actual {
        return Err(LatentError::DimensionMismatch { expected, actual });
    }
    Ok(())
}
