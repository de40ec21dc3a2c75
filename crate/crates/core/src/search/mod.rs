//! Mutation operators, region-based search and the outer search loop.

mod operators;
mod region;
mod run;
pub mod streams;

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::envs::EnvError;
use crate::latent::LatentError;
use crate::numkit::NumError;
use crate::policy::PolicyError;

pub use operators::{mutate_iso, mutate_isolinedd, mutate_latent, mutate_latent_range};
pub use region::{
    region_based_search, region_mutate, Branch, BranchRule, LatentNoise, Mutant, RegionContext,
    RegionOutcome,
};
pub use run::{
    run, Budget, CoveragePoint, LoopSummary, RunArtifacts, RunSettings, Variant, VariantKind,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("mutation variance must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl SearchError {
    /// True when a latent covariance could not be factorised.
    pub fn is_decomposition_failure(&self) -> bool {
        matches!(
            self,
            SearchError::Numeric(NumError::DecompositionFailed(_))
                | SearchError::Latent(LatentError::Numeric(NumError::DecompositionFailed(_)))
        )
    }
}
