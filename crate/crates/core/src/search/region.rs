//! Region-based choice between latent and parameter-space mutation.

use rand::Rng;

use super::operators::{mutate_iso, mutate_latent, mutate_latent_range};
use super::SearchError;
use crate::latent::LatentModel;
use crate::numkit::{squared_distance, Matrix};
use crate::policy::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Latent,
    Parameter,
}

/// How a candidate is assigned to a branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchRule {
    /// Latent branch iff `‖θ - θ̂‖² < ε_recn`.
    Threshold(f64),
    /// Latent branch with probability one half.
    FairCoin,
}

/// Noise model of the latent branch.
#[derive(Debug, Clone, Copy)]
pub enum LatentNoise<'a> {
    /// `Σ_Z = σ_Θ JᵀJ` at the candidate's code.
    Jacobian,
    /// A fixed covariance shared by the whole batch.
    Range(&'a Matrix),
}

#[derive(Debug, Clone, Copy)]
pub struct RegionContext<'a> {
    pub model: &'a LatentModel,
    pub rule: BranchRule,
    pub noise: LatentNoise<'a>,
    /// Isotropic variance of the parameter branch and scale of the Jacobian noise.
    pub sigma_theta: f64,
}

#[derive(Debug)]
pub struct Mutant {
    pub params: Result<Vec<f64>, SearchError>,
    /// The space the mutant was actually sampled in.
    pub branch: Branch,
    /// Latent branch chosen but its covariance could not be factorised.
    pub fell_back: bool,
}

#[derive(Debug)]
pub struct RegionOutcome {
    pub mutants: Vec<Mutant>,
    pub parameter_count: usize,
}

impl RegionOutcome {
    /// Fraction of the batch mutated in parameter space.
    pub fn mixing_ratio(&self) -> f64 {
        if self.mutants.is_empty() {
            return 0.0;
        }
        self.parameter_count as f64 / self.mutants.len() as f64
    }
}

/// Mutates one selected candidate.
pub fn region_mutate<R: Rng + ?Sized>(theta: &[f64], ctx: &RegionContext<'_>, rng: &mut R) -> Mutant {
    let choose_latent = match ctx.rule {
        BranchRule::FairCoin => rng.random_bool(0.5),
        BranchRule::Threshold(eps) => match ctx.model.reconstruct(theta) {
            Ok(back) => squared_distance(theta, &back) < eps,
            Err(e) => {
                return Mutant {
                    params: Err(e.into()),
                    branch: Branch::Parameter,
                    fell_back: false,
                }
            }
        },
    };
    if !choose_latent {
        return Mutant {
            params: mutate_iso(theta, ctx.sigma_theta, rng),
            branch: Branch::Parameter,
            fell_back: false,
        };
    }
    let latent = match ctx.noise {
        LatentNoise::Jacobian => mutate_latent(theta, ctx.model, ctx.sigma_theta, rng),
        LatentNoise::Range(cov) => mutate_latent_range(theta, ctx.model, cov, rng),
    };
    match latent {
        Err(e) if e.is_decomposition_failure() => Mutant {
            params: mutate_iso(theta, ctx.sigma_theta, rng),
            branch: Branch::Parameter,
            fell_back: true,
        },
        params => Mutant {
            params,
            branch: Branch::Latent,
            fell_back: false,
        },
    }
}

/// Threshold rule with Jacobian-scaled latent noise over a whole batch,
/// drawing from a single stream.
pub fn region_based_search<R: Rng + ?Sized>(
    batch: &[ParamVector],
    model: &LatentModel,
    eps_recn: f64,
    sigma_theta: f64,
    rng: &mut R,
) -> RegionOutcome {
    let ctx = RegionContext {
        model,
        rule: BranchRule::Threshold(eps_recn),
        noise: LatentNoise::Jacobian,
        sigma_theta,
    };
    let mutants: Vec<Mutant> = batch
        .iter()
        .map(|t| region_mutate(t.as_slice(), &ctx, rng))
        .collect();
    let parameter_count = mutants.iter().filter(|m| m.branch == Branch::Parameter).count();
    RegionOutcome {
        mutants,
        parameter_count,
    }
}
