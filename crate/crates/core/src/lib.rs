//! Policy manifold search: MAP-Elites over policy-network parameters with
//! mutations shaped by a learned latent representation of the archive.

pub mod archive;
pub mod envs;
pub mod experiment;
pub mod latent;
pub mod metrics;
pub mod numkit;
pub mod policy;
pub mod search;
