//! Descriptor = policy outputs at fixed probe observations. No dynamics.

use super::{all_finite, EnvError, EnvSpec};
use crate::policy::PolicyError;

type Trajectory = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

pub(super) fn run<F>(env: &EnvSpec, controller: &mut F) -> Result<Trajectory, EnvError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, PolicyError>,
{
    let mut outputs = Vec::with_capacity(env.probes.len());
    for probe in &env.probes {
        let out = controller(probe)?;
        if !all_finite(&out) {
            return Err(EnvError::NonFiniteState);
        }
        outputs.push(out);
    }
    let mut bd: Vec<f64> = outputs.iter().flatten().copied().collect();
    bd.truncate(env.grid.ndims());
    Ok((env.probes.clone(), outputs, bd))
}
