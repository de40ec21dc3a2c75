//! Three-link planar kinematic arm driven by joint velocities.

use super::{all_finite, EnvError, EnvSpec};
use crate::policy::PolicyError;

/// End-effector position of a planar chain with unit links.
pub fn forward_kinematics(q: &[f64]) -> (f64, f64) {
    let mut angle = 0.0;
    let (mut x, mut y) = (0.0, 0.0);
    for qk in q {
        angle += qk;
        x += angle.cos();
        y += angle.sin();
    }
    (x, y)
}

fn observe(q: &[f64; 3]) -> Vec<f64> {
    let (ex, ey) = forward_kinematics(q);
    let mut s: Vec<f64> = q.iter().map(|a| a.cos()).collect();
    s.extend(q.iter().map(|a| a.sin()));
    s.push(ex);
    s.push(ey);
    s
}

type Trajectory = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

pub(super) fn run<F>(env: &EnvSpec, controller: &mut F) -> Result<Trajectory, EnvError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, PolicyError>,
{
    let mut q = [0.0f64; 3];
    let mut states = Vec::with_capacity(env.episode_length + 1);
    let mut actions = Vec::with_capacity(env.episode_length);
    states.push(observe(&q));
    for _ in 0..env.episode_length {
        let mut a = controller(states.last().expect("initial state"))?;
        env.clip(&mut a);
        for (qk, ak) in q.iter_mut().zip(&a) {
            *qk += env.dt * ak;
        }
        let s = observe(&q);
        if !all_finite(&s) {
            return Err(EnvError::NonFiniteState);
        }
        states.push(s);
        actions.push(a);
    }
    let (ex, ey) = forward_kinematics(&q);
    Ok((states, actions, vec![ex, ey]))
}
