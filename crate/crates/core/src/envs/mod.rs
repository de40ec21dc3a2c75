//! Deterministic episodic environments with behaviour-descriptor extraction.
//!
//! Every environment is a pure function of the policy parameters: no shared
//! state, no randomness. A rollout that produces a non-finite state is
//! reported as [`EnvError::NonFiniteState`].

mod arm_reacher;
mod point_kicker;
mod probe;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveError, BehaviourDescriptor, GridDim, GridSpec};
use crate::policy::{forward, ParamVector, PolicyError, PolicyShape};

pub use arm_reacher::forward_kinematics;
pub use point_kicker::KickerPhysics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("policy shape {policy_in}->{policy_out} does not fit env {env_in}->{env_out}")]
    ShapeMismatch {
        policy_in: usize,
        policy_out: usize,
        env_in: usize,
        env_out: usize,
    },
    #[error("rollout produced a non-finite state")]
    NonFiniteState,
    #[error("invalid environment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Descriptor(#[from] ArchiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    PointKicker,
    ArmReacher,
    ProbeBd,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointKicker => "point-kicker",
            EnvKind::ArmReacher => "arm-reacher",
            EnvKind::ProbeBd => "probe-bd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub observation_dim: usize,
    pub action_dim: usize,
    /// Number of policy-controlled steps.
    pub episode_length: usize,
    /// Actions are clipped to `[-action_clip, action_clip]`.
    pub action_clip: f64,
    pub dt: f64,
    pub grid: GridSpec,
    /// Point-kicker constants; ignored by the other environments.
    #[serde(default)]
    pub kicker: KickerPhysics,
    /// Probe observations for `probe-bd`; ignored by the other environments.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
}

impl EnvSpec {
    pub fn point_kicker() -> Self {
        Self {
            kind: EnvKind::PointKicker,
            observation_dim: 6,
            action_dim: 1,
            episode_length: 100,
            action_clip: 10.0,
            dt: 0.05,
            grid: GridSpec {
                dims: vec![
                    GridDim::continuous(0.0, 50.0, 50),
                    GridDim::continuous(0.0, 8.0, 20),
                ],
            },
            kicker: KickerPhysics::default(),
            probes: Vec::new(),
        }
    }

    pub fn arm_reacher() -> Self {
        Self {
            kind: EnvKind::ArmReacher,
            observation_dim: 8,
            action_dim: 3,
            episode_length: 50,
            action_clip: 1.0,
            dt: 0.05,
            grid: GridSpec {
                dims: vec![
                    GridDim::continuous(-3.0, 3.0, 30),
                    GridDim::continuous(-3.0, 3.0, 30),
                ],
            },
            kicker: KickerPhysics::default(),
            probes: Vec::new(),
        }
    }

    pub fn probe_bd() -> Self {
        Self {
            kind: EnvKind::ProbeBd,
            observation_dim: 2,
            action_dim: 1,
            episode_length: 1,
            action_clip: 1.0,
            dt: 1.0,
            grid: GridSpec {
                dims: vec![
                    GridDim::continuous(-2.5, 2.5, 20),
                    GridDim::continuous(-2.5, 2.5, 20),
                ],
            },
            kicker: KickerPhysics::default(),
            probes: vec![vec![1.0, 0.5], vec![-0.5, 1.0]],
        }
    }

    pub fn by_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointKicker => Self::point_kicker(),
            EnvKind::ArmReacher => Self::arm_reacher(),
            EnvKind::ProbeBd => Self::probe_bd(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.episode_length == 0 {
            return Err(EnvError::InvalidSpec("episode_length must be >= 1".into()));
        }
        if !(self.action_clip > 0.0) {
            return Err(EnvError::InvalidSpec("action_clip must be > 0".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EnvError::InvalidSpec("dt must be > 0".into()));
        }
        self.grid.validate()?;
        let (obs, act, bd) = match self.kind {
            EnvKind::PointKicker => (6, 1, 2),
            EnvKind::ArmReacher => (8, 3, 2),
            EnvKind::ProbeBd => {
                if self.probes.is_empty()
                    || self.probes.iter().any(|p| p.len() != self.observation_dim)
                {
                    return Err(EnvError::InvalidSpec(
                        "probe-bd needs probes matching observation_dim".into(),
                    ));
                }
                if self.probes.len() * self.action_dim < self.grid.ndims() {
                    return Err(EnvError::InvalidSpec(
                        "probe outputs cannot fill the grid dimensions".into(),
                    ));
                }
                (self.observation_dim, self.action_dim, self.grid.ndims())
            }
        };
        if self.observation_dim != obs || self.action_dim != act || self.grid.ndims() != bd {
            return Err(EnvError::InvalidSpec(format!(
                "{} expects {obs} observations, {act} actions and a {bd}-d grid",
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Policy shape for this env with the given hidden widths.
    pub fn policy_shape(&self, hidden: Vec<usize>) -> Result<PolicyShape, EnvError> {
        Ok(PolicyShape::new(self.observation_dim, hidden, self.action_dim)?)
    }

    pub(crate) fn clip(&self, action: &mut [f64]) {
        for a in action {
            *a = a.clamp(-self.action_clip, self.action_clip);
        }
    }
}

/// One closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `T + 1` observations (for `probe-bd`, the probe observations).
    pub states: Vec<Vec<f64>>,
    /// `T` clipped actions (for `probe-bd`, the raw outputs at each probe).
    pub actions: Vec<Vec<f64>>,
    pub bd: BehaviourDescriptor,
}

/// Runs the episode of `env` under `π_θ`.
pub fn evaluate(env: &EnvSpec, shape: &PolicyShape, params: &ParamVector) -> Result<Rollout, EnvError> {
    if shape.input_dim != env.observation_dim || shape.output_dim != env.action_dim {
        return Err(EnvError::ShapeMismatch {
            policy_in: shape.input_dim,
            policy_out: shape.output_dim,
            env_in: env.observation_dim,
            env_out: env.action_dim,
        });
    }
    if !params.is_finite() {
        return Err(EnvError::NonFiniteState);
    }
    let mut policy = |obs: &[f64]| forward(shape, params, obs);
    simulate(env, &mut policy)
}

/// Runs the episode with an arbitrary controller in place of a policy network.
pub fn simulate<F>(env: &EnvSpec, controller: &mut F) -> Result<Rollout, EnvError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, PolicyError>,
{
    let (states, actions, bd_raw) = match env.kind {
        EnvKind::PointKicker => point_kicker::run(env, controller)?,
        EnvKind::ArmReacher => arm_reacher::run(env, controller)?,
        EnvKind::ProbeBd => probe::run(env, controller)?,
    };
    if bd_raw.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteState);
    }
    let bd = BehaviourDescriptor::new(bd_raw, &env.grid)?;
    Ok(Rollout { states, actions, bd })
}

pub(crate) fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Writes `t,s0..,a0..` rows; the final state row has empty action fields.
pub fn write_trace_csv<W: Write>(rollout: &Rollout, out: W) -> Result<(), csv::Error> {
    let n_s = rollout.states.first().map_or(0, Vec::len);
    let n_a = rollout.actions.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n_s).map(|i| format!("s{i}")));
    header.extend((0..n_a).map(|i| format!("a{i}")));
    w.write_record(&header)?;
    for (t, s) in rollout.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(s.iter().map(|v| v.to_string()));
        match rollout.actions.get(t) {
            Some(a) => row.extend(a.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), n_a)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
