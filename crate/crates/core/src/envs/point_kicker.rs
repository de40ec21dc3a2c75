//! Point mass on a line that can kick a ball once.
//!
//! The agent integrates `(p, v)` with explicit Euler under a clipped scalar
//! acceleration. The ball moves on exact constant-gravity arcs between ground
//! contacts, so the recorded peak height is the true apex of each arc.

use serde::{Deserialize, Serialize};

use super::{all_finite, EnvError, EnvSpec};
use crate::policy::PolicyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickerPhysics {
    /// Initial ball position relative to the agent.
    pub ball_offset: f64,
    pub kick_radius: f64,
    /// Ball horizontal velocity per unit agent velocity at the kick.
    pub kick_gain_x: f64,
    /// Ball vertical velocity per unit agent speed at the kick.
    pub kick_gain_y: f64,
    pub gravity: f64,
    pub restitution: f64,
    /// Horizontal velocity factor applied at every ground contact.
    pub horizontal_damping: f64,
    /// The episode ends once ball speed drops below this.
    pub settle_speed: f64,
    /// Hard cap on simulated steps, agent steps included.
    pub max_steps: usize,
}

impl Default for KickerPhysics {
    fn default() -> Self {
        Self {
            ball_offset: 0.5,
            kick_radius: 0.3,
            kick_gain_x: 1.5,
            kick_gain_y: 0.75,
            gravity: 9.81,
            restitution: 0.5,
            horizontal_damping: 0.9,
            settle_speed: 0.01,
            max_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ball {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub grounded: bool,
}

impl Ball {
    fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Advances one step and returns the highest point reached during it.
    pub(crate) fn step(&mut self, dt: f64, phys: &KickerPhysics) -> f64 {
        let g = phys.gravity;
        if self.grounded {
            self.x += dt * self.vx;
            self.vx *= phys.horizontal_damping;
            return self.y;
        }
        let mut peak = self.y;
        if self.vy > 0.0 && self.vy < g * dt {
            peak = self.y + self.vy * self.vy / (2.0 * g);
        }
        self.x += dt * self.vx;
        self.y += self.vy * dt - 0.5 * g * dt * dt;
        self.vy -= g * dt;
        peak = peak.max(self.y);
        if self.y <= 0.0 {
            self.y = 0.0;
            self.vy = -phys.restitution * self.vy;
            self.vx *= phys.horizontal_damping;
            if self.vy < g * dt {
                self.vy = 0.0;
                self.grounded = true;
            }
        }
        peak
    }
}

type Trajectory = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

pub(super) fn run<F>(env: &EnvSpec, controller: &mut F) -> Result<Trajectory, EnvError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, PolicyError>,
{
    let phys = &env.kicker;
    let dt = env.dt;
    let (mut p, mut v) = (0.0f64, 0.0f64);
    let mut ball = Ball {
        x: p + phys.ball_offset,
        y: 0.0,
        vx: 0.0,
        vy: 0.0,
        grounded: true,
    };
    let mut kicked = false;
    let mut max_y = 0.0f64;
    let observe = |p: f64, v: f64, b: &Ball| vec![p, v, b.x - p, b.y, b.vx, b.vy];

    let mut states = Vec::with_capacity(env.episode_length + 1);
    let mut actions = Vec::with_capacity(env.episode_length);
    states.push(observe(p, v, &ball));
    let mut steps = 0usize;
    for _ in 0..env.episode_length {
        let obs = states.last().expect("initial state");
        let mut a = controller(obs)?;
        env.clip(&mut a);
        p += dt * v;
        v += dt * a[0];
        if !kicked && ball.grounded && (p - ball.x).abs() < phys.kick_radius && v.abs() > 0.0 {
            ball.vx = phys.kick_gain_x * v;
            ball.vy = phys.kick_gain_y * v.abs();
            ball.grounded = false;
            kicked = true;
        }
        max_y = max_y.max(ball.step(dt, phys));
        steps += 1;
        let s = observe(p, v, &ball);
        if !all_finite(&s) || !a[0].is_finite() {
            return Err(EnvError::NonFiniteState);
        }
        states.push(s);
        actions.push(a);
    }
    // agent frozen; the ball finishes its flight
    while steps < phys.max_steps && ball.speed() >= phys.settle_speed {
        max_y = max_y.max(ball.step(dt, phys));
        steps += 1;
    }
    if !ball.x.is_finite() || !max_y.is_finite() {
        return Err(EnvError::NonFiniteState);
    }
    Ok((states, actions, vec![ball.x, max_y]))
}
