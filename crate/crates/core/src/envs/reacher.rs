use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, clip_action, norm2, EnvId, Environment, RewardComponents, StepResult};
use crate::error::{usage_err, Result};

pub const LINK1: f64 = 0.1;
pub const LINK2: f64 = 0.11;
pub const TARGET_RANGE: f64 = 0.27;
pub const VELOCITY_GAIN: f64 = 0.05;
pub const STEP_LIMIT: usize = 400;
pub(crate) const OBS_DIM: usize = 7;

/// Returns `(p2, p_ee)`: the end of the first link and the end effector.
/// `theta1` is measured from the x axis, `theta2` relative to the first link.
pub fn forward_kinematics(theta1: f64, theta2: f64) -> ([f64; 2], [f64; 2]) {
    let p2 = [LINK1 * theta1.cos(), LINK1 * theta1.sin()];
    let a = theta1 + theta2;
    (p2, [p2[0] + LINK2 * a.cos(), p2[1] + LINK2 * a.sin()])
}

/// Maps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Two-link planar arm driven by joint velocity commands `theta_dot = 0.05 * a`.
///
/// Observation (7): `p2.x, p2.y, theta2, theta1_dot, theta2_dot, target.x, target.y`.
#[derive(Clone, Debug)]
pub struct Reacher {
    rng: ChaCha8Rng,
    theta: [f64; 2],
    velocity: [f64; 2],
    target: [f64; 2],
    steps: usize,
    active: bool,
}

impl Reacher {
    pub fn new(seed: u64) -> Self {
        Reacher { rng: ChaCha8Rng::seed_from_u64(seed), theta: [0.0; 2], velocity: [0.0; 2], target: [0.0; 2], steps: 0, active: false }
    }

    /// Places the arm in a given configuration, for tests and scripted rollouts.
    pub fn set_state(&mut self, theta: [f64; 2], velocity: [f64; 2], target: [f64; 2]) {
        self.theta = [theta[0], wrap_angle(theta[1])];
        self.velocity = velocity;
        self.target = target;
        self.steps = 0;
        self.active = true;
    }

    pub fn joint_angles(&self) -> [f64; 2] {
        self.theta
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn end_effector(&self) -> [f64; 2] {
        forward_kinematics(self.theta[0], self.theta[1]).1
    }

    fn obs(&self) -> Vec<f64> {
        let (p2, _) = forward_kinematics(self.theta[0], self.theta[1]);
        vec![p2[0], p2[1], self.theta[1], self.velocity[0], self.velocity[1], self.target[0], self.target[1]]
    }
}

impl Environment for Reacher {
    fn id(&self) -> EnvId {
        EnvId::Reacher
    }

    fn step_limit(&self) -> usize {
        STEP_LIMIT
    }

    fn reset(&mut self) -> Vec<f64> {
        let t1 = self.rng.gen_range(-PI..PI);
        let t2 = self.rng.gen_range(-PI..=PI);
        let tx = self.rng.gen_range(-TARGET_RANGE..=TARGET_RANGE);
        let ty = self.rng.gen_range(-TARGET_RANGE..=TARGET_RANGE);
        self.set_state([t1, t2], [0.0; 2], [tx, ty]);
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.active {
            return Err(usage_err!("reacher step called on a finished or unstarted episode"));
        }
        check_action(action)?;
        let a = clip_action(action);
        self.velocity = [VELOCITY_GAIN * a[0], VELOCITY_GAIN * a[1]];
        self.theta[0] += self.velocity[0];
        self.theta[1] = wrap_angle(self.theta[1] + self.velocity[1]);
        self.steps += 1;
        let truncated = self.steps >= STEP_LIMIT;
        if truncated {
            self.active = false;
        }
        let ee = self.end_effector();
        let components = RewardComponents {
            target_distance: -norm2(ee[0] - self.target[0], ee[1] - self.target[1]),
            obstacle_distance: None,
            action_cost: -norm2(a[0], a[1]),
        };
        Ok(StepResult { observation: self.obs(), components, done: truncated, truncated, reached: false, collided: false })
    }

    fn observation(&self) -> Vec<f64> {
        self.obs()
    }

    fn final_distance(&self) -> f64 {
        let ee = self.end_effector();
        norm2(ee[0] - self.target[0], ee[1] - self.target[1])
    }

    fn observation_scale(&self) -> Vec<f64> {
        vec![LINK1, LINK1, PI, VELOCITY_GAIN, VELOCITY_GAIN, TARGET_RANGE, TARGET_RANGE]
    }
}
