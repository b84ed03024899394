use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, clip_action, norm2, EnvId, Environment, RewardComponents, StepResult};
use crate::error::{usage_err, Result};

pub const STEP_GAIN: f64 = 0.02;
pub const REACH_RADIUS: f64 = 0.05;
pub const COLLIDE_RADIUS: f64 = 0.08;
pub const SPAWN_RANGE: f64 = 0.8;
pub const SPAWN_SEPARATION: f64 = 0.3;
pub const STEP_LIMIT: usize = 500;
pub const MOVER_ACTIONS: usize = 9;
pub(crate) const OBS_DIM: usize = 12;

/// Index 0 is the zero action; 1..=8 are unit vectors at 45 degree steps starting from +x.
pub fn mover_discrete_action(index: usize) -> Result<[f64; 2]> {
    if index >= MOVER_ACTIONS {
        return Err(usage_err!("discrete mover action {index} out of range 0..{MOVER_ACTIONS}"));
    }
    if index == 0 {
        return Ok([0.0, 0.0]);
    }
    let angle = (index - 1) as f64 * std::f64::consts::FRAC_PI_4;
    // exact axis values for the cardinal directions
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    Ok([snap(angle.cos()), snap(angle.sin())])
}

/// Dense mover reward terms at agent position `p`.
pub fn mover_reward_components(p: [f64; 2], target: [f64; 2], obstacle: [f64; 2], action: [f64; 2]) -> RewardComponents {
    RewardComponents {
        target_distance: -norm2(p[0] - target[0], p[1] - target[1]),
        obstacle_distance: Some(norm2(p[0] - obstacle[0], p[1] - obstacle[1])),
        action_cost: -norm2(action[0], action[1]),
    }
}

/// Point agent under position control, moving to a target past an obstacle.
///
/// Observation (12): `p, p_dot, p_tgt, p_obs, p - p_tgt, p - p_obs`, two floats each.
#[derive(Clone, Debug)]
pub struct Mover {
    id: EnvId,
    rng: ChaCha8Rng,
    position: [f64; 2],
    velocity: [f64; 2],
    target: [f64; 2],
    obstacle: [f64; 2],
    steps: usize,
    active: bool,
}

impl Mover {
    pub fn new(seed: u64) -> Self {
        Mover {
            id: EnvId::Mover,
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: [0.0; 2],
            velocity: [0.0; 2],
            target: [0.0; 2],
            obstacle: [0.0; 2],
            steps: 0,
            active: false,
        }
    }

    /// Same dynamics, identified as `mover-disc-v1`; drive it with [`mover_discrete_action`].
    pub fn discrete(seed: u64) -> Self {
        Mover { id: EnvId::MoverDiscrete, ..Mover::new(seed) }
    }

    pub fn set_state(&mut self, position: [f64; 2], target: [f64; 2], obstacle: [f64; 2]) {
        self.position = position;
        self.velocity = [0.0; 2];
        self.target = target;
        self.obstacle = obstacle;
        self.steps = 0;
        self.active = true;
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn obstacle(&self) -> [f64; 2] {
        self.obstacle
    }

    fn obs(&self) -> Vec<f64> {
        let (p, v, t, o) = (self.position, self.velocity, self.target, self.obstacle);
        vec![p[0], p[1], v[0], v[1], t[0], t[1], o[0], o[1], p[0] - t[0], p[1] - t[1], p[0] - o[0], p[1] - o[1]]
    }
}

fn separated(a: [f64; 2], b: [f64; 2]) -> bool {
    norm2(a[0] - b[0], a[1] - b[1]) >= SPAWN_SEPARATION
}

impl Environment for Mover {
    fn id(&self) -> EnvId {
        self.id
    }

    fn step_limit(&self) -> usize {
        STEP_LIMIT
    }

    fn reset(&mut self) -> Vec<f64> {
        loop {
            let mut point = || [self.rng.gen_range(-SPAWN_RANGE..=SPAWN_RANGE), self.rng.gen_range(-SPAWN_RANGE..=SPAWN_RANGE)];
            let (p, t, o) = (point(), point(), point());
            if separated(p, t) && separated(p, o) && separated(t, o) {
                self.set_state(p, t, o);
                return self.obs();
            }
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.active {
            return Err(usage_err!("mover step called on a finished or unstarted episode"));
        }
        check_action(action)?;
        let a = clip_action(action);
        let prev = self.position;
        self.position = [(prev[0] + STEP_GAIN * a[0]).clamp(-1.0, 1.0), (prev[1] + STEP_GAIN * a[1]).clamp(-1.0, 1.0)];
        self.velocity = [self.position[0] - prev[0], self.position[1] - prev[1]];
        self.steps += 1;
        let components = mover_reward_components(self.position, self.target, self.obstacle, a);
        let reached = -components.target_distance < REACH_RADIUS;
        let collided = !reached && components.obstacle_distance.expect("mover has an obstacle") < COLLIDE_RADIUS;
        let truncated = !reached && !collided && self.steps >= STEP_LIMIT;
        let done = reached || collided || truncated;
        if done {
            self.active = false;
        }
        Ok(StepResult { observation: self.obs(), components, done, truncated, reached, collided })
    }

    fn observation(&self) -> Vec<f64> {
        self.obs()
    }

    fn final_distance(&self) -> f64 {
        norm2(self.position[0] - self.target[0], self.position[1] - self.target[1])
    }

    fn observation_scale(&self) -> Vec<f64> {
        vec![1.0, 1.0, STEP_GAIN, STEP_GAIN, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_x_action_moves_by_gain() {
        let mut env = Mover::new(0);
        env.set_state([0.0, 0.0], [0.5, 0.5], [-0.5, -0.5]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(env.position(), [0.02, 0.0]);
        assert_eq!(&r.observation[2..4], &[0.02, 0.0]);
    }

    #[test]
    fn landing_on_target_terminates() {
        let mut env = Mover::new(0);
        env.set_state([0.5, 0.5], [0.5, 0.5], [-0.5, -0.5]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert!(r.reached && r.done && !r.truncated && !r.collided);
        assert!(env.step(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn hitting_obstacle_terminates() {
        let mut env = Mover::new(0);
        env.set_state([0.0, 0.0], [0.5, 0.5], [0.09, 0.0]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert!(r.collided && r.done && r.terminal());
    }

    #[test]
    fn dense_components_reference_values() {
        let c = mover_reward_components([0.0, 0.0], [0.3, 0.0], [0.0, 0.4], [0.0, 0.0]);
        assert!((c.target_distance + 0.3).abs() < 1e-12);
        assert!((c.obstacle_distance.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn positions_are_clamped_to_arena() {
        let mut env = Mover::new(0);
        env.set_state([0.99, -0.99], [0.0, 0.0], [0.5, 0.5]);
        env.step(&[1.0, -1.0]).unwrap();
        assert_eq!(env.position(), [1.0, -1.0]);
    }

    #[test]
    fn discrete_table() {
        assert_eq!(mover_discrete_action(0).unwrap(), [0.0, 0.0]);
        assert_eq!(mover_discrete_action(1).unwrap(), [1.0, 0.0]);
        assert_eq!(mover_discrete_action(3).unwrap(), [0.0, 1.0]);
        assert_eq!(mover_discrete_action(5).unwrap(), [-1.0, 0.0]);
        let d = mover_discrete_action(2).unwrap();
        assert!((d[0] - d[1]).abs() < 1e-15 && (d[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(mover_discrete_action(9), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn truncation_is_distinct_from_terminal() {
        let mut env = Mover::new(0);
        env.set_state([0.0, 0.0], [0.7, 0.7], [-0.7, -0.7]);
        let mut last = None;
        for _ in 0..STEP_LIMIT {
            last = Some(env.step(&[0.0, 0.0]).unwrap());
        }
        let r = last.unwrap();
        assert!(r.done && r.truncated && !r.terminal());
    }
}
