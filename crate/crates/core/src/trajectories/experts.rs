//! Scripted demonstrators standing in for trained or human experts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{record_episode, EpisodeOutcome, Metadata, Policy, TrajectoryDataset};
use crate::envs::{forward_kinematics, EnvId, Environment, Mover, Reacher, LINK1, LINK2};
use crate::error::{config_err, Result};

/// Joint velocity gain of the reacher (`theta_dot = 0.05 * a`).
const REACHER_GAIN: f64 = 0.05;

/// Damped least-squares inverse-kinematics controller on the end-effector
/// error, fed from the observation alone.
#[derive(Clone, Copy, Debug)]
pub struct ReacherExpert {
    /// Fraction of the Gauss-Newton joint step taken per control step.
    pub gain: f64,
    /// Damping `lambda` in `J^T (J J^T + lambda^2 I)^-1 e`.
    pub damping: f64,
}

impl Default for ReacherExpert {
    fn default() -> Self {
        ReacherExpert { gain: 0.15, damping: 0.02 }
    }
}

pub fn reacher_expert_action(expert: &ReacherExpert, obs: &[f64]) -> [f64; 2] {
    let theta1 = obs[1].atan2(obs[0]);
    let theta2 = obs[2];
    let (_, ee) = forward_kinematics(theta1, theta2);
    let e = [obs[5] - ee[0], obs[6] - ee[1]];
    let (s1, c1) = theta1.sin_cos();
    let (s12, c12) = (theta1 + theta2).sin_cos();
    // d p_ee / d theta
    let j = [[-LINK1 * s1 - LINK2 * s12, -LINK2 * s12], [LINK1 * c1 + LINK2 * c12, LINK2 * c12]];
    let l2 = expert.damping * expert.damping;
    let m = [
        [j[0][0] * j[0][0] + j[0][1] * j[0][1] + l2, j[0][0] * j[1][0] + j[0][1] * j[1][1]],
        [j[1][0] * j[0][0] + j[1][1] * j[0][1], j[1][0] * j[1][0] + j[1][1] * j[1][1] + l2],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let y = [(m[1][1] * e[0] - m[0][1] * e[1]) / det, (-m[1][0] * e[0] + m[0][0] * e[1]) / det];
    let dtheta = [j[0][0] * y[0] + j[1][0] * y[1], j[0][1] * y[0] + j[1][1] * y[1]];
    let scale = expert.gain / REACHER_GAIN;
    let mut a = [(dtheta[0] * scale).clamp(-1.0, 1.0), (dtheta[1] * scale).clamp(-1.0, 1.0)];
    // The folded arm is a singular configuration where the error lies in the
    // Jacobian's null space; unfold first when the target lies farther out.
    if theta2.cos() < -0.9 && obs[5].hypot(obs[6]) > ee[0].hypot(ee[1]) + 0.02 {
        a[1] = -theta2.signum();
    }
    a
}

impl Policy for ReacherExpert {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(reacher_expert_action(self, observation).to_vec())
    }
}

/// Potential-field controller: unit attraction to the target, repulsion
/// inside `influence` of the obstacle, plus a tangential term that steers
/// around the obstacle on the side of the target.
#[derive(Clone, Copy, Debug)]
pub struct MoverExpert {
    pub influence: f64,
    pub repulsion: f64,
    pub tangential: f64,
}

impl Default for MoverExpert {
    fn default() -> Self {
        MoverExpert { influence: 0.25, repulsion: 0.1, tangential: 1.0 }
    }
}

pub fn mover_expert_action(expert: &MoverExpert, obs: &[f64]) -> [f64; 2] {
    // observation: p, v, target, obstacle, p - target, p - obstacle
    let to_target = [-obs[8], -obs[9]];
    let dt = to_target[0].hypot(to_target[1]).max(1e-12);
    let mut f = [to_target[0] / dt, to_target[1] / dt];
    let away = [obs[10], obs[11]];
    let d = away[0].hypot(away[1]).max(1e-12);
    if d < expert.influence {
        let u = [away[0] / d, away[1] / d];
        let push = expert.repulsion * (1.0 / d - 1.0 / expert.influence) / (d * d);
        let closeness = 1.0 - d / expert.influence;
        // tangent pointing the same way as the target direction
        let mut tangent = [-u[1], u[0]];
        if tangent[0] * f[0] + tangent[1] * f[1] < 0.0 {
            tangent = [u[1], -u[0]];
        }
        // only steer around when the obstacle lies ahead
        let ahead = -(u[0] * f[0] + u[1] * f[1]);
        let swirl = if ahead > 0.0 { expert.tangential * closeness } else { 0.0 };
        f = [f[0] + push * u[0] + swirl * tangent[0], f[1] + push * u[1] + swirl * tangent[1]];
    }
    let n = f[0].hypot(f[1]);
    if n > 1.0 {
        f = [f[0] / n, f[1] / n];
    }
    // slow down on the final approach so the step does not overshoot the reach radius
    let slow = (dt / 0.02).min(1.0);
    [(f[0] * slow).clamp(-1.0, 1.0), (f[1] * slow).clamp(-1.0, 1.0)]
}

impl Policy for MoverExpert {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(mover_expert_action(self, observation).to_vec())
    }
}

fn record_many(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    n_episodes: usize,
    record_actions: bool,
    generator: &str,
    seed: u64,
) -> Result<(TrajectoryDataset, Vec<EpisodeOutcome>)> {
    if n_episodes == 0 {
        return Err(config_err!("at least one episode is required"));
    }
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut outcomes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let (ep, outcome) = record_episode(env, policy, record_actions)?;
        episodes.push(ep);
        outcomes.push(outcome);
    }
    let action_dim = if record_actions { env.action_dim() } else { 0 };
    let meta = Metadata { generator: generator.into(), seed, created: None };
    Ok((TrajectoryDataset::new(env.id(), env.observation_dim(), action_dim, episodes, meta)?, outcomes))
}

/// Executes the inner policy's action plus i.i.d. Gaussian noise, clipped to
/// `[-1, 1]`; the executed action is what gets recorded.
pub struct NoisyPolicy<P> {
    pub inner: P,
    pub sigma: f64,
    rng: ChaCha8Rng,
}

impl<P: Policy> NoisyPolicy<P> {
    pub fn new(inner: P, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(config_err!("action noise must be >= 0, got {sigma}"));
        }
        Ok(NoisyPolicy { inner, sigma, rng: ChaCha8Rng::seed_from_u64(seed) })
    }
}

impl<P: Policy> Policy for NoisyPolicy<P> {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.inner.act(observation)?;
        if self.sigma > 0.0 {
            for x in &mut a {
                let n: f64 = self.rng.sample(StandardNormal);
                *x = (*x + self.sigma * n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    fn reset(&mut self) {
        self.inner.reset();
    }
}

/// Keeps the noise stream apart from the environment's.
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0001;

/// Demonstrations from the environment's scripted expert with per-step
/// action noise `action_noise` (0 for the clean expert). The reacher records
/// actions; the mover is state-only.
pub fn scripted_expert(env_id: EnvId, n_episodes: usize, seed: u64, action_noise: f64) -> Result<(TrajectoryDataset, Vec<EpisodeOutcome>)> {
    let noise_seed = seed ^ NOISE_STREAM;
    let suffix = if action_noise > 0.0 { format!("+noise{action_noise}") } else { String::new() };
    match env_id {
        EnvId::Reacher => {
            let mut policy = NoisyPolicy::new(ReacherExpert::default(), action_noise, noise_seed)?;
            record_many(&mut Reacher::new(seed), &mut policy, n_episodes, true, &format!("scripted-reacher-dls{suffix}"), seed)
        }
        EnvId::Mover | EnvId::MoverDiscrete => {
            let mut policy = NoisyPolicy::new(MoverExpert::default(), action_noise, noise_seed)?;
            record_many(&mut Mover::new(seed), &mut policy, n_episodes, false, &format!("scripted-mover-field{suffix}"), seed)
        }
    }
}

/// State-action demonstrations on `reacher-v1` from [`ReacherExpert`].
pub fn scripted_expert_reacher(n_episodes: usize, seed: u64) -> Result<(TrajectoryDataset, Vec<EpisodeOutcome>)> {
    scripted_expert(EnvId::Reacher, n_episodes, seed, 0.0)
}

/// State-only demonstrations on `mover-v1` from [`MoverExpert`].
pub fn scripted_expert_mover(n_episodes: usize, seed: u64) -> Result<(TrajectoryDataset, Vec<EpisodeOutcome>)> {
    scripted_expert(EnvId::Mover, n_episodes, seed, 0.0)
}
