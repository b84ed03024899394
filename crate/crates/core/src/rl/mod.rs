//! Off-policy learners: DDPG for continuous actions, DQN for discrete ones,
//! behavior cloning, and the replay buffer and exploration noise they share.

mod bc;
mod ddpg;
mod dqn;

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{config_err, usage_err, Error, Result};
use crate::io::{read_file, write_atomic};
use crate::numerics::{io as param_io, Matrix, Network, NetworkSpec};
use crate::trajectories::Policy;

pub use bc::{behavior_cloning, BcConfig, BcReport};
pub use ddpg::{Ddpg, DdpgConfig, DdpgDiagnostics};
pub use dqn::{Dqn, DqnConfig, DqnDiagnostics};

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Continuous(Vec<f64>),
    Discrete(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True terminal: no bootstrapping past `next_state`.
    pub done: bool,
    /// Ended by the step limit; bootstraps like a non-terminal step.
    pub truncated: bool,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Action, reward: f64, next_state: Vec<f64>, done: bool, truncated: bool) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::Numeric(format!("transition reward {reward} is not finite")));
        }
        if done && truncated {
            return Err(usage_err!("a transition cannot be both terminal and truncated"));
        }
        if state.len() != next_state.len() {
            return Err(usage_err!("state and next state lengths differ ({} vs {})", state.len(), next_state.len()));
        }
        Ok(Transition { state, action, reward, next_state, done, truncated })
    }
}

/// FIFO ring buffer with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    count: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(config_err!("replay capacity must be at least 1"));
        }
        Ok(ReplayBuffer { items: Vec::new(), capacity, count: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions ever pushed.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.count % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.count += 1;
    }

    /// Current contents, oldest first.
    pub fn contents(&self) -> Vec<&Transition> {
        let start = if self.items.len() < self.capacity { 0 } else { (self.count % self.capacity as u64) as usize };
        self.items[start..].iter().chain(&self.items[..start]).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return Err(usage_err!("cannot sample {batch} transitions from a buffer holding {}", self.items.len()));
        }
        Ok((0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

/// Ornstein-Uhlenbeck process around zero.
#[derive(Clone, Debug, PartialEq)]
pub struct OuNoise {
    pub x: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64, dt: f64) -> Result<Self> {
        if !(theta >= 0.0 && sigma >= 0.0 && dt > 0.0) || ![theta, sigma, dt].iter().all(|v| v.is_finite()) {
            return Err(config_err!("OU parameters need theta >= 0, sigma >= 0, dt > 0"));
        }
        Ok(OuNoise { x: vec![0.0; dim], theta, sigma, dt })
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|x| *x = 0.0);
    }

    /// `x <- x + theta (0 - x) dt + sigma sqrt(dt) N(0, I)`; returns the new `x`.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        let sd = self.sigma * self.dt.sqrt();
        for x in &mut self.x {
            let n: f64 = rng.sample(StandardNormal);
            *x += -self.theta * *x * self.dt + sd * n;
        }
        &self.x
    }
}

pub fn ou_sample<'a, R: Rng + ?Sized>(state: &'a mut OuNoise, rng: &mut R) -> &'a [f64] {
    state.sample(rng)
}

/// Lowest index among the maxima.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Uniform action with probability `epsilon`, otherwise [`argmax`]. Always
/// draws one uniform number so the stream advances identically.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    if u < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Linear interpolation from `start` to `end` over `steps` steps, then `end`.
pub fn linear_schedule(start: f64, end: f64, steps: u64, t: u64) -> f64 {
    if steps == 0 || t >= steps {
        end
    } else {
        start + (end - start) * t as f64 / steps as f64
    }
}

/// A network applied to `(s - shift) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    pub network: Network,
    pub obs_shift: Vec<f64>,
    pub obs_scale: Vec<f64>,
}

impl PolicyNetwork {
    pub fn new(network: Network, obs_shift: Vec<f64>, obs_scale: Vec<f64>) -> Result<Self> {
        if obs_shift.len() != network.input_dim() || obs_scale.len() != network.input_dim() {
            return Err(config_err!("observation shift/scale need {} entries", network.input_dim()));
        }
        if obs_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || obs_shift.iter().any(|m| !m.is_finite()) {
            return Err(config_err!("observation scales must be positive and finite"));
        }
        Ok(PolicyNetwork { network, obs_shift, obs_scale })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_scale.len()
    }

    pub fn normalize(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(&self.obs_shift).zip(&self.obs_scale).map(|((x, m), k)| (x - m) / k).collect()
    }

    pub fn normalize_batch<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Matrix {
        let data: Vec<f64> = rows.flat_map(|r| self.normalize(r)).collect();
        Matrix::from_vec(data.len() / self.obs_dim(), self.obs_dim(), data)
    }

    pub fn output(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.obs_dim() {
            return Err(usage_err!("observation has {} components, policy expects {}", s.len(), self.obs_dim()));
        }
        Ok(self.network.infer_batch(&Matrix::row_vector(&self.normalize(s)))?.into_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ddpg,
    Dqn,
    Bc,
}

/// Provenance stored with an agent checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub algorithm: Algorithm,
    pub config_hash: String,
    pub env_id: EnvId,
    pub obs_shift: Vec<f64>,
    pub obs_scale: Vec<f64>,
}

/// A greedy policy restored from a checkpoint: the actor for DDPG and BC,
/// the Q-network for DQN.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub info: CheckpointInfo,
    pub policy: PolicyNetwork,
}

impl Checkpoint {
    pub fn new(algorithm: Algorithm, env_id: EnvId, config_hash: &str, policy: PolicyNetwork) -> Self {
        let info = CheckpointInfo {
            algorithm,
            config_hash: config_hash.to_string(),
            env_id,
            obs_shift: policy.obs_shift.clone(),
            obs_scale: policy.obs_scale.clone(),
        };
        Checkpoint { info, policy }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let extra = serde_json::to_value(&self.info).expect("checkpoint info serializes");
        param_io::encode(self.policy.network.spec(), self.policy.network.params(), Some(&extra))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (spec, params, extra) = param_io::decode(bytes, true)?;
        let info: CheckpointInfo =
            serde_json::from_value(extra.expect("decoded with extra")).map_err(|e| Error::format(0, format!("checkpoint info: {e}")))?;
        let network = Network::from_parts(spec, params)?;
        if info.obs_scale.len() != network.input_dim() {
            return Err(Error::format(0, format!("checkpoint scale has {} entries, network input is {}", info.obs_scale.len(), network.input_dim())));
        }
        let policy = PolicyNetwork::new(network, info.obs_shift.clone(), info.obs_scale.clone())?;
        Ok(Checkpoint { info, policy })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// Deterministic action as fed to the environment's continuous `step`.
    pub fn greedy_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        let out = self.policy.output(s)?;
        match self.info.algorithm {
            Algorithm::Ddpg | Algorithm::Bc => Ok(out),
            Algorithm::Dqn => Ok(crate::envs::mover_discrete_action(argmax(&out))?.to_vec()),
        }
    }
}

impl Policy for Checkpoint {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        self.greedy_action(observation)
    }
}

/// Actor network: hidden ReLU layers, tanh output in `[-1, 1]`.
pub fn actor_spec(obs_dim: usize, hidden: &[usize], action_dim: usize) -> Result<NetworkSpec> {
    NetworkSpec::mlp(obs_dim, hidden, crate::numerics::Activation::Relu, action_dim, crate::numerics::Activation::Tanh)
}

/// Checks a finite, non-empty layer list.
pub(crate) fn check_hidden(name: &str, hidden: &[usize]) -> Result<()> {
    if hidden.contains(&0) {
        return Err(config_err!("{name} layer widths must be at least 1"));
    }
    Ok(())
}
