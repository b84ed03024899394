use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_hidden, epsilon_greedy, linear_schedule, Action, Algorithm, Checkpoint, PolicyNetwork, Transition};
use crate::envs::EnvId;
use crate::error::{config_err, usage_err, Error, Result};
use crate::numerics::{Activation, AdamConfig, AdamState, Matrix, Network, NetworkSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    /// Updates between hard copies into the target network.
    pub target_period: u64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![64, 64],
            lr: 1e-3,
            gamma: 0.99,
            target_period: 100,
            batch_size: 64,
            warmup_steps: 1000,
            replay_capacity: 100_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        check_hidden("q-network", &self.hidden)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.target_period == 0 {
            return Err(config_err!("target_period must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(config_err!("batch_size must be in 1..=replay_capacity"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(config_err!("epsilon values must lie in [0, 1]"));
        }
        AdamConfig::with_lr(self.lr).validate()
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        linear_schedule(self.epsilon_start, self.epsilon_end, self.epsilon_decay_steps, step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnDiagnostics {
    pub loss: f64,
    pub mean_q: f64,
}

/// Q-learning with a periodically hard-copied target network.
#[derive(Clone, Debug)]
pub struct Dqn {
    config: DqnConfig,
    q: PolicyNetwork,
    target: Network,
    adam: AdamState,
    updates: u64,
}

impl Dqn {
    pub fn new(config: &DqnConfig, obs_scale: Vec<f64>, actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if actions == 0 {
            return Err(config_err!("DQN needs at least one action"));
        }
        let obs_dim = obs_scale.len();
        let spec = NetworkSpec::mlp(obs_dim, &config.hidden, Activation::Relu, actions, Activation::Identity)?;
        let net = Network::new(spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let q = PolicyNetwork::new(net, vec![0.0; obs_dim], obs_scale)?;
        Ok(Dqn {
            adam: AdamState::new(q.network.params().len(), AdamConfig::with_lr(config.lr))?,
            target: q.network.clone(),
            config: config.clone(),
            q,
            updates: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn q_network(&self) -> &PolicyNetwork {
        &self.q
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actions(&self) -> usize {
        self.q.network.output_dim()
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.q.output(s)
    }

    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(epsilon_greedy(&self.q_values(s)?, epsilon, rng))
    }

    /// One regression step toward `r + gamma (1 - done) max_a' Q_target(s', a')`
    /// on the taken actions; hard target copy every `target_period` updates.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<DqnDiagnostics> {
        if batch.is_empty() {
            return Err(usage_err!("empty DQN batch"));
        }
        let n = self.actions();
        let b = batch.len() as f64;
        let s = self.q.normalize_batch(batch.iter().map(|t| t.state.as_slice()));
        let s_next = self.q.normalize_batch(batch.iter().map(|t| t.next_state.as_slice()));
        let q_next = self.target.infer_batch(&s_next)?;
        let (q, cache) = self.q.network.forward_batch(&s)?;
        let mut grad = Matrix::zeros(batch.len(), n);
        let (mut loss, mut mean_q) = (0.0, 0.0);
        for (i, t) in batch.iter().enumerate() {
            let a = match t.action {
                Action::Discrete(a) if a < n => a,
                ref other => return Err(usage_err!("DQN needs discrete actions below {n}, got {other:?}")),
            };
            let max_next = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let y = t.reward + if t.done { 0.0 } else { self.config.gamma * max_next };
            let e = q.get(i, a) - y;
            loss += e * e / b;
            mean_q += q.get(i, a) / b;
            grad.set(i, a, 2.0 * e / b);
        }
        let (g, _) = self.q.network.backward_batch(&cache, &grad)?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!("DQN update {} diverged: loss={loss}, mean_q={mean_q}", self.updates + 1)));
        }
        self.adam.step(self.q.network.params_mut().as_mut_slice(), &g)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_period) {
            self.target = self.q.network.clone();
        }
        Ok(DqnDiagnostics { loss, mean_q })
    }

    pub fn checkpoint(&self, env_id: EnvId, config_hash: &str) -> Checkpoint {
        Checkpoint::new(Algorithm::Dqn, env_id, config_hash, self.q.clone())
    }
}
