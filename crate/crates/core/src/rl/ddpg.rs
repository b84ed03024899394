use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{actor_spec, check_hidden, Action, Algorithm, Checkpoint, OuNoise, PolicyNetwork, Transition};
use crate::envs::EnvId;
use crate::error::{config_err, usage_err, Error, Result};
use crate::numerics::{Activation, AdamConfig, AdamState, Matrix, Network, NetworkSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Environment steps before the first update.
    pub warmup_steps: usize,
    pub replay_capacity: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_dt: f64,
    /// Half-width of the uniform init of both output layers.
    pub final_layer_init: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            actor_hidden: vec![400, 300],
            critic_hidden: vec![400, 300],
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            gamma: 0.99,
            tau: 1e-3,
            batch_size: 64,
            warmup_steps: 1000,
            replay_capacity: 100_000,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_dt: 1.0,
            final_layer_init: 3e-3,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        check_hidden("actor", &self.actor_hidden)?;
        check_hidden("critic", &self.critic_hidden)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(config_err!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(config_err!("batch_size must be in 1..=replay_capacity"));
        }
        if !(self.final_layer_init >= 0.0 && self.final_layer_init.is_finite()) {
            return Err(config_err!("final_layer_init must be >= 0"));
        }
        AdamConfig::with_lr(self.lr_actor).validate()?;
        AdamConfig::with_lr(self.lr_critic).validate()?;
        OuNoise::new(1, self.ou_theta, self.ou_sigma, self.ou_dt)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgDiagnostics {
    pub critic_loss: f64,
    /// Mean `Q(s, actor(s))` over the batch after the critic step.
    pub actor_objective: f64,
}

pub(crate) fn init_output_layer<R: Rng + ?Sized>(net: &mut Network, limit: f64, rng: &mut R) {
    let start = *net.params().offsets().last().expect("specs have at least one layer");
    for v in &mut net.params_mut().as_mut_slice()[start..] {
        *v = if limit > 0.0 { rng.gen_range(-limit..limit) } else { 0.0 };
    }
}

/// Deterministic policy gradient learner with target networks and OU noise.
#[derive(Clone, Debug)]
pub struct Ddpg {
    config: DdpgConfig,
    actor: PolicyNetwork,
    critic: Network,
    actor_target: Network,
    critic_target: Network,
    actor_adam: AdamState,
    critic_adam: AdamState,
    noise: OuNoise,
    updates: u64,
}

impl Ddpg {
    /// Inputs are divided by `obs_scale`; `seed` fixes the initial weights.
    pub fn new(config: &DdpgConfig, obs_scale: Vec<f64>, action_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let obs_dim = obs_scale.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_net = Network::new(actor_spec(obs_dim, &config.actor_hidden, action_dim)?, &mut rng);
        init_output_layer(&mut actor_net, config.final_layer_init, &mut rng);
        let critic_spec = NetworkSpec::mlp(obs_dim + action_dim, &config.critic_hidden, Activation::Relu, 1, Activation::Identity)?;
        let mut critic = Network::new(critic_spec, &mut rng);
        init_output_layer(&mut critic, config.final_layer_init, &mut rng);
        let actor = PolicyNetwork::new(actor_net, vec![0.0; obs_dim], obs_scale)?;
        Ok(Ddpg {
            actor_adam: AdamState::new(actor.network.params().len(), AdamConfig::with_lr(config.lr_actor))?,
            critic_adam: AdamState::new(critic.params().len(), AdamConfig::with_lr(config.lr_critic))?,
            actor_target: actor.network.clone(),
            critic_target: critic.clone(),
            noise: OuNoise::new(action_dim, config.ou_theta, config.ou_sigma, config.ou_dt)?,
            config: config.clone(),
            actor,
            critic,
            updates: 0,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn actor(&self) -> &PolicyNetwork {
        &self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    pub fn actor_target(&self) -> &Network {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Network {
        &self.critic_target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn action_dim(&self) -> usize {
        self.actor.network.output_dim()
    }

    pub fn reset_noise(&mut self) {
        self.noise.reset();
    }

    /// `clip(actor(s) + OU, [-1, 1])` when exploring, `actor(s)` otherwise.
    pub fn act<R: Rng + ?Sized>(&mut self, s: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.actor.output(s)?;
        if explore {
            let n = self.noise.sample(rng);
            for (a, n) in a.iter_mut().zip(n) {
                *a = (*a + n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let mut x = self.actor.normalize(s);
        x.extend_from_slice(a);
        Ok(self.critic.infer_batch(&Matrix::row_vector(&x))?.get(0, 0))
    }

    fn actions(&self, batch: &[&Transition]) -> Result<Matrix> {
        let m = self.action_dim();
        let mut data = Vec::with_capacity(batch.len() * m);
        for t in batch {
            match &t.action {
                Action::Continuous(a) if a.len() == m => data.extend_from_slice(a),
                other => return Err(usage_err!("DDPG needs continuous actions of dim {m}, got {other:?}")),
            }
        }
        Ok(Matrix::from_vec(batch.len(), m, data))
    }

    /// One critic step toward `r + gamma (1 - done) Q'(s', actor'(s'))`, one
    /// actor step up `Q(s, actor(s))`, then soft target updates.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<DdpgDiagnostics> {
        if batch.is_empty() {
            return Err(usage_err!("empty DDPG batch"));
        }
        let b = batch.len() as f64;
        let s = self.actor.normalize_batch(batch.iter().map(|t| t.state.as_slice()));
        let s_next = self.actor.normalize_batch(batch.iter().map(|t| t.next_state.as_slice()));
        let a = self.actions(batch)?;

        let a_next = self.actor_target.infer_batch(&s_next)?;
        let q_next = self.critic_target.infer_batch(&s_next.hcat(&a_next))?;
        let (q, cache) = self.critic.forward_batch(&s.hcat(&a))?;
        let mut grad = Matrix::zeros(batch.len(), 1);
        let mut critic_loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let bootstrap = if t.done { 0.0 } else { self.config.gamma * q_next.get(i, 0) };
            let e = q.get(i, 0) - (t.reward + bootstrap);
            critic_loss += e * e / b;
            grad.set(i, 0, 2.0 * e / b);
        }
        let (gc, _) = self.critic.backward_batch(&cache, &grad)?;

        let fail = |critic_loss: f64, actor_objective: f64| {
            Error::Training(format!(
                "DDPG update {} diverged: critic_loss={critic_loss}, actor_objective={actor_objective}",
                self.updates + 1
            ))
        };
        if !critic_loss.is_finite() || gc.iter().any(|g| !g.is_finite()) {
            return Err(fail(critic_loss, f64::NAN));
        }
        self.critic_adam.step(self.critic.params_mut().as_mut_slice(), &gc)?;

        let (mu, actor_cache) = self.actor.network.forward_batch(&s)?;
        let (q_mu, q_cache) = self.critic.forward_batch(&s.hcat(&mu))?;
        let actor_objective = q_mu.as_slice().iter().sum::<f64>() / b;
        let (_, d_input) = self.critic.backward_batch(&q_cache, &Matrix::from_vec(batch.len(), 1, vec![-1.0 / b; batch.len()]))?;
        let d_mu = d_input.columns(s.cols(), mu.cols());
        let (ga, _) = self.actor.network.backward_batch(&actor_cache, &d_mu)?;
        if !actor_objective.is_finite() || ga.iter().any(|g| !g.is_finite()) {
            return Err(fail(critic_loss, actor_objective));
        }
        self.actor_adam.step(self.actor.network.params_mut().as_mut_slice(), &ga)?;

        self.actor_target.params_mut().soft_update_from(self.actor.network.params(), self.config.tau);
        self.critic_target.params_mut().soft_update_from(self.critic.params(), self.config.tau);
        self.updates += 1;
        Ok(DdpgDiagnostics { critic_loss, actor_objective })
    }

    pub fn checkpoint(&self, env_id: EnvId, config_hash: &str) -> Checkpoint {
        Checkpoint::new(Algorithm::Ddpg, env_id, config_hash, self.actor.clone())
    }
}
