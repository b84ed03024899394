use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::commands::{ensure_model, load_demos};
use super::config::{AgentConfig, ExperimentConfig};
use super::log::{write_run_log, RunLogRow};
use super::{derive_seed, stream, worker_threads};
use crate::envs::{make_env, mover_discrete_action, EnvId, Environment};
use crate::error::{config_err, Error, Result};
use crate::internal_model::InternalModel;
use crate::io::write_atomic;
use crate::rl::{behavior_cloning, Action, Algorithm, Checkpoint, Ddpg, Dqn, ReplayBuffer, Transition};
use crate::shaping::{handcrafted_reward, HandcraftedKind, Rewarder};
use crate::trajectories::TrajectoryDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: SeedStatus,
    /// Episodes logged; 0 for failed runs.
    pub episodes: usize,
    pub total_steps: usize,
    /// File names relative to the run directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `run.json`: what ran and how each seed ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub env_id: EnvId,
    pub algorithm: Algorithm,
    pub config_hash: String,
    pub master_seed: u64,
    pub seeds: Vec<SeedSummary>,
}

impl RunManifest {
    pub fn failed(&self) -> Vec<u64> {
        self.seeds.iter().filter(|s| s.status == SeedStatus::Failed).map(|s| s.seed).collect()
    }
}

pub(crate) const MANIFEST: &str = "run.json";

pub(crate) fn csv_name(seed: u64) -> String {
    format!("seed-{seed}.csv")
}

fn checkpoint_name(seed: u64) -> String {
    format!("seed-{seed}.ckpt")
}

/// Agent-side state of one run.
enum Learner {
    Ddpg { agent: Box<Ddpg>, replay: ReplayBuffer },
    Dqn { agent: Box<Dqn>, replay: ReplayBuffer },
    Fixed(Checkpoint),
}

impl Learner {
    fn begin_episode(&mut self) {
        if let Learner::Ddpg { agent, .. } = self {
            agent.reset_noise();
        }
    }

    /// The stored action and the continuous action sent to the environment.
    fn act(&mut self, s: &[f64], total_steps: u64, rng: &mut ChaCha8Rng) -> Result<(Action, Vec<f64>)> {
        match self {
            Learner::Ddpg { agent, .. } => {
                let a = agent.act(s, true, rng)?;
                Ok((Action::Continuous(a.clone()), a))
            }
            Learner::Dqn { agent, .. } => {
                let eps = agent.config().epsilon(total_steps);
                let i = agent.act(s, eps, rng)?;
                Ok((Action::Discrete(i), mover_discrete_action(i)?.to_vec()))
            }
            Learner::Fixed(policy) => {
                let a = policy.greedy_action(s)?;
                Ok((Action::Continuous(a.clone()), a))
            }
        }
    }

    /// Stores the transition and takes one gradient step once warm.
    fn observe(&mut self, t: Transition, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            Learner::Ddpg { agent, replay } => {
                replay.push(t);
                let c = agent.config();
                if replay.len() >= c.warmup_steps.max(c.batch_size) {
                    let batch = replay.sample(c.batch_size, rng)?;
                    agent.update(&batch)?;
                }
            }
            Learner::Dqn { agent, replay } => {
                replay.push(t);
                let c = agent.config();
                if replay.len() >= c.warmup_steps.max(c.batch_size) {
                    let batch = replay.sample(c.batch_size, rng)?;
                    agent.update(&batch)?;
                }
            }
            Learner::Fixed(_) => {}
        }
        Ok(())
    }

    fn checkpoint(&self, env_id: EnvId, hash: &str) -> Checkpoint {
        match self {
            Learner::Ddpg { agent, .. } => agent.checkpoint(env_id, hash),
            Learner::Dqn { agent, .. } => agent.checkpoint(env_id, hash),
            Learner::Fixed(c) => c.clone(),
        }
    }
}

fn learner(cfg: &ExperimentConfig, seed: u64, env: &dyn Environment, demos: Option<&TrajectoryDataset>, hash: &str) -> Result<Learner> {
    let init = derive_seed(cfg.master_seed, seed, stream::AGENT_INIT);
    Ok(match &cfg.agent {
        AgentConfig::Ddpg(c) => Learner::Ddpg {
            agent: Box::new(Ddpg::new(c, env.observation_scale(), env.action_dim(), init)?),
            replay: ReplayBuffer::new(c.replay_capacity)?,
        },
        AgentConfig::Dqn(c) => {
            let actions = cfg.env_id.discrete_actions().ok_or_else(|| config_err!("{} has continuous actions", cfg.env_id))?;
            Learner::Dqn { agent: Box::new(Dqn::new(c, env.observation_scale(), actions, init)?), replay: ReplayBuffer::new(c.replay_capacity)? }
        }
        AgentConfig::Bc(c) => {
            let demos = demos.ok_or_else(|| config_err!("behavior cloning needs demonstrations"))?;
            let c = crate::rl::BcConfig { seed: init, ..c.clone() };
            let (policy, _) = behavior_cloning(demos, &c)?;
            Learner::Fixed(Checkpoint::new(Algorithm::Bc, cfg.env_id, hash, policy))
        }
    })
}

/// Trains (or, for behavior cloning, fits then rolls greedily) one seed and
/// returns its per-episode rows and final policy. Deterministic in
/// `(config, seed)`.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    model: Option<&InternalModel>,
    demos: Option<&TrajectoryDataset>,
    config_hash: &str,
) -> Result<(Vec<RunLogRow>, Checkpoint)> {
    let m = cfg.master_seed;
    let mut env = make_env(cfg.env_id, derive_seed(m, seed, stream::ENV));
    let mut rewarder = Rewarder::new(&cfg.reward, env.as_ref(), model.cloned(), derive_seed(m, seed, stream::REWARD))?;
    let mut learner = learner(cfg, seed, env.as_ref(), demos, config_hash)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(m, seed, stream::EXPLORATION));
    let dense = HandcraftedKind::dense_for(cfg.env_id);
    let mut rows = Vec::with_capacity(cfg.episodes);
    let mut total_steps = 0u64;
    for episode in 0..cfg.episodes {
        let started = Instant::now();
        learner.begin_episode();
        rewarder.begin_episode();
        let mut s = env.reset();
        let (mut env_return, mut shaped_return, mut steps) = (0.0, 0.0, 0usize);
        let step = loop {
            let (stored, a) = learner.act(&s, total_steps, &mut rng)?;
            let step = env.step(&a)?;
            let r = rewarder.reward(&s, &a, &step.observation, &step.components)?;
            env_return += handcrafted_reward(&step.components, dense)?;
            shaped_return += r;
            steps += 1;
            total_steps += 1;
            let t = Transition::new(s, stored, r, step.observation.clone(), step.terminal(), step.truncated)?;
            learner.observe(t, &mut rng)?;
            if step.done {
                break step;
            }
            s = step.observation;
        };
        rows.push(RunLogRow {
            seed,
            episode,
            steps,
            env_return,
            shaped_return,
            final_distance: env.final_distance(),
            reached: step.reached,
            collided: step.collided,
            wall_ms: if cfg.timing { started.elapsed().as_millis() as u64 } else { 0 },
        });
    }
    Ok((rows, learner.checkpoint(cfg.env_id, config_hash)))
}

fn run_and_write(cfg: &ExperimentConfig, seed: u64, model: Option<&InternalModel>, demos: Option<&TrajectoryDataset>, hash: &str) -> SeedSummary {
    let dir = &cfg.output_dir;
    let result = run_seed(cfg, seed, model, demos, hash).and_then(|(rows, ckpt)| {
        ckpt.save(&dir.join(checkpoint_name(seed)))?;
        write_run_log(&dir.join(csv_name(seed)), &rows)?;
        Ok(rows)
    });
    match result {
        Ok(rows) => SeedSummary {
            seed,
            status: SeedStatus::Completed,
            episodes: rows.len(),
            total_steps: rows.iter().map(|r| r.steps).sum(),
            csv: Some(csv_name(seed)),
            checkpoint: Some(checkpoint_name(seed)),
            error: None,
        },
        Err(e) => {
            let _ = std::fs::remove_file(dir.join(checkpoint_name(seed)));
            SeedSummary { seed, status: SeedStatus::Failed, episodes: 0, total_steps: 0, csv: None, checkpoint: None, error: Some(e.to_string()) }
        }
    }
}

fn algorithm(agent: &AgentConfig) -> Algorithm {
    match agent {
        AgentConfig::Ddpg(_) => Algorithm::Ddpg,
        AgentConfig::Dqn(_) => Algorithm::Dqn,
        AgentConfig::Bc(_) => Algorithm::Bc,
    }
}

/// Runs every seed (in parallel, up to [`worker_threads`]) and writes
/// `seed-N.csv`, `seed-N.ckpt`, `config.toml` and `run.json` into the
/// output directory. A seed that fails mid-run is recorded in the manifest
/// without affecting the others; pre-flight problems fail the whole call.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let hash = cfg.hash();
    let demos = match cfg.agent {
        AgentConfig::Bc(_) => Some(load_demos(cfg)?),
        _ => None,
    };
    let model = ensure_model(cfg)?;
    let dir: &Path = &cfg.output_dir;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;

    let threads = worker_threads().min(cfg.seeds.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let seeds = pool.install(|| cfg.seeds.par_iter().map(|&seed| run_and_write(cfg, seed, model.as_ref(), demos.as_ref(), &hash)).collect());

    let manifest = RunManifest { name: cfg.name.clone(), env_id: cfg.env_id, algorithm: algorithm(&cfg.agent), config_hash: hash, master_seed: cfg.master_seed, seeds };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST), &json)?;
    Ok(manifest)
}
