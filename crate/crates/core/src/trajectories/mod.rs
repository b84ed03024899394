//! Expert demonstration datasets: in-memory form, binary file format,
//! episode-level splitting, normalization, and scripted experts.
//!
//! Trajectory file: `OBRW-TRJ1\n`, one JSON header line
//! `{env_id, state_dim, action_dim, n_episodes, generator, seed[, created]}`,
//! then per episode a little-endian `u32` step count followed by that many
//! rows, each the state as little-endian `f64` and then the action iff
//! `action_dim > 0`.

mod experts;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, Environment};
use crate::error::{config_err, Error, Result};
use crate::io::{put_f64s, put_json_line, read_file, write_atomic, ByteReader};
use crate::numerics::Matrix;

pub use experts::{
    mover_expert_action, reacher_expert_action, scripted_expert, scripted_expert_mover, scripted_expert_reacher, MoverExpert, NoisyPolicy, ReacherExpert,
};

pub const MAGIC: &[u8] = b"OBRW-TRJ1\n";

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Anything that maps an observation to a continuous action.
pub trait Policy {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>>;

    /// Called at the start of every episode.
    fn reset(&mut self) {}
}

impl<F: FnMut(&[f64]) -> Vec<f64>> Policy for F {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(self(observation))
    }
}

/// One demonstration: `states` is `steps x state_dim`; `actions`, when
/// present, is `steps x action_dim` with row `t` the action taken in state `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    states: Matrix,
    actions: Option<Matrix>,
}

impl Episode {
    pub fn new(states: Matrix, actions: Option<Matrix>) -> Result<Self> {
        if states.rows() < 2 {
            return Err(config_err!("episode has {} states, at least 2 are required", states.rows()));
        }
        if let Some(a) = &actions {
            if a.rows() != states.rows() {
                return Err(config_err!("episode has {} states but {} actions", states.rows(), a.rows()));
            }
        }
        Ok(Episode { states, actions })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    /// `None` for state-only demonstrations.
    pub fn actions(&self) -> Option<&Matrix> {
        self.actions.as_ref()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        self.states.row(t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    env_id: EnvId,
    state_dim: usize,
    action_dim: usize,
    episodes: Vec<Episode>,
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    env_id: EnvId,
    state_dim: usize,
    action_dim: usize,
    n_episodes: usize,
    generator: String,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created: Option<String>,
}

impl TrajectoryDataset {
    /// Checks every shape invariant. `action_dim == 0` means state-only.
    pub fn new(env_id: EnvId, state_dim: usize, action_dim: usize, episodes: Vec<Episode>, metadata: Metadata) -> Result<Self> {
        if state_dim == 0 {
            return Err(config_err!("state_dim must be at least 1"));
        }
        for (i, ep) in episodes.iter().enumerate() {
            if ep.states.cols() != state_dim {
                return Err(config_err!("episode {i}: states have {} columns, expected {state_dim}", ep.states.cols()));
            }
            match (&ep.actions, action_dim) {
                (None, 0) => {}
                (Some(a), d) if d > 0 && a.cols() == d => {}
                (Some(a), d) => return Err(config_err!("episode {i}: actions have {} columns, expected {d}", a.cols())),
                (None, _) => return Err(config_err!("episode {i} has no actions but the dataset declares action_dim {action_dim}")),
            }
            if !ep.states.is_finite() || ep.actions.as_ref().is_some_and(|a| !a.is_finite()) {
                return Err(Error::Numeric(format!("episode {i} contains non-finite values")));
            }
        }
        Ok(TrajectoryDataset { env_id, state_dim, action_dim, episodes, metadata })
    }

    pub fn env_id(&self) -> EnvId {
        self.env_id
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Zero for state-only datasets.
    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn has_actions(&self) -> bool {
        self.action_dim > 0
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Total number of `(s_t, s_{t+1})` pairs.
    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(|e| e.len() - 1).sum()
    }

    /// The same states with the actions dropped.
    pub fn without_actions(&self) -> TrajectoryDataset {
        let episodes = self.episodes.iter().map(|e| Episode { states: e.states.clone(), actions: None }).collect();
        TrajectoryDataset { action_dim: 0, episodes, ..self.clone_header() }
    }

    fn clone_header(&self) -> TrajectoryDataset {
        TrajectoryDataset { env_id: self.env_id, state_dim: self.state_dim, action_dim: self.action_dim, episodes: Vec::new(), metadata: self.metadata.clone() }
    }

    fn subset(&self, indices: &[usize]) -> TrajectoryDataset {
        TrajectoryDataset { episodes: indices.iter().map(|&i| self.episodes[i].clone()).collect(), ..self.clone_header() }
    }

    /// Splits whole episodes into `(train, validation)`; each side keeps the
    /// original episode order.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(config_err!("holdout fraction must lie in (0, 1), got {holdout_fraction}"));
        }
        let n = self.episodes.len();
        let n_val = (holdout_fraction * n as f64).round() as usize;
        if n_val == 0 || n_val == n {
            return Err(config_err!("holdout fraction {holdout_fraction} of {n} episodes leaves one side empty"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut val = order[..n_val].to_vec();
        let mut train = order[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        Ok((self.subset(&train), self.subset(&val)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let header = Header {
            env_id: self.env_id,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            n_episodes: self.episodes.len(),
            generator: self.metadata.generator.clone(),
            seed: self.metadata.seed,
            created: self.metadata.created.clone(),
        };
        put_json_line(&mut out, &header);
        for ep in &self.episodes {
            out.extend_from_slice(&(ep.len() as u32).to_le_bytes());
            for t in 0..ep.len() {
                put_f64s(&mut out, ep.states.row(t));
                if let Some(a) = &ep.actions {
                    put_f64s(&mut out, a.row(t));
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let header: Header = r.json_line()?;
        if header.state_dim == 0 {
            return Err(Error::format(MAGIC.len() as u64, "header declares state_dim 0"));
        }
        let row_len = header.state_dim + header.action_dim;
        let mut episodes = Vec::with_capacity(header.n_episodes.min(1 << 16));
        let mut global_row = 0usize;
        for e in 0..header.n_episodes {
            let at = r.offset();
            let steps = r.u32().map_err(|_| Error::format(at, format!("episode {e}: missing step count")))? as usize;
            if steps < 2 {
                return Err(Error::format(at, format!("episode {e}: step count {steps}, at least 2 required")));
            }
            let mut states = Vec::with_capacity(steps * header.state_dim);
            let mut actions = Vec::with_capacity(steps * header.action_dim);
            for t in 0..steps {
                let at = r.offset();
                if r.remaining() < row_len * 8 {
                    return Err(Error::format(
                        at,
                        format!(
                            "episode {e} row {t} (file row {global_row}): expected {} floats per row, only {} bytes remain",
                            row_len,
                            r.remaining()
                        ),
                    ));
                }
                let row = r.f64s(row_len)?;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::format(at, format!("episode {e} row {t} (file row {global_row}): non-finite value")));
                }
                states.extend_from_slice(&row[..header.state_dim]);
                actions.extend_from_slice(&row[header.state_dim..]);
                global_row += 1;
            }
            let states = Matrix::from_vec(steps, header.state_dim, states);
            let actions = (header.action_dim > 0).then(|| Matrix::from_vec(steps, header.action_dim, actions));
            episodes.push(Episode { states, actions });
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                r.offset(),
                format!("{} trailing bytes after {} episodes; rows may be longer than state_dim {}", r.remaining(), header.n_episodes, header.state_dim),
            ));
        }
        let metadata = Metadata { generator: header.generator, seed: header.seed, created: header.created };
        TrajectoryDataset::new(header.env_id, header.state_dim, header.action_dim, episodes, metadata)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Per-dimension mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Statistics of the rows yielded by `rows()` (called twice, once per
    /// pass); `std` is floored at [`STD_FLOOR`].
    pub fn from_rows<'a, I: Iterator<Item = &'a [f64]>>(dim: usize, rows: impl Fn() -> I) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        for row in rows() {
            n += 1;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        if n == 0 {
            return Err(config_err!("cannot normalize an empty dataset"));
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormalizationStats { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        NormalizationStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    /// Restriction to a subset of dimensions.
    pub fn select(&self, indices: &[usize]) -> NormalizationStats {
        NormalizationStats { mean: indices.iter().map(|&i| self.mean[i]).collect(), std: indices.iter().map(|&i| self.std[i]).collect() }
    }
}

/// Mean and std of every state in the dataset.
pub fn compute_normalization(dataset: &TrajectoryDataset) -> Result<NormalizationStats> {
    NormalizationStats::from_rows(dataset.state_dim(), || dataset.episodes().iter().flat_map(|e| e.states().iter_rows()))
}

/// Mean and std of every action; configuration error for state-only data.
pub fn compute_action_normalization(dataset: &TrajectoryDataset) -> Result<NormalizationStats> {
    if !dataset.has_actions() {
        return Err(config_err!("dataset is state-only"));
    }
    NormalizationStats::from_rows(dataset.action_dim(), || dataset.episodes().iter().flat_map(|e| e.actions().expect("checked").iter_rows()))
}

/// How a recorded episode ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub steps: usize,
    pub reached: bool,
    pub collided: bool,
    pub final_distance: f64,
}

/// Rolls one episode from a fresh reset, capturing every observation and,
/// if `record_actions`, the action taken at each. The final observation's
/// action row is what the policy outputs there (it is not executed).
pub fn record_episode(env: &mut dyn Environment, policy: &mut dyn Policy, record_actions: bool) -> Result<(Episode, EpisodeOutcome)> {
    let state_dim = env.observation_dim();
    let action_dim = env.action_dim();
    policy.reset();
    let mut obs = env.reset();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut outcome = EpisodeOutcome { steps: 0, reached: false, collided: false, final_distance: env.final_distance() };
    let mut done = false;
    loop {
        let a = policy.act(&obs)?;
        if a.len() != action_dim {
            return Err(config_err!("policy produced {} action components, {} expects {action_dim}", a.len(), env.id()));
        }
        states.extend_from_slice(&obs);
        if record_actions {
            actions.extend_from_slice(&a);
        }
        if done {
            break;
        }
        let r = env.step(&a)?;
        outcome.steps += 1;
        outcome.reached = r.reached;
        outcome.collided = r.collided;
        outcome.final_distance = env.final_distance();
        done = r.done;
        obs = r.observation;
    }
    let rows = states.len() / state_dim;
    let states = Matrix::from_vec(rows, state_dim, states);
    let actions = record_actions.then(|| Matrix::from_vec(rows, action_dim, actions));
    Ok((Episode::new(states, actions)?, outcome))
}
