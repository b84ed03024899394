use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::EnvId;
use crate::error::{config_err, Error, Result};
use crate::internal_model::ModelConfig;
use crate::rl::{BcConfig, DdpgConfig, DqnConfig};
use crate::shaping::RewardSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AgentConfig {
    Ddpg(DdpgConfig),
    Dqn(DqnConfig),
    Bc(BcConfig),
}

/// Scripted expert demonstrations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub path: PathBuf,
    pub episodes: usize,
    /// Defaults to a stream of the experiment's master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Keep the expert's actions (needed by behavior cloning and the
    /// state-action model); the mover expert records states only.
    #[serde(default = "default_true")]
    pub include_actions: bool,
    /// Std of Gaussian noise added to every expert action.
    #[serde(default)]
    pub action_noise: f64,
}

fn default_true() -> bool {
    true
}

/// Where the internal model lives and how to train it when it is missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub path: PathBuf,
    #[serde(default)]
    pub train: ModelConfig,
}

fn default_eval_episodes() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env_id: EnvId,
    /// Per-run seeds; each gets an independent stream from `master_seed`.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Training episodes per seed (evaluation episodes for behavior cloning).
    pub episodes: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    /// Log real wall-clock times; off keeps every output byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demos: Option<DemoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    pub reward: RewardSpec,
    pub agent: AgentConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err!("{e}"))
    }

    /// Parses a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| config_err!("{}: {e}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Input files the experiment reads: demos, model and the reward's model.
    fn input_paths(&mut self) -> Vec<&mut PathBuf> {
        let mut paths = Vec::new();
        if let Some(d) = &mut self.demos {
            paths.push(&mut d.path);
        }
        if let Some(m) = &mut self.model {
            paths.push(&mut m.path);
        }
        match &mut self.reward.variant {
            crate::shaping::RewardVariant::Proposed { model: Some(p), .. }
            | crate::shaping::RewardVariant::Generative { model: Some(p), .. }
            | crate::shaping::RewardVariant::StateActionPm { model: Some(p), .. } => paths.push(p),
            _ => {}
        }
        paths
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        for p in self.input_paths() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded. Covers what
    /// determines a seed's results: the seed list, output directory, timing
    /// flag and input file locations (reduced to file names) are left out, so
    /// the same experiment run elsewhere or with more seeds hashes the same.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.output_dir = PathBuf::new();
        canonical.timing = false;
        for p in canonical.input_paths() {
            *p = p.file_name().map(PathBuf::from).unwrap_or_default();
        }
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    /// Checks everything that can be checked without touching files.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(config_err!("name must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(config_err!("seeds must not be empty"));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(config_err!("seeds must be distinct"));
        }
        if self.episodes == 0 {
            return Err(config_err!("episodes must be at least 1"));
        }
        self.reward.validate(self.env_id)?;
        let discrete = self.env_id.discrete_actions().is_some();
        match &self.agent {
            AgentConfig::Ddpg(c) if !discrete => c.validate()?,
            AgentConfig::Dqn(c) if discrete => c.validate()?,
            AgentConfig::Bc(c) if !discrete => {
                c.validate()?;
                match &self.demos {
                    Some(d) if d.include_actions => {}
                    _ => return Err(config_err!("behavior cloning needs demos with include_actions = true")),
                }
            }
            AgentConfig::Ddpg(_) | AgentConfig::Bc(_) => return Err(config_err!("{} has discrete actions; use dqn", self.env_id)),
            AgentConfig::Dqn(_) => return Err(config_err!("{} has continuous actions; use ddpg or bc", self.env_id)),
        }
        if let Some(d) = &self.demos {
            if d.episodes == 0 {
                return Err(config_err!("demos.episodes must be at least 1"));
            }
            if d.include_actions && self.env_id != EnvId::Reacher {
                return Err(config_err!("the {} expert records states only; set demos.include_actions = false", self.env_id));
            }
        }
        if self.reward.needs_model() && self.reward.model_path().is_none() && self.model.is_none() {
            return Err(config_err!("reward variant needs an internal model: give reward.model or a [model] section"));
        }
        if let Some(m) = &self.model {
            m.train.validate(self.env_id.observation_dim())?;
            if !self.reward.model_kinds().is_empty() && !self.reward.model_kinds().contains(&m.train.kind) {
                return Err(config_err!("model kind {:?} does not fit reward variant (accepts {:?})", m.train.kind, self.reward.model_kinds()));
            }
        }
        Ok(())
    }
}
