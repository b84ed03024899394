use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{derive_seed, stream};
use crate::envs::{make_env, EnvId};
use crate::error::{config_err, Result};
use crate::internal_model::{train_internal_model, InternalModel, TrainingReport};
use crate::io::write_atomic;
use crate::rl::Checkpoint;
use crate::shaping::{handcrafted_reward, HandcraftedKind};
use crate::trajectories::{scripted_expert, TrajectoryDataset};

/// Outcome of `demo-gen`: where the file went and how well the expert did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoGenReport {
    pub path: PathBuf,
    pub env_id: EnvId,
    pub seed: u64,
    pub episodes: usize,
    pub transitions: usize,
    pub with_actions: bool,
    pub success_rate: f64,
    pub mean_final_distance: f64,
}

fn demo_seed(cfg: &ExperimentConfig) -> Result<u64> {
    let demos = cfg.demos.as_ref().ok_or_else(|| config_err!("config has no [demos] section"))?;
    Ok(demos.seed.unwrap_or_else(|| derive_seed(cfg.master_seed, 0, stream::DEMOS)))
}

/// Records the scripted expert's demonstrations to `demos.path`. The mover
/// environments share the continuous mover's expert.
pub fn demo_gen(cfg: &ExperimentConfig) -> Result<DemoGenReport> {
    let demos = cfg.demos.as_ref().ok_or_else(|| config_err!("config has no [demos] section"))?;
    let seed = demo_seed(cfg)?;
    if demos.include_actions && cfg.env_id != EnvId::Reacher {
        return Err(config_err!("the mover expert records states only; set demos.include_actions = false"));
    }
    let (mut dataset, outcomes) = scripted_expert(cfg.env_id, demos.episodes, seed, demos.action_noise)?;
    if !demos.include_actions && dataset.has_actions() {
        dataset = dataset.without_actions();
    }
    dataset.save(&demos.path)?;
    let n = outcomes.len() as f64;
    Ok(DemoGenReport {
        path: demos.path.clone(),
        env_id: dataset.env_id(),
        seed,
        episodes: dataset.len(),
        transitions: dataset.transition_count(),
        with_actions: dataset.has_actions(),
        success_rate: outcomes.iter().filter(|o| o.reached).count() as f64 / n,
        mean_final_distance: outcomes.iter().map(|o| o.final_distance).sum::<f64>() / n,
    })
}

/// Loads `demos.path` and checks it fits the experiment's environment.
pub fn load_demos(cfg: &ExperimentConfig) -> Result<TrajectoryDataset> {
    let demos = cfg.demos.as_ref().ok_or_else(|| config_err!("config has no [demos] section"))?;
    let dataset = TrajectoryDataset::load(&demos.path)?;
    if dataset.state_dim() != cfg.env_id.observation_dim() {
        return Err(config_err!(
            "{}: states have {} components, {} observations have {}",
            demos.path.display(),
            dataset.state_dim(),
            cfg.env_id,
            cfg.env_id.observation_dim()
        ));
    }
    Ok(dataset)
}

fn report_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    model.with_file_name(name)
}

/// Fits the `[model]` section on the demonstrations; writes the model file
/// and `<model>.report.json` beside it.
pub fn train_model(cfg: &ExperimentConfig) -> Result<(InternalModel, TrainingReport)> {
    let section = cfg.model.as_ref().ok_or_else(|| config_err!("config has no [model] section"))?;
    let dataset = load_demos(cfg)?;
    let (model, mut report) = train_internal_model(&dataset, &section.train)?;
    if !cfg.timing {
        report.wall_ms = 0;
    }
    let json = serde_json::to_vec_pretty(&report).expect("training report serializes");
    model.save(&section.path)?;
    if let Err(e) = write_atomic(&report_path(&section.path), &json) {
        let _ = std::fs::remove_file(&section.path);
        return Err(e);
    }
    Ok((model, report))
}

/// The internal model the reward needs: loaded when its file exists,
/// otherwise trained from the `[model]` section. `None` for rewards that
/// need no model.
pub fn ensure_model(cfg: &ExperimentConfig) -> Result<Option<InternalModel>> {
    if !cfg.reward.needs_model() {
        return Ok(None);
    }
    let path = match (cfg.reward.model_path(), &cfg.model) {
        (Some(p), _) => p.clone(),
        (None, Some(m)) => m.path.clone(),
        (None, None) => return Err(config_err!("reward variant needs an internal model: give reward.model or a [model] section")),
    };
    let model = if path.exists() {
        InternalModel::load(&path)?
    } else if cfg.model.as_ref().is_some_and(|m| m.path == path) {
        train_model(cfg)?.0
    } else {
        return Err(config_err!("internal model {} not found", path.display()));
    };
    cfg.reward.check_model(&model, cfg.env_id)?;
    Ok(Some(model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    /// Selects the evaluation environment stream.
    pub seed: u64,
    pub episodes: usize,
}

/// Greedy rollout statistics; standard deviations are over episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub env_id: EnvId,
    pub episodes: usize,
    pub mean_env_return: f64,
    pub std_env_return: f64,
    pub mean_final_distance: f64,
    pub std_final_distance: f64,
    pub reached_rate: f64,
    pub collided_rate: f64,
    pub mean_steps: f64,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rolls the checkpoint's greedy policy for `episodes` episodes.
pub fn eval(cfg: &ExperimentConfig, req: &EvalRequest) -> Result<EvalReport> {
    if req.episodes == 0 {
        return Err(config_err!("evaluation needs at least one episode"));
    }
    let ckpt = Checkpoint::load(&req.checkpoint)?;
    if ckpt.info.env_id != cfg.env_id {
        return Err(config_err!("checkpoint was trained on {}, config is for {}", ckpt.info.env_id, cfg.env_id));
    }
    let mut env = make_env(cfg.env_id, derive_seed(cfg.master_seed, req.seed, stream::EVAL));
    let dense = HandcraftedKind::dense_for(cfg.env_id);
    let (mut returns, mut distances, mut steps) = (Vec::new(), Vec::new(), Vec::new());
    let (mut reached, mut collided) = (0usize, 0usize);
    for _ in 0..req.episodes {
        let mut obs = env.reset();
        let (mut ret, mut n) = (0.0, 0usize);
        loop {
            let step = env.step(&ckpt.greedy_action(&obs)?)?;
            ret += handcrafted_reward(&step.components, dense)?;
            n += 1;
            if step.done {
                reached += step.reached as usize;
                collided += step.collided as usize;
                break;
            }
            obs = step.observation;
        }
        returns.push(ret);
        distances.push(env.final_distance());
        steps.push(n as f64);
    }
    let (mean_env_return, std_env_return) = mean_std(&returns);
    let (mean_final_distance, std_final_distance) = mean_std(&distances);
    let n = req.episodes as f64;
    Ok(EvalReport {
        checkpoint: req.checkpoint.clone(),
        env_id: cfg.env_id,
        episodes: req.episodes,
        mean_env_return,
        std_env_return,
        mean_final_distance,
        std_final_distance,
        reached_rate: reached as f64 / n,
        collided_rate: collided as f64 / n,
        mean_steps: mean_std(&steps).0,
    })
}
