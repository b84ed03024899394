//! Seedable kinematic environments: a two-link planar reacher and a point
//! mover with an obstacle (continuous and nine-action discrete variants).

mod mover;
mod reacher;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub use mover::{mover_discrete_action, mover_reward_components, Mover, MOVER_ACTIONS};
pub use reacher::{forward_kinematics, wrap_angle, Reacher, LINK1, LINK2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "reacher-v1")]
    Reacher,
    #[serde(rename = "mover-v1")]
    Mover,
    #[serde(rename = "mover-disc-v1")]
    MoverDiscrete,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Reacher => "reacher-v1",
            EnvId::Mover => "mover-v1",
            EnvId::MoverDiscrete => "mover-disc-v1",
        }
    }

    pub fn observation_dim(self) -> usize {
        match self {
            EnvId::Reacher => reacher::OBS_DIM,
            EnvId::Mover | EnvId::MoverDiscrete => mover::OBS_DIM,
        }
    }

    /// Continuous action dimension fed to `step`.
    pub fn action_dim(self) -> usize {
        2
    }

    /// Number of discrete actions, for environments driven by an index.
    pub fn discrete_actions(self) -> Option<usize> {
        match self {
            EnvId::MoverDiscrete => Some(MOVER_ACTIONS),
            _ => None,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reacher-v1" => Ok(EnvId::Reacher),
            "mover-v1" => Ok(EnvId::Mover),
            "mover-disc-v1" => Ok(EnvId::MoverDiscrete),
            other => Err(config_err!("unknown environment id {other:?}")),
        }
    }
}

/// Named pieces of the environment reward, evaluated on the post-step state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// `-|p - p_tgt|` (end effector for the reacher, agent for the mover).
    pub target_distance: f64,
    /// `+|p - p_obs|`; mover only.
    pub obstacle_distance: Option<f64>,
    /// `-|a|` of the clipped action.
    pub action_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub components: RewardComponents,
    /// Episode over, for any reason.
    pub done: bool,
    /// Ended by the step limit rather than a terminal state.
    pub truncated: bool,
    pub reached: bool,
    pub collided: bool,
}

impl StepResult {
    /// True terminal state (no bootstrapping past it).
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated
    }
}

pub trait Environment: Send {
    fn id(&self) -> EnvId;
    fn step_limit(&self) -> usize;
    /// Starts a new episode from the environment's own random stream.
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn observation(&self) -> Vec<f64>;
    /// Distance to the target at the current state.
    fn final_distance(&self) -> f64;
    /// Per-dimension magnitudes used to bring observations to unit scale.
    fn observation_scale(&self) -> Vec<f64>;

    fn observation_dim(&self) -> usize {
        self.id().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.id().action_dim()
    }
}

pub fn make_env(id: EnvId, seed: u64) -> Box<dyn Environment> {
    match id {
        EnvId::Reacher => Box::new(Reacher::new(seed)),
        EnvId::Mover => Box::new(Mover::new(seed)),
        EnvId::MoverDiscrete => Box::new(Mover::discrete(seed)),
    }
}

pub(crate) fn clip_action(action: &[f64]) -> [f64; 2] {
    [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)]
}

pub(crate) fn check_action(action: &[f64]) -> Result<()> {
    if action.len() != 2 {
        return Err(config_err!("action has {} components, environment expects 2", action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite action".into()));
    }
    Ok(())
}

#[inline]
pub(crate) fn norm2(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_ids_parse_and_print() {
        for id in [EnvId::Reacher, EnvId::Mover, EnvId::MoverDiscrete] {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert!("cartpole".parse::<EnvId>().is_err());
    }
}
