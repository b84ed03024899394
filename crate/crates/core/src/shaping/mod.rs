//! Reward layer: ψ reshaping functions, the hand-crafted rewards, rewards
//! from internal-model prediction error, and the curiosity baseline.
//!
//! Sign conventions are fixed per ψ: `scaled_tanh` and `linear` are costs
//! (`r = -ψ(d)`), `gaussian` and `threshold_linear` are bonuses (`r = ψ(d)`).

mod curiosity;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, Environment, RewardComponents};
use crate::error::{config_err, usage_err, Result};
use crate::internal_model::{InternalModel, ModelKind};
use crate::numerics::HiddenState;

pub use curiosity::{curiosity_reward, CuriosityForwardModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Psi {
    /// `k * tanh(d)`, used as a cost
    ScaledTanh { k: f64 },
    /// `exp(-d^2 / (2 sigma^2))`, used as a bonus
    Gaussian { sigma: f64 },
    /// `max(0, zeta - d)`, used as a bonus
    ThresholdLinear { zeta: f64 },
    /// `k * d`, used as a cost
    Linear { k: f64 },
}

impl Psi {
    /// `zeta = 0` is accepted so the unthresholded case can be expressed.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Psi::ScaledTanh { k } | Psi::Linear { k } => k > 0.0 && k.is_finite(),
            Psi::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            Psi::ThresholdLinear { zeta } => zeta >= 0.0 && zeta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(config_err!("invalid psi parameters {self:?}"))
        }
    }

    /// The raw value `ψ(d)`.
    pub fn apply(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(usage_err!("psi needs a non-negative error norm, got {d}"));
        }
        Ok(match *self {
            Psi::ScaledTanh { k } => k * d.tanh(),
            Psi::Gaussian { sigma } => (-d * d / (2.0 * sigma * sigma)).exp(),
            Psi::ThresholdLinear { zeta } => (zeta - d).max(0.0),
            Psi::Linear { k } => k * d,
        })
    }

    pub fn is_cost(&self) -> bool {
        matches!(self, Psi::ScaledTanh { .. } | Psi::Linear { .. })
    }

    /// `ψ(d)` with the variant's sign applied.
    pub fn reward(&self, d: f64) -> Result<f64> {
        let v = self.apply(d)?;
        Ok(if self.is_cost() { -v } else { v })
    }
}

pub fn psi(config: &Psi, d: f64) -> Result<f64> {
    config.apply(d)
}

fn default_sparse_gain() -> f64 {
    100.0
}

fn default_curiosity_hidden() -> Vec<usize> {
    vec![64]
}

fn default_curiosity_lr() -> f64 {
    1e-3
}

/// Which reward drives learning. Model variants without `model` use the
/// model trained by the experiment pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum RewardVariant {
    HandcraftedDense,
    HandcraftedSparse {
        #[serde(default = "default_sparse_gain")]
        gain: f64,
    },
    Proposed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
        psi: Psi,
    },
    Generative {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
        psi: Psi,
    },
    StateActionPm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
        psi: Psi,
    },
    Curiosity {
        eta: f64,
        #[serde(default = "default_curiosity_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_curiosity_lr")]
        lr: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(flatten)]
    pub variant: RewardVariant,
    /// Adds `-|a_t|`. Defaults to true for tanh-shaped model rewards and
    /// false otherwise; hand-crafted rewards define their own action cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_env_cost: Option<bool>,
}

impl RewardSpec {
    pub fn new(variant: RewardVariant) -> Self {
        RewardSpec { variant, include_env_cost: None }
    }

    pub fn psi(&self) -> Option<&Psi> {
        match &self.variant {
            RewardVariant::Proposed { psi, .. } | RewardVariant::Generative { psi, .. } | RewardVariant::StateActionPm { psi, .. } => Some(psi),
            _ => None,
        }
    }

    pub fn model_path(&self) -> Option<&PathBuf> {
        match &self.variant {
            RewardVariant::Proposed { model, .. } | RewardVariant::Generative { model, .. } | RewardVariant::StateActionPm { model, .. } => model.as_ref(),
            _ => None,
        }
    }

    /// Model kinds the variant accepts; empty when it needs no internal model.
    pub fn model_kinds(&self) -> &'static [ModelKind] {
        match self.variant {
            RewardVariant::Proposed { .. } => &[ModelKind::Sequence, ModelKind::SequenceSelected],
            RewardVariant::Generative { .. } => &[ModelKind::Generative],
            RewardVariant::StateActionPm { .. } => &[ModelKind::StateAction],
            _ => &[],
        }
    }

    pub fn needs_model(&self) -> bool {
        !self.model_kinds().is_empty()
    }

    pub fn env_cost(&self) -> bool {
        self.include_env_cost.unwrap_or(matches!(self.psi(), Some(Psi::ScaledTanh { .. })))
    }

    pub fn validate(&self, env: EnvId) -> Result<()> {
        match &self.variant {
            RewardVariant::HandcraftedDense | RewardVariant::HandcraftedSparse { .. } => {
                if self.include_env_cost.is_some() {
                    return Err(config_err!("include_env_cost does not apply to hand-crafted rewards"));
                }
                self.handcrafted_kind(env)?;
            }
            RewardVariant::Curiosity { eta, hidden, lr } => {
                if !(*eta > 0.0 && eta.is_finite()) {
                    return Err(config_err!("curiosity eta must be > 0, got {eta}"));
                }
                if hidden.contains(&0) || !(*lr > 0.0 && lr.is_finite()) {
                    return Err(config_err!("curiosity hidden widths must be >= 1 and lr > 0"));
                }
            }
            _ => {}
        }
        if let Some(p) = self.psi() {
            p.validate()?;
        }
        Ok(())
    }

    /// The hand-crafted reward for this variant on `env`.
    pub fn handcrafted_kind(&self, env: EnvId) -> Result<HandcraftedKind> {
        match (&self.variant, env) {
            (RewardVariant::HandcraftedDense, _) => Ok(HandcraftedKind::dense_for(env)),
            (RewardVariant::HandcraftedSparse { gain }, EnvId::Reacher) => {
                if !(*gain > 0.0 && gain.is_finite()) {
                    return Err(config_err!("sparse reward gain must be > 0, got {gain}"));
                }
                Ok(HandcraftedKind::ReacherSparse { gain: *gain })
            }
            (RewardVariant::HandcraftedSparse { .. }, _) => Err(config_err!("no sparse hand-crafted reward is defined for {env}")),
            (v, _) => Err(config_err!("{v:?} is not a hand-crafted reward")),
        }
    }

    /// Fails unless `model` is of a kind this variant accepts and fits `env`.
    pub fn check_model(&self, model: &InternalModel, env: EnvId) -> Result<()> {
        let kinds = self.model_kinds();
        if !kinds.contains(&model.kind()) {
            return Err(config_err!("reward variant accepts models of kind {kinds:?}, got {:?}", model.kind()));
        }
        if model.state_dim() != env.observation_dim() {
            return Err(config_err!("model state_dim {} does not match {env} observation dim {}", model.state_dim(), env.observation_dim()));
        }
        if model.action_dim() > 0 && model.action_dim() != env.action_dim() {
            return Err(config_err!("model action_dim {} does not match {env} action dim {}", model.action_dim(), env.action_dim()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HandcraftedKind {
    /// `-|p_ee - p_tgt| + r_env`
    ReacherDense,
    /// `-gain * tanh(|p_ee - p_tgt|) + r_env`
    ReacherSparse { gain: f64 },
    /// `-|p - p_tgt| + |p - p_obs|`
    MoverDense,
}

impl HandcraftedKind {
    /// The dense reward, also the common yardstick logged for every variant.
    pub fn dense_for(env: EnvId) -> Self {
        match env {
            EnvId::Reacher => HandcraftedKind::ReacherDense,
            EnvId::Mover | EnvId::MoverDiscrete => HandcraftedKind::MoverDense,
        }
    }
}

pub fn handcrafted_reward(components: &RewardComponents, kind: HandcraftedKind) -> Result<f64> {
    let c = components;
    match kind {
        HandcraftedKind::ReacherDense | HandcraftedKind::ReacherSparse { .. } if c.obstacle_distance.is_some() => {
            Err(config_err!("reacher reward given components with an obstacle term"))
        }
        HandcraftedKind::ReacherDense => Ok(c.target_distance + c.action_cost),
        HandcraftedKind::ReacherSparse { gain } => Ok(-gain * (-c.target_distance).tanh() + c.action_cost),
        HandcraftedKind::MoverDense => match c.obstacle_distance {
            Some(o) => Ok(c.target_distance + o),
            None => Err(config_err!("mover reward needs the obstacle distance component")),
        },
    }
}

/// Prediction error `d` of `model` on `(s_t, a_t) -> s_{t+1}`, normalized units.
fn model_error(model: &InternalModel, state: &[f64], action: &[f64], next: &[f64], hidden: Option<&HiddenState>) -> Result<(f64, Option<HiddenState>)> {
    let action = (model.kind() == ModelKind::StateAction).then_some(action);
    model.prediction_error(state, action, next, hidden)
}

/// Reward for hand-crafted and model-based variants. `hidden` is the
/// rollout's recurrent state (start each episode from
/// [`InternalModel::initial_hidden`]); the updated state is returned.
pub fn shaped_reward(
    spec: &RewardSpec,
    model: Option<&InternalModel>,
    state: &[f64],
    action: &[f64],
    next: &[f64],
    hidden: Option<&HiddenState>,
    components: &RewardComponents,
) -> Result<(f64, Option<HiddenState>)> {
    match &spec.variant {
        RewardVariant::HandcraftedDense | RewardVariant::HandcraftedSparse { .. } => {
            let env = if components.obstacle_distance.is_some() { EnvId::Mover } else { EnvId::Reacher };
            Ok((handcrafted_reward(components, spec.handcrafted_kind(env)?)?, None))
        }
        RewardVariant::Curiosity { .. } => Err(usage_err!("curiosity rewards update a forward model; use curiosity_reward")),
        _ => {
            let model = model.ok_or_else(|| config_err!("reward variant needs an internal model"))?;
            let kinds = spec.model_kinds();
            if !kinds.contains(&model.kind()) {
                return Err(config_err!("reward variant accepts models of kind {kinds:?}, got {:?}", model.kind()));
            }
            let psi = spec.psi().expect("model variants carry psi");
            let (d, h) = model_error(model, state, action, next, hidden)?;
            let mut r = psi.reward(d)?;
            if spec.env_cost() {
                r += components.action_cost;
            }
            Ok((r, h))
        }
    }
}

enum Source {
    Handcrafted(HandcraftedKind),
    Model(InternalModel),
    Curiosity(CuriosityForwardModel, f64),
}

/// Per-run reward state: owns the model copy, the rollout's recurrent state
/// and, for curiosity, the online forward model.
pub struct Rewarder {
    spec: RewardSpec,
    source: Source,
    hidden: Option<HiddenState>,
}

impl Rewarder {
    /// `model` is required exactly when the variant needs one; `seed`
    /// initializes the curiosity forward model.
    pub fn new(spec: &RewardSpec, env: &dyn Environment, model: Option<InternalModel>, seed: u64) -> Result<Self> {
        spec.validate(env.id())?;
        let source = match (&spec.variant, model) {
            (RewardVariant::HandcraftedDense | RewardVariant::HandcraftedSparse { .. }, None) => Source::Handcrafted(spec.handcrafted_kind(env.id())?),
            (RewardVariant::Curiosity { eta, hidden, lr }, None) => {
                Source::Curiosity(CuriosityForwardModel::new(env.observation_scale(), env.action_dim(), hidden, *lr, seed)?, *eta)
            }
            (_, Some(m)) if spec.needs_model() => {
                spec.check_model(&m, env.id())?;
                Source::Model(m)
            }
            (_, Some(_)) => return Err(config_err!("reward variant takes no internal model")),
            (_, None) => return Err(config_err!("reward variant needs an internal model")),
        };
        let mut r = Rewarder { spec: spec.clone(), source, hidden: None };
        r.begin_episode();
        Ok(r)
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    /// Resets the recurrent state; the curiosity model keeps learning.
    pub fn begin_episode(&mut self) {
        self.hidden = match &self.source {
            Source::Model(m) => m.initial_hidden(),
            _ => None,
        };
    }

    /// Reward for the executed transition; call once per step, in order.
    pub fn reward(&mut self, state: &[f64], action: &[f64], next: &[f64], components: &RewardComponents) -> Result<f64> {
        match &mut self.source {
            Source::Handcrafted(kind) => handcrafted_reward(components, *kind),
            Source::Model(model) => {
                let (r, h) = shaped_reward(&self.spec, Some(model), state, action, next, self.hidden.as_ref(), components)?;
                self.hidden = h;
                Ok(r)
            }
            Source::Curiosity(model, eta) => {
                let (mut r, _) = curiosity_reward(model, state, action, next, *eta)?;
                if self.spec.env_cost() {
                    r += components.action_cost;
                }
                Ok(r)
            }
        }
    }
}

/// Prediction errors of `model` along one episode in which the agent takes
/// the zero action from its spawn point until the episode ends.
pub fn stationary_errors(model: &InternalModel, env: &mut dyn Environment) -> Result<Vec<f64>> {
    let zero = vec![0.0; env.action_dim()];
    let mut state = env.reset();
    let mut hidden = model.initial_hidden();
    let mut errors = Vec::new();
    loop {
        let step = env.step(&zero)?;
        let (d, h) = model_error(model, &state, &zero, &step.observation, hidden.as_ref())?;
        errors.push(d);
        hidden = h;
        if step.done {
            return Ok(errors);
        }
        state = step.observation;
    }
}

/// `zeta` for the thresholded-linear ψ: the mean prediction error a policy
/// earns by staying where it spawned.
pub fn calibrate_zeta(model: &InternalModel, env: &mut dyn Environment) -> Result<f64> {
    let errors = stationary_errors(model, env)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}
