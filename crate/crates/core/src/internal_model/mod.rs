//! Internal models fitted to expert trajectories: the next-state sequence
//! predictor, its selected-dimension variant, a reconstruction (generative)
//! baseline, and a state-action predictive baseline.
//!
//! All models work in z-normalized state units. Sequence models may be
//! residual, predicting `z_{t+1} - z_t` and adding `z_t` back.
//!
//! Model file: `OBRW-IM1\n`, one JSON line
//! `{kind, selected_indices, normalization, spec, residual, input_has_action, action_dim}`,
//! then the parameters as little-endian `f64` in layer order.

mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, usage_err, Error, Result};
use crate::io::{put_f64s, put_json_line, read_file, write_atomic, ByteReader};
use crate::numerics::{Activation, CellKind, HiddenState, LayerSpec, Network, NetworkSpec, ParameterSet};
use crate::trajectories::NormalizationStats;

pub use train::{evaluate_model, gaussian_nll, train_internal_model, Evaluation, TrainingReport};

pub const MAGIC: &[u8] = b"OBRW-IM1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `theta(s_t) -> s_{t+1}`
    Sequence,
    /// `theta'(s_t) -> s_{t+1}[selected]`
    SequenceSelected,
    /// `theta_g(s) -> s`, an autoencoder
    Generative,
    /// `theta_+a(s_t, a_t) -> s_{t+1}`
    StateAction,
}

impl ModelKind {
    pub fn is_sequence(self) -> bool {
        self != ModelKind::Generative
    }
}

/// Architecture and optimization settings. Field names are the keys of the
/// `[model]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub cell: CellKind,
    /// Recurrent layer widths (sequence kinds).
    pub recurrent: Vec<usize>,
    /// Dense layers between the recurrent stack and the linear output.
    pub head: Vec<usize>,
    pub head_activation: Activation,
    /// Hidden widths of the generative autoencoder.
    pub autoencoder: Vec<usize>,
    pub autoencoder_activation: Activation,
    pub selected_indices: Option<Vec<usize>>,
    /// Predict the change of state; defaults to true for sequence kinds.
    pub residual: Option<bool>,
    pub batch_episodes: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub clip_norm: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Sequence,
            cell: CellKind::Lstm,
            recurrent: vec![128, 128],
            head: vec![40],
            head_activation: Activation::Relu,
            autoencoder: vec![64, 16, 64],
            autoencoder_activation: Activation::Tanh,
            selected_indices: None,
            residual: None,
            batch_episodes: 16,
            max_epochs: 200,
            patience: 20,
            lr: 1e-3,
            clip_norm: 1.0,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn residual(&self) -> bool {
        self.kind.is_sequence() && self.residual.unwrap_or(true)
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let positive = |xs: &[usize]| xs.iter().all(|&x| x > 0);
        if self.kind.is_sequence() && self.recurrent.is_empty() {
            return Err(config_err!("sequence models need at least one recurrent layer"));
        }
        if !positive(&self.recurrent) || !positive(&self.head) || !positive(&self.autoencoder) {
            return Err(config_err!("layer widths must be at least 1"));
        }
        if self.kind == ModelKind::Generative && self.autoencoder.is_empty() {
            return Err(config_err!("generative model needs at least one hidden layer"));
        }
        match (&self.selected_indices, self.kind) {
            (Some(idx), ModelKind::SequenceSelected) => check_indices(idx, state_dim)?,
            (None, ModelKind::SequenceSelected) => return Err(config_err!("sequence_selected requires selected_indices")),
            (Some(_), kind) => return Err(config_err!("selected_indices only apply to sequence_selected, not {kind:?}")),
            (None, _) => {}
        }
        if self.kind == ModelKind::Generative && self.residual == Some(true) {
            return Err(config_err!("generative models cannot be residual"));
        }
        if self.batch_episodes == 0 || self.max_epochs == 0 {
            return Err(config_err!("batch_episodes and max_epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.clip_norm >= 0.0) {
            return Err(config_err!("lr must be > 0 and clip_norm >= 0"));
        }
        Ok(())
    }

    /// Network spec for the given dimensions.
    pub fn network_spec(&self, state_dim: usize, action_dim: usize) -> Result<NetworkSpec> {
        let output = self.selected_indices.as_ref().map_or(state_dim, Vec::len);
        if self.kind == ModelKind::Generative {
            return NetworkSpec::mlp(state_dim, &self.autoencoder, self.autoencoder_activation, state_dim, Activation::Identity);
        }
        let mut layers = Vec::new();
        let mut width = state_dim + if self.kind == ModelKind::StateAction { action_dim } else { 0 };
        for &h in &self.recurrent {
            layers.push(LayerSpec::Recurrent { input: width, hidden: h, cell: self.cell });
            width = h;
        }
        for &h in &self.head {
            layers.push(LayerSpec::dense(width, h, self.head_activation));
            width = h;
        }
        layers.push(LayerSpec::dense(width, output, Activation::Identity));
        NetworkSpec::new(layers)
    }
}

fn check_indices(indices: &[usize], state_dim: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(config_err!("selected_indices must not be empty"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= state_dim) {
        return Err(config_err!("selected index {bad} out of range for state_dim {state_dim}"));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() {
        return Err(config_err!("selected_indices contain duplicates"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    kind: ModelKind,
    selected_indices: Option<Vec<usize>>,
    normalization: NormalizationStats,
    spec: NetworkSpec,
    residual: bool,
    input_has_action: bool,
    action_dim: usize,
}

/// A trained predictor with its normalization. Immutable; per-rollout
/// recurrent state is owned by the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalModel {
    kind: ModelKind,
    network: Network,
    normalization: NormalizationStats,
    selected_indices: Option<Vec<usize>>,
    residual: bool,
    action_dim: usize,
}

impl InternalModel {
    pub fn from_parts(
        kind: ModelKind,
        network: Network,
        normalization: NormalizationStats,
        selected_indices: Option<Vec<usize>>,
        residual: bool,
        action_dim: usize,
    ) -> Result<Self> {
        let state_dim = normalization.dim();
        let spec = network.spec();
        if kind.is_sequence() != spec.has_recurrent() {
            return Err(config_err!("{kind:?} model {} recurrent layers", if kind.is_sequence() { "needs" } else { "must not have" }));
        }
        if (kind == ModelKind::SequenceSelected) != selected_indices.is_some() {
            return Err(config_err!("selected_indices must be present exactly for sequence_selected"));
        }
        if let Some(idx) = &selected_indices {
            check_indices(idx, state_dim)?;
        }
        if (kind == ModelKind::StateAction) != (action_dim > 0) {
            return Err(config_err!("an action input is required exactly for state_action models"));
        }
        if residual && !kind.is_sequence() {
            return Err(config_err!("generative models cannot be residual"));
        }
        let input = state_dim + action_dim;
        let output = selected_indices.as_ref().map_or(state_dim, Vec::len);
        if spec.input_dim() != input || spec.output_dim() != output {
            return Err(config_err!(
                "network maps {} -> {}, model needs {input} -> {output}",
                spec.input_dim(),
                spec.output_dim()
            ));
        }
        Ok(InternalModel { kind, network, normalization, selected_indices, residual, action_dim })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn normalization(&self) -> &NormalizationStats {
        &self.normalization
    }

    pub fn selected_indices(&self) -> Option<&[usize]> {
        self.selected_indices.as_deref()
    }

    pub fn is_residual(&self) -> bool {
        self.residual
    }

    pub fn state_dim(&self) -> usize {
        self.normalization.dim()
    }

    /// Zero unless the model takes actions.
    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Dimension of predictions: the selected dims or the full state.
    pub fn output_dim(&self) -> usize {
        self.network.output_dim()
    }

    /// Recurrent state at the start of an episode; `None` for the generative model.
    pub fn initial_hidden(&self) -> Option<HiddenState> {
        self.kind.is_sequence().then(|| HiddenState::zeros(self.network.spec(), 1))
    }

    fn output_stats(&self) -> NormalizationStats {
        match &self.selected_indices {
            Some(idx) => self.normalization.select(idx),
            None => self.normalization.clone(),
        }
    }

    fn select<'a>(&self, z: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
        match &self.selected_indices {
            Some(idx) => idx.iter().map(|&i| z[i]).collect::<Vec<_>>().into(),
            None => z.into(),
        }
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(usage_err!("state has {} components, model expects {}", s.len(), self.state_dim()));
        }
        Ok(())
    }

    /// Normalized one-step prediction from a normalized state.
    fn step_normalized(&self, z: &[f64], action: Option<&[f64]>, hidden: Option<&HiddenState>) -> Result<(Vec<f64>, HiddenState)> {
        let fresh;
        let hidden = match hidden {
            Some(h) => h,
            None => {
                fresh = HiddenState::zeros(self.network.spec(), 1);
                &fresh
            }
        };
        let (mut out, h) = match action {
            Some(a) => {
                let mut input = z.to_vec();
                input.extend_from_slice(a);
                self.network.step(&input, Some(hidden))?
            }
            None => self.network.step(z, Some(hidden))?,
        };
        if self.residual {
            for (o, base) in out.iter_mut().zip(self.select(z).iter()) {
                *o += base;
            }
        }
        Ok((out, h))
    }

    fn require(&self, kinds: &[ModelKind], op: &str) -> Result<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(usage_err!("{op} is not available for a {:?} model", self.kind))
        }
    }

    /// Denormalized `s_{t+1}` (or its selected dims). `hidden = None` starts
    /// a new episode.
    pub fn predict_next(&self, state: &[f64], hidden: Option<&HiddenState>) -> Result<(Vec<f64>, HiddenState)> {
        self.require(&[ModelKind::Sequence, ModelKind::SequenceSelected], "predict_next")?;
        self.check_state(state)?;
        let (z, h) = self.step_normalized(&self.normalization.normalize(state), None, hidden)?;
        Ok((self.output_stats().denormalize(&z), h))
    }

    pub fn predict_next_with_action(&self, state: &[f64], action: &[f64], hidden: Option<&HiddenState>) -> Result<(Vec<f64>, HiddenState)> {
        self.require(&[ModelKind::StateAction], "predict_next_with_action")?;
        self.check_state(state)?;
        if action.len() != self.action_dim {
            return Err(usage_err!("action has {} components, model expects {}", action.len(), self.action_dim));
        }
        let (z, h) = self.step_normalized(&self.normalization.normalize(state), Some(action), hidden)?;
        Ok((self.output_stats().denormalize(&z), h))
    }

    /// Autoencoder reconstruction of `state`.
    pub fn reconstruct(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.require(&[ModelKind::Generative], "reconstruct")?;
        self.check_state(state)?;
        let z = self.normalization.normalize(state);
        let out = self.network.infer_batch(&crate::numerics::Matrix::row_vector(&z))?;
        Ok(self.normalization.denormalize(out.row(0)))
    }

    /// Prediction-error norm `|z(s_{t+1}) - prediction|` in normalized units,
    /// restricted to the selected dims when the model has them. The
    /// generative model scores `s_{t+1}` by its reconstruction error and
    /// ignores `s_t`; the state-action model needs `action`.
    pub fn prediction_error(&self, state: &[f64], action: Option<&[f64]>, next: &[f64], hidden: Option<&HiddenState>) -> Result<(f64, Option<HiddenState>)> {
        self.check_state(state)?;
        self.check_state(next)?;
        let z_next = self.normalization.normalize(next);
        let (pred, h) = match self.kind {
            ModelKind::Generative => {
                let out = self.network.infer_batch(&crate::numerics::Matrix::row_vector(&z_next))?;
                (out.into_vec(), None)
            }
            ModelKind::StateAction => {
                let a = action.ok_or_else(|| usage_err!("state_action model needs the action"))?;
                if a.len() != self.action_dim {
                    return Err(usage_err!("action has {} components, model expects {}", a.len(), self.action_dim));
                }
                let (p, h) = self.step_normalized(&self.normalization.normalize(state), Some(a), hidden)?;
                (p, Some(h))
            }
            _ => {
                let (p, h) = self.step_normalized(&self.normalization.normalize(state), None, hidden)?;
                (p, Some(h))
            }
        };
        let target = self.select(&z_next);
        let d = target.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if !d.is_finite() {
            return Err(Error::Numeric("non-finite prediction error".into()));
        }
        Ok((d, h))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            kind: self.kind,
            selected_indices: self.selected_indices.clone(),
            normalization: self.normalization.clone(),
            spec: self.network.spec().clone(),
            residual: self.residual,
            input_has_action: self.action_dim > 0,
            action_dim: self.action_dim,
        };
        let mut out = MAGIC.to_vec();
        put_json_line(&mut out, &header);
        put_f64s(&mut out, self.network.params().as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let at = r.offset();
        let h: ModelHeader = r.json_line()?;
        h.spec.validate().map_err(|e| Error::format(at, e.to_string()))?;
        if h.input_has_action != (h.action_dim > 0) {
            return Err(Error::format(at, "input_has_action disagrees with action_dim"));
        }
        let at_params = r.offset();
        let values = r.f64s(h.spec.parameter_count())?;
        r.expect_end()?;
        let params = ParameterSet::from_values(&h.spec, values).map_err(|e| Error::format(at_params, e.to_string()))?;
        let network = Network::from_parts(h.spec, params)?;
        InternalModel::from_parts(h.kind, network, h.normalization, h.selected_indices, h.residual, h.action_dim)
            .map_err(|e| Error::format(at, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
