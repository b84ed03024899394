use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InternalModel, ModelConfig, ModelKind};
use crate::error::{config_err, Error, Result};
use crate::numerics::{clip_global_norm, AdamConfig, AdamState, Matrix, Network};
use crate::trajectories::{compute_normalization, Episode, NormalizationStats, TrajectoryDataset};

/// Episodes evaluated together in one padded batch.
const EVAL_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub kind: ModelKind,
    pub epochs_run: usize,
    /// Mean training loss per epoch (normalized units, per element).
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    /// Epoch (0-based) whose parameters were retained.
    pub best_epoch: usize,
    pub best_validation_mse: f64,
    /// `MSE(s_{t+1}, s_t)` on the validation episodes.
    pub persistence_mse: f64,
    pub train_episodes: usize,
    pub validation_episodes: usize,
    pub wall_ms: u64,
}

impl TrainingReport {
    /// Best validation loss seen up to each epoch; non-increasing by construction.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.validation_mse
            .iter()
            .scan(f64::INFINITY, |best, &v| {
                *best = best.min(v);
                Some(*best)
            })
            .collect()
    }
}

/// One-step teacher-forced evaluation, normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse: f64,
    pub per_dim_mse: Vec<f64>,
    pub persistence_mse: f64,
    pub persistence_per_dim_mse: Vec<f64>,
    pub transitions: usize,
}

/// An episode turned into network rows.
struct Prepared {
    /// network input per step
    inputs: Matrix,
    /// normalized target per step
    targets: Matrix,
    /// normalized (selected) current state per step: the residual base and
    /// the persistence prediction
    current: Matrix,
}

fn selected(z: &[f64], idx: Option<&[usize]>) -> Vec<f64> {
    match idx {
        Some(idx) => idx.iter().map(|&i| z[i]).collect(),
        None => z.to_vec(),
    }
}

/// Transition rows `(s_t[, a_t]) -> s_{t+1}`; for the generative model the
/// input is `s_{t+1}` itself (reconstruction of the next state).
fn prepare_transitions(ep: &Episode, stats: &NormalizationStats, kind: ModelKind, idx: Option<&[usize]>) -> Prepared {
    let n = ep.len() - 1;
    let z: Vec<Vec<f64>> = ep.states().iter_rows().map(|s| stats.normalize(s)).collect();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut current = Vec::new();
    for t in 0..n {
        match kind {
            ModelKind::Generative => inputs.extend_from_slice(&z[t + 1]),
            ModelKind::StateAction => {
                inputs.extend_from_slice(&z[t]);
                inputs.extend_from_slice(ep.actions().expect("state_action data has actions").row(t));
            }
            _ => inputs.extend_from_slice(&z[t]),
        }
        targets.extend(selected(&z[t + 1], idx));
        current.extend(selected(&z[t], idx));
    }
    let in_dim = inputs.len() / n;
    let out_dim = targets.len() / n;
    Prepared { inputs: Matrix::from_vec(n, in_dim, inputs), targets: Matrix::from_vec(n, out_dim, targets), current: Matrix::from_vec(n, out_dim, current) }
}

/// Every state as its own reconstruction target.
fn prepare_states(ep: &Episode, stats: &NormalizationStats) -> Prepared {
    let z: Vec<f64> = ep.states().iter_rows().flat_map(|s| stats.normalize(s)).collect();
    let m = Matrix::from_vec(ep.len(), stats.dim(), z);
    Prepared { inputs: m.clone(), targets: m.clone(), current: m }
}

/// Padded time-major batch: `inputs[t]` holds step `t` of every episode.
fn time_major(batch: &[&Prepared]) -> Vec<Matrix> {
    let steps = batch.iter().map(|p| p.inputs.rows()).max().unwrap_or(0);
    let cols = batch[0].inputs.cols();
    (0..steps)
        .map(|t| {
            let mut m = Matrix::zeros(batch.len(), cols);
            for (b, p) in batch.iter().enumerate() {
                if t < p.inputs.rows() {
                    m.row_mut(b).copy_from_slice(p.inputs.row(t));
                }
            }
            m
        })
        .collect()
}

fn stacked(batch: &[&Prepared]) -> Matrix {
    let cols = batch[0].inputs.cols();
    let data: Vec<f64> = batch.iter().flat_map(|p| p.inputs.as_slice().iter().copied()).collect();
    Matrix::from_vec(data.len() / cols, cols, data)
}

/// Network outputs for a batch, addressed as `(episode, step)`.
enum Outputs {
    TimeMajor(Vec<Matrix>),
    Stacked(Matrix, Vec<usize>),
}

impl Outputs {
    fn row(&self, b: usize, t: usize) -> &[f64] {
        match self {
            Outputs::TimeMajor(m) => m[t].row(b),
            Outputs::Stacked(m, starts) => m.row(starts[b] + t),
        }
    }
}

fn row_starts(batch: &[&Prepared]) -> Vec<usize> {
    batch
        .iter()
        .scan(0, |acc, p| {
            let s = *acc;
            *acc += p.inputs.rows();
            Some(s)
        })
        .collect()
}

fn infer(net: &Network, batch: &[&Prepared]) -> Result<Outputs> {
    if net.spec().has_recurrent() {
        Ok(Outputs::TimeMajor(net.infer_sequence(&time_major(batch), None)?.outputs))
    } else {
        Ok(Outputs::Stacked(net.infer_batch(&stacked(batch))?, row_starts(batch)))
    }
}

/// Per-dim squared-error sums of the model and of persistence, one entry per
/// episode, in episode order.
fn episode_errors(model: &InternalModel, prepared: &[Prepared]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::with_capacity(prepared.len());
    let refs: Vec<&Prepared> = prepared.iter().collect();
    for chunk in refs.chunks(EVAL_BATCH) {
        let outputs = infer(&model.network, chunk)?;
        for (b, p) in chunk.iter().enumerate() {
            let d = p.targets.cols();
            let mut m = vec![0.0; d];
            let mut q = vec![0.0; d];
            for t in 0..p.targets.rows() {
                let o = outputs.row(b, t);
                let (y, cur) = (p.targets.row(t), p.current.row(t));
                for k in 0..d {
                    let pred = if model.residual { cur[k] + o[k] } else { o[k] };
                    m[k] += (pred - y[k]) * (pred - y[k]);
                    q[k] += (cur[k] - y[k]) * (cur[k] - y[k]);
                }
            }
            out.push((m, q));
        }
    }
    Ok(out)
}

fn check_dataset(model_state_dim: usize, model_action_dim: usize, dataset: &TrajectoryDataset) -> Result<()> {
    if dataset.state_dim() != model_state_dim {
        return Err(config_err!("dataset state_dim {} does not match model {}", dataset.state_dim(), model_state_dim));
    }
    if model_action_dim > 0 && dataset.action_dim() != model_action_dim {
        return Err(config_err!("model needs actions of dim {model_action_dim}, dataset has {}", dataset.action_dim()));
    }
    Ok(())
}

/// Teacher-forced one-step errors over every `(s_t, s_{t+1})` pair, hidden
/// state reset per episode.
pub fn evaluate_model(model: &InternalModel, dataset: &TrajectoryDataset) -> Result<Evaluation> {
    check_dataset(model.state_dim(), model.action_dim(), dataset)?;
    let idx = model.selected_indices();
    let prepared: Vec<Prepared> = dataset.episodes().iter().map(|e| prepare_transitions(e, model.normalization(), model.kind(), idx)).collect();
    let errors = episode_errors(model, &prepared)?;
    let d = model.output_dim();
    let mut m = vec![0.0; d];
    let mut q = vec![0.0; d];
    for (em, eq) in &errors {
        for k in 0..d {
            m[k] += em[k];
            q[k] += eq[k];
        }
    }
    let n = dataset.transition_count();
    let per_dim_mse: Vec<f64> = m.iter().map(|s| s / n as f64).collect();
    let persistence_per_dim_mse: Vec<f64> = q.iter().map(|s| s / n as f64).collect();
    Ok(Evaluation {
        mse: per_dim_mse.iter().sum::<f64>() / d as f64,
        per_dim_mse,
        persistence_mse: persistence_per_dim_mse.iter().sum::<f64>() / d as f64,
        persistence_per_dim_mse,
        transitions: n,
    })
}

/// Mean negative log-likelihood per transition of the normalized targets
/// under `N(prediction, variance * I)`, computed step by step through the
/// public prediction API.
pub fn gaussian_nll(model: &InternalModel, dataset: &TrajectoryDataset, variance: f64) -> Result<f64> {
    check_dataset(model.state_dim(), model.action_dim(), dataset)?;
    let d = model.output_dim() as f64;
    let log_norm = 0.5 * d * (2.0 * std::f64::consts::PI * variance).ln();
    let mut total = 0.0;
    let mut n = 0usize;
    for ep in dataset.episodes() {
        let mut hidden = model.initial_hidden();
        for t in 0..ep.len() - 1 {
            let action = ep.actions().map(|a| a.row(t));
            let action = if model.action_dim() > 0 { action } else { None };
            let (err, h) = model.prediction_error(ep.state(t), action, ep.state(t + 1), hidden.as_ref())?;
            hidden = h;
            total += 0.5 * err * err / variance + log_norm;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Fits an internal model on whole episodes, holding out a seeded fraction of
/// them for early stopping; the best-validation parameters are returned.
pub fn train_internal_model(dataset: &TrajectoryDataset, config: &ModelConfig) -> Result<(InternalModel, TrainingReport)> {
    let started = Instant::now();
    config.validate(dataset.state_dim())?;
    let action_dim = if config.kind == ModelKind::StateAction {
        if !dataset.has_actions() {
            return Err(config_err!("state_action model needs a dataset with actions"));
        }
        dataset.action_dim()
    } else {
        0
    };
    let (train, val) = dataset.split(config.holdout_fraction, config.seed)?;
    let stats = compute_normalization(&train)?;
    let spec = config.network_spec(dataset.state_dim(), action_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::new(spec, &mut rng);
    let residual = config.residual();
    if residual {
        // start as the persistence predictor
        network.zero_output_layer();
    }
    let mut model = InternalModel::from_parts(config.kind, network, stats.clone(), config.selected_indices.clone(), residual, action_dim)?;

    let idx = config.selected_indices.as_deref();
    let train_rows: Vec<Prepared> = train
        .episodes()
        .iter()
        .map(|e| if config.kind == ModelKind::Generative { prepare_states(e, &stats) } else { prepare_transitions(e, &stats, config.kind, idx) })
        .collect();
    let val_rows: Vec<Prepared> = val.episodes().iter().map(|e| prepare_transitions(e, &stats, config.kind, idx)).collect();
    let val_transitions = val.transition_count();
    let out_dim = model.output_dim();
    let validation_loss = |m: &InternalModel| -> Result<(f64, f64)> {
        let errs = episode_errors(m, &val_rows)?;
        let (mut a, mut b) = (0.0, 0.0);
        for (em, eq) in &errs {
            a += em.iter().sum::<f64>();
            b += eq.iter().sum::<f64>();
        }
        let denom = (val_transitions * out_dim) as f64;
        Ok((a / denom, b / denom))
    };

    let mut adam = AdamState::new(model.network.params().len(), AdamConfig::with_lr(config.lr))?;
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut report = TrainingReport {
        kind: config.kind,
        epochs_run: 0,
        train_mse: Vec::new(),
        validation_mse: Vec::new(),
        best_epoch: 0,
        best_validation_mse: f64::INFINITY,
        persistence_mse: validation_loss(&model)?.1,
        train_episodes: train.len(),
        validation_episodes: val.len(),
        wall_ms: 0,
    };
    let mut best = model.network.params().clone();
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_episodes) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_rows[i]).collect();
            let (loss, n, mut grad) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("internal model loss became non-finite in epoch {epoch}")));
            }
            if config.clip_norm > 0.0 {
                clip_global_norm(&mut grad, config.clip_norm);
            }
            adam.step(model.network.params_mut().as_mut_slice(), &grad)
                .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
            loss_sum += loss * n as f64;
            count += n;
        }
        let (v, _) = validation_loss(&model)?;
        if !v.is_finite() {
            return Err(Error::Training(format!("validation loss became non-finite in epoch {epoch}")));
        }
        report.train_mse.push(loss_sum / count as f64);
        report.validation_mse.push(v);
        report.epochs_run = epoch + 1;
        if v < report.best_validation_mse {
            report.best_validation_mse = v;
            report.best_epoch = epoch;
            best = model.network.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    *model.network.params_mut() = best;
    report.wall_ms = started.elapsed().as_millis() as u64;
    Ok((model, report))
}

/// Mean squared error over the batch's valid rows and its parameter gradient.
/// Returns `(loss, rows, gradient)`.
fn batch_gradient(model: &InternalModel, batch: &[&Prepared]) -> Result<(f64, usize, Vec<f64>)> {
    let net = &model.network;
    let d = model.output_dim();
    let rows: usize = batch.iter().map(|p| p.targets.rows()).sum();
    let scale = 2.0 / (rows * d) as f64;
    let mut loss = 0.0;
    if net.spec().has_recurrent() {
        let out = net.forward_sequence(&time_major(batch), None)?;
        let mut grads: Vec<Matrix> = out.outputs.iter().map(|m| Matrix::zeros(m.rows(), d)).collect();
        for (t, (o, g)) in out.outputs.iter().zip(grads.iter_mut()).enumerate() {
            for (b, p) in batch.iter().enumerate() {
                if t >= p.targets.rows() {
                    continue;
                }
                let (y, cur, orow) = (p.targets.row(t), p.current.row(t), o.row(b));
                let grow = g.row_mut(b);
                for k in 0..d {
                    let pred = if model.residual { cur[k] + orow[k] } else { orow[k] };
                    let diff = pred - y[k];
                    loss += diff * diff;
                    grow[k] = scale * diff;
                }
            }
        }
        let grad = net.backward_sequence(out.cache.as_ref().expect("cache kept"), &grads)?;
        Ok((loss / (rows * d) as f64, rows, grad.params))
    } else {
        let x = stacked(batch);
        let (o, cache) = net.forward_batch(&x)?;
        let y: Vec<f64> = batch.iter().flat_map(|p| p.targets.as_slice().iter().copied()).collect();
        let mut g = Matrix::zeros(o.rows(), d);
        for ((gv, ov), yv) in g.as_mut_slice().iter_mut().zip(o.as_slice()).zip(&y) {
            let diff = ov - yv;
            loss += diff * diff;
            *gv = scale * diff;
        }
        let (grad, _) = net.backward_batch(&cache, &g)?;
        Ok((loss / (rows * d) as f64, rows, grad))
    }
}
