use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ddpg::init_output_layer;
use super::{actor_spec, check_hidden, PolicyNetwork};
use crate::error::{config_err, Error, Result};
use crate::numerics::{AdamConfig, AdamState, Matrix, Network};
use crate::trajectories::{compute_normalization, TrajectoryDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { hidden: vec![400, 300], lr: 1e-3, batch_size: 64, max_epochs: 200, patience: 20, holdout_fraction: 0.2, seed: 0 }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        check_hidden("actor", &self.hidden)?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(config_err!("batch_size and max_epochs must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(config_err!("lr must be > 0"));
        }
        AdamConfig::with_lr(self.lr).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub epochs_run: usize,
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_mse: f64,
}

fn rows(policy: &PolicyNetwork, data: &TrajectoryDataset) -> (Matrix, Matrix) {
    let states = policy.normalize_batch(data.episodes().iter().flat_map(|e| e.states().iter_rows()));
    let actions: Vec<f64> = data.episodes().iter().flat_map(|e| e.actions().expect("checked").as_slice().iter().copied()).collect();
    let m = data.action_dim();
    (states, Matrix::from_vec(actions.len() / m, m, actions))
}

fn mse(net: &Network, x: &Matrix, y: &Matrix) -> Result<f64> {
    let out = net.infer_batch(x)?;
    Ok(out.as_slice().iter().zip(y.as_slice()).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / y.as_slice().len() as f64)
}

/// Supervised regression of expert actions on states with the actor
/// architecture (tanh output), early-stopped on held-out episodes.
pub fn behavior_cloning(dataset: &TrajectoryDataset, config: &BcConfig) -> Result<(PolicyNetwork, BcReport)> {
    config.validate()?;
    if !dataset.has_actions() {
        return Err(config_err!("behavior cloning needs a dataset with actions; this one is state-only"));
    }
    let (train, val) = dataset.split(config.holdout_fraction, config.seed)?;
    let stats = compute_normalization(&train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::new(actor_spec(dataset.state_dim(), &config.hidden, dataset.action_dim())?, &mut rng);
    init_output_layer(&mut net, 3e-3, &mut rng);
    let mut policy = PolicyNetwork::new(net, stats.mean, stats.std)?;
    let (x_train, y_train) = rows(&policy, &train);
    let (x_val, y_val) = rows(&policy, &val);
    if let Some(bad) = y_train.as_slice().iter().chain(y_val.as_slice()).find(|a| a.abs() > 1.0) {
        return Err(config_err!("expert action {bad} lies outside the actor's [-1, 1] range"));
    }

    let mut adam = AdamState::new(policy.network.params().len(), AdamConfig::with_lr(config.lr))?;
    let mut order: Vec<usize> = (0..x_train.rows()).collect();
    let mut report = BcReport { epochs_run: 0, train_mse: Vec::new(), validation_mse: Vec::new(), best_epoch: 0, best_validation_mse: f64::INFINITY };
    let mut best = policy.network.clone();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = Matrix::from_rows(&chunk.iter().map(|&i| x_train.row(i)).collect::<Vec<_>>());
            let y = Matrix::from_rows(&chunk.iter().map(|&i| y_train.row(i)).collect::<Vec<_>>());
            let (out, cache) = policy.network.forward_batch(&x)?;
            let n = y.as_slice().len() as f64;
            let mut grad = Matrix::zeros(out.rows(), out.cols());
            for (g, (o, t)) in grad.as_mut_slice().iter_mut().zip(out.as_slice().iter().zip(y.as_slice())) {
                *g = 2.0 * (o - t) / n;
                total += (o - t) * (o - t);
            }
            let (g, _) = policy.network.backward_batch(&cache, &grad)?;
            adam.step(policy.network.params_mut().as_mut_slice(), &g)?;
        }
        let train_mse = total / y_train.as_slice().len() as f64;
        let v = mse(&policy.network, &x_val, &y_val)?;
        if !train_mse.is_finite() || !v.is_finite() {
            return Err(Error::Training(format!("behavior cloning loss became non-finite in epoch {epoch}")));
        }
        report.train_mse.push(train_mse);
        report.validation_mse.push(v);
        report.epochs_run = epoch + 1;
        if v < report.best_validation_mse {
            report.best_validation_mse = v;
            report.best_epoch = epoch;
            best = policy.network.clone();
        } else if epoch - report.best_epoch >= config.patience {
            break;
        }
    }
    policy.network = best;
    Ok((policy, report))
}
