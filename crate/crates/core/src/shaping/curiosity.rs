use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, usage_err, Error, Result};
use crate::numerics::{Activation, AdamConfig, AdamState, Matrix, Network, NetworkSpec};

/// Online forward model `theta_F(phi(s_t), a_t) -> phi(s_{t+1})` with `phi`
/// the identity. The network sees unit-scaled inputs and predicts the scaled
/// change of state; errors are reported in raw feature units.
#[derive(Clone, Debug)]
pub struct CuriosityForwardModel {
    network: Network,
    adam: AdamState,
    scale: Vec<f64>,
    action_dim: usize,
}

impl CuriosityForwardModel {
    /// `scale` gives per-dimension state magnitudes (e.g. the environment's
    /// observation scale); the untrained model predicts no change.
    pub fn new(scale: Vec<f64>, action_dim: usize, hidden: &[usize], lr: f64, seed: u64) -> Result<Self> {
        if scale.is_empty() || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(config_err!("curiosity scale must be non-empty, positive and finite"));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(config_err!("curiosity lr must be > 0, got {lr}"));
        }
        let dim = scale.len();
        let spec = NetworkSpec::mlp(dim + action_dim, hidden, Activation::Tanh, dim, Activation::Identity)?;
        let mut network = Network::new(spec, &mut ChaCha8Rng::seed_from_u64(seed));
        network.zero_output_layer();
        let adam = AdamState::new(network.params().len(), AdamConfig::with_lr(lr))?;
        Ok(CuriosityForwardModel { network, adam, scale, action_dim })
    }

    /// Dimension of `phi(s)`; equals the state dimension.
    pub fn feature_dim(&self) -> usize {
        self.scale.len()
    }

    pub fn features(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn updates(&self) -> u64 {
        self.adam.steps()
    }

    fn input(&self, state: &[f64], action: &[f64]) -> Result<Matrix> {
        if state.len() != self.scale.len() || action.len() != self.action_dim {
            return Err(usage_err!(
                "curiosity model expects state {} / action {}, got {} / {}",
                self.scale.len(),
                self.action_dim,
                state.len(),
                action.len()
            ));
        }
        let mut x: Vec<f64> = state.iter().zip(&self.scale).map(|(s, k)| s / k).collect();
        x.extend_from_slice(action);
        Ok(Matrix::row_vector(&x))
    }

    /// Predicted `phi(s_{t+1})`.
    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let out = self.network.infer_batch(&self.input(state, action)?)?;
        Ok(state.iter().zip(out.row(0)).zip(&self.scale).map(|((s, d), k)| s + d * k).collect())
    }

    /// `|phi(s_{t+1}) - theta_F(phi(s_t), a_t)|_2`.
    pub fn error(&self, state: &[f64], action: &[f64], next: &[f64]) -> Result<f64> {
        if next.len() != self.scale.len() {
            return Err(usage_err!("next state has {} components, expected {}", next.len(), self.scale.len()));
        }
        let pred = self.predict(state, action)?;
        Ok(pred.iter().zip(next).map(|(p, n)| (p - n) * (p - n)).sum::<f64>().sqrt())
    }

    /// One Adam step on the scaled squared error of this transition; returns
    /// the loss before the step.
    pub fn update(&mut self, state: &[f64], action: &[f64], next: &[f64]) -> Result<f64> {
        if next.len() != self.scale.len() {
            return Err(usage_err!("next state has {} components, expected {}", next.len(), self.scale.len()));
        }
        let (out, cache) = self.network.forward_batch(&self.input(state, action)?)?;
        let n = self.scale.len() as f64;
        let mut loss = 0.0;
        let mut grad = Matrix::zeros(1, self.scale.len());
        for k in 0..self.scale.len() {
            let e = out.get(0, k) - (next[k] - state[k]) / self.scale[k];
            loss += e * e / n;
            grad.set(0, k, 2.0 * e / n);
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!("curiosity forward-model loss is not finite after {} updates", self.updates())));
        }
        let (g, _) = self.network.backward_batch(&cache, &grad)?;
        self.adam.step(self.network.params_mut().as_mut_slice(), &g)?;
        Ok(loss)
    }
}

/// `eta * |phi(s_{t+1}) - theta_F(phi(s_t), a_t)|_2` under the current model,
/// followed by one online update on the same transition. Returns the reward
/// and the training loss of that update.
pub fn curiosity_reward(model: &mut CuriosityForwardModel, state: &[f64], action: &[f64], next: &[f64], eta: f64) -> Result<(f64, f64)> {
    let reward = eta * model.error(state, action, next)?;
    let loss = model.update(state, action, next)?;
    Ok((reward, loss))
}
