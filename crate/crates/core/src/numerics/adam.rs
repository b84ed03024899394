use serde::{Deserialize, Serialize};

use crate::error::{config_err, usage_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes parameters, which tests rely on.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(config_err!("adam lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err!("adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(config_err!("adam eps must be > 0"));
        }
        Ok(())
    }
}

/// Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState { config, t: 0, m: vec![0.0; len], v: vec![0.0; len] })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update. A non-finite gradient leaves both the
    /// parameters and the moments untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(usage_err!("adam state sized {} got params {} / grad {}", self.m.len(), params.len(), grad.len()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at index {i}")));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_freezes_params() {
        let mut s = AdamState::new(3, AdamConfig::with_lr(0.0)).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..10 {
            s.step(&mut p, &[0.5, -0.1, 9.0]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_betas_give_sign_steps() {
        let cfg = AdamConfig { lr: 0.01, beta1: 0.0, beta2: 0.0, eps: 1e-8 };
        let mut s = AdamState::new(3, cfg).unwrap();
        let mut p = vec![0.0; 3];
        s.step(&mut p, &[4.0, -0.5, 1e3]).unwrap();
        for (pi, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((pi - sign * 0.01).abs() < 1e-9, "{pi}");
        }
    }

    #[test]
    fn quadratic_converges_like_independent_recursion() {
        // Oracle: the scalar Adam recursion written out longhand.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (w - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut s = AdamState::new(1, AdamConfig::with_lr(0.1)).unwrap();
        let mut p = [0.0];
        for _ in 0..100 {
            let g = [2.0 * (p[0] - 3.0)];
            s.step(&mut p, &g).unwrap();
        }
        assert_eq!(p[0], w);
        assert!((p[0] - 3.0).abs() < 0.5, "w = {}", p[0]);
        assert_eq!(s.steps(), 100);
    }

    #[test]
    fn momentum_moves_params_under_zero_gradient() {
        let mut s = AdamState::new(1, AdamConfig::default()).unwrap();
        let mut p = [1.0];
        s.step(&mut p, &[1.0]).unwrap();
        let before = p[0];
        s.step(&mut p, &[0.0]).unwrap();
        assert_ne!(p[0], before);

        let mut fresh = AdamState::new(1, AdamConfig::default()).unwrap();
        let mut q = [1.0];
        fresh.step(&mut q, &[0.0]).unwrap();
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_leaves_state_untouched() {
        let mut s = AdamState::new(2, AdamConfig::default()).unwrap();
        let mut p = [1.0, 2.0];
        s.step(&mut p, &[0.1, 0.1]).unwrap();
        let (snapshot, params) = (s.clone(), p);
        assert!(matches!(s.step(&mut p, &[f64::INFINITY, 0.0]), Err(Error::Numeric(_))));
        assert_eq!(s, snapshot);
        assert_eq!(p, params);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(AdamState::new(1, AdamConfig { beta1: 1.0, ..Default::default() }).is_err());
        assert!(AdamState::new(1, AdamConfig { eps: 0.0, ..Default::default() }).is_err());
        assert!(AdamState::new(1, AdamConfig::with_lr(-1.0)).is_err());
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
