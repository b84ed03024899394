//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::matrix::Matrix;
use super::network::{backward_sequence, forward_sequence, infer_sequence, HiddenState};
use super::params::ParameterSet;
use super::spec::NetworkSpec;

/// A deterministic scalar loss over a parameter vector with its analytic gradient.
pub trait LossProbe {
    fn loss(&self, params: &ParameterSet) -> f64;
    fn gradient(&self, params: &ParameterSet) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check a seeded random subset of this many parameters instead of all of them.
    pub subset: Option<(usize, u64)>,
    /// Denominator floor of the relative error, so vanishing partials compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, subset: None, floor: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Partials skipped because the loss has a kink within the difference step.
    pub skipped_nonsmooth: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check(spec: &NetworkSpec, params: &ParameterSet, probe: &dyn LossProbe, tolerance: f64, options: GradCheckOptions) -> GradCheckReport {
    assert!(params.matches(spec), "parameters do not match spec");
    let analytic = probe.gradient(params);
    let n = params.len();
    let indices: Vec<usize> = match options.subset {
        Some((k, seed)) if k < n => {
            let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let mut probe_params = params.clone();
    let mut worst = (0.0f64, indices.first().copied().unwrap_or(0));
    let mut skipped = 0;
    let mut central = |i: usize, h: f64| {
        let orig = probe_params.as_slice()[i];
        probe_params.as_mut_slice()[i] = orig + h;
        let up = probe.loss(&probe_params);
        probe_params.as_mut_slice()[i] = orig - h;
        let down = probe.loss(&probe_params);
        probe_params.as_mut_slice()[i] = orig;
        (up - down) / (2.0 * h)
    };
    for &i in &indices {
        let numeric = central(i, options.step);
        // On a smooth loss the two estimates agree to O(h^2); a kink crossed
        // by the wide step but not the narrow one breaks that.
        let narrow = central(i, options.step * 0.1);
        if relative_error(numeric, narrow, options.floor) > tolerance.max(1e-6) {
            skipped += 1;
            continue;
        }
        let err = relative_error(analytic[i], numeric, options.floor);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: indices.len(),
        skipped_nonsmooth: skipped,
        tolerance,
        passed: worst.0 < tolerance,
    }
}

/// Mean-squared-error loss of a network over a fixed sequence:
/// `sum_t sum_b |y - target|^2 / (2 * batch * steps)`.
pub struct MseProbe {
    pub spec: NetworkSpec,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Matrix>,
    pub initial: Option<HiddenState>,
}

impl MseProbe {
    fn scale(&self) -> f64 {
        1.0 / (self.inputs.len() * self.inputs[0].rows()) as f64
    }
}

impl LossProbe for MseProbe {
    fn loss(&self, params: &ParameterSet) -> f64 {
        let out = infer_sequence(&self.spec, params, &self.inputs, self.initial.as_ref()).expect("probe forward");
        let mut total = 0.0;
        for (y, t) in out.outputs.iter().zip(&self.targets) {
            total += y.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        0.5 * total * self.scale()
    }

    fn gradient(&self, params: &ParameterSet) -> Vec<f64> {
        let out = forward_sequence(&self.spec, params, &self.inputs, self.initial.as_ref()).expect("probe forward");
        let s = self.scale();
        let grads: Vec<Matrix> = out
            .outputs
            .iter()
            .zip(&self.targets)
            .map(|(y, t)| {
                let data = y.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b) * s).collect();
                Matrix::from_vec(y.rows(), y.cols(), data)
            })
            .collect();
        backward_sequence(&self.spec, params, out.cache.as_ref().expect("cache"), &grads).expect("probe backward").params
    }
}

/// Wraps a probe and negates one partial derivative. Used to show the checker bites.
pub struct SignFlipped<'a> {
    pub inner: &'a dyn LossProbe,
    pub index: usize,
}

impl LossProbe for SignFlipped<'_> {
    fn loss(&self, params: &ParameterSet) -> f64 {
        self.inner.loss(params)
    }

    fn gradient(&self, params: &ParameterSet) -> Vec<f64> {
        let mut g = self.inner.gradient(params);
        g[self.index] = -g[self.index];
        g
    }
}
