use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{CellKind, LayerSpec, NetworkSpec};
use crate::error::{config_err, Error, Result};

/// Flat parameter storage for one [`NetworkSpec`], laid out layer by layer.
///
/// Dense block: `W (out x in)`, `b (out)`.
/// LSTM block: `Wx (4h x in)`, `Wh (4h x h)`, `b (4h)`; gate order input, forget, cell, output.
/// GRU block: `Wx (3h x in)`, `Wh (3h x h)`, `bx (3h)`, `bh (3h)`; gate order reset, update, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl ParameterSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParameterSet { values: vec![0.0; spec.parameter_count()], offsets: spec.offsets() }
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.parameter_count() {
            return Err(config_err!("expected {} parameters, got {}", spec.parameter_count(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        Ok(ParameterSet { values, offsets: spec.offsets() })
    }

    /// Glorot-uniform weights, zero biases, forget-gate bias 1 for LSTM cells.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.parameter_count());
        for layer in spec.layers() {
            match *layer {
                LayerSpec::Dense { input, output, .. } => {
                    let limit = (6.0 / (input + output) as f64).sqrt();
                    values.extend((0..output * input).map(|_| rng.gen_range(-limit..limit)));
                    values.extend(std::iter::repeat_n(0.0, output));
                }
                LayerSpec::Recurrent { input, hidden, cell } => {
                    let g = cell.gates();
                    let lx = (6.0 / (input + hidden) as f64).sqrt();
                    let lh = (6.0 / (2 * hidden) as f64).sqrt();
                    values.extend((0..g * hidden * input).map(|_| rng.gen_range(-lx..lx)));
                    values.extend((0..g * hidden * hidden).map(|_| rng.gen_range(-lh..lh)));
                    match cell {
                        CellKind::Lstm => {
                            for gate in 0..4 {
                                let b = if gate == 1 { 1.0 } else { 0.0 };
                                values.extend(std::iter::repeat_n(b, hidden));
                            }
                        }
                        CellKind::Gru => values.extend(std::iter::repeat_n(0.0, 2 * g * hidden)),
                    }
                }
            }
        }
        ParameterSet { values, offsets: spec.offsets() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.values.len() == spec.parameter_count()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Cheap content hash (FNV-1a over the IEEE bit patterns).
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.values)
    }

    /// `self <- tau * other + (1 - tau) * self`
    pub fn soft_update_from(&mut self, other: &ParameterSet, tau: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (t, o) in self.values.iter_mut().zip(&other.values) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
