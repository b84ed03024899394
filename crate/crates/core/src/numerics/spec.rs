use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub(crate) fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize, activation: Activation },
    Recurrent { input: usize, hidden: usize, cell: CellKind },
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize, activation: Activation) -> Self {
        LayerSpec::Dense { input, output, activation }
    }

    pub fn lstm(input: usize, hidden: usize) -> Self {
        LayerSpec::Recurrent { input, hidden, cell: CellKind::Lstm }
    }

    pub fn gru(input: usize, hidden: usize) -> Self {
        LayerSpec::Recurrent { input, hidden, cell: CellKind::Gru }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, .. } | LayerSpec::Recurrent { input, .. } => input,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::Recurrent { hidden, .. } => hidden,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, LayerSpec::Recurrent { .. })
    }

    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output, .. } => output * input + output,
            // LSTM: Wx, Wh, b. GRU keeps separate input and hidden biases.
            LayerSpec::Recurrent { input, hidden, cell: CellKind::Lstm } => 4 * hidden * (input + hidden + 1),
            LayerSpec::Recurrent { input, hidden, cell: CellKind::Gru } => 3 * hidden * (input + hidden + 2),
        }
    }
}

/// An ordered stack of layers. Construct through [`NetworkSpec::new`] so the
/// dimension chain is validated.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Feed-forward stack: `hidden` sizes with `activation`, then a head of `output` units.
    pub fn mlp(input: usize, hidden: &[usize], activation: Activation, output: usize, head: Activation) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerSpec::dense(prev, h, activation));
            prev = h;
        }
        layers.push(LayerSpec::dense(prev, output, head));
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(config_err!("network has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.input_dim() == 0 || l.output_dim() == 0 {
                return Err(config_err!("layer {i} has a zero dimension"));
            }
            if i > 0 {
                let prev = self.layers[i - 1].output_dim();
                if prev != l.input_dim() {
                    return Err(config_err!("layer {i} expects {} inputs but layer {} emits {prev}", l.input_dim(), i - 1));
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn has_recurrent(&self) -> bool {
        self.layers.iter().any(LayerSpec::is_recurrent)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    /// Start offset of each layer's block in the flat parameter array.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = acc;
                acc += l.parameter_count();
                o
            })
            .collect()
    }

    /// Canonical single-line JSON used in file headers and fingerprints.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_broken_chain() {
        let err = NetworkSpec::new(vec![LayerSpec::dense(3, 4, Activation::Tanh), LayerSpec::dense(5, 1, Activation::Identity)]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(NetworkSpec::new(vec![LayerSpec::lstm(0, 4)]).is_err());
        assert!(NetworkSpec::new(vec![]).is_err());
    }

    #[test]
    fn parameter_counts() {
        let spec = NetworkSpec::new(vec![LayerSpec::lstm(7, 8), LayerSpec::gru(8, 5), LayerSpec::dense(5, 2, Activation::Identity)]).unwrap();
        assert_eq!(spec.parameter_count(), 4 * 8 * 16 + 3 * 5 * 15 + 12);
        assert_eq!(spec.offsets(), vec![0, 512, 512 + 225]);
    }

    #[test]
    fn canonical_json_round_trips() {
        let spec = NetworkSpec::mlp(4, &[16, 16], Activation::Relu, 2, Activation::Tanh).unwrap();
        let back: NetworkSpec = serde_json::from_str(&spec.canonical_json()).unwrap();
        assert_eq!(back, spec);
    }
}
