//! Minimal neural-network core: dense, LSTM and GRU layers with exact
//! backpropagation, Adam, a finite-difference gradient checker and the
//! parameter file format.

mod adam;
mod gradcheck;
pub mod io;
mod matrix;
mod network;
mod params;
mod spec;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, LossProbe, MseProbe, SignFlipped};
pub use matrix::Matrix;
pub use network::{
    backward, backward_sequence, forward, forward_sequence, infer_sequence, ForwardCache, Gradients, HiddenState, Network,
    RecurrentState, SequenceOutput, StepOutput,
};
pub use params::ParameterSet;
pub use spec::{Activation, CellKind, LayerSpec, NetworkSpec};
