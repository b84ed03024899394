//! Forward and backward passes for stacks of dense and recurrent layers.
//!
//! Everything is expressed over sequences of batches: `inputs[t]` is a
//! `batch x input_dim` matrix for time step `t`. A feed-forward evaluation is
//! a sequence of length one. Backpropagation through time runs over the whole
//! supplied sequence; the initial hidden state is treated as a constant.

use serde::{Deserialize, Serialize};

use super::matrix::{add_column_sums, add_g_w, add_gt_x, add_x_wt, Matrix};
use super::params::ParameterSet;
use super::spec::{Activation, CellKind, LayerSpec, NetworkSpec};
use crate::error::{config_err, usage_err, Error, Result};

/// Recurrent state of one layer. `c` is the LSTM cell; GRU layers leave it `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Matrix,
    pub c: Option<Matrix>,
}

/// Per-layer recurrent state for every recurrent layer of a network, in layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    layers: Vec<RecurrentState>,
}

impl HiddenState {
    pub fn zeros(spec: &NetworkSpec, batch: usize) -> Self {
        let layers = spec
            .layers()
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Recurrent { hidden, cell, .. } => Some(RecurrentState {
                    h: Matrix::zeros(batch, hidden),
                    c: (cell == CellKind::Lstm).then(|| Matrix::zeros(batch, hidden)),
                }),
                LayerSpec::Dense { .. } => None,
            })
            .collect();
        HiddenState { layers }
    }

    pub fn layers(&self) -> &[RecurrentState] {
        &self.layers
    }

    pub fn batch(&self) -> Option<usize> {
        self.layers.first().map(|l| l.h.rows())
    }

    fn check(&self, spec: &NetworkSpec, batch: usize) -> Result<()> {
        let expected = HiddenState::zeros(spec, batch);
        let shapes_ok = self.layers.len() == expected.layers.len()
            && self.layers.iter().zip(&expected.layers).all(|(a, b)| {
                a.h.rows() == b.h.rows()
                    && a.h.cols() == b.h.cols()
                    && a.c.as_ref().map(|c| (c.rows(), c.cols())) == b.c.as_ref().map(|c| (c.rows(), c.cols()))
            });
        if shapes_ok {
            Ok(())
        } else {
            Err(config_err!("hidden state does not match network spec for batch {batch}"))
        }
    }
}

#[derive(Clone, Debug)]
struct LstmStep {
    h_prev: Matrix,
    c_prev: Matrix,
    /// post-activation gates, `batch x 4h`
    gates: Matrix,
    tanh_c: Matrix,
}

#[derive(Clone, Debug)]
struct GruStep {
    h_prev: Matrix,
    /// post-activation r, z, n, `batch x 3h`
    gates: Matrix,
    /// `Whn h + bhn`, needed for the reset-gate gradient
    hidden_candidate: Matrix,
}

#[derive(Clone, Debug)]
enum LayerCache {
    Dense { inputs: Vec<Matrix>, outputs: Vec<Matrix> },
    Lstm { inputs: Vec<Matrix>, steps: Vec<LstmStep> },
    Gru { inputs: Vec<Matrix>, steps: Vec<GruStep> },
}

/// Activations retained by a forward pass; consumed by [`backward_sequence`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    spec: NetworkSpec,
    fingerprint: u64,
    batch: usize,
    steps: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[derive(Clone, Debug)]
pub struct SequenceOutput {
    pub outputs: Vec<Matrix>,
    pub hidden: HiddenState,
    pub cache: Option<ForwardCache>,
}

/// Gradient of a scalar loss with respect to the parameters and the inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub inputs: Vec<Matrix>,
}

fn check_inputs(spec: &NetworkSpec, inputs: &[Matrix]) -> Result<usize> {
    let first = inputs.first().ok_or_else(|| config_err!("empty input sequence"))?;
    let batch = first.rows();
    if batch == 0 {
        return Err(config_err!("empty batch"));
    }
    for (t, x) in inputs.iter().enumerate() {
        if x.cols() != spec.input_dim() {
            return Err(config_err!("input at step {t} has {} columns, network expects {}", x.cols(), spec.input_dim()));
        }
        if x.rows() != batch {
            return Err(config_err!("input at step {t} has {} rows, expected {batch}", x.rows()));
        }
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite input at step {t}")));
        }
    }
    Ok(batch)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn rows_filled_with(rows: usize, bias: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(rows, bias.len());
    for r in 0..rows {
        m.row_mut(r).copy_from_slice(bias);
    }
    m
}

fn dense_forward(x: &Matrix, w: &[f64], b: &[f64], activation: Activation) -> Matrix {
    let mut out = rows_filled_with(x.rows(), b);
    add_x_wt(x, w, &mut out);
    if activation != Activation::Identity {
        for v in out.as_mut_slice() {
            *v = activation.apply(*v);
        }
    }
    out
}

fn lstm_step(x: &Matrix, prev: &RecurrentState, block: &[f64], input: usize, hidden: usize) -> (RecurrentState, LstmStep) {
    let (wx, rest) = block.split_at(4 * hidden * input);
    let (wh, b) = rest.split_at(4 * hidden * hidden);
    let batch = x.rows();
    let mut gates = rows_filled_with(batch, b);
    add_x_wt(x, wx, &mut gates);
    add_x_wt(&prev.h, wh, &mut gates);
    let c_prev = prev.c.as_ref().expect("lstm state carries a cell");
    let mut h = Matrix::zeros(batch, hidden);
    let mut c = Matrix::zeros(batch, hidden);
    let mut tanh_c = Matrix::zeros(batch, hidden);
    for r in 0..batch {
        let g = gates.row_mut(r);
        for k in 0..hidden {
            g[k] = sigmoid(g[k]);
            g[hidden + k] = sigmoid(g[hidden + k]);
            g[2 * hidden + k] = g[2 * hidden + k].tanh();
            g[3 * hidden + k] = sigmoid(g[3 * hidden + k]);
        }
        let g = gates.row(r);
        let cp = c_prev.row(r);
        let (cr, tr, hr) = (c.row_mut(r), tanh_c.row_mut(r), h.row_mut(r));
        for k in 0..hidden {
            let ck = g[hidden + k] * cp[k] + g[k] * g[2 * hidden + k];
            cr[k] = ck;
            tr[k] = ck.tanh();
            hr[k] = g[3 * hidden + k] * tr[k];
        }
    }
    let step = LstmStep { h_prev: prev.h.clone(), c_prev: c_prev.clone(), gates, tanh_c };
    (RecurrentState { h, c: Some(c) }, step)
}

fn gru_step(x: &Matrix, prev: &RecurrentState, block: &[f64], input: usize, hidden: usize) -> (RecurrentState, GruStep) {
    let (wx, rest) = block.split_at(3 * hidden * input);
    let (wh, rest) = rest.split_at(3 * hidden * hidden);
    let (bx, bh) = rest.split_at(3 * hidden);
    let batch = x.rows();
    let mut gx = rows_filled_with(batch, bx);
    add_x_wt(x, wx, &mut gx);
    let mut gh = rows_filled_with(batch, bh);
    add_x_wt(&prev.h, wh, &mut gh);
    let mut gates = Matrix::zeros(batch, 3 * hidden);
    let mut hidden_candidate = Matrix::zeros(batch, hidden);
    let mut h = Matrix::zeros(batch, hidden);
    for r in 0..batch {
        let (gxr, ghr, hp) = (gx.row(r), gh.row(r), prev.h.row(r));
        let g = gates.row_mut(r);
        let hc = hidden_candidate.row_mut(r);
        let hr = h.row_mut(r);
        for k in 0..hidden {
            let rg = sigmoid(gxr[k] + ghr[k]);
            let zg = sigmoid(gxr[hidden + k] + ghr[hidden + k]);
            hc[k] = ghr[2 * hidden + k];
            let ng = (gxr[2 * hidden + k] + rg * hc[k]).tanh();
            g[k] = rg;
            g[hidden + k] = zg;
            g[2 * hidden + k] = ng;
            hr[k] = (1.0 - zg) * ng + zg * hp[k];
        }
    }
    let step = GruStep { h_prev: prev.h.clone(), gates, hidden_candidate };
    (RecurrentState { h, c: None }, step)
}

/// Runs the network over `inputs`, keeping the cache needed for [`backward_sequence`].
/// `initial = None` starts recurrent layers from zero state.
pub fn forward_sequence(spec: &NetworkSpec, params: &ParameterSet, inputs: &[Matrix], initial: Option<&HiddenState>) -> Result<SequenceOutput> {
    run(spec, params, inputs, initial, true)
}

/// As [`forward_sequence`] without retaining activations.
pub fn infer_sequence(spec: &NetworkSpec, params: &ParameterSet, inputs: &[Matrix], initial: Option<&HiddenState>) -> Result<SequenceOutput> {
    run(spec, params, inputs, initial, false)
}

fn run(spec: &NetworkSpec, params: &ParameterSet, inputs: &[Matrix], initial: Option<&HiddenState>, keep: bool) -> Result<SequenceOutput> {
    if !params.matches(spec) {
        return Err(config_err!("parameter set has {} values, spec needs {}", params.len(), spec.parameter_count()));
    }
    let batch = check_inputs(spec, inputs)?;
    let start = match initial {
        Some(h) => {
            h.check(spec, batch)?;
            h.clone()
        }
        None => HiddenState::zeros(spec, batch),
    };
    let offsets = spec.offsets();
    let p = params.as_slice();
    let mut current: Vec<Matrix> = inputs.to_vec();
    let mut caches = Vec::new();
    let mut final_states = Vec::new();
    let mut recurrent_index = 0;
    for (li, layer) in spec.layers().iter().enumerate() {
        let block = &p[offsets[li]..offsets[li] + layer.parameter_count()];
        match *layer {
            LayerSpec::Dense { input, output, activation } => {
                let (w, b) = block.split_at(output * input);
                let outputs: Vec<Matrix> = current.iter().map(|x| dense_forward(x, w, b, activation)).collect();
                if keep {
                    caches.push(LayerCache::Dense { inputs: std::mem::take(&mut current), outputs: outputs.clone() });
                }
                current = outputs;
            }
            LayerSpec::Recurrent { input, hidden, cell } => {
                let mut state = start.layers[recurrent_index].clone();
                recurrent_index += 1;
                let mut outputs = Vec::with_capacity(current.len());
                match cell {
                    CellKind::Lstm => {
                        let mut steps = Vec::new();
                        for x in &current {
                            let (next, step) = lstm_step(x, &state, block, input, hidden);
                            outputs.push(next.h.clone());
                            if keep {
                                steps.push(step);
                            }
                            state = next;
                        }
                        if keep {
                            caches.push(LayerCache::Lstm { inputs: std::mem::take(&mut current), steps });
                        }
                    }
                    CellKind::Gru => {
                        let mut steps = Vec::new();
                        for x in &current {
                            let (next, step) = gru_step(x, &state, block, input, hidden);
                            outputs.push(next.h.clone());
                            if keep {
                                steps.push(step);
                            }
                            state = next;
                        }
                        if keep {
                            caches.push(LayerCache::Gru { inputs: std::mem::take(&mut current), steps });
                        }
                    }
                }
                final_states.push(state);
                current = outputs;
            }
        }
    }
    let cache = keep.then(|| ForwardCache {
        spec: spec.clone(),
        fingerprint: params.fingerprint(),
        batch,
        steps: inputs.len(),
        layers: caches,
    });
    Ok(SequenceOutput { outputs: current, hidden: HiddenState { layers: final_states }, cache })
}

/// Backpropagates `grad_outputs[t]` (dLoss/dOutput at step `t`) through the cached pass.
pub fn backward_sequence(spec: &NetworkSpec, params: &ParameterSet, cache: &ForwardCache, grad_outputs: &[Matrix]) -> Result<Gradients> {
    if &cache.spec != spec {
        return Err(usage_err!("cache was produced by a different network spec"));
    }
    if cache.fingerprint != params.fingerprint() {
        return Err(usage_err!("cache is stale: parameters changed since the forward pass"));
    }
    if grad_outputs.len() != cache.steps {
        return Err(usage_err!("{} output gradients for a {}-step forward pass", grad_outputs.len(), cache.steps));
    }
    for (t, g) in grad_outputs.iter().enumerate() {
        if g.rows() != cache.batch || g.cols() != spec.output_dim() {
            return Err(usage_err!("output gradient at step {t} has shape {}x{}", g.rows(), g.cols()));
        }
    }
    let offsets = spec.offsets();
    let p = params.as_slice();
    let mut grads = vec![0.0; spec.parameter_count()];
    let mut upstream: Vec<Matrix> = grad_outputs.to_vec();
    for (li, layer) in spec.layers().iter().enumerate().rev() {
        let block = &p[offsets[li]..offsets[li] + layer.parameter_count()];
        let gblock = &mut grads[offsets[li]..offsets[li] + layer.parameter_count()];
        upstream = match (layer, &cache.layers[li]) {
            (&LayerSpec::Dense { input, output, activation }, LayerCache::Dense { inputs, outputs }) => {
                dense_backward(block, gblock, input, output, activation, inputs, outputs, &upstream)
            }
            (&LayerSpec::Recurrent { input, hidden, .. }, LayerCache::Lstm { inputs, steps }) => {
                lstm_backward(block, gblock, input, hidden, inputs, steps, &upstream)
            }
            (&LayerSpec::Recurrent { input, hidden, .. }, LayerCache::Gru { inputs, steps }) => {
                gru_backward(block, gblock, input, hidden, inputs, steps, &upstream)
            }
            _ => return Err(usage_err!("cache layout does not match layer {li}")),
        };
    }
    Ok(Gradients { params: grads, inputs: upstream })
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    block: &[f64],
    gblock: &mut [f64],
    input: usize,
    output: usize,
    activation: Activation,
    inputs: &[Matrix],
    outputs: &[Matrix],
    upstream: &[Matrix],
) -> Vec<Matrix> {
    let (w, _) = block.split_at(output * input);
    let (dw, db) = gblock.split_at_mut(output * input);
    let mut down = Vec::with_capacity(inputs.len());
    for ((x, y), gy) in inputs.iter().zip(outputs).zip(upstream) {
        let mut gz = gy.clone();
        if activation != Activation::Identity {
            for (g, &yv) in gz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *g *= activation.derivative_from_output(yv);
            }
        }
        add_gt_x(&gz, x, dw);
        add_column_sums(&gz, db);
        let mut gx = Matrix::zeros(x.rows(), input);
        add_g_w(&gz, w, &mut gx);
        down.push(gx);
    }
    down
}

fn lstm_backward(
    block: &[f64],
    gblock: &mut [f64],
    input: usize,
    hidden: usize,
    inputs: &[Matrix],
    steps: &[LstmStep],
    upstream: &[Matrix],
) -> Vec<Matrix> {
    let (wx, rest) = block.split_at(4 * hidden * input);
    let (wh, _) = rest.split_at(4 * hidden * hidden);
    let (dwx, grest) = gblock.split_at_mut(4 * hidden * input);
    let (dwh, db) = grest.split_at_mut(4 * hidden * hidden);
    let batch = inputs[0].rows();
    let mut dh_next = Matrix::zeros(batch, hidden);
    let mut dc_next = Matrix::zeros(batch, hidden);
    let mut down = vec![Matrix::zeros(batch, input); inputs.len()];
    for t in (0..inputs.len()).rev() {
        let s = &steps[t];
        let mut dpre = Matrix::zeros(batch, 4 * hidden);
        for r in 0..batch {
            let g = s.gates.row(r);
            let tc = s.tanh_c.row(r);
            let cp = s.c_prev.row(r);
            let up = upstream[t].row(r);
            let dhn = dh_next.row(r);
            let dcn = dc_next.row_mut(r);
            let d = dpre.row_mut(r);
            for k in 0..hidden {
                let (i, f, gg, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
                let dh = up[k] + dhn[k];
                let dc = dcn[k] + dh * o * (1.0 - tc[k] * tc[k]);
                d[k] = dc * gg * i * (1.0 - i);
                d[hidden + k] = dc * cp[k] * f * (1.0 - f);
                d[2 * hidden + k] = dc * i * (1.0 - gg * gg);
                d[3 * hidden + k] = dh * tc[k] * o * (1.0 - o);
                dcn[k] = dc * f;
            }
        }
        add_gt_x(&dpre, &inputs[t], dwx);
        add_gt_x(&dpre, &s.h_prev, dwh);
        add_column_sums(&dpre, db);
        add_g_w(&dpre, wx, &mut down[t]);
        let mut dh = Matrix::zeros(batch, hidden);
        add_g_w(&dpre, wh, &mut dh);
        dh_next = dh;
    }
    down
}

fn gru_backward(
    block: &[f64],
    gblock: &mut [f64],
    input: usize,
    hidden: usize,
    inputs: &[Matrix],
    steps: &[GruStep],
    upstream: &[Matrix],
) -> Vec<Matrix> {
    let (wx, rest) = block.split_at(3 * hidden * input);
    let (wh, _) = rest.split_at(3 * hidden * hidden);
    let (dwx, grest) = gblock.split_at_mut(3 * hidden * input);
    let (dwh, grest) = grest.split_at_mut(3 * hidden * hidden);
    let (dbx, dbh) = grest.split_at_mut(3 * hidden);
    let batch = inputs[0].rows();
    let mut dh_next = Matrix::zeros(batch, hidden);
    let mut down = vec![Matrix::zeros(batch, input); inputs.len()];
    for t in (0..inputs.len()).rev() {
        let s = &steps[t];
        let mut dgx = Matrix::zeros(batch, 3 * hidden);
        let mut dgh = Matrix::zeros(batch, 3 * hidden);
        let mut dh_direct = Matrix::zeros(batch, hidden);
        for r in 0..batch {
            let g = s.gates.row(r);
            let hc = s.hidden_candidate.row(r);
            let hp = s.h_prev.row(r);
            let up = upstream[t].row(r);
            let dhn = dh_next.row(r);
            let (gx, gh, dd) = (dgx.row_mut(r), dgh.row_mut(r), dh_direct.row_mut(r));
            for k in 0..hidden {
                let (rg, zg, ng) = (g[k], g[hidden + k], g[2 * hidden + k]);
                let dh = up[k] + dhn[k];
                let dn_pre = dh * (1.0 - zg) * (1.0 - ng * ng);
                let dz_pre = dh * (hp[k] - ng) * zg * (1.0 - zg);
                let dr_pre = dn_pre * hc[k] * rg * (1.0 - rg);
                gx[k] = dr_pre;
                gx[hidden + k] = dz_pre;
                gx[2 * hidden + k] = dn_pre;
                gh[k] = dr_pre;
                gh[hidden + k] = dz_pre;
                gh[2 * hidden + k] = dn_pre * rg;
                dd[k] = dh * zg;
            }
        }
        add_gt_x(&dgx, &inputs[t], dwx);
        add_column_sums(&dgx, dbx);
        add_gt_x(&dgh, &s.h_prev, dwh);
        add_column_sums(&dgh, dbh);
        add_g_w(&dgx, wx, &mut down[t]);
        add_g_w(&dgh, wh, &mut dh_direct);
        dh_next = dh_direct;
    }
    down
}

/// Single-vector forward step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub output: Vec<f64>,
    /// `Some` iff the network has recurrent layers.
    pub hidden: Option<HiddenState>,
    pub cache: ForwardCache,
}

/// One input vector through the network. `hidden` must be supplied exactly when
/// the spec contains recurrent layers.
pub fn forward(spec: &NetworkSpec, params: &ParameterSet, input: &[f64], hidden: Option<&HiddenState>) -> Result<StepOutput> {
    match (spec.has_recurrent(), hidden.is_some()) {
        (true, false) => return Err(config_err!("recurrent network requires a hidden state")),
        (false, true) => return Err(config_err!("feed-forward network does not take a hidden state")),
        _ => {}
    }
    let out = forward_sequence(spec, params, &[Matrix::row_vector(input)], hidden)?;
    let output = out.outputs[0].row(0).to_vec();
    let hidden = spec.has_recurrent().then_some(out.hidden);
    Ok(StepOutput { output, hidden, cache: out.cache.expect("cache requested") })
}

/// Gradients for a [`forward`] call: `(dLoss/dParams, dLoss/dInput)`.
pub fn backward(spec: &NetworkSpec, params: &ParameterSet, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if cache.batch != 1 || cache.steps != 1 {
        return Err(usage_err!("cache is not from a single-vector forward pass"));
    }
    let g = backward_sequence(spec, params, cache, &[Matrix::row_vector(output_grad)])?;
    let input = g.inputs[0].row(0).to_vec();
    Ok((g.params, input))
}

/// A spec with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    params: ParameterSet,
}

impl Network {
    pub fn new<R: rand::Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let params = ParameterSet::init(&spec, rng);
        Network { spec, params }
    }

    pub fn from_parts(spec: NetworkSpec, params: ParameterSet) -> Result<Self> {
        if !params.matches(&spec) {
            return Err(config_err!("parameter set does not match spec"));
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Zeroes the last layer, so the network initially outputs zero.
    pub fn zero_output_layer(&mut self) {
        let start = *self.params.offsets().last().expect("specs have at least one layer");
        self.params.as_mut_slice()[start..].fill(0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Feed-forward evaluation of a batch, keeping the cache.
    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let mut out = forward_sequence(&self.spec, &self.params, std::slice::from_ref(x), None)?;
        Ok((out.outputs.pop().expect("one step"), out.cache.expect("cache requested")))
    }

    pub fn infer_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = infer_sequence(&self.spec, &self.params, std::slice::from_ref(x), None)?;
        Ok(out.outputs.pop().expect("one step"))
    }

    /// `(dLoss/dParams, dLoss/dInput)` for a [`Network::forward_batch`] cache.
    pub fn backward_batch(&self, cache: &ForwardCache, grad: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let mut g = backward_sequence(&self.spec, &self.params, cache, std::slice::from_ref(grad))?;
        Ok((g.params, g.inputs.pop().expect("one step")))
    }

    pub fn forward_sequence(&self, inputs: &[Matrix], initial: Option<&HiddenState>) -> Result<SequenceOutput> {
        forward_sequence(&self.spec, &self.params, inputs, initial)
    }

    pub fn infer_sequence(&self, inputs: &[Matrix], initial: Option<&HiddenState>) -> Result<SequenceOutput> {
        infer_sequence(&self.spec, &self.params, inputs, initial)
    }

    pub fn backward_sequence(&self, cache: &ForwardCache, grad_outputs: &[Matrix]) -> Result<Gradients> {
        backward_sequence(&self.spec, &self.params, cache, grad_outputs)
    }

    /// Single-vector inference, threading the recurrent state.
    pub fn step(&self, input: &[f64], hidden: Option<&HiddenState>) -> Result<(Vec<f64>, HiddenState)> {
        let mut out = infer_sequence(&self.spec, &self.params, &[Matrix::row_vector(input)], hidden)?;
        Ok((out.outputs.pop().expect("one step").into_vec(), out.hidden))
    }
}
