use obsreward::numerics::{
    forward, grad_check, Activation, GradCheckOptions, HiddenState, LayerSpec, Matrix, MseProbe, NetworkSpec, ParameterSet, SignFlipped,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequence(rng: &mut ChaCha8Rng, steps: usize, batch: usize, dim: usize) -> Vec<Matrix> {
    (0..steps)
        .map(|_| Matrix::from_vec(batch, dim, (0..batch * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect()
}

fn probe(spec: &NetworkSpec, seed: u64, steps: usize, batch: usize) -> MseProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MseProbe {
        spec: spec.clone(),
        inputs: random_sequence(&mut rng, steps, batch, spec.input_dim()),
        targets: random_sequence(&mut rng, steps, batch, spec.output_dim()),
        initial: None,
    }
}

/// Straightforward two-layer tanh network written out by hand.
fn naive_two_layer(params: &[f64], x: &[f64], n_in: usize, n_hidden: usize, n_out: usize) -> Vec<f64> {
    let w1 = &params[..n_hidden * n_in];
    let b1 = &params[n_hidden * n_in..n_hidden * n_in + n_hidden];
    let rest = &params[n_hidden * n_in + n_hidden..];
    let w2 = &rest[..n_out * n_hidden];
    let b2 = &rest[n_out * n_hidden..];
    let mut h = vec![0.0; n_hidden];
    for j in 0..n_hidden {
        let mut z = b1[j];
        for i in 0..n_in {
            z += w1[j * n_in + i] * x[i];
        }
        h[j] = z.tanh();
    }
    (0..n_out)
        .map(|k| {
            let mut z = b2[k];
            for j in 0..n_hidden {
                z += w2[k * n_hidden + j] * h[j];
            }
            z.tanh()
        })
        .collect()
}

#[test]
fn two_layer_tanh_matches_naive_reimplementation() {
    let spec = NetworkSpec::mlp(5, &[7], Activation::Tanh, 3, Activation::Tanh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params = ParameterSet::init(&spec, &mut rng);
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let got = forward(&spec, &params, &x, None).unwrap().output;
        let want = naive_two_layer(params.as_slice(), &x, 5, 7, 3);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let spec = NetworkSpec::new(vec![LayerSpec::lstm(3, 6), LayerSpec::gru(6, 4), LayerSpec::dense(4, 2, Activation::Identity)]).unwrap();
    let params = ParameterSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
    let h = HiddenState::zeros(&spec, 1);
    let a = forward(&spec, &params, &[0.1, 0.2, 0.3], Some(&h)).unwrap();
    let b = forward(&spec, &params, &[0.1, 0.2, 0.3], Some(&h)).unwrap();
    assert_eq!(a.output.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.output.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.hidden, b.hidden);
}

#[test]
fn linear_mse_gradient_is_exact() {
    let spec = NetworkSpec::mlp(4, &[], Activation::Identity, 3, Activation::Identity).unwrap();
    let params = ParameterSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    let p = probe(&spec, 2, 1, 8);
    let report = grad_check(&spec, &params, &p, 1e-9, GradCheckOptions::default());
    assert!(report.passed, "{report:?}");
    assert_eq!(report.checked, spec.parameter_count());
}

#[test]
fn every_layer_kind_passes_gradcheck() {
    let specs = [
        NetworkSpec::mlp(3, &[5, 4], Activation::Tanh, 2, Activation::Identity).unwrap(),
        NetworkSpec::mlp(3, &[5], Activation::Relu, 2, Activation::Tanh).unwrap(),
        NetworkSpec::new(vec![LayerSpec::lstm(3, 5), LayerSpec::dense(5, 2, Activation::Identity)]).unwrap(),
        NetworkSpec::new(vec![LayerSpec::gru(3, 5), LayerSpec::dense(5, 2, Activation::Identity)]).unwrap(),
    ];
    for (k, spec) in specs.iter().enumerate() {
        let params = ParameterSet::init(spec, &mut ChaCha8Rng::seed_from_u64(10 + k as u64));
        let steps = if spec.has_recurrent() { 6 } else { 1 };
        let p = probe(spec, 20 + k as u64, steps, 3);
        let report = grad_check(spec, &params, &p, 1e-4, GradCheckOptions::default());
        assert!(report.passed, "spec {k}: {report:?}");
    }
}

#[test]
fn reference_recurrent_architecture_scaled_down() {
    // two recurrent layers + 40-unit relu layer + linear head, recurrent width 8
    for cell in [LayerSpec::lstm as fn(usize, usize) -> LayerSpec, LayerSpec::gru] {
        let spec = NetworkSpec::new(vec![
            cell(7, 8),
            cell(8, 8),
            LayerSpec::dense(8, 40, Activation::Relu),
            LayerSpec::dense(40, 7, Activation::Identity),
        ])
        .unwrap();
        let params = ParameterSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(77));
        let p = probe(&spec, 78, 10, 2);
        let opts = GradCheckOptions { subset: Some((400, 3)), ..Default::default() };
        // relu kinks inside the difference step are excluded and counted
        let report = grad_check(&spec, &params, &p, 1e-4, opts);
        assert!(report.passed, "{report:?}");
        assert!(report.checked - report.skipped_nonsmooth >= 200, "{report:?}");
    }
}

#[test]
fn sign_flip_mutation_is_caught_at_its_index() {
    let spec = NetworkSpec::new(vec![LayerSpec::lstm(3, 4), LayerSpec::dense(4, 2, Activation::Identity)]).unwrap();
    let params = ParameterSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(4));
    let p = probe(&spec, 5, 5, 2);
    let grads = obsreward::numerics::LossProbe::gradient(&p, &params);
    let index = grads
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let corrupted = SignFlipped { inner: &p, index };
    let report = grad_check(&spec, &params, &corrupted, 1e-4, GradCheckOptions::default());
    assert!(!report.passed);
    assert_eq!(report.worst_index, index);
}

