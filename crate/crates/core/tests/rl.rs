use obsreward::envs::EnvId;
use obsreward::numerics::Matrix;
use obsreward::rl::{
    argmax, behavior_cloning, epsilon_greedy, linear_schedule, ou_sample, Action, Algorithm, BcConfig, Checkpoint, Ddpg, DdpgConfig, Dqn,
    DqnConfig, OuNoise, ReplayBuffer, Transition,
};
use obsreward::trajectories::{scripted_expert_mover, Episode, Metadata, TrajectoryDataset};
use obsreward::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tagged(id: f64) -> Transition {
    Transition::new(vec![id], Action::Discrete(0), id, vec![id], false, false).unwrap()
}

fn small_ddpg() -> DdpgConfig {
    DdpgConfig { actor_hidden: vec![8, 8], critic_hidden: vec![8, 8], final_layer_init: 0.3, ..DdpgConfig::default() }
}

fn continuous(s: [f64; 3], a: [f64; 2], r: f64, next: [f64; 3], done: bool, truncated: bool) -> Transition {
    Transition::new(s.to_vec(), Action::Continuous(a.to_vec()), r, next.to_vec(), done, truncated).unwrap()
}

fn batch3() -> Vec<Transition> {
    vec![
        continuous([0.1, 0.2, 0.3], [0.5, -0.5], 1.0, [0.2, 0.2, 0.1], false, false),
        continuous([-0.4, 0.0, 0.9], [0.1, 0.9], -2.0, [-0.3, 0.1, 0.8], true, false),
        continuous([0.7, -0.7, 0.0], [-1.0, 0.2], 0.5, [0.6, -0.6, 0.1], false, true),
    ]
}

fn refs(v: &[Transition]) -> Vec<&Transition> {
    v.iter().collect()
}

fn critic_input(s: &[f64], a: &[f64]) -> Vec<f64> {
    s.iter().chain(a).copied().collect()
}

#[test]
fn transition_invariants() {
    assert!(matches!(Transition::new(vec![0.0], Action::Discrete(0), f64::NAN, vec![0.0], false, false), Err(Error::Numeric(_))));
    assert!(matches!(Transition::new(vec![0.0], Action::Discrete(0), 0.0, vec![0.0], true, true), Err(Error::Usage(_))));
}

#[test]
fn replay_evicts_oldest_first() {
    let mut buf = ReplayBuffer::new(2).unwrap();
    for i in 1..=3 {
        buf.push(tagged(i as f64));
    }
    let ids: Vec<f64> = buf.contents().iter().map(|t| t.reward).collect();
    assert_eq!(ids, vec![2.0, 3.0]);
    assert_eq!((buf.len(), buf.count()), (2, 3));
    buf.push(tagged(4.0));
    buf.push(tagged(5.0));
    let ids: Vec<f64> = buf.contents().iter().map(|t| t.reward).collect();
    assert_eq!(ids, vec![4.0, 5.0]);
}

#[test]
fn replay_sampling_is_uniform_and_seeded() {
    let mut buf = ReplayBuffer::new(10).unwrap();
    for i in 0..10 {
        buf.push(tagged(i as f64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 10];
    for _ in 0..10_000 {
        for t in buf.sample(10, &mut rng).unwrap() {
            counts[t.reward as usize] += 1;
        }
    }
    for c in counts {
        assert!((c as f64 / 1e5 - 0.1).abs() < 0.01, "{counts:?}");
    }
    let a: Vec<f64> = buf.sample(8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap().iter().map(|t| t.reward).collect();
    let b: Vec<f64> = buf.sample(8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap().iter().map(|t| t.reward).collect();
    assert_eq!(a, b);
}

#[test]
fn replay_undersized_sample_is_usage_error() {
    let mut buf = ReplayBuffer::new(10).unwrap();
    buf.push(tagged(0.0));
    assert!(matches!(buf.sample(2, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Usage(_))));
    assert!(matches!(ReplayBuffer::new(0), Err(Error::Config(_))));
}

#[test]
fn ou_deterministic_recursion() {
    let mut ou = OuNoise::new(1, 0.15, 0.0, 1.0).unwrap();
    ou.x = vec![1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!((ou_sample(&mut ou, &mut rng)[0] - 0.85).abs() < 1e-15);
    for t in 2..=50 {
        let x = ou_sample(&mut ou, &mut rng)[0];
        assert!((x - 0.85f64.powi(t)).abs() < 1e-12);
    }
}

#[test]
fn ou_long_run_std_matches_direct_simulation() {
    let (theta, sigma, n) = (0.15, 0.2, 100_000);
    let mut ou = OuNoise::new(1, theta, sigma, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ours: Vec<f64> = (0..n).map(|_| ou_sample(&mut ou, &mut rng)[0]).collect();

    // independent recursion on an independent stream
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12_345);
    let mut x = 0.0;
    let oracle: Vec<f64> = (0..n)
        .map(|_| {
            x = x - theta * x + sigma * normal.sample(&mut rng);
            x
        })
        .collect();
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let (a, b) = (std(&ours), std(&oracle));
    assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
    let stationary = sigma / (2.0 * theta - theta * theta).sqrt();
    assert!((a - stationary).abs() / stationary < 0.05);
}

#[test]
fn epsilon_greedy_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
    assert_eq!(epsilon_greedy(&[5.0, 5.0], 0.0, &mut rng), 0);
    assert_eq!(argmax(&[-1.0, 4.0, 4.0]), 1);
    let mut counts = [0usize; 3];
    for _ in 0..100_000 {
        counts[epsilon_greedy(&[0.0, 9.0, 1.0], 1.0, &mut rng)] += 1;
    }
    for c in counts {
        let f = c as f64 / 1e5;
        assert!((f - 1.0 / 3.0).abs() < 0.02 / 3.0, "{counts:?}");
    }
}

#[test]
fn linear_schedule_endpoints() {
    assert_eq!(linear_schedule(1.0, 0.05, 100, 0), 1.0);
    assert!((linear_schedule(1.0, 0.05, 100, 50) - 0.525).abs() < 1e-12);
    assert_eq!(linear_schedule(1.0, 0.05, 100, 100), 0.05);
    assert_eq!(linear_schedule(1.0, 0.05, 100, 10_000), 0.05);
}

#[test]
fn ddpg_actions_are_bounded_and_greedy_is_deterministic() {
    let cfg = DdpgConfig { ou_sigma: 5.0, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..500 {
        let s = [i as f64 * 0.1, -3.0, 100.0];
        for explore in [true, false] {
            assert!(agent.act(&s, explore, &mut rng).unwrap().iter().all(|a| a.abs() <= 1.0));
        }
    }
    let s = [0.3, 0.2, 0.1];
    assert_eq!(agent.act(&s, false, &mut rng).unwrap(), agent.act(&s, false, &mut rng).unwrap());
}

#[test]
fn ddpg_zero_noise_exploration_equals_greedy() {
    let cfg = DdpgConfig { ou_sigma: 0.0, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = [0.3, 0.2, 0.1];
    assert_eq!(agent.act(&s, true, &mut rng).unwrap(), agent.act(&s, false, &mut rng).unwrap());
}

#[test]
fn ddpg_gamma_zero_regresses_critic_on_reward() {
    let cfg = DdpgConfig { gamma: 0.0, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let batch = batch3();
    let expected: f64 = batch
        .iter()
        .map(|t| {
            let Action::Continuous(a) = &t.action else { unreachable!() };
            (agent.q_value(&t.state, a).unwrap() - t.reward).powi(2) / 3.0
        })
        .sum();
    let diag = agent.update(&refs(&batch)).unwrap();
    assert!((diag.critic_loss - expected).abs() < 1e-12);
}

#[test]
fn ddpg_bootstraps_only_non_terminal_transitions() {
    let cfg = DdpgConfig { gamma: 0.9, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let batch = batch3();
    let expected: f64 = batch
        .iter()
        .map(|t| {
            let Action::Continuous(a) = &t.action else { unreachable!() };
            let a_next = agent.actor_target().infer_batch(&Matrix::row_vector(&t.next_state)).unwrap().into_vec();
            let q_next = agent.critic_target().infer_batch(&Matrix::row_vector(&critic_input(&t.next_state, &a_next))).unwrap().get(0, 0);
            let y = t.reward + if t.done { 0.0 } else { 0.9 * q_next };
            (agent.q_value(&t.state, a).unwrap() - y).powi(2) / 3.0
        })
        .sum();
    // the truncated transition must bootstrap: changing it to terminal changes the loss
    let mut as_terminal = batch.clone();
    as_terminal[2].truncated = false;
    as_terminal[2].done = true;
    let diag_terminal = agent.clone().update(&refs(&as_terminal)).unwrap();
    let diag = agent.update(&refs(&batch)).unwrap();
    assert!((diag.critic_loss - expected).abs() < 1e-12);
    assert!(diag.critic_loss != diag_terminal.critic_loss);
}

#[test]
fn ddpg_tau_one_copies_online_into_targets() {
    let cfg = DdpgConfig { tau: 1.0, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    agent.update(&refs(&batch3())).unwrap();
    assert_eq!(agent.actor_target().params(), agent.actor().network.params());
    assert_eq!(agent.critic_target().params(), agent.critic().params());
}

#[test]
fn ddpg_zero_learning_rates_freeze_parameters() {
    let cfg = DdpgConfig { lr_actor: 0.0, lr_critic: 0.0, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let (actor, critic) = (agent.actor().clone(), agent.critic().clone());
    for _ in 0..5 {
        agent.update(&refs(&batch3())).unwrap();
    }
    assert_eq!(agent.actor(), &actor);
    assert_eq!(agent.critic(), &critic);
    for (t, o) in agent.critic_target().params().as_slice().iter().zip(critic.params().as_slice()) {
        assert!((t - o).abs() <= 1e-15 * o.abs().max(1.0));
    }
}

#[test]
fn ddpg_targets_track_an_exponential_average() {
    let cfg = DdpgConfig { tau: 0.1, ..small_ddpg() };
    let mut agent = Ddpg::new(&cfg, vec![1.0; 3], 2, 4).unwrap();
    let mut expected = agent.critic().params().as_slice().to_vec();
    for _ in 0..20 {
        let diag = agent.update(&refs(&batch3())).unwrap();
        assert!(diag.critic_loss.is_finite() && diag.actor_objective.is_finite());
        for (e, o) in expected.iter_mut().zip(agent.critic().params().as_slice()) {
            *e = 0.1 * o + 0.9 * *e;
        }
    }
    for (t, e) in agent.critic_target().params().as_slice().iter().zip(&expected) {
        assert!((t - e).abs() < 1e-12);
    }
    assert!(agent.actor().network.params().is_finite());
}

#[test]
fn ddpg_rejects_discrete_transitions_and_bad_config() {
    let mut agent = Ddpg::new(&small_ddpg(), vec![1.0; 1], 2, 0).unwrap();
    assert!(matches!(agent.update(&[&tagged(1.0)]), Err(Error::Usage(_))));
    assert!(matches!(Ddpg::new(&DdpgConfig { gamma: 1.5, ..small_ddpg() }, vec![1.0], 2, 0), Err(Error::Config(_))));
    assert!(matches!(Ddpg::new(&DdpgConfig { tau: 0.0, ..small_ddpg() }, vec![1.0], 2, 0), Err(Error::Config(_))));
    assert!(matches!(Ddpg::new(&DdpgConfig { batch_size: 10, replay_capacity: 5, ..small_ddpg() }, vec![1.0], 2, 0), Err(Error::Config(_))));
}

fn small_dqn() -> DqnConfig {
    DqnConfig { hidden: vec![16], ..DqnConfig::default() }
}

fn discrete(s: f64, a: usize, r: f64, done: bool) -> Transition {
    Transition::new(vec![s, -s], Action::Discrete(a), r, vec![s + 0.1, -s], done, false).unwrap()
}

#[test]
fn dqn_targets_ignore_bootstrap_when_gamma_zero_or_terminal() {
    for (gamma, done) in [(0.0, false), (0.99, true)] {
        let mut agent = Dqn::new(&DqnConfig { gamma, ..small_dqn() }, vec![1.0; 2], 3, 1).unwrap();
        let batch = vec![discrete(0.2, 1, 1.5, done), discrete(-0.3, 2, -0.5, done)];
        let expected: f64 = batch.iter().map(|t| {
            let Action::Discrete(a) = t.action else { unreachable!() };
            (agent.q_values(&t.state).unwrap()[a] - t.reward).powi(2) / 2.0
        }).sum();
        let diag = agent.update(&refs(&batch)).unwrap();
        assert!((diag.loss - expected).abs() < 1e-12, "gamma {gamma} done {done}");
    }
}

#[test]
fn dqn_regresses_single_transition_to_its_reward() {
    let mut agent = Dqn::new(&DqnConfig { gamma: 0.0, ..small_dqn() }, vec![1.0; 2], 3, 1).unwrap();
    let mut buf = ReplayBuffer::new(10).unwrap();
    buf.push(discrete(0.4, 2, 0.75, false));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..500 {
        agent.update(&buf.sample(1, &mut rng).unwrap()).unwrap();
    }
    assert!((agent.q_values(&[0.4, -0.4]).unwrap()[2] - 0.75).abs() < 1e-3);
}

#[test]
fn dqn_target_is_hard_copied_every_period() {
    let mut agent = Dqn::new(&DqnConfig { target_period: 3, ..small_dqn() }, vec![1.0; 2], 3, 1).unwrap();
    let initial = agent.target().clone();
    let batch = vec![discrete(0.2, 1, 1.0, false)];
    agent.update(&refs(&batch)).unwrap();
    agent.update(&refs(&batch)).unwrap();
    assert_eq!(agent.target(), &initial);
    agent.update(&refs(&batch)).unwrap();
    assert_eq!(agent.target(), &agent.q_network().network);
    agent.update(&refs(&batch)).unwrap();
    assert_ne!(agent.target(), &agent.q_network().network);
}

#[test]
fn dqn_epsilon_schedule_and_greedy_action() {
    let cfg = small_dqn();
    assert_eq!(cfg.epsilon(0), 1.0);
    assert_eq!(cfg.epsilon(20_000), 0.05);
    let agent = Dqn::new(&cfg, vec![1.0; 2], 3, 1).unwrap();
    let q = agent.q_values(&[0.1, 0.2]).unwrap();
    assert_eq!(agent.act(&[0.1, 0.2], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), argmax(&q));
}

fn linear_policy_dataset(episodes: usize, seed: u64) -> TrajectoryDataset {
    let w = [[0.3, -0.2, 0.1, 0.25], [-0.15, 0.05, 0.3, -0.2]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = (0..episodes)
        .map(|_| {
            let states: Vec<[f64; 4]> = (0..20).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
            let actions: Vec<[f64; 2]> = states.iter().map(|s| std::array::from_fn(|i| (0..4).map(|j| w[i][j] * s[j]).sum())).collect();
            Episode::new(Matrix::from_rows(&states), Some(Matrix::from_rows(&actions))).unwrap()
        })
        .collect();
    let meta = Metadata { generator: "linear".into(), seed, created: None };
    TrajectoryDataset::new(EnvId::Mover, 4, 2, eps, meta).unwrap()
}

#[test]
fn behavior_cloning_recovers_a_linear_policy() {
    let data = linear_policy_dataset(100, 3);
    let cfg = BcConfig { hidden: vec![32], lr: 3e-3, batch_size: 32, max_epochs: 150, patience: 30, ..BcConfig::default() };
    let (policy, report) = behavior_cloning(&data, &cfg).unwrap();
    assert!(report.best_validation_mse < 1e-4, "{}", report.best_validation_mse);
    // fresh held-out states
    let test = linear_policy_dataset(10, 99);
    let mut mse = 0.0;
    let mut n = 0;
    for ep in test.episodes() {
        for (s, a) in ep.states().iter_rows().zip(ep.actions().unwrap().iter_rows()) {
            for (p, t) in policy.output(s).unwrap().iter().zip(a) {
                mse += (p - t) * (p - t);
                n += 1;
            }
        }
    }
    assert!(mse / (n as f64) < 1e-4, "{}", mse / n as f64);
}

#[test]
fn behavior_cloning_rejects_state_only_data() {
    let (data, _) = scripted_expert_mover(6, 1).unwrap();
    assert!(matches!(behavior_cloning(&data, &BcConfig::default()), Err(Error::Config(_))));
}

#[test]
fn checkpoints_round_trip() {
    let agent = Ddpg::new(&small_ddpg(), vec![1.0, 2.0, 3.0], 2, 4).unwrap();
    let ck = agent.checkpoint(EnvId::Reacher, "abc123");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.info.algorithm, Algorithm::Ddpg);
    let s = [0.1, 0.2, 0.3];
    assert_eq!(back.greedy_action(&s).unwrap(), agent.actor().output(&s).unwrap());

    let dqn = Dqn::new(&small_dqn(), vec![1.0; 12], 9, 2).unwrap();
    let ck = dqn.checkpoint(EnvId::MoverDiscrete, "h");
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    let a = back.greedy_action(&[0.0; 12]).unwrap();
    assert_eq!(a.len(), 2);
    let mut bytes = ck.to_bytes();
    bytes.truncate(bytes.len() - 1);
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { .. })));
}
