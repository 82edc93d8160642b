//! Pre-training, online adaptation and baseline behaviour on small seeded environments.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use ialp::agent::{AgentBundle, Transition};
use ialp::data::{
    generate_synthetic_with, split_log, InteractionLog, ItemId, SyntheticGroundTruth,
    SyntheticSpec, UserSequence,
};
use ialp::encoder::EncoderConfig;
use ialp::env::{EnvConfig, Environment, MfModel, RewardModel};
use ialp::harness::metrics::{evaluate, lookahead_bound, ScoringPolicy};
use ialp::nn::Tensor;
use ialp::oracle::SyntheticJudge;
use ialp::rng::{stream_rng, streams, Rng};
use ialp::training::{
    choose_action, online_phase, pretrain_ialp, run_baseline, run_online, Adapted, BaselineKind,
    BaselineModel, ExplorationStrategy, Learner, PretrainState, Scheme, TrainConfig,
};
use ialp::Result;

struct Aligned {
    truth: SyntheticGroundTruth,
    train: InteractionLog,
    env: Environment,
    test_env: Environment,
    enc: EncoderConfig,
}

fn aligned(items: usize, seed: u64) -> Aligned {
    let (_, log, truth) = generate_synthetic_with(&SyntheticSpec {
        num_users: 120,
        num_items: items,
        seq_len: 6,
        d_lat: 4,
        noise_scale: 0.1,
        seed,
    })
    .unwrap();
    let (train, test) = split_log(&log, 0.8, seed).unwrap();
    let model = RewardModel::sequential_from_ground_truth(&truth, 10, 0.04, 0.2).unwrap();
    let cfg = EnvConfig {
        r_max: 1.0,
        quit_threshold: 0.15,
        ..EnvConfig::default()
    };
    Aligned {
        env: Environment::new(model.clone(), &train, cfg.clone()).unwrap(),
        test_env: Environment::new(model, &test, cfg).unwrap(),
        truth,
        train,
        enc: EncoderConfig::new(8, 10, items).unwrap(),
    }
}

fn firsts(log: &InteractionLog) -> Vec<ItemId> {
    log.sequences.iter().map(|s| s.items[0]).collect()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 100,
        online_steps: 2000,
        batch_size: 16,
        lr: 0.01,
        k: 5,
        seed,
        ..TrainConfig::default()
    }
}

fn pretrain(a: &Aligned, cfg: &TrainConfig, threshold: f64) -> (AgentBundle, PretrainState) {
    let judge = SyntheticJudge {
        truth: a.truth.clone(),
        threshold,
    };
    let agent =
        AgentBundle::new(a.enc, cfg.gamma, &mut stream_rng(cfg.seed, streams::INIT)).unwrap();
    pretrain_ialp(agent, &judge, cfg, &firsts(&a.train), None, &mut |_, _| {
        Ok(())
    })
    .unwrap()
}

#[test]
fn pretraining_raises_the_oracle_acceptance_rate() {
    for seed in 0..3 {
        let a = aligned(20, seed);
        let cfg = TrainConfig {
            lr: 0.001,
            batch_size: 32,
            ..small_config(seed)
        };
        let (_, state) = pretrain(&a, &cfg, 2.0);
        let mean = |e: &[ialp::training::PretrainEpoch]| {
            e.iter().map(|x| x.mean_reward).sum::<f64>() / e.len() as f64
        };
        let first = mean(&state.log[..10]);
        let last = mean(&state.log[90..]);
        assert_eq!(state.log.len(), 100);
        assert!(last > first, "seed {seed}: r^p {first:.3} -> {last:.3}");
        assert!(state
            .log
            .iter()
            .all(|e| (0.0..=1.0).contains(&e.mean_reward)));
    }
}

#[test]
fn zero_epochs_leave_the_agent_untouched() {
    let a = aligned(20, 1);
    let cfg = TrainConfig {
        pretrain_epochs: 0,
        ..small_config(1)
    };
    let init = AgentBundle::new(a.enc, cfg.gamma, &mut stream_rng(1, streams::INIT)).unwrap();
    let (agent, state) = pretrain(&a, &cfg, 1.5);
    assert_eq!(agent, init);
    assert_eq!(state.epochs_done, 0);
    assert!(state.buffer.is_empty());
}

#[test]
fn buffer_keeps_every_transition_up_to_capacity() {
    let a = aligned(20, 2);
    let cfg = small_config(2);
    let (_, state) = pretrain(&a, &cfg, 1.5);
    let expected = cfg
        .buffer_capacity
        .min(cfg.pretrain_epochs * cfg.pretrain_horizon);
    assert_eq!(state.buffer.len(), expected);
    assert!(state
        .buffer
        .iter()
        .all(|t| t.reward == 0.0 || t.reward == 1.0));

    let small = TrainConfig {
        pretrain_epochs: 30,
        buffer_capacity: 250,
        ..cfg
    };
    let (_, state) = pretrain(&a, &small, 1.5);
    assert_eq!(state.buffer.len(), 250);
}

#[test]
fn resumed_pretraining_matches_an_uninterrupted_run() {
    let a = aligned(20, 3);
    let judge = SyntheticJudge {
        truth: a.truth.clone(),
        threshold: 1.5,
    };
    let full = TrainConfig {
        pretrain_epochs: 12,
        ..small_config(3)
    };
    let (straight, straight_state) = pretrain(&a, &full, 1.5);

    let half = TrainConfig {
        pretrain_epochs: 5,
        ..full.clone()
    };
    let (mid, mid_state) = pretrain(&a, &half, 1.5);
    let (resumed, resumed_state) = pretrain_ialp(
        mid,
        &judge,
        &full,
        &firsts(&a.train),
        Some(mid_state),
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert_eq!(resumed, straight);
    assert_eq!(resumed_state, straight_state);
}

#[test]
fn a2c_baseline_is_ft_from_a_random_agent() {
    let a = aligned(20, 4);
    let cfg = small_config(4);
    let strategy = ExplorationStrategy::EpsilonGreedy { epsilon: 0.1 };
    let (model, c_base) = run_baseline(
        BaselineKind::A2c,
        &a.env,
        &a.enc,
        &cfg,
        strategy,
        None,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    let random = ialp::training::baselines::scratch_agent(&a.enc, &cfg).unwrap();
    let (adapted, c_ft) = online_phase(
        Scheme::Ft,
        random,
        &a.env,
        &cfg,
        strategy,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert_eq!(c_base, c_ft);
    let Adapted::Ft(ft_agent) = adapted else {
        panic!("ft returns a single agent")
    };
    assert_eq!(model.agent(), &ft_agent);
}

/// Acts exactly like the online learners but never updates.
struct Frozen {
    agent: AgentBundle,
    strategy: ExplorationStrategy,
}

impl ScoringPolicy for Frozen {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.agent.policy(history)
    }
}

impl Learner for Frozen {
    fn act(&mut self, history: &[ItemId], _step: usize, rng: &mut Rng) -> Result<ItemId> {
        choose_action(&self.agent.policy(history)?, self.strategy, rng)
    }

    fn observe(&mut self, _tr: Transition, _step: usize) -> Result<()> {
        Ok(())
    }
}

#[test]
fn ft_with_zero_learning_rate_is_the_frozen_agent() {
    let a = aligned(20, 5);
    let cfg = small_config(5);
    let (ialp, _) = pretrain(
        &a,
        &TrainConfig {
            pretrain_epochs: 20,
            ..cfg.clone()
        },
        1.5,
    );
    let strategy = ExplorationStrategy::Categorical;
    let still = TrainConfig {
        lr: 0.0,
        ..cfg.clone()
    };
    let (adapted, c_ft) = online_phase(
        Scheme::Ft,
        ialp.clone(),
        &a.env,
        &still,
        strategy,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    let mut frozen = Frozen {
        agent: ialp.clone(),
        strategy,
    };
    let c_frozen = run_online(
        &mut frozen,
        &a.env,
        still.online_steps,
        still.seed,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert_eq!(c_ft, c_frozen);
    let Adapted::Ft(after) = adapted else {
        panic!()
    };
    assert_eq!(after, ialp);
    assert_eq!(
        evaluate(&after, &a.test_env, 50, 5).unwrap().0,
        evaluate(&ialp, &a.test_env, 50, 5).unwrap().0
    );
}

#[test]
fn ap_keeps_theta_and_reaches_full_alpha() {
    let a = aligned(20, 6);
    let cfg = TrainConfig {
        alpha_anneal_steps: 500,
        ..small_config(6)
    };
    let (ialp, _) = pretrain(
        &a,
        &TrainConfig {
            pretrain_epochs: 10,
            ..cfg.clone()
        },
        1.5,
    );
    let strategy = ExplorationStrategy::EpsilonGreedy { epsilon: 0.1 };
    let mut alphas = Vec::new();
    let (adapted, _) = online_phase(
        Scheme::Ap,
        ialp.clone(),
        &a.env,
        &cfg,
        strategy,
        Some(250),
        &mut |step, p| {
            alphas.push((step, p.action_scores(&[0])?));
            Ok(())
        },
    )
    .unwrap();
    let Adapted::Ap(mix) = adapted else { panic!() };
    assert_eq!(mix.frozen(), &ialp);
    assert_eq!(mix.alpha(), 1.0);
    let (_, learnable, _) = mix.clone().into_parts();
    assert_ne!(learnable, ialp);
    // past the anneal point the mixture is the learnable policy alone
    let h = [1, 2, 3];
    assert_eq!(
        mix.mix_action_distribution(&h).unwrap(),
        learnable.policy(&h).unwrap()
    );
    assert_eq!(alphas.len(), 1 + 2000 / 250);
}

#[test]
fn dqn_with_full_exploration_acts_uniformly() {
    // one-step episodes whose return identifies the chosen item
    let n = 10;
    let scores: Vec<f64> = (0..n).map(|i| i as f64 / 10.0).collect();
    let model = RewardModel::MatrixFactorization(
        MfModel::new(
            &[0],
            Tensor::from_vec(&[1, 1], vec![1.0]).unwrap(),
            Tensor::from_vec(&[n, 1], scores).unwrap(),
            vec![0.0],
            vec![0.0; n],
            0.0,
        )
        .unwrap(),
    );
    let log = InteractionLog::from_sequences(vec![UserSequence {
        user_id: 0,
        items: vec![0],
        timestamps: vec![0],
    }]);
    let env = Environment::new(
        model,
        &log,
        EnvConfig {
            max_steps: 1,
            quit_threshold: 0.0,
            r_max: 1.0,
            seed: 0,
        },
    )
    .unwrap();
    let enc = EncoderConfig::new(4, 4, n).unwrap();
    let cfg = TrainConfig {
        online_steps: 10_000,
        batch_size: 8,
        buffer_capacity: 100,
        seed: 11,
        ..TrainConfig::default()
    };
    let strategy = ExplorationStrategy::EpsilonGreedy { epsilon: 1.0 };
    let (_, curve) = run_baseline(
        BaselineKind::Dqn,
        &env,
        &enc,
        &cfg,
        strategy,
        None,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert_eq!(curve.len(), 10_000);
    let mut counts = vec![0usize; n];
    for e in &curve {
        counts[(e.return_r * 10.0).round() as usize] += 1;
    }
    let expected = curve.len() as f64 / n as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.001, "counts {counts:?}, p {p}");
}

#[test]
fn greedy_evaluation_never_beats_the_lookahead_bound() {
    let a = aligned(20, 7);
    let cfg = small_config(7);
    let (ialp, _) = pretrain(
        &a,
        &TrainConfig {
            pretrain_epochs: 20,
            ..cfg.clone()
        },
        1.5,
    );
    let bound = lookahead_bound(&a.test_env, 40, 7).unwrap();
    let scratch = ialp::training::baselines::scratch_agent(&a.enc, &cfg).unwrap();
    for policy in [
        &ialp as &dyn ScoringPolicy,
        &scratch,
        &BaselineModel::Dqn(scratch.clone()),
    ] {
        let (m, _) = evaluate(policy, &a.test_env, 40, 7).unwrap();
        assert!(m.r <= bound.r + 1e-9, "{} > bound {}", m.r, bound.r);
    }
}

#[test]
fn llm_online_needs_a_judge_and_runs_with_one() {
    let a = aligned(20, 8);
    let cfg = TrainConfig {
        online_steps: 300,
        ..small_config(8)
    };
    let strategy = ExplorationStrategy::Greedy;
    let err = run_baseline(
        BaselineKind::LlmOnline,
        &a.env,
        &a.enc,
        &cfg,
        strategy,
        None,
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap_err();
    assert_eq!(err.kind(), "invalid_argument");
    let judge = SyntheticJudge {
        truth: a.truth.clone(),
        threshold: 1.5,
    };
    let (_, curve) = run_baseline(
        BaselineKind::LlmOnline,
        &a.env,
        &a.enc,
        &cfg,
        strategy,
        Some(&judge),
        None,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert!(!curve.is_empty());
    assert!(curve
        .windows(2)
        .all(|w| w[0].global_step < w[1].global_step));
}
