//! Reward models fitted on synthetic logs, checked against the generating latents.

use ialp::data::{generate_synthetic_with, SyntheticSpec};
use ialp::env::{
    fit_reward_model, EnvConfig, Environment, FitSpec, MfHyper, RewardModel, ScoreContext, SeqHyper,
};
use ialp::nn::argmax;
use ialp::rng::{stream_rng, streams};

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_users: 200,
        num_items: 40,
        seq_len: 6,
        d_lat: 4,
        noise_scale: 0.1,
        seed,
    }
}

#[test]
fn mf_recovers_most_users_top_item() {
    for seed in 0..3 {
        let s = spec(seed);
        let (_, log, truth) = generate_synthetic_with(&s).unwrap();
        let hyper = MfHyper {
            dim: s.d_lat,
            ..MfHyper::default()
        };
        let (model, report) =
            fit_reward_model(&log, s.num_items, &FitSpec::Mf(hyper), 5.0, seed).unwrap();
        assert!(report.is_monotone_within(0.05), "{:?}", report.epoch_losses);
        let mut hits = 0;
        for seq in &log.sequences {
            let ctx = ScoreContext {
                user: Some(seq.user_id),
                history: &seq.items[..1],
            };
            let predicted: Vec<f64> = (0..s.num_items)
                .map(|i| model.raw_score(ctx, i).unwrap())
                .collect();
            let actual: Vec<f64> = (0..s.num_items)
                .map(|i| truth.affinity(seq.user_id as usize, i))
                .collect();
            hits += (argmax(&predicted) == argmax(&actual)) as usize;
        }
        let rate = hits as f64 / log.len() as f64;
        assert!(rate >= 0.6, "seed {seed}: top-1 agreement {rate:.3}");
    }
}

#[test]
fn sequential_fit_prefers_logged_successors() {
    let s = spec(5);
    let (_, log, _) = generate_synthetic_with(&s).unwrap();
    let hyper = SeqHyper {
        embed_dim: 16,
        epochs: 5,
        ..SeqHyper::default()
    };
    let (model, report) =
        fit_reward_model(&log, s.num_items, &FitSpec::Sequential(hyper), 1.0, 5).unwrap();
    assert_eq!(report.epoch_losses.len(), 5);
    assert!(report.epoch_losses.last() < report.epoch_losses.first());
    // the logged next item should outscore a typical item
    let mut above = 0;
    let mut total = 0;
    for seq in log.sequences.iter().take(100) {
        let ctx = ScoreContext {
            user: None,
            history: &seq.items[..2],
        };
        let scores: Vec<f64> = (0..s.num_items)
            .map(|i| model.raw_score(ctx, i).unwrap())
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        above += (scores[seq.items[2]] > median) as usize;
        total += 1;
    }
    assert!(above as f64 / total as f64 > 0.8, "{above}/{total}");
}

#[test]
fn fitted_environment_runs_episodes_within_bounds() {
    let s = spec(6);
    let (_, log, _) = generate_synthetic_with(&s).unwrap();
    let (model, _) =
        fit_reward_model(&log, s.num_items, &FitSpec::Mf(MfHyper::default()), 5.0, 6).unwrap();
    let cfg = EnvConfig::default();
    let env = Environment::new(model, &log, cfg.clone()).unwrap();
    let mut rng = stream_rng(6, streams::ENV);
    for ep in 0..20 {
        let mut state = env.reset(&mut rng);
        let mut steps = 0;
        while !state.done {
            let out = env.step(&mut state, (ep + steps) % s.num_items).unwrap();
            assert!((0.0..=cfg.r_max).contains(&out.reward));
            steps += 1;
        }
        assert!(steps <= cfg.max_steps);
        assert_eq!(state.history.len(), steps + 1);
    }
}

#[test]
fn ground_truth_models_score_by_latent_affinity() {
    let s = spec(7);
    let (_, log, truth) = generate_synthetic_with(&s).unwrap();
    let mf = RewardModel::from_ground_truth(&truth, 0.5, 1.0).unwrap();
    let user = log.sequences[3].user_id;
    let ctx = ScoreContext {
        user: Some(user),
        history: &[0],
    };
    for item in [0, 7, 39] {
        let expected = 0.5 * truth.affinity(user as usize, item) + 1.0;
        assert!((mf.raw_score(ctx, item).unwrap() - expected).abs() < 1e-12);
    }
    // uniform attention with identity values: residual last latent plus the window mean
    let seq = RewardModel::sequential_from_ground_truth(&truth, 10, 0.5, 1.0).unwrap();
    let history = [2, 5, 9];
    let ctx = ScoreContext {
        user: None,
        history: &history,
    };
    for item in [1, 20] {
        let state: Vec<f64> = (0..s.d_lat)
            .map(|d| {
                truth.item_latents[9][d]
                    + history
                        .iter()
                        .map(|&h| truth.item_latents[h][d])
                        .sum::<f64>()
                        / 3.0
            })
            .collect();
        let dot: f64 = state
            .iter()
            .zip(&truth.item_latents[item])
            .map(|(a, b)| a * b)
            .sum();
        let got = seq.raw_score(ctx, item).unwrap();
        assert!(
            (got - (0.5 * dot + 1.0)).abs() < 1e-9,
            "{got} vs {}",
            0.5 * dot + 1.0
        );
    }
}
