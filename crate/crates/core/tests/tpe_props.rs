mod common;

use proptest::prelude::*;
use psnl_core::{
    parzen_density, run_search, suggest, HyperParams, ObservationSet, ParamSpec, SearchSpace,
    TpeConfig, TrainConfig, Trial, TrialStatus,
};

fn trial(index: usize, lambda: f64, loss: f64) -> Trial {
    Trial {
        index,
        params: HyperParams {
            lambda,
            ..HyperParams::default()
        },
        loss,
        status: TrialStatus::Ok,
    }
}

#[test]
fn good_cluster_attracts_suggestions() {
    let space = SearchSpace::default();
    let cfg = TpeConfig::default();
    let mut obs = ObservationSet::new(cfg.theta);
    let mut rng = common::rng(3);
    use rand::Rng;
    for i in 0..40 {
        // a quarter of the history sits near 0.01 with low loss, the rest near 1
        let (center, loss) = if i % 4 == 0 { (0.01, 0.1) } else { (1.0, 1.0) };
        let jitter: f64 = rng.gen_range(-0.1..0.1);
        obs.push(trial(
            i,
            center * jitter.exp(),
            loss + 0.01 * rng.gen::<f64>(),
        ));
    }
    let mut lambdas: Vec<f64> = (0..200)
        .map(|s| suggest(&obs, &space, &cfg, s).lambda)
        .collect();
    lambdas.sort_by(f64::total_cmp);
    let median = lambdas[100];
    assert!(median > 0.001 && median < 0.1, "median {median}");
}

#[test]
fn prior_draws_stay_in_bounds() {
    let space = SearchSpace::default();
    let cfg = TpeConfig::default();
    let empty = ObservationSet::new(cfg.theta);
    for seed in 0..10_000 {
        let s = suggest(&empty, &space, &cfg, seed);
        assert!(space.contains(&s), "{s:?}");
    }
}

#[test]
fn model_based_draws_stay_in_bounds() {
    let space = SearchSpace::default();
    let cfg = TpeConfig {
        n_startup: 5,
        ..TpeConfig::default()
    };
    let mut obs = ObservationSet::new(cfg.theta);
    // losses at the edges of the box push mass against the bounds
    for i in 0..12 {
        let lambda = if i % 2 == 0 { 4.0 } else { 2f64.powi(-10) };
        obs.push(trial(i, lambda, i as f64));
    }
    for seed in 0..10_000 {
        assert!(space.contains(&suggest(&obs, &space, &cfg, seed)));
    }
}

#[test]
fn parzen_density_integrates_to_one() {
    let spec = ParamSpec::log(2f64.powi(-10), 4.0);
    let (lo, hi) = spec.internal_bounds();
    let sets: [&[f64]; 4] = [
        &[],
        &[0.01],
        &[0.001, 0.001, 0.5, 3.9],
        &[2f64.powi(-10), 4.0, 1.0],
    ];
    for points in sets {
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        // midpoint rule in internal (log) coordinates
        let total: f64 = (0..n)
            .map(|i| {
                parzen_density(points, &spec, spec.from_internal(lo + (i as f64 + 0.5) * h)) * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{points:?}: {total}");
    }
}

proptest! {
    #[test]
    fn good_set_has_ceiling_size(losses in prop::collection::vec(0.0f64..1.0, 1..80), theta in 0.05f64..0.95) {
        let mut obs = ObservationSet::new(theta);
        for (i, &b) in losses.iter().enumerate() {
            obs.push(trial(i, 0.1, b));
        }
        let (good, bad) = obs.split();
        let expected = (theta * losses.len() as f64).ceil() as usize;
        prop_assert_eq!(good.len(), expected);
        prop_assert_eq!(good.len() + bad.len(), losses.len());
        let worst_good = good.iter().map(|t| t.loss).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(bad.iter().all(|t| t.loss >= worst_good));
    }

    #[test]
    fn best_is_argmin_and_history_monotone(losses in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let mut obs = ObservationSet::new(0.25);
        for (i, &b) in losses.iter().enumerate() {
            obs.push(trial(i, 0.1, b));
        }
        let best = obs.best().unwrap();
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(best.loss, min);
        prop_assert_eq!(best.index, losses.iter().position(|&b| b == min).unwrap());
        let history = obs.best_so_far();
        prop_assert!(history.windows(2).all(|w| w[1] <= w[0]));
    }
}

fn small_problem() -> (psnl_core::ShdiMatrix, psnl_core::ShdiMatrix) {
    let mat = common::synthetic(40, 3, 0.3, 0.0, 5);
    let split = mat.kfold_split(10, 5).unwrap();
    let rot = split.rotation(0).unwrap();
    (mat.subset(&rot.train), mat.subset(&rot.validation))
}

#[test]
fn single_trial_returns_the_prior_draw() {
    let (tr, va) = small_problem();
    let space = SearchSpace::default();
    let cfg = TpeConfig {
        n_trials: 1,
        trial_budget_iters: 20,
        ..TpeConfig::default()
    };
    let train_cfg = TrainConfig {
        rank: 3,
        ..TrainConfig::default()
    };
    match run_search(&tr, &va, &space, &cfg, &train_cfg, 9) {
        Ok(out) => {
            let expected = suggest(
                &ObservationSet::new(cfg.theta),
                &space,
                &cfg,
                psnl_core::rng::derive_seed(9, 0),
            );
            assert_eq!(out.best, expected);
            assert_eq!(out.observations.len(), 1);
        }
        Err(psnl_core::SearchError::AllDiverged { observations }) => {
            assert_eq!(observations.len(), 1)
        }
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn search_is_deterministic() {
    let (tr, va) = small_problem();
    let space = SearchSpace::default();
    let cfg = TpeConfig {
        n_trials: 25,
        n_startup: 10,
        trial_budget_iters: 40,
        ..TpeConfig::default()
    };
    let train_cfg = TrainConfig {
        rank: 3,
        ..TrainConfig::default()
    };
    let a = run_search(&tr, &va, &space, &cfg, &train_cfg, 4).unwrap();
    let b = run_search(&tr, &va, &space, &cfg, &train_cfg, 4).unwrap();
    assert_eq!(a.observations, b.observations);
    assert_eq!(a.best, b.best);
    let min = a
        .observations
        .trials()
        .iter()
        .map(|t| t.loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_loss, min);
    for t in a.observations.trials() {
        assert!(space.contains(&t.params));
        if t.status == TrialStatus::Ok {
            assert!(t.loss.is_finite());
        }
    }
}
