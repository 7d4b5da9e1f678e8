mod common;

use ndarray::{Array1, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stepmix::model::{empirical_variance, good_event_diagnostics};
use stepmix::*;

fn uniform_data(mdp: &TabularMdp, episodes: usize, seed: u64) -> CountTable {
    let pi = StochasticPolicy::uniform(mdp.shape());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs: Vec<Trajectory> = (0..episodes).map(|k| rollout(mdp, &pi, &mut rng, k)).collect();
    CountTable::from_trajectories(mdp.shape(), &trajs).unwrap()
}

#[test]
fn bounds_sandwich_true_values() {
    let mdp = generate_random_mdp(2, 2, 2, 21).unwrap();
    let shape = mdp.shape();
    let params = BonusParams::new(shape, 0.05, 1.0).unwrap();
    let pi = boltzmann_baseline(&mdp, 3.0).unwrap();
    let q_pi = evaluate_policy(&mdp, &pi).unwrap().q;
    let v_star = solve_optimal(&mdp).0;
    let mut failures = 0;
    let runs = 100;
    for seed in 0..runs {
        let model = estimate_transitions(&uniform_data(&mdp, 400, seed));
        let fixed = policy_eva(&model, mdp.rewards(), &pi, &params).unwrap();
        let (opt, _) = compute_optimistic_bounds(&model, mdp.rewards(), &params).unwrap();
        let ok = fixed.q_lo.iter().zip(&q_pi).all(|(lo, q)| *lo <= q + 1e-12)
            && fixed.q_up.iter().zip(&q_pi).all(|(up, q)| *up >= q - 1e-12)
            && opt.q_up.iter().zip(&v_star.q).all(|(up, q)| *up >= q - 1e-12);
        failures += usize::from(!ok);
        assert!(fixed.q_lo.iter().zip(&fixed.q_up).all(|(lo, up)| lo <= up));
        assert!(fixed.q_up.iter().all(|&q| q <= 2.0) && fixed.q_lo.iter().all(|&q| q >= 0.0));
    }
    assert!(
        failures as f64 <= 0.05 * runs as f64,
        "{failures} of {runs} runs broke the sandwich"
    );
}

#[test]
fn bounds_tighten_with_data() {
    let mdp = generate_random_mdp(3, 2, 3, 22).unwrap();
    let pi = StochasticPolicy::uniform(mdp.shape());
    let params = BonusParams::new(mdp.shape(), 0.05, 1e-3).unwrap();
    let width = |episodes: usize| {
        let model = estimate_transitions(&uniform_data(&mdp, episodes, 22));
        let b = policy_eva(&model, mdp.rewards(), &pi, &params).unwrap();
        b.upper_initial(mdp.start_state()) - b.lower_initial(mdp.start_state())
    };
    let (small, large) = (width(200), width(20_000));
    assert!(large < small, "width {large} after more data vs {small}");
    assert!(large < 0.5);
}

#[test]
fn empty_model_gives_trivial_bounds() {
    let mdp = generate_random_mdp(3, 2, 3, 23).unwrap();
    let model = estimate_transitions(&CountTable::new(mdp.shape()));
    let params = BonusParams::new(mdp.shape(), 0.05, 1.0).unwrap();
    let (b, _) = compute_optimistic_bounds(&model, mdp.rewards(), &params).unwrap();
    assert!(b.q_up.iter().all(|&q| q == 3.0));
    assert!(b.q_lo.iter().all(|&q| q == 0.0));
}

#[test]
fn good_event_holds_with_plenty_of_data() {
    let mdp = generate_random_mdp(3, 2, 2, 24).unwrap();
    let model = estimate_transitions(&uniform_data(&mdp, 5000, 24));
    let params = BonusParams::new(mdp.shape(), 0.05, 1.0).unwrap();
    let report = good_event_diagnostics(&mdp, &model, &params).unwrap();
    assert_eq!(report.checked + report.skipped, mdp.shape().tuples());
    assert!(report.holds());
    assert!(report.max_ratio < 1.0);
}

#[test]
fn bonus_ordering() {
    let shape = Shape::new(5, 5, 3).unwrap();
    let p = BonusParams::new(shape, 0.01, 1.0).unwrap();
    assert!((p.beta_cnt() - (75.0f64 / 0.01).ln()).abs() < 1e-12);
    assert!((p.beta_star(0) - p.beta_cnt() - (8.0 * std::f64::consts::E).ln()).abs() < 1e-12);
    for n in [0u64, 1, 10, 1000, 1 << 40] {
        assert!(p.beta(n) >= p.beta_star(n) && p.beta_star(n) >= p.beta_cnt());
    }
    let scaled = BonusParams::new(shape, 0.01, 0.5).unwrap();
    assert!((scaled.beta(7) - 0.5 * p.beta(7)).abs() < 1e-12);
    assert!(BonusParams::new(shape, 0.0, 1.0).is_err());
    assert!(BonusParams::new(shape, 0.01, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_is_monotone_in_count(n in 0u64..1_000_000, extra in 1u64..1000) {
        let p = BonusParams::new(Shape::new(4, 3, 3).unwrap(), 0.1, 1.0).unwrap();
        prop_assert!(p.beta(n + extra) > p.beta(n));
        prop_assert!(p.beta_star(n + extra) > p.beta_star(n));
    }

    #[test]
    fn counts_are_conserved(seed in any::<u64>(), episodes in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = common::random_shape(4, 3, 4, &mut rng);
        let mdp = common::random_mdp(shape, &mut rng);
        let counts = uniform_data(&mdp, episodes, seed);
        prop_assert_eq!(counts.episodes(), episodes as u64);
        for h in 0..shape.horizon {
            prop_assert_eq!(counts.visits().index_axis(Axis(0), h).sum(), episodes as u64);
        }
        prop_assert_eq!(&counts.next_visits().sum_axis(Axis(3)), counts.visits());
        let model = estimate_transitions(&counts);
        for ((h, s, a), &n) in counts.visits().indexed_iter() {
            let row = model.row(h, s, a);
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            if n == 0 {
                prop_assert!(row.iter().all(|&p| p == 1.0 / shape.states as f64));
            }
        }
    }

    #[test]
    fn variance_matches_two_pass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = common::random_shape(5, 2, 2, &mut rng);
        let mdp = common::random_mdp(shape, &mut rng);
        let model = estimate_transitions(&uniform_data(&mdp, 30, seed));
        let v = Array1::from_iter((0..shape.states).map(|i| (i as f64 * 0.37 + seed as f64 * 1e-19).sin() * 2.0));
        for ((h, s, a), &n) in model.visits().indexed_iter() {
            if n == 0 {
                continue;
            }
            let p = model.row(h, s, a);
            let mean = p.dot(&v);
            let two_pass: f64 = p.iter().zip(&v).map(|(pi, vi)| pi * (vi - mean) * (vi - mean)).sum();
            prop_assert!((empirical_variance(&model, h, s, a, v.view()) - two_pass).abs() < 1e-12);
        }
    }
}
