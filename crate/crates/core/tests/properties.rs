use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cf_handoff::channel::AgingProfile;
use cf_handoff::channel::{
    bvn_upper_rect, prob_good, trans_probs, ChannelState, Mobility, PathLossParams, ShadowingParams, StateQuantizer,
};
use cf_handoff::engine::{run_scheme, ChannelTable, EngineEnv, Scheme};
use cf_handoff::geometry::{NetworkLayout, Point2};
use cf_handoff::pomdp::{exact_expectimax, expand_belief, solve_pbvi, Belief, PbviConfig, PomdpModel, RewardCache};
use cf_handoff::rate::{se_single_user, BoundForm, RadioParams, RateContext};
use cf_handoff::sim::{generate_trip, overhead_adjusted_se, quantile, ExperimentConfig, OverheadRule};
use cf_handoff::validate::random_toy_model;

fn toy(seed: u64, pool: usize, b_con: usize, horizon: usize) -> PomdpModel {
    random_toy_model(&mut ChaCha8Rng::seed_from_u64(seed), pool, b_con, horizon)
}

fn ctx() -> RateContext {
    let radio = RadioParams::default();
    RateContext::new(
        radio,
        AgingProfile::for_speed(10.0, 1.8e9, 66.7e-6, radio.tau_c),
        BoundForm::Printed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_distance_is_a_bounded_symmetric_metric(
        ax in 0.0..1000.0f64, ay in 0.0..1000.0f64, bx in 0.0..1000.0f64, by in 0.0..1000.0f64,
    ) {
        let layout = NetworkLayout::new(1000.0, vec![Point2::new(bx, by)], 15.0, 1.5, 200.0).unwrap();
        let (a, b) = (Point2::new(ax, ay), Point2::new(bx, by));
        let d = layout.torus_distance(a, b);
        prop_assert!(d >= 0.0 && d <= 1000.0 / 2f64.sqrt() + 1e-9);
        prop_assert!((d - layout.torus_distance(b, a)).abs() < 1e-9);
        prop_assert_eq!(d, layout.distance_2d(a, 0).unwrap());
        prop_assert!(d <= ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() + 1e-9);
    }

    #[test]
    // within half a side on both axes the minimum image is the direct one
    fn interior_distances_are_euclidean(
        ax in 250.0..750.0f64, ay in 250.0..750.0f64, bx in 250.0..750.0f64, by in 250.0..750.0f64,
    ) {
        let layout = NetworkLayout::new(1000.0, vec![Point2::new(0.0, 0.0)], 15.0, 1.5, 200.0).unwrap();
        let d = layout.torus_distance(Point2::new(ax, ay), Point2::new(bx, by));
        prop_assert!((d - (ax - bx).hypot(ay - by)).abs() < 1e-9);
    }

    #[test]
    fn transition_pairs_are_consistent(
        d_prev in 5.0..400.0f64, step in -10.0..10.0f64, iota in 0.0..=1.0f64, speed in 0.0..30.0f64,
    ) {
        let pl = PathLossParams::default();
        let q = StateQuantizer::from_distances(&pl, 150.0, 50.0, 200.0).unwrap();
        let sh = ShadowingParams::new(6.0, 100.0, iota).unwrap();
        let mobility = Mobility { speed, step_duration: 1.0 };
        let d_curr = (d_prev + step).max(1.0);
        let t = trans_probs(d_prev, d_curr, &q, &sh, &pl, mobility);
        prop_assert!((0.0..=1.0).contains(&t.p11) && (0.0..=1.0).contains(&t.p01));
        prop_assert!((t.p11 + t.p10() - 1.0).abs() < 1e-15);
        prop_assert!((t.p01 + t.p00() - 1.0).abs() < 1e-15);
        let before = prob_good(d_prev, &q, &sh, &pl);
        let after = prob_good(d_curr, &q, &sh, &pl);
        prop_assert!((t.predict(before) - after).abs() < 1e-6);
    }

    #[test]
    fn bvn_is_a_symmetric_probability(a in -4.0..4.0f64, b in -4.0..4.0f64, rho in -0.99..0.99f64) {
        let v = bvn_upper_rect(a, b, rho);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - bvn_upper_rect(b, a, rho)).abs() < 1e-12);
        // Fréchet bounds
        let (qa, qb) = (cf_handoff::channel::q_function(a), cf_handoff::channel::q_function(b));
        prop_assert!(v <= qa.min(qb) + 1e-12);
        prop_assert!(v >= (qa + qb - 1.0).max(0.0) - 1e-12);
    }

    #[test]
    fn expanded_beliefs_are_distributions(ups in prop::collection::vec(0.0..=1.0f64, 1..8)) {
        let joint = expand_belief(&ups);
        prop_assert_eq!(joint.len(), 1 << ups.len());
        prop_assert!(joint.iter().all(|&p| p >= 0.0));
        prop_assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (j, &u) in ups.iter().enumerate() {
            let marginal: f64 = joint.iter().enumerate().filter(|(s, _)| s >> j & 1 == 1).map(|(_, p)| p).sum();
            prop_assert!((marginal - u).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_matrices_are_row_stochastic(seed in any::<u64>(), pool in 1usize..6, horizon in 1usize..4) {
        let m = toy(seed, pool, 1, horizon);
        for k in 1..=horizon {
            for row in m.transition_matrix(k).unwrap() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn observation_model_is_a_distribution(seed in any::<u64>(), pool in 1usize..5) {
        let m = toy(seed, pool, 1.max(pool / 2), 2);
        let n = m.num_states();
        for stage in 0..=m.horizon {
            for a in 0..m.num_actions() {
                for s in 0..n {
                    let total: f64 = (0..n).map(|o| m.observation_prob(stage, s, a, o)).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    // connected APs are observed exactly
                    let mask = m.actions[a] as usize;
                    for o in 0..n {
                        if (o ^ s) & mask != 0 {
                            prop_assert_eq!(m.observation_prob(stage, s, a, o), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn belief_update_matches_joint_bayes(seed in any::<u64>(), pool in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_con = rng.gen_range(1..=pool);
        let m = random_toy_model(&mut rng, pool, b_con, 3);
        let belief = Belief::new((0..pool).map(|_| rng.gen()).collect()).unwrap();
        let action = rng.gen_range(0..m.num_actions());
        let obs: Vec<(usize, ChannelState)> =
            m.selected(action).into_iter().map(|j| (j, ChannelState::from_good(rng.gen()))).collect();
        let stage = rng.gen_range(1..m.horizon);
        let got = m.belief_update(&belief, action, &obs, stage).unwrap().expand();
        let a = m.actions[action] as usize;
        let o: usize = obs.iter().filter(|(_, s)| s.is_good()).map(|(j, _)| 1 << j).sum();
        let prior = belief.expand();
        let z: f64 = prior.iter().enumerate().filter(|(s, _)| s & a == o).map(|(_, p)| p).sum();
        let t = m.transition_matrix(stage + 1).unwrap();
        for s2 in 0..prior.len() {
            let want: f64 = (0..prior.len()).filter(|s| s & a == o).map(|s| prior[s] / z * t[s][s2]).sum();
            prop_assert!((got[s2] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pbvi_never_exceeds_exact(seed in any::<u64>(), pool in 2usize..4, horizon in 1usize..4, budget in 4usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_con = rng.gen_range(1..pool);
        let m = random_toy_model(&mut rng, pool, b_con, horizon);
        let exact = exact_expectimax(&m).unwrap();
        let cfg = PbviConfig { belief_budget: budget, expansion_depth: 1, seed };
        let (_, v) = solve_pbvi(&m, &cfg).unwrap();
        prop_assert!(v <= exact + 1e-9, "pbvi {} exact {}", v, exact);
        prop_assert!(v <= m.mdp_upper_bound() + 1e-9);
    }

    #[test]
    fn se_is_monotone_and_permutation_invariant(
        gains in prop::collection::vec(1e-14..1e-6f64, 1..6), idx in any::<prop::sample::Index>(), factor in 1.0..10.0f64,
    ) {
        let c = ctx();
        let sel: Vec<(f64, u32)> = gains.iter().map(|&g| (g, 1)).collect();
        let base = se_single_user(&sel, &c);
        prop_assert!(base >= 0.0);
        let mut up = sel.clone();
        up[idx.index(sel.len())].0 *= factor;
        prop_assert!(se_single_user(&up, &c) >= base - 1e-12);
        let mut rev = sel.clone();
        rev.reverse();
        prop_assert!((se_single_user(&rev, &c) - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn overhead_never_increases_se(se in 0.0..20.0f64, n in 0usize..20, delta in 0.0..=1.0f64) {
        for rule in [OverheadRule::Linear, OverheadRule::Geometric] {
            let adj = overhead_adjusted_se(se, n, delta, rule);
            prop_assert!(adj >= 0.0 && adj <= se);
        }
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-100.0..100.0f64, 1..50)) {
        v.sort_by(f64::total_cmp);
        let qs: Vec<f64> = (0..=100).map(|i| quantile(&v, i as f64 / 100.0).unwrap()).collect();
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(qs[0], v[0]);
        prop_assert_eq!(qs[100], v[v.len() - 1]);
    }
}

/// Stage-1 value at a corner belief dominates any fixed-action policy,
/// estimated by rollouts.
#[test]
fn corner_value_dominates_fixed_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for inst in 0..6 {
        let pool = 2 + inst % 2;
        let horizon = 1 + inst % 3;
        let m = random_toy_model(&mut rng, pool, 1, horizon);
        let (policy, _) = solve_pbvi(
            &m,
            &PbviConfig {
                belief_budget: 64,
                expansion_depth: horizon,
                seed: 1,
            },
        )
        .unwrap();
        for start in 0..m.num_states() {
            let corner = Belief::new((0..pool).map(|j| (start >> j & 1) as f64).collect()).unwrap();
            let v = policy.value(&corner, 1).unwrap();
            for a in 0..m.num_actions() {
                let n = 10_000;
                let (mut sum, mut sq) = (0.0, 0.0);
                for _ in 0..n {
                    let mut s = start;
                    let mut g = 0.0;
                    for k in 1..=horizon {
                        g += m.discount.powi(k as i32 - 1) * m.reward(s, a);
                        if k < horizon {
                            s = (0..pool)
                                .map(|j| {
                                    let p = m.trans[k][j].prob(s >> j & 1 == 1, true);
                                    (rng.gen::<f64>() < p) as usize * (1 << j)
                                })
                                .sum();
                        }
                    }
                    sum += g;
                    sq += g * g;
                }
                let mean = sum / n as f64;
                let se = ((sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
                assert!(
                    v >= mean - 3.0 * se - 1e-9,
                    "inst {inst} start {start} action {a}: {v} < {mean}"
                );
            }
        }
    }
}

/// Decision lists satisfy the set-size and handoff-count invariants, the
/// threshold scheme never hands off more than the time-triggered one, and the
/// rate trigger fires exactly when the previous cycle's rate is below threshold.
#[test]
fn scheme_invariants_on_random_trips() {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.num_aps = 12;
    cfg.network.area_side_m = 500.0;
    cfg.engine.b_con = 3;
    cfg.engine.t_h = 3;
    cfg.mobility.trip_cycles = 12;
    let stats = cfg.channel_stats().unwrap();
    let rewards = RewardCache::new(cfg.rate_context().unwrap(), cfg.quantizer().unwrap());
    for trial in 0..4 {
        let trip = generate_trip(&cfg, trial).unwrap();
        let table = ChannelTable::build(&trip.layout, &trip.positions, &stats);
        let env = EngineEnv {
            trip: &trip,
            table: Some(&table),
            stats,
            rewards: &rewards,
            seed: trial as u64,
        };
        let mut totals = Vec::new();
        for scheme in Scheme::ALL {
            let ecfg = cfg.engine_config(scheme);
            let d = run_scheme(&env, &ecfg).unwrap();
            assert_eq!(d.len(), 12);
            for (t, w) in d.windows(2).enumerate() {
                let (prev, next) = (&w[0], &w[1]);
                assert_eq!(next.serving_set.len(), 3);
                assert_eq!(
                    next.n_ho,
                    next.serving_set
                        .iter()
                        .filter(|b| !prev.serving_set.contains(b))
                        .count()
                );
                if matches!(scheme, Scheme::PomdpHoMin | Scheme::LsfThreshold) {
                    let below = env.rate(t, &prev.serving_set) < ecfg.r_threshold;
                    assert_eq!(next.triggered, below);
                    if !below {
                        assert_eq!(next.serving_set, prev.serving_set);
                    }
                }
            }
            totals.push(d.iter().map(|x| x.n_ho).sum::<usize>());
        }
        assert!(totals[3] <= totals[2]);
        let again = run_scheme(&env, &cfg.engine_config(Scheme::PomdpHoMin)).unwrap();
        assert_eq!(again, run_scheme(&env, &cfg.engine_config(Scheme::PomdpHoMin)).unwrap());
    }
}
