//! Oracle suites: closed forms against Monte Carlo and the point-based solver
//! against exhaustive expectimax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::channel::{
    path_loss, prob_good, trans_probs, AgingProfile, Mobility, PathLossParams, ShadowingParams, StateQuantizer,
    TransitionPair,
};
use crate::error::Result;
use crate::pomdp::{action_masks, exact_expectimax, solve_pbvi, Belief, PbviConfig, PomdpModel};
use crate::rate::oracle::mc_signal_oracle;
use crate::rate::{xi_terms, BoundForm, Interferer, RadioParams, RateContext, ServingConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationOptions {
    pub rate_configs: usize,
    pub rate_realizations: usize,
    pub transition_samples: usize,
    pub solver_instances: usize,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            rate_configs: 10,
            rate_realizations: 100_000,
            transition_samples: 1_000_000,
            solver_instances: 20,
            seed: 2024,
        }
    }
}

impl ValidationOptions {
    /// Smaller sample sizes for smoke runs; tolerances are unchanged.
    pub fn quick() -> Self {
        ValidationOptions {
            rate_configs: 3,
            rate_realizations: 20_000,
            transition_samples: 200_000,
            solver_instances: 5,
            ..Self::default()
        }
    }
}

/// A randomized multi-user rate scenario around a typical user.
#[derive(Debug, Clone)]
pub struct RateScenario {
    pub serving: ServingConfig,
    pub interferers: Vec<Interferer>,
    pub ctx: RateContext,
    pub lag: usize,
}

/// Draws a scenario with 1–5 serving APs and 0–3 interferers, the first of
/// which shares the typical user's pilot.
pub fn random_rate_scenario<R: Rng + ?Sized>(rng: &mut R) -> Result<RateScenario> {
    let num_aps = 8;
    let pl = PathLossParams::default();
    let gain = |rng: &mut R| {
        let d: f64 = rng.gen_range(20.0..250.0);
        path_loss(d, &pl) * 10f64.powf(6.0 * rng.sample::<f64, _>(StandardNormal) / 10.0)
    };
    let pick = |rng: &mut R, k: usize| {
        let mut all: Vec<usize> = (0..num_aps).collect();
        for i in 0..k {
            let j = rng.gen_range(i..num_aps);
            all.swap(i, j);
        }
        let mut s = all[..k].to_vec();
        s.sort_unstable();
        s
    };
    let typical: Vec<usize> = {
        let k = rng.gen_range(1..=5);
        pick(rng, k)
    };
    let lsf: Vec<f64> = (0..num_aps).map(|_| gain(rng)).collect();
    let n_int = rng.gen_range(0..=3);
    let mut loads = vec![0u32; num_aps];
    for &b in &typical {
        loads[b] += 1;
    }
    let speed = rng.gen_range(0.0..60.0);
    let radio = RadioParams::default();
    let aging = AgingProfile::for_speed(speed, 1.8e9, 66.7e-6, radio.tau_c);
    let interferers: Vec<Interferer> = (0..n_int)
        .map(|i| {
            let k = rng.gen_range(1..=3);
            let serving = pick(rng, k);
            for &b in &serving {
                loads[b] += 1;
            }
            let own_speed: f64 = rng.gen_range(0.0..60.0);
            let own = AgingProfile::for_speed(own_speed, 1.8e9, 66.7e-6, radio.tau_c);
            Interferer {
                serving,
                lsf_to_typical: lsf.clone(),
                own_lsf: (0..num_aps).map(|_| gain(rng)).collect(),
                copilot: i == 0,
                rho_est: own.rho(radio.estimation_lag()),
            }
        })
        .collect();
    // idle APs never enter the rate; give them unit load
    loads.iter_mut().for_each(|l| *l = (*l).max(1));
    let serving = ServingConfig::new(typical, loads, lsf)?;
    let lag = rng.gen_range(radio.data_lags());
    Ok(RateScenario {
        serving,
        interferers,
        ctx: RateContext::new(radio, aging, BoundForm::Derived)?,
        lag,
    })
}

pub fn rate_suite(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    for c in 0..opts.rate_configs {
        let sc = random_rate_scenario(&mut rng)?;
        let xi = xi_terms(&sc.serving, &sc.interferers, &sc.ctx, sc.lag)?;
        let mc = mc_signal_oracle(
            &sc.serving,
            &sc.interferers,
            &sc.ctx,
            sc.lag,
            opts.rate_realizations,
            &mut rng,
        )?;
        let mut terms = vec![("xi1", mc.desired, xi.xi1), ("xi23", mc.self_interference, xi.xi23)];
        terms.extend(mc.interference.iter().zip(&xi.xi4).map(|(e, x)| ("xi4", *e, *x)));
        for (name, est, value) in terms {
            checks.push(Check {
                suite: "rate-vs-mc",
                name: format!("config {c} {name}"),
                passed: est.agrees_with(value, 0.03, 3.0),
                detail: format!("closed {value:.6e}  mc {:.6e} ± {:.2e}", est.mean, est.std_err),
            });
        }
    }
    Ok(checks)
}

/// Empirical good-state marginal and transition frequencies for one AP whose
/// distance moves from `d_prev` to `d_curr`, sampling the shadowing model
/// directly (AP field, user process and its one-step update).
pub fn sample_transitions<R: Rng + ?Sized>(
    d_prev: f64,
    d_curr: f64,
    q: &StateQuantizer,
    sh: &ShadowingParams,
    pl: &PathLossParams,
    mobility: Mobility,
    n: usize,
    rng: &mut R,
) -> (f64, TransitionPair) {
    let c = sh.step_correlation(mobility.step_length());
    let (a, b) = (sh.iota.sqrt(), (1.0 - sh.iota).sqrt());
    let (pl_prev, pl_curr) = (path_loss(d_prev, pl), path_loss(d_curr, pl));
    let (mut good_prev, mut good_good, mut bad_good) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let k1: f64 = rng.sample(StandardNormal);
        let k2: f64 = rng.sample(StandardNormal);
        let w: f64 = rng.sample(StandardNormal);
        let k2n = c * k2 + (1.0 - c * c).sqrt() * w;
        let prev = q.quantize(pl_prev * 10f64.powf(sh.sigma_sh_db * (a * k1 + b * k2) / 10.0));
        let curr = q.quantize(pl_curr * 10f64.powf(sh.sigma_sh_db * (a * k1 + b * k2n) / 10.0));
        match (prev.is_good(), curr.is_good()) {
            (true, true) => {
                good_prev += 1;
                good_good += 1;
            }
            (true, false) => good_prev += 1,
            (false, true) => bad_good += 1,
            (false, false) => {}
        }
    }
    let p_bar = good_prev as f64 / n as f64;
    let p11 = good_good as f64 / good_prev.max(1) as f64;
    let p01 = bad_good as f64 / (n - good_prev).max(1) as f64;
    (p_bar, TransitionPair { p11, p01 })
}

pub const TRANSITION_PAIRS: [(f64, f64); 5] = [
    (100.0, 110.0),
    (140.0, 150.0),
    (150.0, 160.0),
    (180.0, 170.0),
    (200.0, 210.0),
];

pub fn transition_suite(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7A7A);
    let pl = PathLossParams::default();
    let q = StateQuantizer::from_distances(&pl, 150.0, 50.0, 200.0)?;
    let mobility = Mobility {
        speed: 10.0,
        step_duration: 1.0,
    };
    let mut checks = Vec::new();
    for iota in [0.0, 0.5, 1.0] {
        let sh = ShadowingParams::new(6.0, 100.0, iota)?;
        for (d_prev, d_curr) in TRANSITION_PAIRS {
            let closed = trans_probs(d_prev, d_curr, &q, &sh, &pl, mobility);
            let p_bar = prob_good(d_prev, &q, &sh, &pl);
            let (emp_bar, emp) = sample_transitions(
                d_prev,
                d_curr,
                &q,
                &sh,
                &pl,
                mobility,
                opts.transition_samples,
                &mut rng,
            );
            for (name, x, e) in [
                ("p_bar1", p_bar, emp_bar),
                ("p11", closed.p11, emp.p11),
                ("p01", closed.p01, emp.p01),
            ] {
                checks.push(Check {
                    suite: "transition-vs-mc",
                    name: format!("iota {iota} d {d_prev}->{d_curr} {name}"),
                    passed: (x - e).abs() <= 5e-3,
                    detail: format!("closed {x:.5}  mc {e:.5}"),
                });
            }
        }
    }
    Ok(checks)
}

/// Random small model with stage-dependent transitions and nonnegative rewards.
pub fn random_toy_model<R: Rng + ?Sized>(rng: &mut R, pool: usize, b_con: usize, horizon: usize) -> PomdpModel {
    let actions = action_masks(pool, b_con);
    let n = 1usize << pool;
    let rewards = (0..n * actions.len()).map(|_| rng.gen_range(0.0..5.0)).collect();
    PomdpModel {
        pool: (0..pool).collect(),
        b_con,
        horizon,
        trans: (0..horizon)
            .map(|_| {
                (0..pool)
                    .map(|_| TransitionPair {
                        p11: rng.gen(),
                        p01: rng.gen(),
                    })
                    .collect()
            })
            .collect(),
        obs_marginals: (0..=horizon).map(|_| (0..pool).map(|_| rng.gen()).collect()).collect(),
        actions,
        rewards,
        discount: rng.gen_range(0.5..0.99),
        initial_belief: Belief::new((0..pool).map(|_| rng.gen()).collect()).expect("valid"),
    }
}

pub fn solver_suite(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x50_1BE5);
    let mut checks = Vec::new();
    for i in 0..opts.solver_instances {
        let horizon = 1 + i % 3;
        let model = random_toy_model(&mut rng, 2, 1, horizon);
        let exact = exact_expectimax(&model)?;
        let cfg = PbviConfig {
            belief_budget: 256,
            expansion_depth: horizon,
            seed: i as u64,
        };
        let (_, v) = solve_pbvi(&model, &cfg)?;
        checks.push(Check {
            suite: "pbvi-vs-expectimax",
            name: format!("2-AP toy {i} (T_H={horizon})"),
            passed: (v - exact).abs() <= 1e-9,
            detail: format!("pbvi {v:.12}  exact {exact:.12}"),
        });
    }
    for i in 0..opts.solver_instances {
        let horizon = 1 + i % 4;
        let b_con = 1 + i % 2;
        let model = random_toy_model(&mut rng, 3, b_con, horizon);
        let exact = exact_expectimax(&model)?;
        let cfg = PbviConfig {
            belief_budget: 16,
            expansion_depth: 2,
            seed: i as u64,
        };
        let (_, v) = solve_pbvi(&model, &cfg)?;
        checks.push(Check {
            suite: "pbvi-vs-expectimax",
            name: format!("3-AP bound {i} (B_con={b_con}, T_H={horizon})"),
            passed: v <= exact + 1e-9,
            detail: format!("pbvi {v:.12}  exact {exact:.12}"),
        });
    }
    Ok(checks)
}

pub fn run_all(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut all = rate_suite(opts)?;
    all.extend(transition_suite(opts)?);
    all.extend(solver_suite(opts)?);
    Ok(all)
}
