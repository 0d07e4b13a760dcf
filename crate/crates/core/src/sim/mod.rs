//! Seeded experiments: trip generation, scheme execution, metrics and export.

mod config;
mod export;

pub use config::{
    ChannelConfig, EngineSection, ExperimentConfig, MobilityConfig, NetworkConfig, OverheadConfig, OverheadRule,
    Profile, QuantizerConfig, RadioConfig, SeedConfig,
};
pub use export::{csv_string, export, fmt9, quantile, SchemeSummary, Summary, CSV_NAME, MANIFEST_NAME, SUMMARY_NAME};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LsfProcess;
use crate::engine::{run_scheme, ChannelTable, EngineEnv, Scheme, Trip};
use crate::error::Result;
use crate::geometry::{NetworkLayout, Point2, TrajectoryState};
use crate::pomdp::RewardCache;

/// SE left after `n_ho` handoffs each costing a fraction `delta` of the frame.
pub fn overhead_adjusted_se(se: f64, n_ho: usize, delta: f64, rule: OverheadRule) -> f64 {
    match rule {
        OverheadRule::Linear => (1.0 - delta * n_ho as f64).max(0.0) * se,
        OverheadRule::Geometric => (1.0 - delta).powi(n_ho as i32) * se,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub trial: usize,
    pub t: usize,
    pub scheme: Scheme,
    pub serving_set: Vec<usize>,
    pub se_nats: f64,
    pub n_ho: usize,
    pub cum_ho: usize,
    pub se_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub scheme: Scheme,
    pub total_ho: usize,
    /// `None` for an empty trip.
    pub p10_se_nats: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Ordered by trial, then scheme (config order), then cycle.
    pub records: Vec<CycleRecord>,
    pub trials: Vec<TrialSummary>,
}

impl SimMetrics {
    pub fn total_handoffs(&self, scheme: Scheme) -> usize {
        self.trials
            .iter()
            .filter(|s| s.scheme == scheme)
            .map(|s| s.total_ho)
            .sum()
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out: Vec<Scheme> = Vec::new();
        for r in &self.trials {
            if !out.contains(&r.scheme) {
                out.push(r.scheme);
            }
        }
        out
    }
}

/// SplitMix64 finalizer over (seed, index): independent, order-free trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const LAYOUT_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const SOLVER_SALT: u64 = 0x5EED_501B_E5;

fn layout_for(cfg: &ExperimentConfig, trial_seed: u64) -> Result<NetworkLayout> {
    let n = &cfg.network;
    let seed = if n.fix_ap_positions {
        cfg.seeds.master_seed
    } else {
        trial_seed
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(LAYOUT_STREAM);
    NetworkLayout::place_aps(n.num_aps, n.area_side_m, &mut rng)?
        .with_heights(n.ap_height_m, n.user_height_m)?
        .with_wrap_margin(n.wrap_margin_m)
}

/// Realizes the trip of one trial. The channel uses its own RNG stream so it
/// is identical for every scheme.
pub fn generate_trip(cfg: &ExperimentConfig, trial: usize) -> Result<Trip> {
    let trial_seed = derive_seed(cfg.seeds.master_seed, trial as u64);
    let layout = layout_for(cfg, trial_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(CHANNEL_STREAM);
    let heading = TrajectoryState::random_heading(&mut rng);
    let c = layout.center();
    let [ox, oy] = cfg.network.start_offset_m;
    let start = layout.canonicalize(Point2::new(c.x + ox, c.y + oy));
    let mut traj = TrajectoryState::new(start, heading, cfg.mobility.speed_mps, cfg.mobility.step_duration_s)?;
    let cycles = cfg.mobility.trip_cycles;
    let sh = cfg.shadowing()?;
    let pl = cfg.path_loss()?;
    let mut positions = Vec::with_capacity(cycles + cfg.engine.t_h + 1);
    let mut lsf = Vec::with_capacity(cycles);
    let mut process: Option<LsfProcess> = None;
    for t in 0..cycles + cfg.engine.t_h + 1 {
        if t > 0 {
            traj = traj.advance(&layout);
        }
        positions.push(traj.position);
        if t < cycles {
            let next = match &process {
                None => LsfProcess::init(&layout, &sh, &pl, &traj, &mut rng)?,
                Some(p) => p.step(&layout, &traj, &mut rng),
            };
            lsf.push(next.lsf.clone());
            process = Some(next);
        }
    }
    Ok(Trip { layout, positions, lsf })
}

fn run_trial(
    cfg: &ExperimentConfig,
    rewards: &RewardCache,
    trial: usize,
) -> Result<(Vec<CycleRecord>, Vec<TrialSummary>)> {
    let trip = generate_trip(cfg, trial)?;
    let stats = cfg.channel_stats()?;
    let needs_table = cfg
        .engine
        .schemes
        .iter()
        .any(|s| matches!(s, Scheme::PomdpPlain | Scheme::PomdpHoMin));
    let table = needs_table.then(|| ChannelTable::build(&trip.layout, &trip.positions, &stats));
    let env = EngineEnv {
        trip: &trip,
        table: table.as_ref(),
        stats,
        rewards,
        seed: derive_seed(cfg.seeds.master_seed ^ SOLVER_SALT, trial as u64),
    };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for &scheme in &cfg.engine.schemes {
        let decisions = run_scheme(&env, &cfg.engine_config(scheme))?;
        let mut cum = 0;
        let mut se_all = Vec::with_capacity(decisions.len());
        for d in decisions {
            cum += d.n_ho;
            let se = env.rate(d.cycle, &d.serving_set);
            se_all.push(se);
            records.push(CycleRecord {
                trial,
                t: d.cycle,
                scheme,
                se_adj: overhead_adjusted_se(se, d.n_ho, cfg.overhead.delta, cfg.overhead.rule),
                serving_set: d.serving_set,
                se_nats: se,
                n_ho: d.n_ho,
                cum_ho: cum,
            });
        }
        se_all.sort_by(f64::total_cmp);
        summaries.push(TrialSummary {
            trial,
            scheme,
            total_ho: cum,
            p10_se_nats: quantile(&se_all, 0.1),
        });
    }
    Ok((records, summaries))
}

/// Runs every trial (in parallel) and merges results in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    let rewards = RewardCache::new(cfg.rate_context()?, cfg.quantizer()?);
    let per_trial: Vec<Result<(Vec<CycleRecord>, Vec<TrialSummary>)>> = (0..cfg.seeds.trials)
        .into_par_iter()
        .map(|trial| {
            let r = run_trial(cfg, &rewards, trial);
            log::debug!("trial {trial} done");
            r
        })
        .collect();
    let mut metrics = SimMetrics::default();
    for r in per_trial {
        let (rec, sum) = r?;
        metrics.records.extend(rec);
        metrics.trials.extend(sum);
    }
    Ok(metrics)
}
