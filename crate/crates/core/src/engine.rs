//! Handoff schemes: POMDP policy derivation (divide and conquer over candidate
//! pools), policy application with and without a rate trigger, and the two
//! LSF-ranking baselines.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{prob_good, trans_probs, ChannelState, TransitionPair};
use crate::error::{Error, Result};
use crate::geometry::{NetworkLayout, Point2};
use crate::pomdp::{
    act, build_model, solve_pbvi, ApTrack, ChannelStats, PbviConfig, PomdpModel, PoolSpec, RewardCache, StagePolicy,
};
use crate::rate::se_single_user;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    PomdpPlain,
    PomdpHoMin,
    LsfTime,
    LsfThreshold,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::PomdpPlain,
        Scheme::PomdpHoMin,
        Scheme::LsfTime,
        Scheme::LsfThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PomdpPlain => "pomdp_plain",
            Scheme::PomdpHoMin => "pomdp_ho_min",
            Scheme::LsfTime => "lsf_time",
            Scheme::LsfThreshold => "lsf_threshold",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub b_con: usize,
    pub t_h: usize,
    /// nats/s/Hz
    pub r_threshold: f64,
    pub gamma: f64,
    pub scheme: Scheme,
    pub pbvi: PbviConfig,
    /// Reuse the derived policy in the rate-triggered scheme while the
    /// potential set is unchanged and the policy has not expired.
    pub policy_cache: bool,
    /// Skip sub-problems whose full-observability bound cannot beat the best
    /// solved one. Does not change the selected policy.
    pub prune_subproblems: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            b_con: 5,
            t_h: 5,
            r_threshold: 7.0,
            gamma: 0.95,
            scheme: Scheme::PomdpHoMin,
            pbvi: PbviConfig::default(),
            policy_cache: false,
            prune_subproblems: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, num_aps: usize) -> Result<()> {
        if self.b_con == 0 || self.b_con >= num_aps {
            return Err(Error::config(format!(
                "b_con = {} must satisfy 1 <= b_con < {num_aps} APs",
                self.b_con
            )));
        }
        if self.t_h == 0 {
            return Err(Error::config("t_h must be at least 1"));
        }
        if !(self.r_threshold >= 0.0) {
            return Err(Error::config("r_threshold must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffDecision {
    pub cycle: usize,
    /// Sorted AP indices.
    pub serving_set: Vec<usize>,
    pub n_ho: usize,
    pub triggered: bool,
}

/// A realized trip: positions and true LSF per cycle (shared by all schemes).
#[derive(Debug, Clone)]
pub struct Trip {
    pub layout: NetworkLayout,
    /// Positions for cycles `0..` — at least `cycles + t_h` entries so that
    /// policies derived near the end can look ahead.
    pub positions: Vec<Point2>,
    /// `lsf[t][b]` for cycles `0..cycles`.
    pub lsf: Vec<Vec<f64>>,
}

impl Trip {
    pub fn cycles(&self) -> usize {
        self.lsf.len()
    }
}

/// Transition pairs and marginals for every AP along the trip.
#[derive(Debug, Clone)]
pub struct ChannelTable {
    /// `trans[t][b]`: transition of AP `b` into cycle `t` (`t ≥ 1`; entry 0 unused).
    trans: Vec<Vec<TransitionPair>>,
    /// `marginals[t][b]`
    marginals: Vec<Vec<f64>>,
}

impl ChannelTable {
    pub fn build(layout: &NetworkLayout, positions: &[Point2], stats: &ChannelStats) -> Self {
        let dist: Vec<Vec<f64>> = positions.par_iter().map(|&p| layout.distances_from(p)).collect();
        let marginals: Vec<Vec<f64>> = dist
            .par_iter()
            .map(|d| {
                d.iter()
                    .map(|&x| prob_good(x, &stats.quantizer, &stats.shadowing, &stats.path_loss))
                    .collect()
            })
            .collect();
        let trans: Vec<Vec<TransitionPair>> = (0..dist.len())
            .into_par_iter()
            .map(|t| {
                let prev = &dist[t.saturating_sub(1)];
                dist[t]
                    .iter()
                    .zip(prev)
                    .map(|(&dc, &dp)| {
                        trans_probs(
                            dp,
                            dc,
                            &stats.quantizer,
                            &stats.shadowing,
                            &stats.path_loss,
                            stats.mobility,
                        )
                    })
                    .collect()
            })
            .collect();
        ChannelTable { trans, marginals }
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    /// Track of AP `b` for a policy whose reference cycle is `reference`.
    pub fn track(&self, b: usize, reference: usize, horizon: usize) -> Result<ApTrack> {
        if reference + horizon >= self.len() {
            return Err(Error::config(format!(
                "missing distance prediction: need cycle {} but trip covers {}",
                reference + horizon,
                self.len()
            )));
        }
        Ok(ApTrack {
            trans: (reference + 1..=reference + horizon)
                .map(|t| self.trans[t][b])
                .collect(),
            marginals: (reference..=reference + horizon)
                .map(|t| self.marginals[t][b])
                .collect(),
        })
    }
}

/// Everything a scheme needs besides its configuration.
pub struct EngineEnv<'a> {
    pub trip: &'a Trip,
    pub table: Option<&'a ChannelTable>,
    pub stats: ChannelStats,
    pub rewards: &'a RewardCache,
    /// Seed for solver randomness; combined with cycle and sub-problem.
    pub seed: u64,
}

impl EngineEnv<'_> {
    /// Interference-free SE of a serving set under the true LSF at cycle `t`.
    pub fn rate(&self, t: usize, serving: &[usize]) -> f64 {
        let pairs: Vec<(f64, u32)> = serving.iter().map(|&b| (self.trip.lsf[t][b], 1)).collect();
        se_single_user(&pairs, self.rewards.context())
    }

    fn state(&self, t: usize, b: usize) -> ChannelState {
        self.rewards.quantizer().quantize(self.trip.lsf[t][b])
    }

    fn table(&self) -> Result<&ChannelTable> {
        self.table
            .ok_or_else(|| Error::contract("POMDP schemes need a channel table"))
    }
}

/// Derived policy for the best candidate pool.
#[derive(Debug, Clone)]
pub struct DerivedPolicy {
    pub policy: StagePolicy,
    pub model: PomdpModel,
    pub value: f64,
    /// Index into the sub-problem list (order of increasing candidate AP).
    pub subproblem: usize,
    pub num_subproblems: usize,
}

/// Observed reference-cycle information for [`derive_policy`].
#[derive(Debug, Clone, Default)]
pub struct BaseKnowledge {
    pub known: HashMap<usize, ChannelState>,
    pub prior: HashMap<usize, f64>,
}

/// Divide and conquer: one sub-problem per AP outside `base`, each with pool
/// `base ∪ {b}`; returns the one with the largest expected reward (ties to
/// the lowest candidate index).
pub fn derive_policy(
    env: &EngineEnv<'_>,
    cfg: &EngineConfig,
    reference: usize,
    base: &[usize],
    knowledge: &BaseKnowledge,
) -> Result<DerivedPolicy> {
    if base.len() != cfg.b_con {
        return Err(Error::contract(format!(
            "base set has {} APs, expected {}",
            base.len(),
            cfg.b_con
        )));
    }
    let table = env.table()?;
    let num_aps = env.trip.layout.num_aps();
    let base_set: BTreeSet<usize> = base.iter().copied().collect();
    let others: Vec<usize> = (0..num_aps).filter(|b| !base_set.contains(b)).collect();
    let tracks: HashMap<usize, ApTrack> = (0..num_aps)
        .map(|b| table.track(b, reference, cfg.t_h).map(|t| (b, t)))
        .collect::<Result<_>>()?;

    let models: Vec<PomdpModel> = others
        .par_iter()
        .map(|&other| {
            let mut pool: Vec<usize> = base_set.iter().copied().collect();
            pool.push(other);
            pool.sort_unstable();
            let spec = PoolSpec {
                tracks: pool.iter().map(|b| &tracks[b]).collect(),
                known: pool.iter().map(|b| knowledge.known.get(b).copied()).collect(),
                prior: pool.iter().map(|b| knowledge.prior.get(b).copied()).collect(),
                loads: vec![1; pool.len()],
                pool,
            };
            build_model(&spec, cfg.b_con, cfg.t_h, cfg.gamma, env.rewards)
        })
        .collect::<Result<_>>()?;
    let bounds: Vec<f64> = models.par_iter().map(|m| m.mdp_upper_bound()).collect();

    // Solve in order of decreasing upper bound. A sub-problem whose bound is
    // below the best value found so far cannot win (solver values never
    // exceed the optimum), so the outcome equals solving all of them.
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| bounds[b].total_cmp(&bounds[a]).then(a.cmp(&b)));
    let mut best: Option<(usize, StagePolicy, f64)> = None;
    let mut solved = 0;
    for l in order {
        if let Some((_, _, v)) = best.as_ref().filter(|_| cfg.prune_subproblems) {
            if bounds[l] + BOUND_SLACK * (1.0 + bounds[l].abs()) < *v {
                continue;
            }
        }
        let pbvi = PbviConfig {
            seed: mix(env.seed, reference as u64, others[l] as u64),
            ..cfg.pbvi
        };
        let (policy, value) = solve_pbvi(&models[l], &pbvi)?;
        solved += 1;
        let better = best
            .as_ref()
            .map_or(true, |(bl, _, bv)| value > *bv || (value == *bv && l < *bl));
        if better {
            best = Some((l, policy, value));
        }
    }
    log::trace!(
        "derive at cycle {reference}: solved {solved} of {} sub-problems",
        models.len()
    );
    let best = best.map(|(l, policy, value)| (l, models.into_iter().nth(l).expect("index"), policy, value));
    let (subproblem, model, policy, value) = best.ok_or_else(|| Error::config("no AP outside the base set"))?;
    Ok(DerivedPolicy {
        policy,
        model,
        value,
        subproblem,
        num_subproblems: others.len(),
    })
}

/// Relative tolerance guarding the bound test against rounding.
const BOUND_SLACK: f64 = 1e-9;

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top `k` APs by LSF, ties to the lowest index; returned sorted.
pub fn top_k(lsf: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lsf.len()).collect();
    idx.sort_by(|&a, &b| lsf[b].total_cmp(&lsf[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn handoffs(prev: &[usize], next: &[usize]) -> usize {
    next.iter().filter(|b| !prev.contains(b)).count()
}

fn initial(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Vec<usize> {
    top_k(&env.trip.lsf[0], cfg.b_con)
}

fn record(out: &mut Vec<HandoffDecision>, cycle: usize, prev: &[usize], next: Vec<usize>, triggered: bool) {
    out.push(HandoffDecision {
        cycle,
        n_ho: handoffs(prev, &next),
        serving_set: next,
        triggered,
    });
}

pub fn run_scheme(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Result<Vec<HandoffDecision>> {
    cfg.validate(env.trip.layout.num_aps())?;
    match cfg.scheme {
        Scheme::PomdpPlain => run_pomdp_plain(env, cfg),
        Scheme::PomdpHoMin => run_pomdp_ho_min(env, cfg),
        Scheme::LsfTime => run_lsf_time(env, cfg),
        Scheme::LsfThreshold => run_lsf_threshold(env, cfg),
    }
}

/// Policy epochs of `t_h` cycles; the belief of the unconnected pool AP is
/// carried into the next epoch.
pub fn run_pomdp_plain(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Result<Vec<HandoffDecision>> {
    let cycles = env.trip.cycles();
    let mut out = Vec::with_capacity(cycles);
    if cycles == 0 {
        return Ok(out);
    }
    let mut serving = initial(env, cfg);
    record(&mut out, 0, &serving.clone(), serving.clone(), false);
    let mut carried: HashMap<usize, f64> = HashMap::new();
    let mut t = 1;
    while t < cycles {
        let knowledge = BaseKnowledge {
            known: serving.iter().map(|&b| (b, env.state(t - 1, b))).collect(),
            prior: std::mem::take(&mut carried),
        };
        let derived = derive_policy(env, cfg, t - 1, &serving, &knowledge)?;
        let model = &derived.model;
        let mut belief = model.stage_one_belief();
        for k in 1..=cfg.t_h {
            if t >= cycles {
                break;
            }
            let a = act(&derived.policy, &belief, k)?;
            let next: Vec<usize> = model.selected(a).into_iter().map(|j| model.pool[j]).collect();
            let obs: Vec<(usize, ChannelState)> = model
                .selected(a)
                .into_iter()
                .map(|j| (j, env.state(t, model.pool[j])))
                .collect();
            record(&mut out, t, &serving, next.clone(), true);
            serving = next;
            if k < cfg.t_h {
                belief = model.belief_update(&belief, a, &obs, k)?;
            } else {
                let mask = model.observation_mask(a, &obs)?;
                let post = belief.condition(model.actions[a], mask);
                carried = (0..model.pool_size())
                    .filter(|&j| model.actions[a] >> j & 1 == 0)
                    .map(|j| (model.pool[j], post.upsilon[j]))
                    .collect();
            }
            t += 1;
        }
    }
    Ok(out)
}

/// Per-cycle policy derivation around the potential set; the serving set
/// switches to it only when the previous cycle's rate fell below threshold.
pub fn run_pomdp_ho_min(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Result<Vec<HandoffDecision>> {
    let cycles = env.trip.cycles();
    let mut out = Vec::with_capacity(cycles);
    if cycles == 0 {
        return Ok(out);
    }
    let mut serving = initial(env, cfg);
    let mut potential = serving.clone();
    let mut rate = env.rate(0, &serving);
    record(&mut out, 0, &serving.clone(), serving.clone(), false);
    // (policy, cycle it was derived at, potential set it produced)
    let mut cached: Option<(DerivedPolicy, usize, Vec<usize>)> = None;
    for t in 1..cycles {
        let hit = cached
            .as_ref()
            .filter(|(_, at, pot)| cfg.policy_cache && t - at < cfg.t_h && *pot == potential);
        let chosen = if let Some((d, at, _)) = hit {
            let stage = t - at + 1;
            let a = act(&d.policy, &stage_belief(&d.model, stage), stage)?;
            d.model
                .selected(a)
                .into_iter()
                .map(|j| d.model.pool[j])
                .collect::<Vec<_>>()
        } else {
            let knowledge = BaseKnowledge {
                known: potential
                    .iter()
                    .filter(|b| serving.contains(b))
                    .map(|&b| (b, env.state(t - 1, b)))
                    .collect(),
                prior: HashMap::new(),
            };
            let d = derive_policy(env, cfg, t - 1, &potential, &knowledge)?;
            let a = act(&d.policy, &d.model.stage_one_belief(), 1)?;
            let sel: Vec<usize> = d.model.selected(a).into_iter().map(|j| d.model.pool[j]).collect();
            if cfg.policy_cache {
                cached = Some((d, t, sel.clone()));
            }
            sel
        };
        potential = chosen;
        let triggered = rate < cfg.r_threshold;
        let next = if triggered { potential.clone() } else { serving.clone() };
        record(&mut out, t, &serving, next.clone(), triggered);
        serving = next;
        rate = env.rate(t, &serving);
    }
    Ok(out)
}

/// Open-loop belief `k - 1` transitions after stage 1 (used by the cache).
fn stage_belief(model: &PomdpModel, stage: usize) -> crate::pomdp::Belief {
    let mut b = model.stage_one_belief();
    for k in 1..stage {
        b = b.predict(&model.trans[k]);
    }
    b
}

pub fn run_lsf_time(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Result<Vec<HandoffDecision>> {
    let mut out = Vec::with_capacity(env.trip.cycles());
    let mut serving: Vec<usize> = Vec::new();
    for t in 0..env.trip.cycles() {
        let next = top_k(&env.trip.lsf[t], cfg.b_con);
        let prev = if t == 0 { next.clone() } else { serving };
        record(&mut out, t, &prev, next.clone(), t > 0);
        serving = next;
    }
    Ok(out)
}

pub fn run_lsf_threshold(env: &EngineEnv<'_>, cfg: &EngineConfig) -> Result<Vec<HandoffDecision>> {
    let cycles = env.trip.cycles();
    let mut out = Vec::with_capacity(cycles);
    if cycles == 0 {
        return Ok(out);
    }
    let mut serving = initial(env, cfg);
    let mut rate = env.rate(0, &serving);
    record(&mut out, 0, &serving.clone(), serving.clone(), false);
    for t in 1..cycles {
        let triggered = rate < cfg.r_threshold;
        let next = if triggered {
            top_k(&env.trip.lsf[t], cfg.b_con)
        } else {
            serving.clone()
        };
        record(&mut out, t, &serving, next.clone(), triggered);
        serving = next;
        rate = env.rate(t, &serving);
    }
    Ok(out)
}
