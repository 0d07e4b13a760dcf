//! Finite-horizon POMDP over a small candidate pool of APs.
//!
//! States are bitmasks over the pool (bit `j` set ⇔ pool AP `j` is in the good
//! state). Actions are bitmasks with exactly `b_con` bits. Transitions and
//! observations factor per AP, so beliefs are stored as per-AP good
//! probabilities and only expanded to the joint `2^|pool|` vector inside the
//! solver.

mod dump;
mod expectimax;
mod pbvi;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use dump::write_model;
pub use expectimax::exact_expectimax;
pub use pbvi::{act, solve_pbvi, AlphaVector, PbviConfig, StagePolicy};

use crate::channel::{
    prob_good, trans_probs, ChannelState, Mobility, PathLossParams, ShadowingParams, StateQuantizer, TransitionPair,
};
use crate::error::{Error, Result};
use crate::rate::{se_single_user, RateContext};

/// Largest pool the dense joint representation is allowed to reach.
pub const MAX_POOL: usize = 16;

/// Per-AP good-state probabilities `Υ_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub upsilon: Vec<f64>,
}

impl Belief {
    pub fn new(upsilon: Vec<f64>) -> Result<Self> {
        if upsilon.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::contract("belief entries must lie in [0, 1]"));
        }
        Ok(Belief { upsilon })
    }

    pub fn len(&self) -> usize {
        self.upsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upsilon.is_empty()
    }

    /// Product-form joint distribution over all `2^n` states.
    pub fn expand(&self) -> Vec<f64> {
        expand_belief(&self.upsilon)
    }

    /// Propagates every AP through one transition without observations.
    pub fn predict(&self, trans: &[TransitionPair]) -> Belief {
        Belief {
            upsilon: self.upsilon.iter().zip(trans).map(|(&u, t)| t.predict(u)).collect(),
        }
    }

    /// Conditions on the observed states of the connected APs.
    pub fn condition(&self, action_mask: u32, obs_mask: u32) -> Belief {
        let upsilon = self
            .upsilon
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                if action_mask >> j & 1 == 1 {
                    f64::from(obs_mask >> j & 1)
                } else {
                    u
                }
            })
            .collect();
        Belief { upsilon }
    }
}

pub fn expand_belief(upsilon: &[f64]) -> Vec<f64> {
    let mut joint = vec![1.0];
    for &u in upsilon {
        let mut next = Vec::with_capacity(joint.len() * 2);
        // bit j of the state index is AP j; appending doubles the index range
        next.extend(joint.iter().map(|w| w * (1.0 - u)));
        next.extend(joint.iter().map(|w| w * u));
        joint = next;
    }
    joint
}

/// Channel statistics of one AP along the predicted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTrack {
    /// `trans[k-1]`: transition into stage `k`, `k = 1..=horizon`.
    pub trans: Vec<TransitionPair>,
    /// `marginals[k]`: unconditional good probability at stage `k`
    /// (`k = 0` is the reference cycle).
    pub marginals: Vec<f64>,
}

/// Channel parameters needed to turn distances into state statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub quantizer: StateQuantizer,
    pub shadowing: ShadowingParams,
    pub path_loss: PathLossParams,
    pub mobility: Mobility,
}

impl ApTrack {
    /// `distances[0]` is the reference cycle, `distances[k]` stage `k`.
    pub fn from_distances(distances: &[f64], stats: &ChannelStats) -> Result<Self> {
        if distances.len() < 2 {
            return Err(Error::config(
                "distance track needs the reference cycle and at least one stage",
            ));
        }
        let marginals = distances
            .iter()
            .map(|&d| prob_good(d, &stats.quantizer, &stats.shadowing, &stats.path_loss))
            .collect();
        let trans = distances
            .windows(2)
            .map(|w| {
                trans_probs(
                    w[0],
                    w[1],
                    &stats.quantizer,
                    &stats.shadowing,
                    &stats.path_loss,
                    stats.mobility,
                )
            })
            .collect();
        Ok(ApTrack { trans, marginals })
    }

    pub fn horizon(&self) -> usize {
        self.trans.len()
    }
}

/// Memoized single-user reward keyed by the multiset of selected
/// `(state, load)` pairs. Safe to share between concurrent model builds.
#[derive(Debug)]
pub struct RewardCache {
    ctx: RateContext,
    quantizer: StateQuantizer,
    memo: Mutex<HashMap<Vec<(bool, u32)>, f64>>,
}

impl RewardCache {
    pub fn new(ctx: RateContext, quantizer: StateQuantizer) -> Self {
        RewardCache {
            ctx,
            quantizer,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn context(&self) -> &RateContext {
        &self.ctx
    }

    pub fn quantizer(&self) -> &StateQuantizer {
        &self.quantizer
    }

    pub fn value(&self, selected: &[(ChannelState, u32)]) -> f64 {
        let mut key: Vec<(bool, u32)> = selected.iter().map(|&(s, l)| (s.is_good(), l)).collect();
        key.sort_unstable();
        if let Some(&v) = self.memo.lock().expect("reward cache poisoned").get(&key) {
            return v;
        }
        let pairs: Vec<(f64, u32)> = selected.iter().map(|&(s, l)| (self.quantizer.value(s), l)).collect();
        let v = se_single_user(&pairs, &self.ctx);
        self.memo.lock().expect("reward cache poisoned").insert(key, v);
        v
    }
}

/// A solved-ready finite POMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomdpModel {
    /// Network AP index of each pool position.
    pub pool: Vec<usize>,
    pub b_con: usize,
    pub horizon: usize,
    /// Action bitmasks in increasing numeric order.
    pub actions: Vec<u32>,
    /// `trans[k-1][j]`: transition of pool AP `j` into stage `k`.
    pub trans: Vec<Vec<TransitionPair>>,
    /// `obs_marginals[k][j]`: good probability of pool AP `j` at stage `k`
    /// (`k = 0` is the reference cycle).
    pub obs_marginals: Vec<Vec<f64>>,
    /// `rewards[s * |A| + a]`
    pub rewards: Vec<f64>,
    pub discount: f64,
    /// Belief at the reference cycle, before the first transition.
    pub initial_belief: Belief,
}

/// All `b_con`-subsets of `n` positions as bitmasks, in increasing order.
pub fn action_masks(n: usize, b_con: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == b_con).collect()
}

/// Inputs of [`build_model`] for one candidate pool.
#[derive(Debug, Clone)]
pub struct PoolSpec<'a> {
    pub pool: Vec<usize>,
    pub tracks: Vec<&'a ApTrack>,
    /// Quantized state at the reference cycle for APs whose LSF is observed.
    pub known: Vec<Option<ChannelState>>,
    /// Carried-over belief for unobserved APs; falls back to the marginal.
    pub prior: Vec<Option<f64>>,
    pub loads: Vec<u32>,
}

pub fn build_model(
    spec: &PoolSpec<'_>,
    b_con: usize,
    horizon: usize,
    discount: f64,
    rewards: &RewardCache,
) -> Result<PomdpModel> {
    let n = spec.pool.len();
    if n == 0 || n > MAX_POOL {
        return Err(Error::TooLarge(format!("pool of {n} APs")));
    }
    if spec.tracks.len() != n || spec.known.len() != n || spec.prior.len() != n || spec.loads.len() != n {
        return Err(Error::contract("pool spec vectors differ in length"));
    }
    if b_con == 0 || b_con > n {
        return Err(Error::config(format!("cannot select {b_con} of {n} APs")));
    }
    if horizon == 0 {
        return Err(Error::config("horizon must be at least 1"));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::config(format!("discount {discount} outside [0, 1)")));
    }
    if let Some(j) = spec.tracks.iter().position(|t| t.horizon() < horizon) {
        return Err(Error::config(format!(
            "missing distance prediction for AP {} (have {} stages, need {horizon})",
            spec.pool[j],
            spec.tracks[j].horizon()
        )));
    }
    let trans = (0..horizon)
        .map(|k| spec.tracks.iter().map(|t| t.trans[k]).collect())
        .collect();
    let obs_marginals = (0..=horizon)
        .map(|k| spec.tracks.iter().map(|t| t.marginals[k]).collect())
        .collect();
    let upsilon = (0..n)
        .map(|j| match spec.known[j] {
            Some(ChannelState::Good) => 1.0,
            Some(ChannelState::Bad) => 0.0,
            None => spec.prior[j].unwrap_or(spec.tracks[j].marginals[0]),
        })
        .collect();
    let actions = action_masks(n, b_con);
    let n_states = 1usize << n;
    let mut table = Vec::with_capacity(n_states * actions.len());
    let mut selected = Vec::with_capacity(b_con);
    for s in 0..n_states {
        for &a in &actions {
            selected.clear();
            selected.extend(
                (0..n)
                    .filter(|&j| a >> j & 1 == 1)
                    .map(|j| (ChannelState::from_good(s >> j & 1 == 1), spec.loads[j])),
            );
            table.push(rewards.value(&selected));
        }
    }
    Ok(PomdpModel {
        pool: spec.pool.clone(),
        b_con,
        horizon,
        actions,
        trans,
        obs_marginals,
        rewards: table,
        discount,
        initial_belief: Belief::new(upsilon)?,
    })
}

impl PomdpModel {
    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    pub fn num_states(&self) -> usize {
        1 << self.pool.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of distinct observations: one per joint state (connected APs are
    /// seen exactly, unconnected ones through their marginal).
    pub fn num_observations(&self) -> usize {
        self.num_states()
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.actions.len() + action]
    }

    /// Belief at stage 1: the reference belief pushed through the first transition.
    pub fn stage_one_belief(&self) -> Belief {
        self.initial_belief.predict(&self.trans[0])
    }

    /// Optimal value when every AP state is observed at every stage. Bounds
    /// the value of any policy of this model from above.
    pub fn mdp_upper_bound(&self) -> f64 {
        let n = self.num_states();
        let mut v = vec![0.0; n];
        for k in (1..=self.horizon).rev() {
            let cont = if k < self.horizon {
                pbvi::project(&v, &self.trans[k])
            } else {
                vec![0.0; n]
            };
            v = (0..n)
                .map(|s| {
                    let r = (0..self.num_actions())
                        .map(|a| self.reward(s, a))
                        .fold(f64::NEG_INFINITY, f64::max);
                    r + self.discount * cont[s]
                })
                .collect();
        }
        self.stage_one_belief()
            .expand()
            .iter()
            .zip(&v)
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Dense `2^n × 2^n` transition matrix into stage `k`.
    pub fn transition_matrix(&self, stage: usize) -> Result<Vec<Vec<f64>>> {
        if stage == 0 || stage > self.horizon {
            return Err(Error::IndexOutOfRange {
                index: stage,
                len: self.horizon + 1,
            });
        }
        let tr = &self.trans[stage - 1];
        let n = self.num_states();
        Ok((0..n)
            .map(|s| {
                (0..n)
                    .map(|s2| {
                        tr.iter()
                            .enumerate()
                            .map(|(j, t)| t.prob(s >> j & 1 == 1, s2 >> j & 1 == 1))
                            .product()
                    })
                    .collect()
            })
            .collect())
    }

    /// Likelihood of a full observation vector (`obs` bit `j` = observed state
    /// of pool AP `j`) at stage `k` given the true state and action.
    /// Connected APs are observed exactly; unconnected observations are drawn
    /// from the stage marginal independently of the state.
    pub fn observation_prob(&self, stage: usize, state: usize, action: usize, obs: usize) -> f64 {
        let a = self.actions[action] as usize;
        if (state ^ obs) & a != 0 {
            return 0.0;
        }
        let marg = &self.obs_marginals[stage];
        (0..self.pool_size())
            .filter(|&j| a >> j & 1 == 0)
            .map(|j| if obs >> j & 1 == 1 { marg[j] } else { 1.0 - marg[j] })
            .product()
    }

    /// Belief at stage `k + 1` after acting at stage `k` and observing the
    /// connected APs.
    pub fn belief_update(
        &self,
        belief: &Belief,
        action: usize,
        observation: &[(usize, ChannelState)],
        stage: usize,
    ) -> Result<Belief> {
        let obs_mask = self.observation_mask(action, observation)?;
        if stage == 0 || stage >= self.horizon {
            return Err(Error::IndexOutOfRange {
                index: stage,
                len: self.horizon,
            });
        }
        Ok(belief
            .condition(self.actions[action], obs_mask)
            .predict(&self.trans[stage]))
    }

    /// Validates an observation list against an action and packs it as a mask.
    pub fn observation_mask(&self, action: usize, observation: &[(usize, ChannelState)]) -> Result<u32> {
        let a = *self.actions.get(action).ok_or(Error::IndexOutOfRange {
            index: action,
            len: self.actions.len(),
        })?;
        let mut seen = 0u32;
        let mut mask = 0u32;
        for &(j, s) in observation {
            if j >= self.pool_size() || a >> j & 1 == 0 {
                return Err(Error::contract(format!(
                    "observation for unconnected pool position {j}"
                )));
            }
            seen |= 1 << j;
            if s.is_good() {
                mask |= 1 << j;
            }
        }
        if seen != a {
            return Err(Error::contract("observation must cover every connected AP"));
        }
        Ok(mask)
    }

    /// Pool positions selected by an action.
    pub fn selected(&self, action: usize) -> Vec<usize> {
        let a = self.actions[action];
        (0..self.pool_size()).filter(|&j| a >> j & 1 == 1).collect()
    }
}
