use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{expand_belief, Belief, PomdpModel};
use crate::channel::TransitionPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbviConfig {
    /// Maximum number of belief points (corners included).
    pub belief_budget: usize,
    /// Number of stages of reachable beliefs to explore beyond stage 1.
    pub expansion_depth: usize,
    pub seed: u64,
}

impl Default for PbviConfig {
    fn default() -> Self {
        PbviConfig {
            belief_budget: 128,
            expansion_depth: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    /// Index into `PomdpModel::actions`.
    pub action: usize,
    pub values: Vec<f64>,
}

impl AlphaVector {
    pub fn dot(&self, joint: &[f64]) -> f64 {
        self.values.iter().zip(joint).map(|(a, b)| a * b).sum()
    }
}

/// Alpha vectors per stage; `stages[k - 1]` holds stage `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    pub stages: Vec<Vec<AlphaVector>>,
}

impl StagePolicy {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    fn best(&self, belief: &Belief, stage: usize) -> Result<(usize, f64)> {
        let gamma = self.stages.get(stage.wrapping_sub(1)).ok_or(Error::IndexOutOfRange {
            index: stage,
            len: self.stages.len() + 1,
        })?;
        let joint = belief.expand();
        if gamma.first().map_or(true, |a| a.values.len() != joint.len()) {
            return Err(Error::contract("belief size does not match the policy"));
        }
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for alpha in gamma {
            let v = alpha.dot(&joint);
            if v > best.1 || (v == best.1 && alpha.action < best.0) {
                best = (alpha.action, v);
            }
        }
        Ok(best)
    }

    pub fn value(&self, belief: &Belief, stage: usize) -> Result<f64> {
        self.best(belief, stage).map(|b| b.1)
    }
}

/// Greedy action of the stage-`k` policy at `belief`; ties go to the lowest
/// action index.
pub fn act(policy: &StagePolicy, belief: &Belief, stage: usize) -> Result<usize> {
    policy.best(belief, stage).map(|b| b.0)
}

/// Point-based value iteration over a fixed belief set shared by all stages.
///
/// Returns the per-stage policy and the value at the model's initial belief
/// (evaluated after the first transition).
pub fn solve_pbvi(model: &PomdpModel, cfg: &PbviConfig) -> Result<(StagePolicy, f64)> {
    if cfg.belief_budget == 0 {
        return Err(Error::config("belief budget must be positive"));
    }
    let points = belief_set(model, cfg);
    let beliefs: Vec<Vec<f64>> = points.iter().map(|u| expand_belief(u)).collect();
    // Unit-mass beliefs admit a much cheaper backup.
    let corners: Vec<Option<usize>> = points
        .iter()
        .map(|u| {
            u.iter().all(|&x| x == 0.0 || x == 1.0).then(|| {
                u.iter()
                    .enumerate()
                    .filter(|(_, &x)| x == 1.0)
                    .map(|(j, _)| 1 << j)
                    .sum()
            })
        })
        .collect();
    let n = model.num_states();

    let mut stages: Vec<Vec<AlphaVector>> = vec![Vec::new(); model.horizon];
    let mut projected: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let mut scratch = Scratch {
        weighted: Vec::new(),
        pick: vec![0; n],
    };
    for k in (1..=model.horizon).rev() {
        let mut gamma: Vec<AlphaVector> = Vec::new();
        let mut seen: HashSet<(usize, Vec<u64>)> = HashSet::new();
        scratch.weighted.resize(projected.len(), Vec::with_capacity(n));
        for (w, corner) in beliefs.iter().zip(&corners) {
            let (a, values) = match *corner {
                Some(s0) => corner_backup(model, &projected, s0),
                None => point_backup(model, &projected, w, &mut scratch),
            };
            let key = (a, values.iter().map(|v| v.to_bits()).collect());
            if seen.insert(key) {
                gamma.push(AlphaVector { action: a, values });
            }
        }
        if k > 1 {
            projected = gamma
                .iter()
                .map(|al| project(&al.values, &model.trans[k - 1]))
                .collect();
        }
        stages[k - 1] = gamma;
    }
    let policy = StagePolicy { stages };
    let value = policy.value(&model.stage_one_belief(), 1)?;
    Ok((policy, value))
}

/// Backup at a general belief `w` (joint distribution).
fn point_backup(model: &PomdpModel, projected: &[Vec<f64>], w: &[f64], scratch: &mut Scratch) -> (usize, Vec<f64>) {
    let n = w.len();
    for (p, wp) in projected.iter().zip(scratch.weighted.iter_mut()) {
        wp.clear();
        wp.extend(p.iter().zip(w).map(|(a, b)| a * b));
    }
    let weighted = &scratch.weighted[..projected.len()];
    let mut best: Option<(usize, f64)> = None;
    for a in 0..model.num_actions() {
        let mask = model.actions[a] as usize;
        let immediate: f64 = (0..n).map(|s| w[s] * model.reward(s, a)).sum();
        let future = best_continuations(weighted, mask, n, &mut scratch.pick);
        let v = immediate + model.discount * future;
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    let (a, _) = best.expect("at least one action");
    let mask = model.actions[a] as usize;
    best_continuations(weighted, mask, n, &mut scratch.pick);
    let values = (0..n)
        .map(|s| model.reward(s, a) + model.discount * projected[scratch.pick[s & mask]][s])
        .collect();
    (a, values)
}

/// Backup at the unit-mass belief on state `s0`. Only the group containing
/// `s0` carries weight; every other group keeps the first continuation, which
/// is what the general backup selects for zero-weight groups.
fn corner_backup(model: &PomdpModel, projected: &[Vec<f64>], s0: usize) -> (usize, Vec<f64>) {
    let mut best_j = 0;
    for (j, p) in projected.iter().enumerate() {
        if p[s0] > projected[best_j][s0] {
            best_j = j;
        }
    }
    let cont = projected[best_j][s0];
    let mut best: Option<(usize, f64)> = None;
    for a in 0..model.num_actions() {
        let v = model.reward(s0, a) + model.discount * cont;
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    let (a, _) = best.expect("at least one action");
    let mask = model.actions[a] as usize;
    let values = (0..model.num_states())
        .map(|s| {
            let j = if s & mask == s0 & mask { best_j } else { 0 };
            model.reward(s, a) + model.discount * projected[j][s]
        })
        .collect();
    (a, values)
}

/// For each observation group (states sharing the connected bits `mask`),
/// picks the continuation vector with the largest belief-weighted sum and
/// returns the total. `pick[g]` receives the chosen index for group `g`;
/// ties keep the lowest index.
fn best_continuations(weighted: &[Vec<f64>], mask: usize, n: usize, pick: &mut [usize]) -> f64 {
    let free = !mask & (n - 1);
    let mut total = 0.0;
    // groups are indexed by the submasks of `mask`
    let mut g = mask;
    loop {
        let mut best = f64::NEG_INFINITY;
        for (j, wj) in weighted.iter().enumerate() {
            let mut sum = 0.0;
            let mut f = free;
            loop {
                sum += wj[g | f];
                if f == 0 {
                    break;
                }
                f = (f - 1) & free;
            }
            if sum > best {
                best = sum;
                pick[g] = j;
            }
        }
        total += best;
        if g == 0 {
            break;
        }
        g = (g - 1) & mask;
    }
    total
}

struct Scratch {
    weighted: Vec<Vec<f64>>,
    pick: Vec<usize>,
}

/// `(P α)(s) = Σ_s' P(s' | s) α(s')` for a per-AP factored transition.
pub(super) fn project(alpha: &[f64], trans: &[TransitionPair]) -> Vec<f64> {
    let mut out = alpha.to_vec();
    for (j, t) in trans.iter().enumerate() {
        let bit = 1usize << j;
        for s in 0..out.len() {
            if s & bit == 0 {
                let (v0, v1) = (out[s], out[s | bit]);
                out[s] = t.p00() * v0 + t.p01 * v1;
                out[s | bit] = t.p10() * v0 + t.p11 * v1;
            }
        }
    }
    out
}

/// Corners, the stage-1 belief and a farthest-point selection of reachable
/// beliefs, all as per-AP good probabilities.
pub(super) fn belief_set(model: &PomdpModel, cfg: &PbviConfig) -> Vec<Vec<f64>> {
    let p = model.pool_size();
    let budget = cfg.belief_budget;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selected: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut keys: HashSet<Vec<u64>> = HashSet::new();
    let key = |u: &[f64]| u.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();

    let start = model.stage_one_belief().upsilon;
    keys.insert(key(&start));
    selected.push(start.clone());

    let mut corners: Vec<Vec<f64>> = (0..1usize << p)
        .map(|s| (0..p).map(|j| f64::from((s >> j & 1) as u8)).collect())
        .collect();
    if corners.len() + 1 > budget {
        log::warn!(
            "belief budget {budget} below the {} corner beliefs; subsampling corners",
            corners.len()
        );
        corners.shuffle(&mut rng);
        corners.truncate(budget - 1);
    }
    for c in corners {
        if keys.insert(key(&c)) {
            selected.push(c);
        }
    }
    if selected.len() >= budget {
        selected.truncate(budget);
        return selected;
    }

    // Reachable beliefs, stage by stage.
    let obs_per_action = 1usize << model.b_con;
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut frontier = vec![Belief { upsilon: start }];
    let depth = cfg.expansion_depth.min(model.horizon - 1);
    for level in 1..=depth {
        let trans = &model.trans[level];
        let enumerate = frontier.len() * model.num_actions() * obs_per_action <= budget;
        let mut next = Vec::new();
        for b in &frontier {
            for &a in &model.actions {
                if enumerate {
                    let mut o = a;
                    loop {
                        next.push(b.condition(a, o).predict(trans));
                        if o == 0 {
                            break;
                        }
                        o = (o - 1) & a;
                    }
                } else {
                    let o = (0..p)
                        .filter(|&j| a >> j & 1 == 1 && rng.gen::<f64>() < b.upsilon[j])
                        .fold(0u32, |m, j| m | 1 << j);
                    next.push(b.condition(a, o).predict(trans));
                }
            }
        }
        let mut fresh = HashSet::new();
        next.retain(|b| fresh.insert(key(&b.upsilon)));
        if next.len() > budget {
            next.shuffle(&mut rng);
            next.truncate(budget);
        }
        candidates.extend(next.iter().map(|b| b.upsilon.clone()));
        frontier = next;
    }
    candidates.retain(|c| keys.insert(key(c)));

    // Farthest-point selection in L1 over the per-AP probabilities.
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let mut dist: Vec<f64> = candidates
        .iter()
        .map(|c| selected.iter().map(|s| l1(c, s)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; candidates.len()];
    while selected.len() < budget {
        let mut best: Option<usize> = None;
        for i in 0..candidates.len() {
            if !taken[i] && dist[i] > 0.0 && best.map_or(true, |b| dist[i] > dist[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        taken[i] = true;
        for k in 0..candidates.len() {
            if !taken[k] {
                dist[k] = dist[k].min(l1(&candidates[k], &candidates[i]));
            }
        }
        selected.push(candidates[i].clone());
    }
    selected
}
