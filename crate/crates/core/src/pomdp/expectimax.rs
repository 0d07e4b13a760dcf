use super::PomdpModel;
use crate::error::{Error, Result};

/// Exact optimal value by full expectimax over joint beliefs.
///
/// Uses the dense transition matrices and the literal observation model, in
/// which unconnected APs also emit (uninformative) observations, so it is
/// independent of the factored shortcuts taken by the point-based solver.
/// Limited to pools of at most 3 APs and horizons of at most 4.
pub fn exact_expectimax(model: &PomdpModel) -> Result<f64> {
    if model.pool_size() > 3 || model.horizon > 4 {
        return Err(Error::TooLarge(format!(
            "expectimax limited to |pool| <= 3 and horizon <= 4, got {} and {}",
            model.pool_size(),
            model.horizon
        )));
    }
    let matrices = (1..=model.horizon)
        .map(|k| model.transition_matrix(k))
        .collect::<Result<Vec<_>>>()?;
    let b0 = expand(model);
    let b1 = propagate(&b0, &matrices[0]);
    Ok(value(model, &matrices, 1, &b1))
}

fn expand(model: &PomdpModel) -> Vec<f64> {
    let n = model.num_states();
    (0..n)
        .map(|s| {
            model
                .initial_belief
                .upsilon
                .iter()
                .enumerate()
                .map(|(j, &u)| if s >> j & 1 == 1 { u } else { 1.0 - u })
                .product()
        })
        .collect()
}

fn propagate(b: &[f64], t: &[Vec<f64>]) -> Vec<f64> {
    let n = b.len();
    (0..n).map(|s2| (0..n).map(|s| b[s] * t[s][s2]).sum()).collect()
}

fn value(model: &PomdpModel, matrices: &[Vec<Vec<f64>>], stage: usize, b: &[f64]) -> f64 {
    let n = b.len();
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.num_actions() {
        let mut v: f64 = (0..n).map(|s| b[s] * model.reward(s, a)).sum();
        if stage < model.horizon {
            let mut future = 0.0;
            for o in 0..model.num_observations() {
                let joint: Vec<f64> = (0..n).map(|s| b[s] * model.observation_prob(stage, s, a, o)).collect();
                let p_o: f64 = joint.iter().sum();
                if p_o <= 0.0 {
                    continue;
                }
                let post: Vec<f64> = joint.iter().map(|x| x / p_o).collect();
                let next = propagate(&post, &matrices[stage]);
                future += p_o * value(model, matrices, stage + 1, &next);
            }
            v += model.discount * future;
        }
        best = best.max(v);
    }
    best
}
