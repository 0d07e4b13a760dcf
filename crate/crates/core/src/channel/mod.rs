//! Channel statistics: path loss, Jakes aging, two-state quantization and the
//! closed-form channel-state probabilities used by the POMDP.

mod bvn;
mod lsf;
pub mod special;

use serde::{Deserialize, Serialize};

pub use bvn::bvn_upper_rect;
pub use lsf::LsfProcess;
pub use special::{bessel_j0, q_function};

use crate::error::{Error, Result};

/// Distance-based path loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    pub d0: f64,
    pub alpha_pl: f64,
    pub d_h: f64,
}

impl PathLossParams {
    pub fn new(d0: f64, alpha_pl: f64, d_h: f64) -> Result<Self> {
        let p = PathLossParams { d0, alpha_pl, d_h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.alpha_pl > 2.0 && self.d_h >= 0.0) {
            return Err(Error::config(format!("invalid path loss parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            d0: 1.1,
            alpha_pl: 3.8,
            d_h: 13.5,
        }
    }
}

/// Two-component log-normal shadowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowingParams {
    pub sigma_sh_db: f64,
    pub d_decorr: f64,
    pub iota: f64,
}

impl ShadowingParams {
    pub fn new(sigma_sh_db: f64, d_decorr: f64, iota: f64) -> Result<Self> {
        let s = ShadowingParams {
            sigma_sh_db,
            d_decorr,
            iota,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sh_db >= 0.0 && self.d_decorr > 0.0 && (0.0..=1.0).contains(&self.iota)) {
            return Err(Error::config(format!("invalid shadowing parameters {self:?}")));
        }
        Ok(())
    }

    /// Correlation of the user-side shadowing term across one step of length `step_m`.
    pub fn step_correlation(&self, step_m: f64) -> f64 {
        2f64.powf(-step_m / self.d_decorr)
    }

    /// Correlation of the total shadowing between consecutive cycles.
    pub fn temporal_correlation(&self, step_m: f64) -> f64 {
        self.iota + (1.0 - self.iota) * self.step_correlation(step_m)
    }
}

impl Default for ShadowingParams {
    fn default() -> Self {
        ShadowingParams {
            sigma_sh_db: 6.0,
            d_decorr: 100.0,
            iota: 0.5,
        }
    }
}

/// Linear path-loss gain at planar distance `d_2d`.
pub fn path_loss(d_2d: f64, p: &PathLossParams) -> f64 {
    let d3 = (d_2d * d_2d + p.d_h * p.d_h).sqrt();
    (p.d0 / d3).powf(p.alpha_pl)
}

/// Jakes temporal correlation `J0(2π · lag · f_D · T_s)`.
pub fn jakes_rho(lag: usize, f_doppler: f64, sample_period: f64) -> f64 {
    bessel_j0(2.0 * std::f64::consts::PI * lag as f64 * f_doppler * sample_period)
}

/// Small-scale aging coefficients for lags `0..=tau_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingProfile {
    pub f_doppler: f64,
    pub sample_period: f64,
    pub rho: Vec<f64>,
    pub rho_bar: Vec<f64>,
}

impl AgingProfile {
    pub fn new(f_doppler: f64, sample_period: f64, tau_c: usize) -> Self {
        let rho: Vec<f64> = (0..=tau_c).map(|k| jakes_rho(k, f_doppler, sample_period)).collect();
        Self::from_rho(f_doppler, sample_period, rho)
    }

    /// Doppler from speed and carrier frequency (`f_D = v / λ₀`).
    pub fn for_speed(speed: f64, carrier_hz: f64, sample_period: f64, tau_c: usize) -> Self {
        let lambda = 3e8 / carrier_hz;
        Self::new(speed / lambda, sample_period, tau_c)
    }

    /// No aging: `ρ ≡ 1`.
    pub fn static_channel(tau_c: usize) -> Self {
        Self::from_rho(0.0, 0.0, vec![1.0; tau_c + 1])
    }

    pub fn from_rho(f_doppler: f64, sample_period: f64, rho: Vec<f64>) -> Self {
        let rho_bar = rho.iter().map(|r| (1.0 - r * r).max(0.0).sqrt()).collect();
        AgingProfile {
            f_doppler,
            sample_period,
            rho,
            rho_bar,
        }
    }

    pub fn rho(&self, lag: usize) -> f64 {
        self.rho[lag]
    }

    pub fn max_lag(&self) -> usize {
        self.rho.len() - 1
    }
}

/// Two-level channel state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelState {
    Bad,
    Good,
}

impl ChannelState {
    pub fn is_good(self) -> bool {
        self == ChannelState::Good
    }

    pub fn from_good(good: bool) -> Self {
        if good {
            ChannelState::Good
        } else {
            ChannelState::Bad
        }
    }
}

/// Maps continuous LSF onto the good/bad representative levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateQuantizer {
    pub beta_threshold: f64,
    pub beta_good: f64,
    pub beta_bad: f64,
}

impl StateQuantizer {
    pub fn new(beta_threshold: f64, beta_good: f64, beta_bad: f64) -> Result<Self> {
        let q = StateQuantizer {
            beta_threshold,
            beta_good,
            beta_bad,
        };
        q.validate()?;
        Ok(q)
    }

    /// Thresholds taken as path loss at three reference distances.
    pub fn from_distances(pl: &PathLossParams, threshold_m: f64, good_m: f64, bad_m: f64) -> Result<Self> {
        Self::new(path_loss(threshold_m, pl), path_loss(good_m, pl), path_loss(bad_m, pl))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_bad > 0.0 && self.beta_bad < self.beta_threshold && self.beta_threshold < self.beta_good) {
            return Err(Error::config(format!("quantizer levels out of order: {self:?}")));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        2
    }

    pub fn quantize(&self, beta: f64) -> ChannelState {
        ChannelState::from_good(beta > self.beta_threshold)
    }

    pub fn value(&self, state: ChannelState) -> f64 {
        match state {
            ChannelState::Good => self.beta_good,
            ChannelState::Bad => self.beta_bad,
        }
    }
}

/// Standardized shadowing threshold `(10/σ) log10(β_thr / PL)`.
fn shadow_threshold(d_2d: f64, q: &StateQuantizer, sh: &ShadowingParams, pl: &PathLossParams) -> f64 {
    10.0 / sh.sigma_sh_db * (q.beta_threshold / path_loss(d_2d, pl)).log10()
}

/// Unconditional probability that the channel at planar distance `d_2d` is good.
pub fn prob_good(d_2d: f64, q: &StateQuantizer, sh: &ShadowingParams, pl: &PathLossParams) -> f64 {
    if sh.sigma_sh_db == 0.0 {
        return if path_loss(d_2d, pl) > q.beta_threshold {
            1.0
        } else {
            0.0
        };
    }
    q_function(shadow_threshold(d_2d, q, sh, pl))
}

/// Per-AP two-state transition probabilities between consecutive cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    /// P(good at t | good at t-1)
    pub p11: f64,
    /// P(good at t | bad at t-1)
    pub p01: f64,
}

impl TransitionPair {
    pub fn p10(&self) -> f64 {
        1.0 - self.p11
    }

    pub fn p00(&self) -> f64 {
        1.0 - self.p01
    }

    /// Probability of good at t given P(good at t-1) = `upsilon`.
    pub fn predict(&self, upsilon: f64) -> f64 {
        upsilon * self.p11 + (1.0 - upsilon) * self.p01
    }

    pub fn prob(&self, from_good: bool, to_good: bool) -> f64 {
        let up = if from_good { self.p11 } else { self.p01 };
        if to_good {
            up
        } else {
            1.0 - up
        }
    }
}

/// Mobility quantities entering the temporal shadowing correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobility {
    pub speed: f64,
    pub step_duration: f64,
}

impl Mobility {
    pub fn step_length(&self) -> f64 {
        self.speed * self.step_duration
    }
}

/// Good/bad transition probabilities for an AP whose planar distance moves
/// from `d_prev` to `d_curr` over one cycle.
pub fn trans_probs(
    d_prev: f64,
    d_curr: f64,
    q: &StateQuantizer,
    sh: &ShadowingParams,
    pl: &PathLossParams,
    mobility: Mobility,
) -> TransitionPair {
    if sh.sigma_sh_db == 0.0 {
        let g = prob_good(d_curr, q, sh, pl);
        return TransitionPair { p11: g, p01: g };
    }
    let k_curr = shadow_threshold(d_curr, q, sh, pl);
    let k_prev = shadow_threshold(d_prev, q, sh, pl);
    let corr = sh.temporal_correlation(mobility.step_length());
    let joint = bvn_upper_rect(k_curr, k_prev, corr);
    let q_prev = q_function(k_prev);
    let q_curr = q_function(k_curr);
    let p11 = if q_prev > 0.0 { joint / q_prev } else { q_curr };
    let p01 = if q_prev < 1.0 {
        (q_curr - joint) / (1.0 - q_prev)
    } else {
        q_curr
    };
    TransitionPair {
        p11: p11.clamp(0.0, 1.0),
        p01: p01.clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> (PathLossParams, ShadowingParams, StateQuantizer, Mobility) {
        let pl = PathLossParams::default();
        let sh = ShadowingParams::default();
        let q = StateQuantizer::from_distances(&pl, 150.0, 50.0, 200.0).unwrap();
        (
            pl,
            sh,
            q,
            Mobility {
                speed: 10.0,
                step_duration: 1.0,
            },
        )
    }

    #[test]
    fn path_loss_reference_and_monotone() {
        // 3-D distance equal to d0 gives unit gain
        let p2 = PathLossParams::new(20.0, 3.8, 12.0).unwrap();
        assert!((path_loss(16.0, &p2) - 1.0).abs() < 1e-12);
        let pl = PathLossParams::default();
        assert!(path_loss(50.0, &pl) > path_loss(150.0, &pl));
        assert!(path_loss(150.0, &pl) > path_loss(200.0, &pl));
    }

    #[test]
    fn path_loss_at_150m() {
        let pl = PathLossParams::default();
        let d3 = (150.0f64 * 150.0 + 13.5 * 13.5).sqrt();
        let direct = (d3 / 1.1f64).powf(-3.8);
        let v = path_loss(150.0, &pl);
        assert!((v - direct).abs() / direct < 1e-12);
        assert!((v - 7.6e-9).abs() < 0.1e-9, "{v:e}");
    }

    #[test]
    fn aging_profile_invariants() {
        let a = AgingProfile::for_speed(10.0, 1.8e9, 66.7e-6, 200);
        assert_eq!(a.rho(0), 1.0);
        for (r, rb) in a.rho.iter().zip(&a.rho_bar) {
            assert!(r.abs() <= 1.0);
            assert!((r * r + rb * rb - 1.0).abs() < 1e-12);
        }
        assert!((a.f_doppler - 60.0).abs() < 0.1);
    }

    #[test]
    fn quantize_boundaries() {
        let (_, _, q, _) = table1();
        let t = q.beta_threshold;
        assert_eq!(q.quantize(t), ChannelState::Bad);
        assert_eq!(q.quantize(2.0 * t), ChannelState::Good);
        assert_eq!(q.quantize(t / 2.0), ChannelState::Bad);
    }

    #[test]
    fn prob_good_examples() {
        let (pl, sh, q, _) = table1();
        assert!((prob_good(150.0, &q, &sh, &pl) - 0.5).abs() < 1e-12);
        assert!(prob_good(50.0, &q, &sh, &pl) > 0.5);
        assert!(prob_good(400.0, &q, &sh, &pl) < 0.5);
        let flat = ShadowingParams::new(0.0, 100.0, 0.5).unwrap();
        assert_eq!(prob_good(50.0, &q, &flat, &pl), 1.0);
        assert_eq!(prob_good(400.0, &q, &flat, &pl), 0.0);
    }

    #[test]
    fn step_correlation_table1() {
        let sh = ShadowingParams::default();
        assert!((sh.step_correlation(10.0) - 2f64.powf(-0.1)).abs() < 1e-15);
        assert!((sh.step_correlation(10.0) - 0.93303).abs() < 1e-5);
        assert_eq!(sh.step_correlation(0.0), 1.0);
    }

    #[test]
    fn transition_special_cases() {
        let (pl, _, q, mob) = table1();
        let frozen_sh = ShadowingParams::new(6.0, 100.0, 1.0).unwrap();
        let t = trans_probs(140.0, 140.0, &q, &frozen_sh, &pl, mob);
        assert!((t.p11 - 1.0).abs() < 1e-12 && t.p01.abs() < 1e-12);

        // v = 0 with iota < 1: states frozen
        let sh = ShadowingParams::default();
        let still = Mobility {
            speed: 0.0,
            step_duration: 1.0,
        };
        let t = trans_probs(120.0, 120.0, &q, &sh, &pl, still);
        assert!((t.p11 - 1.0).abs() < 1e-12 && t.p01.abs() < 1e-12);

        // independence: iota = 0 and an effectively infinite step
        let indep = ShadowingParams::new(6.0, 1e-6, 0.0).unwrap();
        let t = trans_probs(140.0, 150.0, &q, &indep, &pl, mob);
        let p = prob_good(150.0, &q, &indep, &pl);
        assert!((t.p11 - p).abs() < 1e-9 && (t.p01 - p).abs() < 1e-9);
    }

    #[test]
    fn total_probability_holds() {
        let (pl, sh, q, mob) = table1();
        for &(a, b) in &[(140.0, 150.0), (60.0, 70.0), (300.0, 290.0), (150.0, 160.0)] {
            let t = trans_probs(a, b, &q, &sh, &pl, mob);
            let p_prev = prob_good(a, &q, &sh, &pl);
            let p_curr = prob_good(b, &q, &sh, &pl);
            assert!((t.predict(p_prev) - p_curr).abs() < 1e-6, "{a} -> {b}");
            assert!((t.p11 + t.p10() - 1.0).abs() < 1e-15);
            assert!((t.p01 + t.p00() - 1.0).abs() < 1e-15);
        }
    }
}
