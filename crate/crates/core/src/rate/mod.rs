//! Downlink spectral efficiency with LMMSE estimation, conjugate beamforming
//! and channel aging.
//!
//! Closed-form power terms are evaluated per data sample; [`oracle`] simulates
//! the underlying signal model for cross-checking them.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::channel::{AgingProfile, ChannelState, StateQuantizer};
use crate::error::{Error, Result};

/// Thermal noise power in watts from a density, noise figure and bandwidth.
pub fn noise_power(density_dbm_hz: f64, figure_db: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((density_dbm_hz + figure_db + 10.0 * bandwidth_hz.log10() - 30.0) / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Downlink power budget per AP (W).
    pub p_dl: f64,
    /// Uplink pilot power (W).
    pub p_ul: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    pub antennas: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    /// Pilot slot of the typical user, `1..=tau_p`.
    pub pilot_index: usize,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            p_dl: dbm_to_watts(30.0),
            p_ul: dbm_to_watts(20.0),
            noise_power: noise_power(-174.0, 8.0, 20e6),
            antennas: 8,
            tau_c: 200,
            tau_p: 16,
            pilot_index: 16,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p_dl > 0.0
            && self.p_ul > 0.0
            && self.noise_power > 0.0
            && self.antennas >= 1
            && self.tau_p >= 1
            && self.tau_p < self.tau_c
            && (1..=self.tau_p).contains(&self.pilot_index);
        if !ok {
            return Err(Error::config(format!("invalid radio parameters {self:?}")));
        }
        Ok(())
    }

    /// Sample index at which channels are estimated.
    pub fn n_est(&self) -> usize {
        self.tau_p + 1
    }

    /// Lag between the pilot slot and the estimation instant.
    pub fn estimation_lag(&self) -> usize {
        self.n_est() - self.pilot_index
    }

    /// Aging lags `n − n_est` of the data samples `n = n_est..=tau_c`.
    pub fn data_lags(&self) -> std::ops::RangeInclusive<usize> {
        0..=(self.tau_c - self.n_est())
    }
}

/// Which closed form to use for the incoherent power terms.
///
/// `Derived` is the second-moment algebra of the signal model (beamforming
/// uncertainty plus aging sums to `p·Σβ/|E|`); `Printed` carries an extra
/// factor of `M` on the incoherent terms, as the formulas are commonly
/// written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    #[default]
    Derived,
    Printed,
}

impl BoundForm {
    fn incoherent_gain(self, antennas: usize) -> f64 {
        match self {
            BoundForm::Derived => 1.0,
            BoundForm::Printed => antennas as f64,
        }
    }
}

/// Everything the rate expressions need besides the serving configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateContext {
    pub radio: RadioParams,
    pub aging: AgingProfile,
    pub form: BoundForm,
}

impl RateContext {
    pub fn new(radio: RadioParams, aging: AgingProfile, form: BoundForm) -> Result<Self> {
        radio.validate()?;
        if aging.max_lag() < radio.tau_c {
            return Err(Error::config(format!(
                "aging profile covers lags up to {} but tau_c is {}",
                aging.max_lag(),
                radio.tau_c
            )));
        }
        Ok(RateContext { radio, aging, form })
    }

    fn rho_est(&self) -> f64 {
        self.aging.rho(self.radio.estimation_lag())
    }
}

/// Variance of the LMMSE channel estimate.
///
/// `copilot_betas` are the gains from the same AP to the other users sharing
/// the pilot slot.
pub fn psi(beta: f64, rho_est: f64, radio: &RadioParams, copilot_betas: &[f64]) -> f64 {
    let denom = radio.p_ul * (beta + copilot_betas.iter().sum::<f64>()) + radio.noise_power;
    rho_est * rho_est * radio.p_ul * beta * beta / denom
}

/// Conjugate-beamforming power coefficient; `None` when the estimate carries no
/// energy and the AP must be left out of the serving sums.
pub fn eta(psi_val: f64, antennas: usize, load: u32, p_dl: f64) -> Option<f64> {
    if psi_val > 0.0 && load >= 1 {
        Some(p_dl / (antennas as f64 * load as f64 * psi_val))
    } else {
        None
    }
}

/// Serving set of the typical user together with AP-indexed gains and loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingConfig {
    pub serving: Vec<usize>,
    /// `|E_b|` for every AP.
    pub loads: Vec<u32>,
    /// `β_bu` from every AP to the typical user.
    pub lsf: Vec<f64>,
}

impl ServingConfig {
    pub fn new(serving: Vec<usize>, loads: Vec<u32>, lsf: Vec<f64>) -> Result<Self> {
        let cfg = ServingConfig { serving, loads, lsf };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-user configuration with unit loads.
    pub fn unit_load(serving: Vec<usize>, lsf: Vec<f64>) -> Result<Self> {
        let loads = vec![1; lsf.len()];
        Self::new(serving, loads, lsf)
    }

    pub fn num_aps(&self) -> usize {
        self.lsf.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lsf.len();
        if self.loads.len() != n {
            return Err(Error::config("loads and lsf vectors differ in length"));
        }
        if let Some(&b) = self.serving.iter().find(|&&b| b >= n) {
            return Err(Error::IndexOutOfRange { index: b, len: n });
        }
        if self.loads.contains(&0) {
            return Err(Error::config("AP loads must be at least 1"));
        }
        if self.lsf.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::config("large-scale fading must be positive and finite"));
        }
        Ok(())
    }
}

/// Another user whose downlink leaks into the typical user's signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub serving: Vec<usize>,
    /// `β_b'u`: gains from every AP to the typical user.
    pub lsf_to_typical: Vec<f64>,
    /// `β_b'u'`: gains from every AP to this interferer.
    pub own_lsf: Vec<f64>,
    /// Shares the typical user's pilot slot.
    pub copilot: bool,
    /// Pilot-to-estimation aging coefficient of this user.
    pub rho_est: f64,
}

impl Interferer {
    fn validate(&self, n: usize) -> Result<()> {
        if self.lsf_to_typical.len() != n || self.own_lsf.len() != n {
            return Err(Error::config("interferer gain vectors must cover every AP"));
        }
        if let Some(&b) = self.serving.iter().find(|&&b| b >= n) {
            return Err(Error::IndexOutOfRange { index: b, len: n });
        }
        if !(0.0..=1.0).contains(&self.rho_est.abs()) {
            return Err(Error::config("interferer aging coefficient outside [-1, 1]"));
        }
        Ok(())
    }
}

/// Estimate variances and power coefficients for every user at every AP that
/// serves it.
#[derive(Debug, Clone)]
pub(crate) struct Estimation {
    /// `ψ_bu` of the typical user at every AP (used for both serving and
    /// pilot-contamination terms).
    pub psi_typical: Vec<f64>,
    /// `(b, ψ_bu', η_bu')` for each interferer's serving APs.
    pub interferers: Vec<Vec<(usize, f64, Option<f64>)>>,
    /// `η_bu` for the typical user's serving APs.
    pub eta_typical: Vec<(usize, Option<f64>)>,
}

pub(crate) fn estimation(serving: &ServingConfig, interferers: &[Interferer], ctx: &RateContext) -> Result<Estimation> {
    serving.validate()?;
    let n = serving.num_aps();
    for i in interferers {
        i.validate(n)?;
    }
    let radio = &ctx.radio;
    let copilot_sum = |b: usize| -> f64 { interferers.iter().filter(|i| i.copilot).map(|i| i.own_lsf[b]).sum() };
    let rho_e = ctx.rho_est();
    let psi_typical: Vec<f64> = (0..n)
        .map(|b| psi(serving.lsf[b], rho_e, radio, &[copilot_sum(b)]))
        .collect();
    let eta_typical = serving
        .serving
        .iter()
        .map(|&b| (b, eta(psi_typical[b], radio.antennas, serving.loads[b], radio.p_dl)))
        .collect();
    let interferers = interferers
        .iter()
        .map(|i| {
            i.serving
                .iter()
                .map(|&b| {
                    let own = i.own_lsf[b];
                    let others = if i.copilot {
                        // the typical user and all other copilots share the slot
                        serving.lsf[b] + copilot_sum(b) - own
                    } else {
                        0.0
                    };
                    let p = psi(own, i.rho_est, radio, &[others]);
                    (b, p, eta(p, radio.antennas, serving.loads[b], radio.p_dl))
                })
                .collect()
        })
        .collect();
    Ok(Estimation {
        psi_typical,
        interferers,
        eta_typical,
    })
}

/// Closed-form signal, self-interference and inter-user power terms at one
/// data lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiTerms {
    pub xi1: f64,
    pub xi23: f64,
    pub xi4: Vec<f64>,
}

impl XiTerms {
    pub fn sinr(&self, noise_power: f64) -> f64 {
        self.xi1 / (self.xi23 + self.xi4.iter().sum::<f64>() + noise_power)
    }
}

pub fn xi_terms(serving: &ServingConfig, interferers: &[Interferer], ctx: &RateContext, lag: usize) -> Result<XiTerms> {
    let est = estimation(serving, interferers, ctx)?;
    Ok(xi_from_estimation(&est, serving, interferers, ctx, lag))
}

fn xi_from_estimation(
    est: &Estimation,
    serving: &ServingConfig,
    interferers: &[Interferer],
    ctx: &RateContext,
    lag: usize,
) -> XiTerms {
    let radio = &ctx.radio;
    let m = radio.antennas as f64;
    let p = radio.p_dl;
    let gain = ctx.form.incoherent_gain(radio.antennas);
    let rho2 = ctx.aging.rho(lag).powi(2);
    let mut coherent = 0.0;
    let mut incoherent = 0.0;
    for &(b, eta_b) in &est.eta_typical {
        if eta_b.is_none() {
            continue;
        }
        let load = serving.loads[b] as f64;
        coherent += (est.psi_typical[b] / load).sqrt();
        incoherent += p * serving.lsf[b] / load;
    }
    let xi4 = interferers
        .iter()
        .zip(&est.interferers)
        .map(|(i, aps)| {
            let mut leak = 0.0;
            let mut coh = 0.0;
            for &(b, _, eta_b) in aps {
                if eta_b.is_none() {
                    continue;
                }
                let load = serving.loads[b] as f64;
                leak += p * i.lsf_to_typical[b] / load;
                if i.copilot {
                    coh += (est.psi_typical[b] / load).sqrt();
                }
            }
            gain * leak + rho2 * m * p * coh * coh
        })
        .collect();
    XiTerms {
        xi1: m * p * rho2 * coherent * coherent,
        xi23: gain * incoherent,
        xi4,
    }
}

/// Achievable-rate lower bound in nats/s/Hz.
pub fn rate_lb(serving: &ServingConfig, interferers: &[Interferer], ctx: &RateContext) -> Result<f64> {
    if serving.serving.is_empty() {
        return Ok(0.0);
    }
    let est = estimation(serving, interferers, ctx)?;
    let radio = &ctx.radio;
    let total: f64 = radio
        .data_lags()
        .map(|k| {
            let xi = xi_from_estimation(&est, serving, interferers, ctx, k);
            xi.sinr(radio.noise_power).ln_1p()
        })
        .sum();
    Ok(total / radio.tau_c as f64)
}

/// Interference-free spectral efficiency with SNR-based estimation quality,
/// evaluated on per-AP `(gain, load)` pairs of the serving set.
///
/// This is the POMDP reward when the gains are quantized state levels and the
/// trigger/measurement rate when they are true LSF values.
pub fn se_single_user(selected: &[(f64, u32)], ctx: &RateContext) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    let radio = &ctx.radio;
    let m = radio.antennas as f64;
    let rho_e = ctx.rho_est();
    let snr_pilot = rho_e * rho_e * radio.p_ul / radio.noise_power;
    let gain = ctx.form.incoherent_gain(radio.antennas);
    let mut coherent = 0.0;
    let mut incoherent = 0.0;
    for &(s, load) in selected {
        let psi_s = snr_pilot * s * s;
        if psi_s <= 0.0 || load == 0 {
            continue;
        }
        coherent += (psi_s / load as f64).sqrt();
        incoherent += radio.p_dl * s / load as f64;
    }
    let a = m * radio.p_dl * coherent * coherent;
    let denom = gain * incoherent + radio.noise_power;
    let total: f64 = radio
        .data_lags()
        .map(|k| (ctx.aging.rho(k).powi(2) * a / denom).ln_1p())
        .sum();
    total / radio.tau_c as f64
}

/// POMDP reward of selecting `selected` APs of a pool in channel states `states`.
pub fn reward(
    states: &[ChannelState],
    selected: &[bool],
    b_con: usize,
    loads: &[u32],
    q: &StateQuantizer,
    ctx: &RateContext,
) -> Result<f64> {
    if states.len() != selected.len() || loads.len() != selected.len() {
        return Err(Error::contract("state, action and load vectors differ in length"));
    }
    let chosen = selected.iter().filter(|&&a| a).count();
    if chosen != b_con {
        return Err(Error::contract(format!(
            "action selects {chosen} APs, expected {b_con}"
        )));
    }
    let pairs: Vec<(f64, u32)> = states
        .iter()
        .zip(selected)
        .zip(loads)
        .filter(|((_, &a), _)| a)
        .map(|((&s, _), &l)| (q.value(s), l))
        .collect();
    Ok(se_single_user(&pairs, ctx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(form: BoundForm) -> RateContext {
        let radio = RadioParams::default();
        let aging = AgingProfile::for_speed(10.0, 1.8e9, 66.7e-6, radio.tau_c);
        RateContext::new(radio, aging, form).unwrap()
    }

    #[test]
    fn noise_power_examples() {
        let n = noise_power(-174.0, 8.0, 20e6);
        assert!((n / 5.0238e-13 - 1.0).abs() < 1e-3, "{n}");
        assert!((10.0 * (n.log10()) + 30.0 + 92.99).abs() < 0.01);
        assert!((noise_power(-174.0, 0.0, 1.0) - 10f64.powf(-20.4)).abs() < 1e-30);
        let ratio = noise_power(-174.0, 8.0, 40e6) / n;
        assert!((10.0 * ratio.log10() - 3.0103).abs() < 1e-3);
    }

    #[test]
    fn psi_limits() {
        let radio = RadioParams::default();
        let beta = 1e-6;
        assert!((psi(beta, 1.0, &radio, &[]) / beta - 1.0).abs() < 1e-4);
        assert_eq!(psi(beta, 0.0, &radio, &[]), 0.0);
        assert!(psi(beta, 1.0, &radio, &[2e-6]) < psi(beta, 1.0, &radio, &[]));
    }

    #[test]
    fn eta_scaling() {
        let e1 = eta(1e-7, 8, 1, 1.0).unwrap();
        let e2 = eta(1e-7, 8, 2, 1.0).unwrap();
        assert!((e1 / e2 - 2.0).abs() < 1e-12);
        assert_eq!(eta(0.125, 8, 1, 1.0), Some(1.0));
        assert_eq!(eta(0.0, 8, 1, 1.0), None);
    }

    #[test]
    fn static_single_ap_reduces_by_hand() {
        let radio = RadioParams::default();
        let c = RateContext::new(radio, AgingProfile::static_channel(radio.tau_c), BoundForm::Derived).unwrap();
        let beta = 3e-8;
        let serving = ServingConfig::new(vec![0], vec![2], vec![beta]).unwrap();
        let r = rate_lb(&serving, &[], &c).unwrap();
        let ps = psi(beta, 1.0, &radio, &[]);
        let load = 2.0;
        let m = radio.antennas as f64;
        let per = (m * radio.p_dl * ps * ps / (load * ps * (radio.p_dl * beta / load + radio.noise_power))).ln_1p();
        let expected = per * (radio.tau_c - radio.n_est() + 1) as f64 / radio.tau_c as f64;
        assert!((r - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn non_copilot_leak_term() {
        let c = ctx(BoundForm::Printed);
        let serving = ServingConfig::unit_load(vec![0], vec![1e-7, 2e-8, 5e-9]).unwrap();
        let intf = Interferer {
            serving: vec![1, 2],
            lsf_to_typical: vec![1e-7, 2e-8, 5e-9],
            own_lsf: vec![1e-9, 1e-6, 3e-7],
            copilot: false,
            rho_est: 1.0,
        };
        let xi = xi_terms(&serving, &[intf], &c, 10).unwrap();
        let m = c.radio.antennas as f64;
        let expected = m * c.radio.p_dl * (2e-8 + 5e-9);
        assert!((xi.xi4[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn empty_serving_gives_zero() {
        let c = ctx(BoundForm::Derived);
        let serving = ServingConfig::unit_load(vec![], vec![1e-7]).unwrap();
        assert_eq!(rate_lb(&serving, &[], &c).unwrap(), 0.0);
        assert_eq!(se_single_user(&[], &c), 0.0);
    }

    #[test]
    fn aging_lowers_rate() {
        let radio = RadioParams::default();
        let fresh = RateContext::new(radio, AgingProfile::static_channel(radio.tau_c), BoundForm::Derived).unwrap();
        let aged = RateContext::new(
            radio,
            AgingProfile::for_speed(300.0, 1.8e9, 66.7e-6, radio.tau_c),
            BoundForm::Derived,
        )
        .unwrap();
        let serving = ServingConfig::unit_load(vec![0, 1], vec![1e-7, 4e-8]).unwrap();
        assert!(rate_lb(&serving, &[], &fresh).unwrap() > rate_lb(&serving, &[], &aged).unwrap());
    }

    #[test]
    fn reward_monotone_in_states() {
        let c = ctx(BoundForm::Printed);
        let pl = crate::channel::PathLossParams::default();
        let q = StateQuantizer::from_distances(&pl, 150.0, 50.0, 200.0).unwrap();
        let sel = [true, true, true, true, true, false];
        let loads = [1; 6];
        let good = [ChannelState::Good; 6];
        let bad = [ChannelState::Bad; 6];
        let rg = reward(&good, &sel, 5, &loads, &q, &c).unwrap();
        let rb = reward(&bad, &sel, 5, &loads, &q, &c).unwrap();
        assert!(rg > rb);
        assert!(reward(&good, &sel, 4, &loads, &q, &c).is_err());
    }
}
