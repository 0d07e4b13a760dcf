//! Monte Carlo simulation of the downlink signal model, used to check the
//! closed-form power terms.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimation, Interferer, RateContext, ServingConfig};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

const CHUNK: usize = 2048;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    fn of(samples: impl Iterator<Item = f64> + Clone) -> Self {
        let n = samples.clone().count() as f64;
        let mean = samples.clone().sum::<f64>() / n;
        let var = samples.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate {
            mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// Whether `value` is within `rel` relative error or `k` standard errors.
    pub fn agrees_with(&self, value: f64, rel: f64, k: f64) -> bool {
        (self.mean - value).abs() <= (rel * value.abs()).max(k * self.std_err)
    }
}

/// Empirical powers of the received-signal components at one data lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPowers {
    /// `|E{DS}|²`
    pub desired: Estimate,
    /// `E|BU|²`
    pub beamforming_uncertainty: Estimate,
    /// `E|CA|²`
    pub channel_aging: Estimate,
    /// `E|BU + CA|²`
    pub self_interference: Estimate,
    /// `E|MI_uu'|²` per interferer.
    pub interference: Vec<Estimate>,
    /// `|E_b| · E{η_bu ‖ĥ_bu‖²}` for each serving AP of the typical user.
    pub tx_power: Vec<(usize, Estimate)>,
}

struct Sample {
    ds: C64,
    ca: C64,
    mi: Vec<C64>,
    tx: Vec<f64>,
}

fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

fn cn_vec<R: Rng + ?Sized>(rng: &mut R, m: usize, var: f64) -> Vec<C64> {
    (0..m).map(|_| cn(rng, var)).collect()
}

/// `aᵀ b*`
fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Simulates pilot transmission, LMMSE estimation, aging and conjugate
/// beamforming at data lag `lag` and returns empirical component powers.
///
/// Realizations are split into fixed-size chunks with their own RNG streams,
/// so results depend only on the seed drawn from `rng`, not on scheduling.
pub fn mc_signal_oracle<R: Rng + ?Sized>(
    serving: &ServingConfig,
    interferers: &[Interferer],
    ctx: &RateContext,
    lag: usize,
    n_realizations: usize,
    rng: &mut R,
) -> Result<SignalPowers> {
    if n_realizations < 10_000 {
        return Err(Error::contract(format!(
            "at least 10^4 realizations required, got {n_realizations}"
        )));
    }
    if lag > ctx.aging.max_lag() {
        return Err(Error::IndexOutOfRange {
            index: lag,
            len: ctx.aging.max_lag() + 1,
        });
    }
    let est = estimation(serving, interferers, ctx)?;
    let seed: u64 = rng.gen();
    let n_chunks = n_realizations.div_ceil(CHUNK);
    let samples: Vec<Sample> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(c as u64);
            let len = CHUNK.min(n_realizations - c * CHUNK);
            (0..len)
                .map(|_| realization(serving, interferers, ctx, &est, lag, &mut r))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let n = samples.len() as f64;
    let ds_mean: C64 = samples.iter().map(|s| s.ds).sum::<C64>() / n;
    let ds_var = samples.iter().map(|s| (s.ds - ds_mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    let desired = Estimate {
        mean: ds_mean.norm_sqr(),
        std_err: 2.0 * ds_mean.norm() * (ds_var / (2.0 * n)).sqrt(),
    };
    let beamforming_uncertainty = Estimate::of(samples.iter().map(|s| (s.ds - ds_mean).norm_sqr()));
    let channel_aging = Estimate::of(samples.iter().map(|s| s.ca.norm_sqr()));
    let self_interference = Estimate::of(samples.iter().map(|s| (s.ds - ds_mean + s.ca).norm_sqr()));
    let interference = (0..interferers.len())
        .map(|j| Estimate::of(samples.iter().map(move |s| s.mi[j].norm_sqr())))
        .collect();
    let tx_power = serving
        .serving
        .iter()
        .enumerate()
        .map(|(j, &b)| (b, Estimate::of(samples.iter().map(move |s| s.tx[j]))))
        .collect();
    Ok(SignalPowers {
        desired,
        beamforming_uncertainty,
        channel_aging,
        self_interference,
        interference,
        tx_power,
    })
}

fn realization<R: Rng + ?Sized>(
    serving: &ServingConfig,
    interferers: &[Interferer],
    ctx: &RateContext,
    est: &super::Estimation,
    lag: usize,
    rng: &mut R,
) -> Sample {
    let radio = &ctx.radio;
    let m = radio.antennas;
    let n_aps = serving.num_aps();
    let sp = radio.p_ul.sqrt();
    let rho_e = ctx.aging.rho(radio.estimation_lag());
    let rho_e_bar = (1.0 - rho_e * rho_e).max(0.0).sqrt();
    let rho = ctx.aging.rho(lag);
    let rho_bar = ctx.aging.rho_bar[lag];

    let mut involved = vec![false; n_aps];
    for &b in &serving.serving {
        involved[b] = true;
    }
    for i in interferers {
        for &b in &i.serving {
            involved[b] = true;
        }
    }

    // per AP: typical channel at n_est, typical channel at n, typical estimate,
    // and estimates of each interferer served there
    let mut h_est = vec![Vec::new(); n_aps];
    let mut h_now = vec![Vec::new(); n_aps];
    let mut hat_typ = vec![Vec::new(); n_aps];
    let mut hat_int: Vec<Vec<Vec<C64>>> = vec![vec![Vec::new(); n_aps]; interferers.len()];
    let mut aging_innov = vec![Vec::new(); n_aps];

    for b in (0..n_aps).filter(|&b| involved[b]) {
        let beta = serving.lsf[b];
        let h: Vec<C64> = cn_vec(rng, m, beta);
        // shared pilot slot: typical user plus copilots
        let mut y: Vec<C64> = cn_vec(rng, m, radio.noise_power);
        let v = cn_vec(rng, m, beta);
        for k in 0..m {
            y[k] += sp * (rho_e * h[k] + rho_e_bar * v[k]);
        }
        let mut copilot_channels = Vec::new();
        for (j, i) in interferers.iter().enumerate() {
            if !i.copilot {
                continue;
            }
            let beta_i = i.own_lsf[b];
            let rb = (1.0 - i.rho_est * i.rho_est).max(0.0).sqrt();
            let hi = cn_vec(rng, m, beta_i);
            let vi = cn_vec(rng, m, beta_i);
            for k in 0..m {
                y[k] += sp * (i.rho_est * hi[k] + rb * vi[k]);
            }
            copilot_channels.push((j, beta_i));
        }
        let copilot_sum: f64 = copilot_channels.iter().map(|c| c.1).sum();
        let denom = radio.p_ul * (beta + copilot_sum) + radio.noise_power;
        let c_typ = rho_e * sp * beta / denom;
        hat_typ[b] = y.iter().map(|x| x * c_typ).collect();
        for &(j, beta_i) in &copilot_channels {
            if interferers[j].serving.contains(&b) {
                let c = interferers[j].rho_est * sp * beta_i / denom;
                hat_int[j][b] = y.iter().map(|x| x * c).collect();
            }
        }
        // non-copilot interferers estimated from their own pilot slots
        for (j, i) in interferers.iter().enumerate() {
            if i.copilot || !i.serving.contains(&b) {
                continue;
            }
            let beta_i = i.own_lsf[b];
            let rb = (1.0 - i.rho_est * i.rho_est).max(0.0).sqrt();
            let hi = cn_vec(rng, m, beta_i);
            let vi = cn_vec(rng, m, beta_i);
            let mut yi = cn_vec(rng, m, radio.noise_power);
            for k in 0..m {
                yi[k] += sp * (i.rho_est * hi[k] + rb * vi[k]);
            }
            let c = i.rho_est * sp * beta_i / (radio.p_ul * beta_i + radio.noise_power);
            hat_int[j][b] = yi.iter().map(|x| x * c).collect();
        }
        let w = cn_vec(rng, m, beta);
        h_now[b] = h.iter().zip(&w).map(|(a, e)| a * rho + e * rho_bar).collect();
        aging_innov[b] = w;
        h_est[b] = h;
    }

    let mut x = C64::new(0.0, 0.0);
    let mut ca = C64::new(0.0, 0.0);
    let mut tx = Vec::with_capacity(serving.serving.len());
    for &(b, eta_b) in &est.eta_typical {
        let Some(eta_b) = eta_b else {
            tx.push(0.0);
            continue;
        };
        let s = eta_b.sqrt();
        x += s * inner(&h_est[b], &hat_typ[b]);
        ca += s * inner(&aging_innov[b], &hat_typ[b]);
        let energy: f64 = hat_typ[b].iter().map(|c| c.norm_sqr()).sum();
        tx.push(serving.loads[b] as f64 * eta_b * energy);
    }
    let mi = est
        .interferers
        .iter()
        .enumerate()
        .map(|(j, aps)| {
            aps.iter()
                .filter_map(|&(b, _, eta_b)| eta_b.map(|e| e.sqrt() * inner(&h_now[b], &hat_int[j][b])))
                .sum()
        })
        .collect();
    Sample {
        ds: x * rho,
        ca: ca * rho_bar,
        mi,
        tx,
    }
}
