use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{AgingProfile, Mobility, PathLossParams, ShadowingParams, StateQuantizer};
use crate::engine::{EngineConfig, Scheme};
use crate::error::{Error, Result};
use crate::pomdp::{ChannelStats, PbviConfig};
use crate::rate::{dbm_to_watts, noise_power, BoundForm, RadioParams, RateContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub area_side_m: f64,
    pub antennas: usize,
    pub ap_height_m: f64,
    pub user_height_m: f64,
    pub wrap_margin_m: f64,
    /// Draw AP positions once per experiment instead of once per trial.
    pub fix_ap_positions: bool,
    /// Start offset from the area center.
    pub start_offset_m: [f64; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            num_aps: 125,
            area_side_m: 1000.0,
            antennas: 8,
            ap_height_m: 15.0,
            user_height_m: 1.5,
            wrap_margin_m: 200.0,
            fix_ap_positions: false,
            start_offset_m: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed_mps: f64,
    pub step_duration_s: f64,
    pub trip_cycles: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            speed_mps: 10.0,
            step_duration_s: 1.0,
            trip_cycles: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub p_dl_dbm: f64,
    pub p_ul_dbm: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    pub pilot_index: usize,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub sample_period_s: f64,
    /// Rate expression used for the reward and the recorded SE.
    pub bound_form: BoundForm,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            p_dl_dbm: 30.0,
            p_ul_dbm: 20.0,
            tau_c: 200,
            tau_p: 16,
            pilot_index: 16,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 8.0,
            bandwidth_hz: 20e6,
            carrier_hz: 1.8e9,
            sample_period_s: 66.7e-6,
            bound_form: BoundForm::Printed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub d0_m: f64,
    pub alpha_pl: f64,
    pub sigma_sh_db: f64,
    pub d_decorr_m: f64,
    pub iota: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            d0_m: 1.1,
            alpha_pl: 3.8,
            sigma_sh_db: 6.0,
            d_decorr_m: 100.0,
            iota: 0.5,
        }
    }
}

/// Quantizer levels given as the distances whose path loss defines them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub threshold_m: f64,
    pub good_m: f64,
    pub bad_m: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            threshold_m: 150.0,
            good_m: 50.0,
            bad_m: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub schemes: Vec<Scheme>,
    pub b_con: usize,
    pub t_h: usize,
    pub gamma: f64,
    pub r_threshold_nats: f64,
    pub belief_budget: usize,
    pub expansion_depth: usize,
    pub policy_cache: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            schemes: vec![Scheme::PomdpHoMin, Scheme::LsfTime, Scheme::LsfThreshold],
            b_con: 5,
            t_h: 10,
            gamma: 0.95,
            r_threshold_nats: 7.0,
            belief_budget: PbviConfig::default().belief_budget,
            expansion_depth: PbviConfig::default().expansion_depth,
            policy_cache: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadRule {
    /// `max(0, 1 − δ·n)`
    Linear,
    /// `(1 − δ)^n`
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverheadConfig {
    /// Fraction of the frame lost per handoff.
    pub delta: f64,
    pub rule: OverheadRule,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            delta: 0.0,
            rule: OverheadRule::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub master_seed: u64,
    pub trials: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            master_seed: 1,
            trials: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub mobility: MobilityConfig,
    pub radio: RadioConfig,
    pub channel: ChannelConfig,
    pub quantizer: QuantizerConfig,
    pub engine: EngineSection,
    pub overhead: OverheadConfig,
    pub seeds: SeedConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Table1,
    Desk,
}

impl ExperimentConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Table1 => Self::default(),
            Profile::Desk => Self::desk(),
        }
    }

    /// Smaller network at nearly the same AP density.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.network.num_aps = 60;
        c.network.area_side_m = 700.0;
        c
    }

    /// Parses a JSON config. An optional top-level `"profile"` selects the base
    /// profile; all other keys override it.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config JSON: {e}")))?;
        let profile = match value.as_object_mut().and_then(|o| o.remove("profile")) {
            Some(p) => serde_json::from_value(p).map_err(|e| Error::config(format!("profile: {e}")))?,
            None => Profile::Table1,
        };
        let mut base = serde_json::to_value(Self::profile(profile))?;
        merge(&mut base, value);
        Self::from_value(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn from_value(v: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` style overrides on dotted paths, e.g.
    /// `engine.t_h` = `5`. Values are parsed as JSON, falling back to strings.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        let mut slot = &mut v;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::config(format!("unknown config key `{key}`")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.network;
        if n.num_aps == 0 || !(n.area_side_m > 0.0) {
            return Err(Error::config("network needs at least one AP and a positive area"));
        }
        if self.engine.b_con == 0 || n.num_aps <= self.engine.b_con {
            return Err(Error::config(format!(
                "infeasible: {} APs cannot support b_con = {}",
                n.num_aps, self.engine.b_con
            )));
        }
        if self.engine.schemes.is_empty() {
            return Err(Error::config("no schemes selected"));
        }
        if !(0.0..=1.0).contains(&self.overhead.delta) {
            return Err(Error::config("overhead delta must lie in [0, 1]"));
        }
        if !(self.mobility.speed_mps >= 0.0) || !(self.mobility.step_duration_s > 0.0) {
            return Err(Error::config("speed must be >= 0 and step duration > 0"));
        }
        self.engine_config(Scheme::LsfTime).validate(n.num_aps)?;
        self.path_loss()?;
        self.shadowing()?;
        self.quantizer()?;
        self.rate_context()?;
        Ok(())
    }

    pub fn path_loss(&self) -> Result<PathLossParams> {
        PathLossParams::new(
            self.channel.d0_m,
            self.channel.alpha_pl,
            self.network.ap_height_m - self.network.user_height_m,
        )
    }

    pub fn shadowing(&self) -> Result<ShadowingParams> {
        ShadowingParams::new(self.channel.sigma_sh_db, self.channel.d_decorr_m, self.channel.iota)
    }

    pub fn quantizer(&self) -> Result<StateQuantizer> {
        let q = &self.quantizer;
        StateQuantizer::from_distances(&self.path_loss()?, q.threshold_m, q.good_m, q.bad_m)
    }

    pub fn mobility(&self) -> Mobility {
        Mobility {
            speed: self.mobility.speed_mps,
            step_duration: self.mobility.step_duration_s,
        }
    }

    pub fn channel_stats(&self) -> Result<ChannelStats> {
        Ok(ChannelStats {
            quantizer: self.quantizer()?,
            shadowing: self.shadowing()?,
            path_loss: self.path_loss()?,
            mobility: self.mobility(),
        })
    }

    pub fn radio_params(&self) -> RadioParams {
        let r = &self.radio;
        RadioParams {
            p_dl: dbm_to_watts(r.p_dl_dbm),
            p_ul: dbm_to_watts(r.p_ul_dbm),
            noise_power: noise_power(r.noise_density_dbm_hz, r.noise_figure_db, r.bandwidth_hz),
            antennas: self.network.antennas,
            tau_c: r.tau_c,
            tau_p: r.tau_p,
            pilot_index: r.pilot_index,
        }
    }

    pub fn rate_context(&self) -> Result<RateContext> {
        let radio = self.radio_params();
        radio.validate()?;
        if !(self.radio.carrier_hz > 0.0 && self.radio.sample_period_s > 0.0) {
            return Err(Error::config("carrier frequency and sample period must be positive"));
        }
        let aging = AgingProfile::for_speed(
            self.mobility.speed_mps,
            self.radio.carrier_hz,
            self.radio.sample_period_s,
            radio.tau_c,
        );
        RateContext::new(radio, aging, self.radio.bound_form)
    }

    pub fn engine_config(&self, scheme: Scheme) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            b_con: e.b_con,
            t_h: e.t_h,
            r_threshold: e.r_threshold_nats,
            gamma: e.gamma,
            scheme,
            pbvi: PbviConfig {
                belief_budget: e.belief_budget,
                expansion_depth: e.expansion_depth,
                seed: 0,
            },
            policy_cache: e.policy_cache,
            prune_subproblems: true,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        ExperimentConfig::desk().validate().unwrap();
        let r = ExperimentConfig::default().radio_params();
        assert!((r.p_dl - 1.0).abs() < 1e-12);
        assert!((r.p_ul - 0.1).abs() < 1e-12);
    }

    #[test]
    fn json_profile_and_overrides() {
        let c = ExperimentConfig::from_json(r#"{"profile":"desk","engine":{"t_h":3}}"#).unwrap();
        assert_eq!(c.network.num_aps, 60);
        assert_eq!(c.engine.t_h, 3);
        assert_eq!(c.engine.b_con, 5);
        let c2 = c.with_override("engine.schemes", r#"["lsf_time"]"#).unwrap();
        assert_eq!(c2.engine.schemes, vec![Scheme::LsfTime]);
        let c3 = c.with_override("overhead.rule", "geometric").unwrap();
        assert_eq!(c3.overhead.rule, OverheadRule::Geometric);
        assert!(c.with_override("engine.nope", "1").is_err());
        assert!(ExperimentConfig::from_json(r#"{"engine":{"bogus":1}}"#).is_err());
    }

    #[test]
    fn infeasible_rejected() {
        let c = ExperimentConfig::default();
        assert!(matches!(c.with_override("network.num_aps", "5"), Err(Error::Config(_))));
        assert!(c.with_override("overhead.delta", "1.5").is_err());
    }
}
