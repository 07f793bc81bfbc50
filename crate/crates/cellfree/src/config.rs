//! System-level configuration shared by all modules.
//!
//! Powers are stated in mW and normalized by the receiver noise power before
//! they enter any formula, so the per-antenna noise variance is 1 everywhere
//! downstream.

use crate::error::{Error, Result};
use crate::scenario::{PathLossParams, PilotMode};

const BOLTZMANN: f64 = 1.380_649e-23;

/// Receiver noise power in mW for the given bandwidth, reference
/// temperature, and noise figure.
pub fn noise_power_mw(bandwidth_hz: f64, temperature_k: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0) * 1e3
}

/// Full description of one simulated uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of access points.
    pub m_aps: usize,
    /// Antennas per access point.
    pub n_antennas: usize,
    /// Number of single-antenna users.
    pub k_users: usize,
    /// Pilot length in symbols.
    pub tau: usize,
    /// Coherence interval length in symbols.
    pub tau_c: usize,
    /// Side of the square deployment area in meters.
    pub side_m: f64,
    /// Pilot transmit power in mW.
    pub pilot_power_mw: f64,
    /// Data transmit power in mW.
    pub data_power_mw: f64,
    /// Receiver noise power in mW.
    pub noise_power_mw: f64,
    /// Clipping factor of the raw-signal quantizer.
    pub clip_y: f64,
    /// Clipping factor of the channel-estimate quantizer.
    pub clip_g: f64,
    /// Clipping factor of the combined-signal quantizer.
    pub clip_z: f64,
    /// Bits per real sample when estimates and raw signals are forwarded.
    pub alpha_case1: u32,
    /// Bits per real sample when combined signals are forwarded.
    pub alpha_case2: u32,
    /// Backhaul link capacity in bit/s.
    pub backhaul_capacity_bps: f64,
    /// Coherence time in seconds.
    pub coherence_time_s: f64,
    /// Stop threshold on per-user SINR improvement in the alternating solver.
    pub epsilon: f64,
    /// Iteration cap of the alternating solver.
    pub max_iters: usize,
    /// Per-user cap on the normalized transmit power coefficient.
    pub pmax: f64,
    /// Path-loss model parameters.
    pub path_loss: PathLossParams,
    /// Shadow-fading standard deviation in dB.
    pub shadow_sigma_db: f64,
    /// Pilot assignment policy.
    pub pilot_mode: PilotMode,
    /// Scale rates by the payload fraction of the coherence interval.
    pub apply_overhead: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m_aps: 100,
            n_antennas: 2,
            k_users: 40,
            tau: 20,
            tau_c: 200,
            side_m: 1000.0,
            pilot_power_mw: 200.0,
            data_power_mw: 200.0,
            noise_power_mw: noise_power_mw(20e6, 290.0, 9.0),
            clip_y: 15.0,
            clip_g: 15.0,
            clip_z: 15.0,
            alpha_case1: 9,
            alpha_case2: 5,
            backhaul_capacity_bps: 100e6,
            coherence_time_s: 1e-3,
            epsilon: 1e-4,
            max_iters: 50,
            pmax: 1.0,
            path_loss: PathLossParams::default(),
            shadow_sigma_db: 8.0,
            pilot_mode: PilotMode::Random,
            apply_overhead: false,
        }
    }
}

impl SystemConfig {
    /// Pilot SNR: pilot power over noise power.
    pub fn pilot_snr(&self) -> f64 {
        self.pilot_power_mw / self.noise_power_mw
    }

    /// Data SNR: data power over noise power.
    pub fn data_snr(&self) -> f64 {
        self.data_power_mw / self.noise_power_mw
    }

    /// Payload symbols per coherence interval.
    pub fn tau_f(&self) -> usize {
        self.tau_c - self.tau
    }

    /// Checks every invariant; call after construction or overrides.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("side_m", self.side_m),
            ("pilot_power_mw", self.pilot_power_mw),
            ("data_power_mw", self.data_power_mw),
            ("noise_power_mw", self.noise_power_mw),
            ("clip_y", self.clip_y),
            ("clip_g", self.clip_g),
            ("clip_z", self.clip_z),
            ("coherence_time_s", self.coherence_time_s),
            ("epsilon", self.epsilon),
            ("pmax", self.pmax),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.m_aps == 0 || self.n_antennas == 0 || self.k_users == 0 {
            return Err(Error::InvalidConfig(
                "m_aps, n_antennas, and k_users must be nonzero".into(),
            ));
        }
        if self.tau == 0 || self.tau >= self.tau_c {
            return Err(Error::InvalidConfig(format!(
                "need 0 < tau < tau_c, got tau = {}, tau_c = {}",
                self.tau, self.tau_c
            )));
        }
        if self.pilot_mode == PilotMode::Orthogonal && self.tau < self.k_users {
            return Err(Error::PilotLength {
                tau: self.tau,
                k_users: self.k_users,
            });
        }
        if self.alpha_case1 == 0 || self.alpha_case2 == 0 {
            return Err(Error::InvalidConfig(
                "alpha_case1 and alpha_case2 must be at least 1".into(),
            ));
        }
        if self.backhaul_capacity_bps <= 0.0 {
            return Err(Error::InvalidConfig(
                "backhaul_capacity_bps must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be nonzero".into()));
        }
        if self.shadow_sigma_db < 0.0 {
            return Err(Error::InvalidConfig(
                "shadow_sigma_db must be nonnegative".into(),
            ));
        }
        self.path_loss.validate()?;
        Ok(())
    }

    /// Applies one `key=value` override using the field names of this struct.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::InvalidValue {
                key: key.into(),
                value: value.into(),
                reason: format!("expected a {}", std::any::type_name::<T>()),
            })
        }
        match key {
            "m_aps" => self.m_aps = parse(key, value)?,
            "n_antennas" => self.n_antennas = parse(key, value)?,
            "k_users" => self.k_users = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "tau_c" => self.tau_c = parse(key, value)?,
            "side_m" => self.side_m = parse(key, value)?,
            "pilot_power_mw" => self.pilot_power_mw = parse(key, value)?,
            "data_power_mw" => self.data_power_mw = parse(key, value)?,
            "noise_power_mw" => self.noise_power_mw = parse(key, value)?,
            "clip_y" => self.clip_y = parse(key, value)?,
            "clip_g" => self.clip_g = parse(key, value)?,
            "clip_z" => self.clip_z = parse(key, value)?,
            "alpha_case1" => self.alpha_case1 = parse(key, value)?,
            "alpha_case2" => self.alpha_case2 = parse(key, value)?,
            "backhaul_capacity_bps" => self.backhaul_capacity_bps = parse(key, value)?,
            "coherence_time_s" => self.coherence_time_s = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "pmax" => self.pmax = parse(key, value)?,
            "path_loss_l_db" => self.path_loss.l_db = parse(key, value)?,
            "path_loss_d0_m" => self.path_loss.d0_m = parse(key, value)?,
            "path_loss_d1_m" => self.path_loss.d1_m = parse(key, value)?,
            "shadow_sigma_db" => self.shadow_sigma_db = parse(key, value)?,
            "pilot_mode" => {
                self.pilot_mode = match value {
                    "orthogonal" => PilotMode::Orthogonal,
                    "random" => PilotMode::Random,
                    _ => {
                        return Err(Error::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected `orthogonal` or `random`".into(),
                        })
                    }
                }
            }
            "apply_overhead" => self.apply_overhead = parse(key, value)?,
            _ => return Err(Error::UnknownKey(key.into())),
        }
        Ok(())
    }
}
