//! Uniform mid-rise quantization and backhaul bit accounting.
//!
//! Every forwarded real sample is clipped to `clip` standard deviations and
//! quantized with `2^alpha` uniform levels. Under fine quantization the error
//! behaves like additive noise with variance `step^2 / 12` per real sample,
//! which is what the closed-form error laws below assume. The standard
//! deviations used to scale the quantizers come from long-term statistics,
//! never from the samples themselves.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rates::PowerVector;
use crate::scenario::BetaMatrix;

/// Which signals an AP forwards to the CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    /// Quantized channel estimates plus quantized raw antenna signals.
    Case1,
    /// Locally combined per-user signals, quantized.
    Case2,
}

/// One scalar quantizer: `2^alpha` mid-rise levels covering
/// `clip` standard deviations of each real component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    alpha: u32,
    clip: f64,
    sigma: f64,
}

impl QuantizerSpec {
    /// `sigma` is the standard deviation of the complex sample; each real
    /// component has deviation `sigma / sqrt(2)`.
    pub fn new(alpha: u32, clip: f64, sigma: f64) -> Result<Self> {
        if alpha == 0 || !(clip > 0.0) || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "quantizer needs alpha >= 1, clip > 0, sigma >= 0; got {alpha}, {clip}, {sigma}"
            )));
        }
        Ok(QuantizerSpec { alpha, clip, sigma })
    }

    /// Number of levels per real component.
    pub fn levels(&self) -> f64 {
        2f64.powi(self.alpha as i32)
    }

    /// Level spacing per real component.
    pub fn step(&self) -> f64 {
        2.0 * self.clip * (self.sigma / std::f64::consts::SQRT_2) / self.levels()
    }

    fn quantize_component(&self, x: f64) -> f64 {
        let step = self.step();
        if step == 0.0 {
            return 0.0;
        }
        let top = (self.levels() / 2.0 - 0.5) * step;
        (((x / step).floor() + 0.5) * step).clamp(-top, top)
    }
}

/// Quantizes both real components of `x`.
pub fn uniform_quantize(x: Complex64, spec: &QuantizerSpec) -> Complex64 {
    Complex64::new(
        spec.quantize_component(x.re),
        spec.quantize_component(x.im),
    )
}

/// Error variance of quantizing one raw antenna sample at AP `m`:
/// `w_y^2 / (3 Q^2)` times the received power `rho sum_k q_k beta_mk + 1`.
pub fn error_variance_y(
    rho: f64,
    q: &PowerVector,
    beta: &BetaMatrix,
    m: usize,
    w_y: f64,
    q_levels: f64,
) -> f64 {
    let mut sig = 1.0;
    for k in 0..beta.k_users() {
        sig += rho * q.get(k) * beta.get(m, k);
    }
    w_y * w_y / (3.0 * q_levels * q_levels) * sig
}

/// Error variance of quantizing one channel-estimate sample with power
/// `gamma_mk`.
pub fn error_variance_g(gamma_mk: f64, w_g: f64, q_levels: f64) -> f64 {
    w_g * w_g / (3.0 * q_levels * q_levels) * gamma_mk
}

/// Combined distortion factor when both the raw signal and the estimate are
/// quantized: the two relative error terms plus their product.
pub fn c_tot(w_y: f64, w_g: f64, q_levels: f64) -> f64 {
    let a = w_y * w_y / (3.0 * q_levels * q_levels);
    let b = w_g * w_g / (3.0 * q_levels * q_levels);
    a + b + a * b
}

/// Backhaul load of one AP over one coherence interval, in bits.
///
/// Case 1 sends `N K` estimate samples plus `N tau_f` signal samples; Case 2
/// sends `K` combined samples per payload symbol. Both count 2 real parts at
/// `alpha` bits each.
pub fn backhaul_bits(case: CaseId, n_antennas: usize, k_users: usize, tau_f: usize, alpha: u32) -> u64 {
    let (n, k, tf, a) = (
        n_antennas as u64,
        k_users as u64,
        tau_f as u64,
        alpha as u64,
    );
    match case {
        CaseId::Case1 => 2 * a * (n * k + n * tf),
        CaseId::Case2 => 2 * a * k * tf,
    }
}

/// Link rate needed to move `bits` within one coherence time.
pub fn required_capacity(bits: u64, coherence_time_s: f64) -> Result<f64> {
    if !(coherence_time_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "coherence time must be positive, got {coherence_time_s}"
        )));
    }
    Ok(bits as f64 / coherence_time_s)
}

/// Bits and rate of one AP's backhaul link under the chosen forwarding case.
#[derive(Debug, Clone, PartialEq)]
pub struct BackhaulAccount {
    pub case: CaseId,
    pub bits_per_coherence: u64,
    pub capacity_bps: f64,
}

impl BackhaulAccount {
    pub fn new(
        case: CaseId,
        n_antennas: usize,
        k_users: usize,
        tau_f: usize,
        alpha: u32,
        coherence_time_s: f64,
    ) -> Result<Self> {
        let bits = backhaul_bits(case, n_antennas, k_users, tau_f, alpha);
        Ok(BackhaulAccount {
            case,
            bits_per_coherence: bits,
            capacity_bps: required_capacity(bits, coherence_time_s)?,
        })
    }
}

/// Case-2 bit width that loads the backhaul exactly like Case 1 at `alpha1`
/// bits. The exact match is usually fractional; `alpha` holds the floor and
/// `is_integer` says whether the match is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedAlpha {
    pub exact: f64,
    pub alpha: u32,
    pub is_integer: bool,
}

pub fn matched_alpha(n_antennas: usize, k_users: usize, tau_f: usize, alpha1: u32) -> Result<MatchedAlpha> {
    if k_users == 0 || tau_f == 0 {
        return Err(Error::InvalidConfig(
            "matched_alpha needs k_users >= 1 and tau_f >= 1".into(),
        ));
    }
    let exact = alpha1 as f64 * (n_antennas * k_users + n_antennas * tau_f) as f64
        / (k_users * tau_f) as f64;
    let floor = exact.floor();
    if floor < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "matched alpha {exact:.3} is below one bit"
        )));
    }
    Ok(MatchedAlpha {
        exact,
        alpha: floor as u32,
        is_integer: exact == floor,
    })
}
