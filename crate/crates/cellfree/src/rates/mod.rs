//! Closed-form uplink SINR and rate expressions.
//!
//! The CPU detects each user from quantized AP reports combined with MRC.
//! With Rayleigh fading and MMSE estimates, every term in the effective
//! SINR has a closed form in the large-scale quantities alone: desired
//! signal, beamforming uncertainty, inter-user interference, thermal noise,
//! and quantization distortion. Two forwarding cases are covered, plus a
//! weighted variant of the combined-signal case where the CPU applies
//! per-AP weights to each user's reports.

pub mod oracle;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{BetaMatrix, PilotBook};

/// Per-user normalized transmit power coefficients, capped by `pmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector {
    q: DVector<f64>,
    pmax: f64,
}

impl PowerVector {
    pub fn new(q: Vec<f64>, pmax: f64) -> Result<Self> {
        if !(pmax > 0.0) || !pmax.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "pmax must be positive and finite, got {pmax}"
            )));
        }
        if q.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > pmax * (1.0 + 1e-12)) {
            return Err(Error::InvalidConfig(
                "powers must lie in [0, pmax]".into(),
            ));
        }
        Ok(PowerVector {
            q: DVector::from_vec(q),
            pmax,
        })
    }

    /// All users at the power cap.
    pub fn full(k_users: usize, pmax: f64) -> Self {
        PowerVector {
            q: DVector::from_element(k_users, pmax),
            pmax,
        }
    }

    pub fn k_users(&self) -> usize {
        self.q.len()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.q[k]
    }

    pub fn pmax(&self) -> f64 {
        self.pmax
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.q
    }
}

/// Real combining weights, one unit-norm column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverWeights {
    u: DMatrix<f64>,
}

impl ReceiverWeights {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        for k in 0..u.ncols() {
            let norm = u.column(k).norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::NotUnitNorm(k));
            }
        }
        Ok(ReceiverWeights { u })
    }

    /// Equal weight on every AP.
    pub fn uniform(m_aps: usize, k_users: usize) -> Self {
        ReceiverWeights {
            u: DMatrix::from_element(m_aps, k_users, 1.0 / (m_aps as f64).sqrt()),
        }
    }

    pub fn m_aps(&self) -> usize {
        self.u.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.u.column(k).into_owned()
    }
}

/// Large-scale quantities the weighted SINR depends on: gains, estimate
/// powers, pilot correlations, and the per-AP distortion scale
/// `zeta_m = w_z^2 / (3 Q_m^2)` of the combined-signal quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RateIngredients {
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    gram2: DMatrix<f64>,
    zeta: Vec<f64>,
}

impl RateIngredients {
    pub fn m_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.beta.ncols()
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gram2(&self) -> &DMatrix<f64> {
        &self.gram2
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// Distortion-plus-estimate factor `zeta_m (2 beta - gamma) + gamma`
    /// multiplying received power in the interference terms.
    pub fn dist(&self, m: usize, k: usize) -> f64 {
        self.zeta[m] * (2.0 * self.beta[(m, k)] - self.gamma[(m, k)]) + self.gamma[(m, k)]
    }

    /// Noise-side factor `(zeta_m + 1) gamma`.
    pub fn noise_quant(&self, m: usize, k: usize) -> f64 {
        (self.zeta[m] + 1.0) * self.gamma[(m, k)]
    }

    /// Estimate-to-gain ratio, zero where the gain itself is zero.
    pub fn ratio(&self, m: usize, k: usize) -> f64 {
        let b = self.beta[(m, k)];
        if b == 0.0 {
            0.0
        } else {
            self.gamma[(m, k)] / b
        }
    }
}

fn check_stats(beta: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<()> {
    if beta.shape() != gamma.shape() {
        return Err(Error::InconsistentStats(format!(
            "beta is {:?}, gamma is {:?}",
            beta.shape(),
            gamma.shape()
        )));
    }
    for m in 0..beta.nrows() {
        for k in 0..beta.ncols() {
            let (b, g) = (beta[(m, k)], gamma[(m, k)]);
            if g < 0.0 || g > b * (1.0 + 1e-9) + f64::MIN_POSITIVE {
                return Err(Error::InconsistentStats(format!(
                    "gamma {g:e} outside [0, beta = {b:e}] at ({m},{k})"
                )));
            }
        }
    }
    Ok(())
}

/// Bundles everything the weighted SINR needs. `q_levels_per_ap[m]` is the
/// level count of AP `m`'s combined-signal quantizer; `f64::INFINITY` turns
/// the distortion off.
pub fn rate_ingredients(
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    w_z: f64,
    q_levels_per_ap: &[f64],
) -> Result<RateIngredients> {
    check_stats(beta.matrix(), gamma)?;
    if pilots.k_users() != beta.k_users() {
        return Err(Error::InconsistentStats(
            "pilot book and gains disagree on the user count".into(),
        ));
    }
    if q_levels_per_ap.len() != beta.m_aps() {
        return Err(Error::InconsistentStats(format!(
            "{} quantizer entries for {} APs",
            q_levels_per_ap.len(),
            beta.m_aps()
        )));
    }
    if q_levels_per_ap.iter().any(|q| !(*q >= 1.0)) || !(w_z > 0.0) {
        return Err(Error::InvalidConfig(
            "need w_z > 0 and at least one quantizer level per AP".into(),
        ));
    }
    let zeta = q_levels_per_ap
        .iter()
        .map(|q| w_z * w_z / (3.0 * q * q))
        .collect();
    Ok(RateIngredients {
        beta: beta.matrix().clone(),
        gamma: gamma.clone(),
        gram2: pilots.gram2().clone(),
        zeta,
    })
}

/// Additive decomposition of one user's effective SINR. All terms carry the
/// same normalization, so `sinr()` is their direct ratio. `iui` is indexed
/// by interferer, with the user's own slot held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrBreakdown {
    pub ds2: f64,
    pub bu: f64,
    pub iui: Vec<f64>,
    pub tn: f64,
    pub tqe: f64,
}

impl SinrBreakdown {
    pub fn denominator(&self) -> f64 {
        self.bu + self.iui.iter().sum::<f64>() + self.tn + self.tqe
    }

    pub fn sinr(&self) -> f64 {
        self.ds2 / self.denominator()
    }
}

/// Received power at AP `m` over the payload: `rho sum_k q_k beta_mk + 1`.
fn received_power(beta: &DMatrix<f64>, q: &PowerVector, rho: f64, m: usize) -> f64 {
    let mut s = 1.0;
    for k in 0..beta.ncols() {
        s += rho * q.get(k) * beta[(m, k)];
    }
    s
}

/// Coherent leakage from user `k'` into user `k`'s estimate-matched
/// combining: `sum_m w_m gamma_mk beta_mk' / beta_mk`.
fn pilot_leak(
    beta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    weights: Option<&DVector<f64>>,
    k: usize,
    kp: usize,
) -> f64 {
    let mut acc = 0.0;
    for m in 0..beta.nrows() {
        let b = beta[(m, k)];
        if b > 0.0 {
            let w = weights.map_or(1.0, |u| u[m]);
            acc += w * gamma[(m, k)] * beta[(m, kp)] / b;
        }
    }
    acc
}

/// Effective SINR when APs forward quantized estimates and quantized raw
/// signals. `c_tot_per_ap[m]` is the combined distortion factor of AP `m`.
pub fn sinr_case1(
    q: &PowerVector,
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    c_tot_per_ap: &[f64],
    n_antennas: usize,
    rho: f64,
) -> Result<Vec<f64>> {
    check_stats(beta.matrix(), gamma)?;
    if c_tot_per_ap.len() != beta.m_aps() {
        return Err(Error::InconsistentStats(
            "one c_tot entry per AP required".into(),
        ));
    }
    let (b, n) = (beta.matrix(), n_antennas as f64);
    let k_users = beta.k_users();
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let gamma_sum: f64 = (0..beta.m_aps()).map(|m| gamma[(m, k)]).sum();
        let num = n * n * q.get(k) * gamma_sum * gamma_sum;
        let mut den = 0.0;
        for kp in 0..k_users {
            if kp != k && pilots.gram2()[(k, kp)] > 0.0 {
                let leak = pilot_leak(b, gamma, None, k, kp);
                den += n * n * q.get(kp) * pilots.gram2()[(k, kp)] * leak * leak;
            }
        }
        for m in 0..beta.m_aps() {
            let cp1 = c_tot_per_ap[m] + 1.0;
            let mut inter = 0.0;
            for kp in 0..k_users {
                inter += q.get(kp) * b[(m, kp)];
            }
            den += n * cp1 * gamma[(m, k)] * inter;
            den += n / rho * cp1 * gamma[(m, k)];
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Per-term powers behind [`sinr_case1`], in received-signal units.
pub fn breakdown_case1(
    q: &PowerVector,
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    c_tot_per_ap: &[f64],
    n_antennas: usize,
    rho: f64,
) -> Result<Vec<SinrBreakdown>> {
    check_stats(beta.matrix(), gamma)?;
    let (b, n) = (beta.matrix(), n_antennas as f64);
    let (m_aps, k_users) = (beta.m_aps(), beta.k_users());
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let gamma_sum: f64 = (0..m_aps).map(|m| gamma[(m, k)]).sum();
        let ds2 = rho * q.get(k) * n * n * gamma_sum * gamma_sum;
        let mut bu = 0.0;
        let mut tn = 0.0;
        let mut tqe = 0.0;
        for m in 0..m_aps {
            bu += rho * n * q.get(k) * gamma[(m, k)] * b[(m, k)];
            tn += n * gamma[(m, k)];
            tqe += n * c_tot_per_ap[m] * gamma[(m, k)] * received_power(b, q, rho, m);
        }
        let mut iui = vec![0.0; k_users];
        for kp in 0..k_users {
            if kp == k {
                continue;
            }
            let mut direct = 0.0;
            for m in 0..m_aps {
                direct += gamma[(m, k)] * b[(m, kp)];
            }
            let mut v = rho * n * q.get(kp) * direct;
            let g2 = pilots.gram2()[(k, kp)];
            if g2 > 0.0 {
                let leak = pilot_leak(b, gamma, None, k, kp);
                v += rho * n * n * q.get(kp) * g2 * leak * leak;
            }
            iui[kp] = v;
        }
        out.push(SinrBreakdown {
            ds2,
            bu,
            iui,
            tn,
            tqe,
        });
    }
    Ok(out)
}

/// Effective SINR when APs forward locally combined signals and the CPU
/// sums them with equal weight.
pub fn sinr_case2(
    q: &PowerVector,
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    w_z: f64,
    q_levels_per_ap: &[f64],
    n_antennas: usize,
    rho: f64,
) -> Result<Vec<f64>> {
    let ing = rate_ingredients(beta, gamma, pilots, w_z, q_levels_per_ap)?;
    let (b, n) = (&ing.beta, n_antennas as f64);
    let k_users = ing.k_users();
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let gamma_sum: f64 = (0..ing.m_aps()).map(|m| ing.gamma[(m, k)]).sum();
        let num = n * n * q.get(k) * gamma_sum * gamma_sum;
        let mut den = 0.0;
        for kp in 0..k_users {
            if kp != k && ing.gram2[(k, kp)] > 0.0 {
                let leak = pilot_leak(b, &ing.gamma, None, k, kp);
                den += n * n * q.get(kp) * ing.gram2[(k, kp)] * leak * leak;
            }
        }
        for m in 0..ing.m_aps() {
            let mut inter = 0.0;
            for kp in 0..k_users {
                inter += q.get(kp) * b[(m, kp)];
            }
            den += n * ing.dist(m, k) * inter;
            den += n / rho * ing.noise_quant(m, k);
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Rates, SINR, and per-term powers for weighted combining at the CPU.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRates {
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
    pub breakdown: Vec<SinrBreakdown>,
}

/// Weighted-combining SINR and rate per user.
///
/// The SINR comes from the quadratic-form assembly in the weights; the
/// breakdown lists the same terms as received powers. Their ratio agrees to
/// rounding error, which the tests pin down.
pub fn rate_with_weights(
    u: &ReceiverWeights,
    q: &PowerVector,
    ing: &RateIngredients,
    n_antennas: usize,
    rho: f64,
) -> Result<WeightedRates> {
    if u.m_aps() != ing.m_aps() || u.matrix().ncols() != ing.k_users() {
        return Err(Error::InconsistentStats(
            "weight matrix shape does not match the ingredients".into(),
        ));
    }
    if q.k_users() != ing.k_users() {
        return Err(Error::InconsistentStats(
            "power vector length does not match the ingredients".into(),
        ));
    }
    let (m_aps, k_users, n) = (ing.m_aps(), ing.k_users(), n_antennas as f64);
    let mut sinr = Vec::with_capacity(k_users);
    let mut breakdown = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let uk = u.column(k);
        let mut u_gamma = 0.0;
        let mut bu = 0.0;
        let mut tn = 0.0;
        let mut tqe = 0.0;
        let mut quad_inter = 0.0;
        let mut quad_noise = 0.0;
        for m in 0..m_aps {
            let (w, w2) = (uk[m], uk[m] * uk[m]);
            let g = ing.gamma[(m, k)];
            u_gamma += w * g;
            bu += rho * n * q.get(k) * w2 * g * ing.beta[(m, k)];
            tn += n * w2 * g;
            let inter = (received_power(&ing.beta, q, rho, m) - 1.0) / rho;
            tqe += n * w2 * ing.zeta[m] * ((2.0 * ing.beta[(m, k)] - g) * rho * inter + g);
            quad_inter += n * w2 * ing.dist(m, k) * inter;
            quad_noise += n / rho * w2 * ing.noise_quant(m, k);
        }
        let ds2 = rho * q.get(k) * n * n * u_gamma * u_gamma;
        let num = n * n * q.get(k) * u_gamma * u_gamma;
        let mut iui = vec![0.0; k_users];
        let mut quad_pilot = 0.0;
        for kp in 0..k_users {
            if kp == k {
                continue;
            }
            let mut direct = 0.0;
            for m in 0..m_aps {
                direct += uk[m] * uk[m] * ing.gamma[(m, k)] * ing.beta[(m, kp)];
            }
            let mut v = rho * n * q.get(kp) * direct;
            let g2 = ing.gram2[(k, kp)];
            if g2 > 0.0 {
                let leak = pilot_leak(&ing.beta, &ing.gamma, Some(&uk), k, kp);
                v += rho * n * n * q.get(kp) * g2 * leak * leak;
                quad_pilot += n * n * q.get(kp) * g2 * leak * leak;
            }
            iui[kp] = v;
        }
        let den = quad_pilot + quad_inter + quad_noise;
        sinr.push(num / den);
        breakdown.push(SinrBreakdown {
            ds2,
            bu,
            iui,
            tn,
            tqe,
        });
    }
    let rates = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    Ok(WeightedRates {
        rates,
        sinr,
        breakdown,
    })
}
