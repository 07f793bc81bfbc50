//! MMSE channel estimation from uplink pilots.
//!
//! Each AP correlates its pilot observation with every user's pilot and
//! scales the result. Users sharing a pilot contaminate each other, which
//! shows up both in the estimate itself and in its long-term quality.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, rng_for, Stream};
use crate::scenario::{BetaMatrix, ChannelRealization, PilotBook};

/// Long-term estimation quantities: the MMSE scaling `c_mk` applied to the
/// de-spread pilot observation and the estimate power `gamma_mk`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    c: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl EstimationStats {
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Per-link estimate power `gamma_mk = E{|ghat_mk,n|^2}`.
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }
}

/// Computes `c_mk` and `gamma_mk` from large-scale gains and the pilot book.
///
/// `gamma_mk = tau p_p beta_mk^2 / (tau p_p sum_j beta_mj |phi_k^H phi_j|^2 + 1)`,
/// so contamination by co-pilot users lowers the estimate quality.
pub fn estimation_stats(
    beta: &BetaMatrix,
    pilots: &PilotBook,
    p_p: f64,
    tau: usize,
) -> Result<EstimationStats> {
    if pilots.k_users() != beta.k_users() {
        return Err(Error::InconsistentStats(format!(
            "pilot book covers {} users, gains cover {}",
            pilots.k_users(),
            beta.k_users()
        )));
    }
    if !(p_p > 0.0) || tau == 0 {
        return Err(Error::InvalidConfig(format!(
            "estimation needs p_p > 0 and tau >= 1, got p_p = {p_p}, tau = {tau}"
        )));
    }
    let (m_aps, k_users) = (beta.m_aps(), beta.k_users());
    let tpp = tau as f64 * p_p;
    let mut c = DMatrix::zeros(m_aps, k_users);
    let mut gamma = DMatrix::zeros(m_aps, k_users);
    for m in 0..m_aps {
        for k in 0..k_users {
            let mut denom = 1.0;
            for j in 0..k_users {
                denom += tpp * beta.get(m, j) * pilots.gram2()[(k, j)];
            }
            let c_mk = tpp.sqrt() * beta.get(m, k) / denom;
            c[(m, k)] = c_mk;
            gamma[(m, k)] = tpp.sqrt() * beta.get(m, k) * c_mk;
        }
    }
    Ok(EstimationStats { c, gamma })
}

/// MMSE channel estimates, shaped like the channel itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    per_ap: Vec<DMatrix<Complex64>>,
}

impl ChannelEstimate {
    pub fn m_aps(&self) -> usize {
        self.per_ap.len()
    }

    pub fn at_ap(&self, m: usize) -> &DMatrix<Complex64> {
        &self.per_ap[m]
    }
}

/// Forms the per-AP MMSE estimates for one channel realization, drawing a
/// fresh pilot-phase noise block `W_m` per AP.
///
/// `ghat_mk = c_mk (sqrt(tau p_p) sum_j g_mj phi_k^H phi_j + W_m phi_k)`.
/// Estimates of users sharing a pilot are collinear up to the noise term
/// because they despread the same observation.
pub fn mmse_estimate(
    channels: &ChannelRealization,
    pilots: &PilotBook,
    stats: &EstimationStats,
    p_p: f64,
    tau: usize,
    seed: u64,
) -> ChannelEstimate {
    let m_aps = channels.m_aps();
    let k_users = pilots.k_users();
    let n_antennas = channels.at_ap(0).nrows();
    let sqrt_tpp = (tau as f64 * p_p).sqrt();
    let mut rng = rng_for(seed, Stream::PilotNoise, 0);
    let per_ap = (0..m_aps)
        .map(|m| {
            let g = channels.at_ap(m);
            let w = DMatrix::from_fn(n_antennas, tau, |_, _| complex_gaussian(&mut rng));
            DMatrix::from_fn(n_antennas, k_users, |n, k| {
                let mut v = Complex64::new(0.0, 0.0);
                for j in 0..k_users {
                    let corr = pilots.gram()[(k, j)];
                    if corr != 0.0 {
                        v += g[(n, j)] * corr;
                    }
                }
                v *= sqrt_tpp;
                for t in 0..tau {
                    v += w[(n, t)] * pilots.phi()[(t, k)];
                }
                v * stats.c()[(m, k)]
            })
        })
        .collect();
    ChannelEstimate { per_ap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{make_pilots, sample_channel, PilotMode};
    use nalgebra::DMatrix;

    fn unit_beta(m: usize, k: usize) -> BetaMatrix {
        BetaMatrix::new(DMatrix::from_element(m, k, 1.0)).unwrap()
    }

    #[test]
    fn orthogonal_unit_link_gives_half() {
        // tau p_p = 1 and beta = 1 split the gain evenly: c = gamma = 1/2.
        let beta = unit_beta(1, 1);
        let pilots = make_pilots(1, 1, PilotMode::Orthogonal, 0).unwrap();
        let stats = estimation_stats(&beta, &pilots, 1.0, 1).unwrap();
        assert!((stats.c()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((stats.gamma()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shared_pilot_splits_to_one_third() {
        // Two equal users on one pilot, tau p_p = 1: c = gamma = 1/3.
        let beta = unit_beta(1, 2);
        let pilots = make_pilots(2, 1, PilotMode::Random, 0).unwrap();
        assert_eq!(pilots.gram2()[(0, 1)], 1.0);
        let stats = estimation_stats(&beta, &pilots, 1.0, 1).unwrap();
        for k in 0..2 {
            assert!((stats.c()[(0, k)] - 1.0 / 3.0).abs() < 1e-15);
            assert!((stats.gamma()[(0, k)] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gain_gives_zero_stats() {
        let beta = BetaMatrix::new(DMatrix::from_row_slice(1, 2, &[0.0, 3e-12])).unwrap();
        let pilots = make_pilots(2, 2, PilotMode::Orthogonal, 0).unwrap();
        let stats = estimation_stats(&beta, &pilots, 2e11, 2).unwrap();
        assert_eq!(stats.c()[(0, 0)], 0.0);
        assert_eq!(stats.gamma()[(0, 0)], 0.0);
        assert!(stats.gamma()[(0, 1)] > 0.0);
    }

    #[test]
    fn gamma_never_exceeds_beta_and_contamination_hurts() {
        let b = DMatrix::from_row_slice(2, 2, &[4e-12, 8e-13, 2e-13, 6e-12]);
        let beta = BetaMatrix::new(b).unwrap();
        let p_p = 3e11;
        let alone = make_pilots(2, 2, PilotMode::Orthogonal, 0).unwrap();
        let shared = make_pilots(2, 1, PilotMode::Random, 0).unwrap();
        let s_alone = estimation_stats(&beta, &alone, p_p, 2).unwrap();
        let s_shared = estimation_stats(&beta, &shared, p_p, 2).unwrap();
        for m in 0..2 {
            for k in 0..2 {
                assert!(s_alone.gamma()[(m, k)] <= beta.get(m, k));
                assert!(
                    s_shared.gamma()[(m, k)] < s_alone.gamma()[(m, k)],
                    "contamination must strictly lower gamma at ({m},{k})"
                );
            }
        }
    }

    #[test]
    fn estimate_moments_match_gamma_and_error_is_orthogonal() {
        let b = DMatrix::from_row_slice(2, 3, &[2e-12, 5e-13, 1e-12, 8e-13, 3e-12, 4e-13]);
        let beta = BetaMatrix::new(b).unwrap();
        let (p_p, tau) = (3.14e11, 2);
        let pilots = make_pilots(3, 2, PilotMode::Random, 4).unwrap();
        assert!(
            (0..3).any(|k| !pilots.copilots(k).is_empty()),
            "need at least one shared pilot to exercise contamination"
        );
        let stats = estimation_stats(&beta, &pilots, p_p, tau).unwrap();

        let trials = 100_000;
        let n = 2;
        let mut pow: DMatrix<f64> = DMatrix::zeros(2, 3);
        let mut cross_sum = DMatrix::from_element(2, 3, Complex64::new(0.0, 0.0));
        let mut cross_sq: DMatrix<f64> = DMatrix::zeros(2, 3);
        for t in 0..trials {
            let ch = sample_channel(&beta, n, t as u64);
            let est = mmse_estimate(&ch, &pilots, &stats, p_p, tau, t as u64);
            for m in 0..2 {
                for k in 0..3 {
                    let ghat = est.at_ap(m).column(k);
                    let err = ch.at_ap(m).column(k) - ghat;
                    pow[(m, k)] += ghat.norm_squared();
                    let ip = ghat.dotc(&err);
                    cross_sum[(m, k)] += ip;
                    cross_sq[(m, k)] += ip.norm_sqr();
                }
            }
        }
        for m in 0..2 {
            for k in 0..3 {
                let ratio = pow[(m, k)] / trials as f64 / (n as f64 * stats.gamma()[(m, k)]);
                assert!(
                    (0.97..=1.03).contains(&ratio),
                    "estimate power ratio at ({m},{k}) is {ratio:.4}"
                );
                let mean = cross_sum[(m, k)] / trials as f64;
                let var = cross_sq[(m, k)] / trials as f64 - mean.norm_sqr();
                let se = (var / trials as f64).sqrt();
                assert!(
                    mean.norm() <= 3.0 * se,
                    "estimate and error correlate at ({m},{k}): |{mean:.3e}| > 3 x {se:.3e}"
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let beta = unit_beta(1, 2);
        let pilots = make_pilots(3, 3, PilotMode::Orthogonal, 0).unwrap();
        assert!(estimation_stats(&beta, &pilots, 1.0, 3).is_err());
    }
}
