//! Monte Carlo measurement of the SINR terms.
//!
//! Runs the actual uplink chain end to end: draw channels, estimate them
//! from noisy pilots, transmit random payload symbols, quantize what each
//! AP forwards, and combine at the CPU. The combined signal is split into
//! the same terms the closed forms predict (desired signal, beamforming
//! uncertainty, inter-user interference, thermal noise, quantization
//! distortion), and each term's power and the correlations between terms
//! are estimated from many independent trials. Tests elsewhere hold the
//! closed-form expressions to these measurements.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::estimation::{estimation_stats, mmse_estimate, EstimationStats};
use crate::quantization::{uniform_quantize, CaseId, QuantizerSpec};
use crate::rng::{complex_gaussian, rng_for, substream, Stream};
use crate::scenario::{
    drop_topology, large_scale, make_pilots, sample_channel, BetaMatrix, PilotBook, PilotMode,
};
use crate::SystemConfig;

use super::{PowerVector, ReceiverWeights};

/// Everything one simulated deployment needs: long-term statistics, pilot
/// assignment, transmit powers, optional CPU weights, and the quantizer
/// setup. `alpha: None` runs the chain without any quantization.
#[derive(Debug, Clone)]
pub struct OracleScenario {
    pub beta: BetaMatrix,
    pub stats: EstimationStats,
    pub pilots: PilotBook,
    pub q: PowerVector,
    pub weights: Option<ReceiverWeights>,
    pub n_antennas: usize,
    pub p_p: f64,
    pub rho: f64,
    pub tau: usize,
    pub w_y: f64,
    pub w_g: f64,
    pub w_z: f64,
    pub alpha: Option<u32>,
}

/// Draws a deployment with random positions, shadowing, pilot assignment,
/// per-user powers in `[0.2, 1]`, and (optionally) random positive unit
/// CPU weights. Powers and clipping factors come from the default system
/// configuration.
pub fn random_scenario(
    m_aps: usize,
    n_antennas: usize,
    k_users: usize,
    tau: usize,
    alpha: Option<u32>,
    weighted: bool,
    seed: u64,
) -> Result<OracleScenario> {
    let mut cfg = SystemConfig::default();
    cfg.m_aps = m_aps;
    cfg.n_antennas = n_antennas;
    cfg.k_users = k_users;
    cfg.tau = tau;
    cfg.pilot_mode = PilotMode::Random;
    let topo = drop_topology(&cfg, seed);
    let beta = large_scale(&topo, &cfg.path_loss, cfg.shadow_sigma_db, seed)?;
    let pilots = make_pilots(k_users, tau, PilotMode::Random, seed)?;
    let p_p = cfg.pilot_snr();
    let rho = cfg.data_snr();
    let stats = estimation_stats(&beta, &pilots, p_p, tau)?;
    let mut power_rng = rng_for(seed, Stream::OraclePowers, 0);
    let q = PowerVector::new(
        (0..k_users).map(|_| power_rng.gen_range(0.2..1.0)).collect(),
        1.0,
    )?;
    let weights = if weighted {
        let mut weight_rng = rng_for(seed, Stream::OracleWeights, 0);
        let mut u = DMatrix::from_fn(m_aps, k_users, |_, _| weight_rng.gen_range(0.1..1.0));
        for k in 0..k_users {
            let norm = u.column(k).norm();
            for m in 0..m_aps {
                u[(m, k)] /= norm;
            }
        }
        Some(ReceiverWeights::new(u)?)
    } else {
        None
    };
    Ok(OracleScenario {
        beta,
        stats,
        pilots,
        q,
        weights,
        n_antennas,
        p_p,
        rho,
        tau,
        w_y: cfg.clip_y,
        w_g: cfg.clip_g,
        w_z: cfg.clip_z,
        alpha,
    })
}

/// Measured power of each SINR term for one user. `iui` is indexed by
/// interferer with the user's own slot at zero; `tqe_parts` splits the
/// distortion when estimates and raw signals are quantized separately.
#[derive(Debug, Clone)]
pub struct EmpiricalBreakdown {
    pub ds2: f64,
    pub bu: f64,
    pub iui: Vec<f64>,
    pub tn: f64,
    pub tqe: f64,
    pub tqe_parts: Option<TqeParts>,
}

impl EmpiricalBreakdown {
    pub fn sinr(&self) -> f64 {
        self.ds2 / (self.bu + self.iui.iter().sum::<f64>() + self.tn + self.tqe)
    }
}

/// Distortion power split by origin: quantized raw signal against the clean
/// estimate (`raw`), quantized estimate against the clean signal (`est`),
/// and the product of both errors (`cross`).
#[derive(Debug, Clone, Copy)]
pub struct TqeParts {
    pub raw: f64,
    pub est: f64,
    pub cross: f64,
}

/// Magnitude of the centered correlation between two term estimators.
#[derive(Debug, Clone)]
pub struct CrossCorrelation {
    pub user: usize,
    pub term_a: String,
    pub term_b: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub trials: usize,
    pub breakdown: Vec<EmpiricalBreakdown>,
    pub sinr: Vec<f64>,
    pub cross_correlations: Vec<CrossCorrelation>,
    pub max_cross_correlation: f64,
    /// Largest relative mismatch between the summed terms and the actually
    /// combined signal across all trials and users. Should sit at rounding
    /// error; anything larger means the decomposition itself is wrong.
    pub max_reconstruction_error: f64,
}

/// Uncorrelated terms stay below roughly this many standard errors.
pub fn correlation_threshold(trials: usize) -> f64 {
    3.0 / (trials as f64).sqrt()
}

/// Index into the packed upper triangle (row `i`, column `j`, `i <= j`).
fn tri(i: usize, j: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2 + j
}

struct UserAcc {
    gram: Vec<Complex64>,
    sums: Vec<Complex64>,
    a_sum: Complex64,
    parts: [f64; 3],
}

impl UserAcc {
    fn new(n_terms: usize) -> Self {
        UserAcc {
            gram: vec![Complex64::new(0.0, 0.0); n_terms * (n_terms + 1) / 2],
            sums: vec![Complex64::new(0.0, 0.0); n_terms],
            a_sum: Complex64::new(0.0, 0.0),
            parts: [0.0; 3],
        }
    }

    fn push(&mut self, x: &[Complex64]) {
        let n = x.len();
        for i in 0..n {
            self.sums[i] += x[i];
            for j in i..n {
                self.gram[tri(i, j, n)] += x[i] * x[j].conj();
            }
        }
    }
}

/// Simulates `trials` independent coherence blocks of the chosen forwarding
/// case and reports per-term powers, empirical SINR, and term correlations.
pub fn oracle_case(
    case: CaseId,
    sc: &OracleScenario,
    trials: usize,
    seed: u64,
) -> Result<OracleReport> {
    let (m_aps, k_users, n) = (sc.beta.m_aps(), sc.beta.k_users(), sc.n_antennas);
    let gamma = sc.stats.gamma();
    let u_eff = match &sc.weights {
        Some(w) => w.matrix().clone(),
        None => DMatrix::from_element(m_aps, k_users, 1.0),
    };

    // Quantizer scales come from long-term statistics only.
    let mut specs_y = Vec::new();
    let mut specs_g = Vec::new();
    let mut specs_z = Vec::new();
    if let Some(alpha) = sc.alpha {
        for m in 0..m_aps {
            let mut received = 1.0;
            for k in 0..k_users {
                received += sc.rho * sc.q.get(k) * sc.beta.get(m, k);
            }
            match case {
                CaseId::Case1 => {
                    specs_y.push(QuantizerSpec::new(alpha, sc.w_y, received.sqrt())?);
                    let row: Vec<QuantizerSpec> = (0..k_users)
                        .map(|k| QuantizerSpec::new(alpha, sc.w_g, gamma[(m, k)].sqrt()))
                        .collect::<Result<_>>()?;
                    specs_g.push(row);
                }
                CaseId::Case2 => {
                    let row: Vec<QuantizerSpec> = (0..k_users)
                        .map(|k| {
                            let b = sc.beta.get(m, k);
                            let g = gamma[(m, k)];
                            let var = n as f64 * ((2.0 * b - g) * (received - 1.0) + g);
                            QuantizerSpec::new(alpha, sc.w_z, var.sqrt())
                        })
                        .collect::<Result<_>>()?;
                    specs_z.push(row);
                }
            }
        }
    }

    // Term slots per user: amplitude-bearing S, coherent B, one slot per
    // interferer, thermal noise, quantization distortion.
    let n_terms = k_users + 3;
    let mut accs: Vec<UserAcc> = (0..k_users).map(|_| UserAcc::new(n_terms)).collect();
    let mut max_recon = 0.0f64;

    let zero = Complex64::new(0.0, 0.0);
    for trial in 0..trials {
        let trial_seed = substream(seed, Stream::Instance, trial as u64);
        let channels = sample_channel(&sc.beta, n, trial_seed);
        let est = mmse_estimate(&channels, &sc.pilots, &sc.stats, sc.p_p, sc.tau, trial_seed);
        let mut sym_rng = rng_for(trial_seed, Stream::DataSymbols, 0);
        let s: Vec<Complex64> = (0..k_users).map(|_| complex_gaussian(&mut sym_rng)).collect();
        let mut noise_rng = rng_for(trial_seed, Stream::ReceiverNoise, 0);

        let mut a = vec![zero; k_users];
        let mut c = vec![vec![zero; k_users]; k_users];
        let mut tn = vec![zero; k_users];
        let mut tqe = vec![zero; k_users];
        let mut tqe_split = vec![[zero; 3]; k_users];
        let mut r = vec![zero; k_users];

        for m in 0..m_aps {
            let g = channels.at_ap(m);
            let gh = est.at_ap(m);
            let nvec = DVector::from_fn(n, |_, _| complex_gaussian(&mut noise_rng));
            let mut y = nvec.clone();
            for k in 0..k_users {
                let amp = (sc.rho * sc.q.get(k)).sqrt() * s[k];
                for i in 0..n {
                    y[i] += amp * g[(i, k)];
                }
            }
            let e_y: Option<DVector<Complex64>> = match (sc.alpha, case) {
                (Some(_), CaseId::Case1) => Some(DVector::from_fn(n, |i, _| {
                    uniform_quantize(y[i], &specs_y[m]) - y[i]
                })),
                _ => None,
            };

            for k in 0..k_users {
                let w = u_eff[(m, k)];
                let mut ip_n = zero;
                let mut ip_y = zero;
                for i in 0..n {
                    let ghc = gh[(i, k)].conj();
                    ip_n += ghc * nvec[i];
                    ip_y += ghc * y[i];
                }
                tn[k] += w * ip_n;
                for kp in 0..k_users {
                    let mut ip = zero;
                    for i in 0..n {
                        ip += gh[(i, k)].conj() * g[(i, kp)];
                    }
                    if kp == k {
                        a[k] += w * ip;
                    } else {
                        c[k][kp] += w * ip;
                    }
                }
                match (sc.alpha, case) {
                    (None, _) => {
                        r[k] += w * ip_y;
                    }
                    (Some(_), CaseId::Case1) => {
                        let e_y = e_y.as_ref().unwrap();
                        let mut raw = zero;
                        let mut est_term = zero;
                        let mut cross = zero;
                        let mut full = zero;
                        for i in 0..n {
                            let e_g = uniform_quantize(gh[(i, k)], &specs_g[m][k]) - gh[(i, k)];
                            raw += gh[(i, k)].conj() * e_y[i];
                            est_term += e_g.conj() * y[i];
                            cross += e_g.conj() * e_y[i];
                            full += (gh[(i, k)] + e_g).conj() * (y[i] + e_y[i]);
                        }
                        tqe_split[k][0] += w * raw;
                        tqe_split[k][1] += w * est_term;
                        tqe_split[k][2] += w * cross;
                        tqe[k] += w * (raw + est_term + cross);
                        r[k] += w * full;
                    }
                    (Some(_), CaseId::Case2) => {
                        let e_z = uniform_quantize(ip_y, &specs_z[m][k]) - ip_y;
                        tqe[k] += w * e_z;
                        r[k] += w * (ip_y + e_z);
                    }
                }
            }
        }

        for k in 0..k_users {
            let amp_k = (sc.rho * sc.q.get(k)).sqrt();
            let mut x = Vec::with_capacity(n_terms);
            x.push(amp_k * s[k]);
            x.push(amp_k * a[k] * s[k]);
            let mut total = x[1];
            for kp in 0..k_users {
                if kp != k {
                    let v = (sc.rho * sc.q.get(kp)).sqrt() * c[k][kp] * s[kp];
                    total += v;
                    x.push(v);
                }
            }
            x.push(tn[k]);
            x.push(tqe[k]);
            total += tn[k] + tqe[k];
            let recon = (total - r[k]).norm() / r[k].norm().max(1e-300);
            max_recon = max_recon.max(recon);
            accs[k].a_sum += a[k];
            accs[k].push(&x);
            for (slot, v) in tqe_split[k].iter().enumerate() {
                accs[k].parts[slot] += v.norm_sqr();
            }
        }
    }

    // Re-split the coherent term into its mean (desired signal) and the
    // fluctuation around it (beamforming uncertainty), then read powers,
    // means, and centered correlations off the transformed Gram matrix.
    let t = trials as f64;
    let mut breakdown = Vec::with_capacity(k_users);
    let mut sinr = Vec::with_capacity(k_users);
    let mut cross_correlations = Vec::new();
    let mut max_cross = 0.0f64;
    for (k, acc) in accs.iter().enumerate() {
        let abar = acc.a_sum / t;
        let mut gb = DMatrix::from_element(n_terms, n_terms, zero);
        for i in 0..n_terms {
            for j in i..n_terms {
                let v = acc.gram[tri(i, j, n_terms)];
                gb[(i, j)] = v;
                gb[(j, i)] = v.conj();
            }
        }
        let mut l = DMatrix::from_fn(n_terms, n_terms, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                zero
            }
        });
        l[(0, 0)] = abar;
        l[(1, 0)] = -abar;
        let gd = &l * &gb * l.adjoint();
        let mu = &l * DVector::from_fn(n_terms, |i, _| acc.sums[i] / t);

        let power = |i: usize| gd[(i, i)].re / t;
        let var = |i: usize| (gd[(i, i)].re / t - mu[i].norm_sqr()).max(0.0);

        let labels: Vec<String> = {
            let mut v = vec!["ds".to_string(), "bu".to_string()];
            for kp in 0..k_users {
                if kp != k {
                    v.push(format!("iui{kp}"));
                }
            }
            v.push("tn".to_string());
            v.push("tqe".to_string());
            v
        };
        for i in 0..n_terms {
            for j in (i + 1)..n_terms {
                let (vi, vj) = (var(i), var(j));
                if vi > 0.0 && vj > 0.0 {
                    let cov = gd[(i, j)] / t - mu[i] * mu[j].conj();
                    let value = cov.norm() / (vi * vj).sqrt();
                    max_cross = max_cross.max(value);
                    cross_correlations.push(CrossCorrelation {
                        user: k,
                        term_a: labels[i].clone(),
                        term_b: labels[j].clone(),
                        value,
                    });
                }
            }
        }

        let mut iui = vec![0.0; k_users];
        let mut slot = 2;
        for kp in 0..k_users {
            if kp != k {
                iui[kp] = power(slot);
                slot += 1;
            }
        }
        let tqe_parts = match (sc.alpha, case) {
            (Some(_), CaseId::Case1) => Some(TqeParts {
                raw: acc.parts[0] / t,
                est: acc.parts[1] / t,
                cross: acc.parts[2] / t,
            }),
            _ => None,
        };
        let b = EmpiricalBreakdown {
            ds2: power(0),
            bu: power(1),
            iui,
            tn: power(n_terms - 2),
            tqe: power(n_terms - 1),
            tqe_parts,
        };
        sinr.push(b.sinr());
        breakdown.push(b);
    }

    Ok(OracleReport {
        trials,
        breakdown,
        sinr,
        cross_correlations,
        max_cross_correlation: max_cross,
        max_reconstruction_error: max_recon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{
        breakdown_case1, rate_ingredients, rate_with_weights, sinr_case2,
    };

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn unquantized_terms_match_closed_form() {
        let sc = random_scenario(3, 2, 3, 3, None, false, 41).unwrap();
        let trials = 20_000;
        let report = oracle_case(CaseId::Case1, &sc, trials, 141).unwrap();
        let closed = breakdown_case1(
            &sc.q,
            &sc.beta,
            sc.stats.gamma(),
            &sc.pilots,
            &[0.0; 3],
            2,
            sc.rho,
        )
        .unwrap();
        assert!(report.max_reconstruction_error < 1e-9);
        for k in 0..3 {
            let (e, c) = (&report.breakdown[k], &closed[k]);
            assert!(rel(e.ds2, c.ds2) < 0.05, "user {k} ds2: {} vs {}", e.ds2, c.ds2);
            assert!(rel(e.bu, c.bu) < 0.08, "user {k} bu: {} vs {}", e.bu, c.bu);
            assert!(rel(e.tn, c.tn) < 0.05, "user {k} tn: {} vs {}", e.tn, c.tn);
            assert_eq!(e.tqe, 0.0);
            for kp in 0..3 {
                if kp != k {
                    assert!(
                        rel(e.iui[kp], c.iui[kp]) < 0.08,
                        "user {k} iui{kp}: {} vs {}",
                        e.iui[kp],
                        c.iui[kp]
                    );
                }
            }
            assert!(rel(e.sinr(), c.sinr()) < 0.08);
        }
    }

    #[test]
    fn case1_quantized_matches_closed_form() {
        let sc = random_scenario(4, 2, 3, 2, Some(6), false, 42).unwrap();
        let trials = 30_000;
        let report = oracle_case(CaseId::Case1, &sc, trials, 142).unwrap();
        let ct = crate::quantization::c_tot(sc.w_y, sc.w_g, 2f64.powi(6));
        let closed = breakdown_case1(
            &sc.q,
            &sc.beta,
            sc.stats.gamma(),
            &sc.pilots,
            &[ct; 4],
            2,
            sc.rho,
        )
        .unwrap();
        assert!(report.max_reconstruction_error < 1e-9);
        let shared = (0..3).any(|k| (0..3).any(|j| j != k && sc.pilots.gram2()[(k, j)] > 0.0));
        assert!(shared, "expected at least one shared pilot pair");
        for k in 0..3 {
            let (e, c) = (&report.breakdown[k], &closed[k]);
            assert!(
                rel(e.tqe, c.tqe) < 0.10,
                "user {k} tqe: {} vs {}",
                e.tqe,
                c.tqe
            );
            assert!(
                rel(e.sinr(), c.sinr()) < 0.10,
                "user {k} sinr: {} vs {}",
                e.sinr(),
                c.sinr()
            );
            let parts = e.tqe_parts.as_ref().unwrap();
            let total = parts.raw + parts.est + parts.cross;
            assert!(rel(total, e.tqe) < 0.05, "parts {} vs total {}", total, e.tqe);
        }
    }

    #[test]
    fn case2_quantized_matches_closed_form() {
        let sc = random_scenario(4, 2, 3, 2, Some(6), false, 43).unwrap();
        let trials = 30_000;
        let report = oracle_case(CaseId::Case2, &sc, trials, 143).unwrap();
        let closed = sinr_case2(
            &sc.q,
            &sc.beta,
            sc.stats.gamma(),
            &sc.pilots,
            sc.w_z,
            &[2f64.powi(6); 4],
            2,
            sc.rho,
        )
        .unwrap();
        assert!(report.max_reconstruction_error < 1e-9);
        for k in 0..3 {
            assert!(
                rel(report.sinr[k], closed[k]) < 0.10,
                "user {k}: {} vs {}",
                report.sinr[k],
                closed[k]
            );
        }
    }

    #[test]
    fn weighted_case2_matches_closed_form() {
        let sc = random_scenario(4, 2, 3, 2, Some(6), true, 44).unwrap();
        let trials = 30_000;
        let report = oracle_case(CaseId::Case2, &sc, trials, 144).unwrap();
        let ing = rate_ingredients(
            &sc.beta,
            sc.stats.gamma(),
            &sc.pilots,
            sc.w_z,
            &[2f64.powi(6); 4],
        )
        .unwrap();
        let closed = rate_with_weights(sc.weights.as_ref().unwrap(), &sc.q, &ing, 2, sc.rho)
            .unwrap();
        for k in 0..3 {
            assert!(
                rel(report.sinr[k], closed.sinr[k]) < 0.10,
                "user {k}: {} vs {}",
                report.sinr[k],
                closed.sinr[k]
            );
        }
    }

    #[test]
    fn terms_are_mutually_uncorrelated() {
        let sc = random_scenario(3, 2, 3, 2, Some(6), false, 45).unwrap();
        let trials = 20_000;
        let report = oracle_case(CaseId::Case1, &sc, trials, 145).unwrap();
        let thr = correlation_threshold(trials);
        for c in &report.cross_correlations {
            assert!(
                c.value < thr,
                "user {} {}/{} correlation {} over {}",
                c.user,
                c.term_a,
                c.term_b,
                c.value,
                thr
            );
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let sc = random_scenario(2, 2, 2, 2, Some(5), false, 46).unwrap();
        let r1 = oracle_case(CaseId::Case2, &sc, 500, 146).unwrap();
        let r2 = oracle_case(CaseId::Case2, &sc, 500, 146).unwrap();
        assert_eq!(r1.sinr, r2.sinr);
        assert_eq!(r1.max_cross_correlation, r2.max_cross_correlation);
        assert_eq!(r1.max_reconstruction_error, r2.max_reconstruction_error);
    }
}
