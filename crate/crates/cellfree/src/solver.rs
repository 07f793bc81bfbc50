//! Max-min rate optimization over receiver weights and transmit powers.
//!
//! Every SINR here is a linear-fractional function of the power vector:
//! `sinr_k(q) = a_k q_k / (sum_k' d_kk' q_k' + c_k)`. For fixed powers the
//! best per-user weights solve a rank-one generalized eigenproblem with a
//! closed-form solution; for fixed weights the largest common SINR target
//! is found by bisection, where each target's feasibility is decided by a
//! monotone fixed-point iteration on the powers. Alternating the two steps
//! can only raise the minimum SINR, and stops once no user's SINR moves by
//! more than the configured tolerance.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rates::{rate_ingredients, PowerVector, RateIngredients, ReceiverWeights};
use crate::scenario::{BetaMatrix, PilotBook};

/// SINR as a linear-fractional map of the powers:
/// `sinr_k(q) = num_k q_k / ((den q)_k + cst_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients {
    num: DVector<f64>,
    den: DMatrix<f64>,
    cst: DVector<f64>,
}

impl SinrCoefficients {
    fn validate(self) -> Result<Self> {
        let ok = self.num.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.den.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.cst.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::PowerAllocation(
                "SINR coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(self)
    }

    pub fn k_users(&self) -> usize {
        self.num.len()
    }

    /// Coefficients of the weighted-combining SINR for given CPU weights.
    pub fn from_weights(
        u: &ReceiverWeights,
        ing: &RateIngredients,
        n_antennas: usize,
        rho: f64,
    ) -> Result<Self> {
        if u.m_aps() != ing.m_aps() || u.matrix().ncols() != ing.k_users() {
            return Err(Error::InconsistentStats(
                "weight matrix shape does not match the ingredients".into(),
            ));
        }
        let (m_aps, k_users, n) = (ing.m_aps(), ing.k_users(), n_antennas as f64);
        let mut num = DVector::zeros(k_users);
        let mut den = DMatrix::zeros(k_users, k_users);
        let mut cst = DVector::zeros(k_users);
        for k in 0..k_users {
            let uk = u.column(k);
            let mut u_gamma = 0.0;
            for m in 0..m_aps {
                let w2 = uk[m] * uk[m];
                u_gamma += uk[m] * ing.gamma()[(m, k)];
                cst[k] += n / rho * w2 * ing.noise_quant(m, k);
                for kp in 0..k_users {
                    den[(k, kp)] += n * w2 * ing.dist(m, k) * ing.beta()[(m, kp)];
                }
            }
            num[k] = n * n * u_gamma * u_gamma;
            for kp in 0..k_users {
                if kp == k {
                    continue;
                }
                let g2 = ing.gram2()[(k, kp)];
                if g2 > 0.0 {
                    let mut leak = 0.0;
                    for m in 0..m_aps {
                        leak += uk[m] * ing.ratio(m, k) * ing.beta()[(m, kp)];
                    }
                    den[(k, kp)] += n * n * g2 * leak * leak;
                }
            }
        }
        SinrCoefficients { num, den, cst }.validate()
    }

    /// Coefficients of the estimate-plus-signal forwarding SINR.
    pub fn case1(
        beta: &BetaMatrix,
        gamma: &DMatrix<f64>,
        pilots: &PilotBook,
        c_tot_per_ap: &[f64],
        n_antennas: usize,
        rho: f64,
    ) -> Result<Self> {
        if c_tot_per_ap.len() != beta.m_aps() {
            return Err(Error::InconsistentStats(
                "one c_tot entry per AP required".into(),
            ));
        }
        let (m_aps, k_users, n) = (beta.m_aps(), beta.k_users(), n_antennas as f64);
        let b = beta.matrix();
        let mut num = DVector::zeros(k_users);
        let mut den = DMatrix::zeros(k_users, k_users);
        let mut cst = DVector::zeros(k_users);
        for k in 0..k_users {
            let mut gamma_sum = 0.0;
            for m in 0..m_aps {
                let cp1 = c_tot_per_ap[m] + 1.0;
                gamma_sum += gamma[(m, k)];
                cst[k] += n / rho * cp1 * gamma[(m, k)];
                for kp in 0..k_users {
                    den[(k, kp)] += n * cp1 * gamma[(m, k)] * b[(m, kp)];
                }
            }
            num[k] = n * n * gamma_sum * gamma_sum;
            for kp in 0..k_users {
                if kp == k {
                    continue;
                }
                let g2 = pilots.gram2()[(k, kp)];
                if g2 > 0.0 {
                    let mut leak = 0.0;
                    for m in 0..m_aps {
                        if b[(m, k)] > 0.0 {
                            leak += gamma[(m, k)] * b[(m, kp)] / b[(m, k)];
                        }
                    }
                    den[(k, kp)] += n * n * g2 * leak * leak;
                }
            }
        }
        SinrCoefficients { num, den, cst }.validate()
    }

    /// Coefficients of the combine-then-forward SINR with equal weights.
    pub fn case2(
        beta: &BetaMatrix,
        gamma: &DMatrix<f64>,
        pilots: &PilotBook,
        w_z: f64,
        q_levels_per_ap: &[f64],
        n_antennas: usize,
        rho: f64,
    ) -> Result<Self> {
        let ing = rate_ingredients(beta, gamma, pilots, w_z, q_levels_per_ap)?;
        let u = ReceiverWeights::uniform(beta.m_aps(), beta.k_users());
        Self::from_weights(&u, &ing, n_antennas, rho)
    }

    pub fn sinr(&self, q: &PowerVector) -> Vec<f64> {
        let dq = &self.den * q.vector();
        (0..self.k_users())
            .map(|k| {
                if self.num[k] == 0.0 {
                    0.0
                } else {
                    self.num[k] * q.get(k) / (dq[k] + self.cst[k])
                }
            })
            .collect()
    }

    pub fn min_sinr(&self, q: &PowerVector) -> f64 {
        self.sinr(q).into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Desired-signal vector and interference-plus-noise matrix of one user's
/// weight subproblem. The best weights maximize
/// `(u . gam)^2 / (u^T b u)`, attained at `u` proportional to `b^-1 gam`.
pub fn filter_matrices(
    k: usize,
    q: &PowerVector,
    ing: &RateIngredients,
    n_antennas: usize,
    rho: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (m_aps, k_users, n) = (ing.m_aps(), ing.k_users(), n_antennas as f64);
    let gam = DVector::from_fn(m_aps, |m, _| ing.gamma()[(m, k)]);
    let mut b = DMatrix::zeros(m_aps, m_aps);
    for m in 0..m_aps {
        let mut received = 0.0;
        for kp in 0..k_users {
            received += q.get(kp) * ing.beta()[(m, kp)];
        }
        b[(m, m)] = n * ing.dist(m, k) * received + n / rho * ing.noise_quant(m, k);
    }
    for kp in 0..k_users {
        if kp == k {
            continue;
        }
        let g2 = ing.gram2()[(k, kp)];
        if g2 > 0.0 {
            let lam = DVector::from_fn(m_aps, |m, _| ing.ratio(m, k) * ing.beta()[(m, kp)]);
            b.ger(n * n * q.get(kp) * g2, &lam, &lam, 1.0);
        }
    }
    (gam, b)
}

/// Per-user optimal CPU weights at fixed powers.
pub fn receiver_filter(
    q: &PowerVector,
    ing: &RateIngredients,
    n_antennas: usize,
    rho: f64,
) -> Result<ReceiverWeights> {
    let (m_aps, k_users) = (ing.m_aps(), ing.k_users());
    let mut u = DMatrix::zeros(m_aps, k_users);
    for k in 0..k_users {
        let (gam, b) = filter_matrices(k, q, ing, n_antennas, rho);
        if gam.norm() == 0.0 {
            u[(0, k)] = 1.0;
            continue;
        }
        let chol = Cholesky::new(b).ok_or(Error::SingularFilter(k))?;
        let mut v = chol.solve(&gam);
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::SingularFilter(k));
        }
        v /= norm;
        if v.dot(&gam) < 0.0 {
            v = -v;
        }
        u.set_column(k, &v);
    }
    ReceiverWeights::new(u)
}

/// Outcome of probing one common SINR target.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// The target is reachable; the carried powers are the cheapest ones
    /// that reach it.
    Feasible(PowerVector),
    Infeasible,
    /// The power iteration hit its cap before settling. Callers treat the
    /// target as unreachable, which can only make the final answer
    /// conservative.
    Indeterminate,
}

const POWER_ITER_CAP: usize = 500;

/// Decides whether every user can reach SINR `t` under the power cap, by
/// iterating `q <- min(pmax, I_t(q))` from zero. The map is monotone, so
/// the iteration either settles on the cheapest feasible powers or pins
/// some user at the cap with its target missed.
pub fn feasible_at_t(t: f64, coef: &SinrCoefficients, pmax: f64) -> Feasibility {
    let k_users = coef.k_users();
    if t <= 0.0 {
        return Feasibility::Feasible(PowerVector::new(vec![0.0; k_users], pmax).unwrap());
    }
    for k in 0..k_users {
        if coef.num[k] <= t * coef.den[(k, k)] {
            return Feasibility::Infeasible;
        }
    }
    let mut q = DVector::zeros(k_users);
    let mut settled = false;
    for _ in 0..POWER_ITER_CAP {
        let dq = &coef.den * &q;
        let mut delta = 0.0f64;
        for k in 0..k_users {
            let interference = dq[k] - coef.den[(k, k)] * q[k];
            let want = t * (interference + coef.cst[k]) / (coef.num[k] - t * coef.den[(k, k)]);
            let next = want.min(pmax);
            delta = delta.max((next - q[k]).abs());
            q[k] = next;
        }
        if delta <= 1e-12 * pmax {
            settled = true;
            break;
        }
    }
    if !settled {
        return Feasibility::Indeterminate;
    }
    let q = PowerVector::new(q.iter().copied().collect(), pmax).unwrap();
    if coef.min_sinr(&q) >= t * (1.0 - 1e-9) {
        Feasibility::Feasible(q)
    } else {
        Feasibility::Infeasible
    }
}

const BISECT_ITER_CAP: usize = 200;

/// Largest common SINR target under the per-user power cap, found by
/// bisection between the full-power minimum (always reachable) and the
/// best single-user SINR (never beatable). Returns the best powers seen
/// and the minimum SINR they deliver; `tol` is the absolute bracket width
/// at which bisection stops.
pub fn power_allocation(
    coef: &SinrCoefficients,
    pmax: f64,
    tol: f64,
) -> Result<(PowerVector, f64)> {
    let k_users = coef.k_users();
    let full = PowerVector::full(k_users, pmax);
    let t_full = coef.min_sinr(&full);
    if !t_full.is_finite() {
        return Err(Error::PowerAllocation(format!(
            "minimum SINR at full power is {t_full}"
        )));
    }
    let mut best_q = full;
    let mut best_t = t_full;
    let mut lo = t_full;
    let mut hi = (0..k_users)
        .map(|k| coef.num[k] * pmax / (coef.den[(k, k)] * pmax + coef.cst[k]))
        .fold(f64::INFINITY, f64::min);
    if !hi.is_finite() || hi <= 0.0 {
        return Ok((best_q, best_t.max(0.0)));
    }
    let tol = tol.max(1e-15);
    for _ in 0..BISECT_ITER_CAP {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match feasible_at_t(mid, coef, pmax) {
            Feasibility::Feasible(q) => {
                let t = coef.min_sinr(&q);
                if t > best_t {
                    best_t = t;
                    best_q = q;
                }
                lo = mid;
            }
            _ => hi = mid,
        }
    }
    Ok((best_q, best_t))
}

/// One optimized deployment: final weights, powers, the minimum SINR
/// `t_star`, all per-user SINRs, and the minimum-SINR trajectory across
/// iterations.
#[derive(Debug, Clone)]
pub struct MaxMinResult {
    pub u: ReceiverWeights,
    pub q: PowerVector,
    pub t_star: f64,
    pub sinr: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Alternates optimal weights and optimal powers from full power until no
/// user's SINR moves by more than `cfg.epsilon`, keeping the best iterate
/// if a step's bisection noise would lower the minimum.
pub fn maxmin_solve(
    cfg: &SystemConfig,
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    q_levels_per_ap: &[f64],
) -> Result<MaxMinResult> {
    let ing = rate_ingredients(beta, gamma, pilots, cfg.clip_z, q_levels_per_ap)?;
    let (n, rho) = (cfg.n_antennas, cfg.data_snr());
    let mut q = PowerVector::full(ing.k_users(), cfg.pmax);
    let mut best: Option<(ReceiverWeights, PowerVector, f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut sinr_prev: Option<Vec<f64>> = None;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let u = receiver_filter(&q, &ing, n, rho)?;
        let coef = SinrCoefficients::from_weights(&u, &ing, n, rho)?;
        let (q_cand, _) = power_allocation(&coef, cfg.pmax, cfg.epsilon * 0.1)?;
        let sinr = coef.sinr(&q_cand);
        let t = sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let improved = best.as_ref().map_or(true, |(_, _, t_best, _)| t > *t_best);
        if improved {
            best = Some((u, q_cand.clone(), t, sinr.clone()));
            q = q_cand;
        } else {
            q = best.as_ref().unwrap().1.clone();
        }
        trace.push(best.as_ref().unwrap().2);
        if let Some(prev) = &sinr_prev {
            let step = sinr
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if step <= cfg.epsilon {
                break;
            }
        }
        sinr_prev = Some(sinr);
    }
    let (u, q, t_star, sinr) = best.unwrap();
    Ok(MaxMinResult {
        u,
        q,
        t_star,
        sinr,
        iterations,
        trace,
    })
}

/// Power-only reference: equal CPU weights, one power allocation.
pub fn baseline_solve(
    cfg: &SystemConfig,
    beta: &BetaMatrix,
    gamma: &DMatrix<f64>,
    pilots: &PilotBook,
    q_levels_per_ap: &[f64],
) -> Result<(PowerVector, f64)> {
    let coef = SinrCoefficients::case2(
        beta,
        gamma,
        pilots,
        cfg.clip_z,
        q_levels_per_ap,
        cfg.n_antennas,
        cfg.data_snr(),
    )?;
    power_allocation(&coef, cfg.pmax, cfg.epsilon * 0.1)
}
