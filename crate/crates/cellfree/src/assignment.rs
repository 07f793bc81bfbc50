//! Per-AP active user sets under a backhaul bit budget.
//!
//! Each AP may forward statistics for at most `k_m` users at `alpha` bits
//! each, with the product capped by the budget. APs pick their strongest
//! users, which can leave weak users served by nobody; a repair pass then
//! reassigns slots so every user keeps at least one AP. Users inserted by
//! the repair are protected from being orphaned again, which bounds the
//! number of repairs by the user count.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scenario::BetaMatrix;

/// All ways to spend a bit budget: serve `k_m` users at `floor(budget /
/// k_m)` bits each, for every feasible set size.
pub fn enumerate_budget(budget: u32, k_users: usize) -> Vec<(usize, u32)> {
    let cap = k_users.min(budget as usize);
    (1..=cap).map(|k_m| (k_m, budget / k_m as u32)).collect()
}

/// Which users each AP forwards, plus the per-user bit width the budget
/// leaves for that set size.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetPlan {
    sets: Vec<Vec<usize>>,
    k_m: usize,
    alpha: u32,
}

impl ActiveSetPlan {
    pub fn m_aps(&self) -> usize {
        self.sets.len()
    }

    pub fn k_m(&self) -> usize {
        self.k_m
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    /// Users AP `m` forwards, ascending.
    pub fn set(&self, m: usize) -> &[usize] {
        &self.sets[m]
    }

    pub fn is_active(&self, m: usize, k: usize) -> bool {
        self.sets[m].binary_search(&k).is_ok()
    }

    /// Number of APs forwarding user `k`.
    pub fn coverage(&self, k: usize) -> usize {
        self.sets.iter().filter(|s| s.binary_search(&k).is_ok()).count()
    }
}

/// Picks each AP's `k_m` strongest users, then repairs orphans.
///
/// Repair walks orphans in ascending id. An orphan joins the strongest AP
/// (by its own gain) that can give up a slot: the AP's weakest
/// multiply-covered member leaves if there is one, otherwise its weakest
/// unprotected member leaves and rejoins the orphan queue. Repaired users
/// are protected: they are never evicted into orphanhood themselves.
pub fn build_active_sets(beta: &BetaMatrix, k_m: usize, alpha: u32) -> Result<ActiveSetPlan> {
    let (m_aps, k_users) = (beta.m_aps(), beta.k_users());
    if k_m == 0 || k_m > k_users {
        return Err(Error::ActiveSetSize { k_m, k_users });
    }
    if m_aps * k_m < k_users {
        return Err(Error::CoverageInfeasible {
            m_aps,
            k_m,
            k_users,
        });
    }

    let stronger = |m: usize, a: usize, b: usize| {
        // Strict ordering: higher gain first, lower id breaking ties.
        (beta.get(m, a), std::cmp::Reverse(a)) > (beta.get(m, b), std::cmp::Reverse(b))
    };

    let mut sets: Vec<Vec<usize>> = (0..m_aps)
        .map(|m| {
            let mut ids: Vec<usize> = (0..k_users).collect();
            ids.sort_by(|&a, &b| {
                beta.get(m, b)
                    .total_cmp(&beta.get(m, a))
                    .then(a.cmp(&b))
            });
            ids.truncate(k_m);
            ids.sort_unstable();
            ids
        })
        .collect();

    let mut coverage = vec![0usize; k_users];
    for s in &sets {
        for &k in s {
            coverage[k] += 1;
        }
    }
    let mut protected = vec![false; k_users];
    let mut queue: std::collections::VecDeque<usize> =
        (0..k_users).filter(|&k| coverage[k] == 0).collect();

    while let Some(orphan) = queue.pop_front() {
        if coverage[orphan] > 0 {
            continue;
        }
        let mut ap_order: Vec<usize> = (0..m_aps).collect();
        ap_order.sort_by(|&a, &b| {
            beta.get(b, orphan)
                .total_cmp(&beta.get(a, orphan))
                .then(a.cmp(&b))
        });
        let mut placed = false;
        for &m in &ap_order {
            // Weakest member whose eviction orphans nobody, else the
            // weakest unprotected one.
            let mut multi: Option<usize> = None;
            let mut single: Option<usize> = None;
            for &member in &sets[m] {
                if coverage[member] >= 2 {
                    if multi.map_or(true, |cur| stronger(m, cur, member)) {
                        multi = Some(member);
                    }
                } else if !protected[member] {
                    if single.map_or(true, |cur| stronger(m, cur, member)) {
                        single = Some(member);
                    }
                }
            }
            let evict = match (multi, single) {
                (Some(x), _) => x,
                (None, Some(x)) => x,
                (None, None) => continue,
            };
            sets[m].retain(|&x| x != evict);
            coverage[evict] -= 1;
            let pos = sets[m].binary_search(&orphan).unwrap_err();
            sets[m].insert(pos, orphan);
            coverage[orphan] += 1;
            protected[orphan] = true;
            if coverage[evict] == 0 {
                queue.push_back(evict);
            }
            placed = true;
            break;
        }
        if !placed {
            // Unreachable when m_aps * k_m >= k_users: an uncovered user
            // forces some other user to hold at least two slots.
            return Err(Error::CoverageInfeasible {
                m_aps,
                k_m,
                k_users,
            });
        }
    }

    Ok(ActiveSetPlan { sets, k_m, alpha })
}

/// Estimate powers with inactive pairs zeroed. Solving with these forces
/// the CPU weights of a user to zero at APs that do not forward it.
pub fn masked_stats(gamma: &DMatrix<f64>, plan: &ActiveSetPlan) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(gamma.nrows(), gamma.ncols());
    for m in 0..gamma.nrows() {
        for &k in plan.set(m) {
            out[(m, k)] = gamma[(m, k)];
        }
    }
    out
}
