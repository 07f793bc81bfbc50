//! Deployment geometry, large-scale fading, pilot books, and channel draws.
//!
//! APs and users are dropped uniformly in a square. Large-scale gains follow
//! a three-slope path-loss model with log-normal shadowing beyond the outer
//! breakpoint. Small-scale fading is i.i.d. Rayleigh per antenna.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, rng_for, Stream};

/// Three-slope path-loss parameters. Distances are in meters; the reference
/// loss `l_db` applies at 1 km on the outer slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    pub l_db: f64,
    pub d0_m: f64,
    pub d1_m: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        // 1.9 GHz carrier, 15 m AP height, 1.65 m user height.
        PathLossParams {
            l_db: 140.7,
            d0_m: 10.0,
            d1_m: 50.0,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0_m > 0.0 && self.d1_m > self.d0_m && self.l_db.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "path loss needs 0 < d0 < d1 and finite l_db, got d0 = {}, d1 = {}, l_db = {}",
                self.d0_m, self.d1_m, self.l_db
            )));
        }
        Ok(())
    }
}

/// Mean path loss in dB at distance `d_m` meters. Inside `d1` the slope
/// flattens in two steps; the branches agree at both breakpoints.
pub fn path_loss_db(d_m: f64, params: &PathLossParams) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::NonPositiveDistance(d_m));
    }
    let d1_km = params.d1_m / 1000.0;
    let d_km = d_m / 1000.0;
    let pl = if d_m <= params.d0_m {
        let d0_km = params.d0_m / 1000.0;
        -params.l_db - 15.0 * d1_km.log10() - 20.0 * d0_km.log10()
    } else if d_m <= params.d1_m {
        -params.l_db - 15.0 * d1_km.log10() - 20.0 * d_km.log10()
    } else {
        -params.l_db - 35.0 * d_km.log10()
    };
    Ok(pl)
}

/// AP and user positions inside the deployment square.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
}

impl Topology {
    pub fn distance(&self, m: usize, k: usize) -> f64 {
        let a = self.ap_positions[m];
        let u = self.user_positions[k];
        ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2)).sqrt()
    }
}

/// Drops `m_aps` APs and `k_users` users uniformly in the configured square.
pub fn drop_topology(cfg: &SystemConfig, seed: u64) -> Topology {
    let mut ap_rng = rng_for(seed, Stream::ApPositions, 0);
    let mut user_rng = rng_for(seed, Stream::UserPositions, 0);
    let d = cfg.side_m;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| [rng.gen::<f64>() * d, rng.gen::<f64>() * d];
    Topology {
        ap_positions: (0..cfg.m_aps).map(|_| draw(&mut ap_rng)).collect(),
        user_positions: (0..cfg.k_users).map(|_| draw(&mut user_rng)).collect(),
    }
}

/// Large-scale channel gains between every AP and user, in linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMatrix {
    b: DMatrix<f64>,
}

impl BetaMatrix {
    /// Wraps a gain matrix; entries must be finite and nonnegative.
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "large-scale gains must be finite and nonnegative".into(),
            ));
        }
        Ok(BetaMatrix { b })
    }

    pub fn m_aps(&self) -> usize {
        self.b.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.b.ncols()
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.b[(m, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Converts a topology into linear gains. Shadowing is i.i.d. per link and
/// applied only beyond the outer breakpoint, where the model is log-normal.
pub fn large_scale(
    topo: &Topology,
    params: &PathLossParams,
    sigma_sh_db: f64,
    seed: u64,
) -> Result<BetaMatrix> {
    let m_aps = topo.ap_positions.len();
    let k_users = topo.user_positions.len();
    let mut rng = rng_for(seed, Stream::Shadowing, 0);
    let mut b = DMatrix::zeros(m_aps, k_users);
    for m in 0..m_aps {
        for k in 0..k_users {
            let d = topo.distance(m, k);
            let mut db = path_loss_db(d, params)?;
            let z: f64 = rng.sample(StandardNormal);
            if d > params.d1_m {
                db += sigma_sh_db * z;
            }
            b[(m, k)] = 10f64.powf(db / 10.0);
        }
    }
    BetaMatrix::new(b)
}

/// Pilot assignment policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// Each user gets its own column of the unitary basis; needs `tau >= K`.
    Orthogonal,
    /// Each user draws one of the `tau` basis columns uniformly at random.
    Random,
}

/// Pilot sequences of all users plus their pairwise correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    phi: DMatrix<Complex64>,
    gram: DMatrix<f64>,
    gram2: DMatrix<f64>,
    assignment: Vec<usize>,
}

impl PilotBook {
    fn from_assignment(tau: usize, assignment: Vec<usize>) -> Self {
        let k_users = assignment.len();
        let mut phi = DMatrix::zeros(tau, k_users);
        for (k, &col) in assignment.iter().enumerate() {
            for t in 0..tau {
                let angle = -2.0 * std::f64::consts::PI * (t as f64) * (col as f64) / (tau as f64);
                phi[(t, k)] = Complex64::from_polar(1.0 / (tau as f64).sqrt(), angle);
            }
        }
        // Columns are reused basis vectors, so correlations are exactly 0 or 1.
        let mut gram = DMatrix::zeros(k_users, k_users);
        for k in 0..k_users {
            for j in 0..k_users {
                gram[(k, j)] = if assignment[k] == assignment[j] { 1.0 } else { 0.0 };
            }
        }
        let gram2 = gram.clone();
        PilotBook {
            phi,
            gram,
            gram2,
            assignment,
        }
    }

    pub fn tau(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.phi.ncols()
    }

    /// Pilot matrix, one unit-norm column per user.
    pub fn phi(&self) -> &DMatrix<Complex64> {
        &self.phi
    }

    /// Inner products `phi_k^H phi_j`; real because columns come from one
    /// unitary basis.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Squared magnitudes of the inner products.
    pub fn gram2(&self) -> &DMatrix<f64> {
        &self.gram2
    }

    /// Basis column used by each user.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Users sharing user `k`'s pilot, `k` excluded.
    pub fn copilots(&self, k: usize) -> Vec<usize> {
        (0..self.k_users())
            .filter(|&j| j != k && self.gram2[(k, j)] > 0.5)
            .collect()
    }
}

/// Builds the pilot book for `k_users` users from a `tau`-point DFT basis.
pub fn make_pilots(k_users: usize, tau: usize, mode: PilotMode, seed: u64) -> Result<PilotBook> {
    if tau == 0 || k_users == 0 {
        return Err(Error::InvalidConfig(
            "make_pilots needs tau >= 1 and k_users >= 1".into(),
        ));
    }
    let assignment = match mode {
        PilotMode::Orthogonal => {
            if tau < k_users {
                return Err(Error::PilotLength { tau, k_users });
            }
            (0..k_users).collect()
        }
        PilotMode::Random => {
            let mut rng = rng_for(seed, Stream::PilotAssignment, 0);
            (0..k_users).map(|_| rng.gen_range(0..tau)).collect()
        }
    };
    Ok(PilotBook::from_assignment(tau, assignment))
}

/// One small-scale fading draw: an `N x K` matrix per AP whose column `k`
/// is the channel from user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    per_ap: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn m_aps(&self) -> usize {
        self.per_ap.len()
    }

    pub fn at_ap(&self, m: usize) -> &DMatrix<Complex64> {
        &self.per_ap[m]
    }
}

/// Draws `g_mk = sqrt(beta_mk) h_mk` with `h_mk` standard complex Gaussian.
pub fn sample_channel(beta: &BetaMatrix, n_antennas: usize, seed: u64) -> ChannelRealization {
    let mut rng = rng_for(seed, Stream::Channel, 0);
    let per_ap = (0..beta.m_aps())
        .map(|m| {
            DMatrix::from_fn(n_antennas, beta.k_users(), |_, k| {
                complex_gaussian(&mut rng) * beta.get(m, k).sqrt()
            })
        })
        .collect();
    ChannelRealization { per_ap }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PathLossParams {
        PathLossParams::default()
    }

    #[test]
    fn path_loss_reference_distance() {
        // On the outer slope the 1 km loss is exactly -l_db.
        let pl = path_loss_db(1000.0, &params()).unwrap();
        assert_eq!(pl, -140.7, "1 km loss should equal -l_db, got {pl}");
    }

    #[test]
    fn path_loss_is_continuous_at_breakpoints() {
        let p = params();
        for d in [p.d0_m, p.d1_m] {
            let below = path_loss_db(d, &p).unwrap();
            let above = path_loss_db(d + 1e-9, &p).unwrap();
            assert!(
                (below - above).abs() < 1e-6,
                "discontinuity at {d} m: {below} vs {above}"
            );
        }
    }

    #[test]
    fn path_loss_is_nonincreasing_in_distance() {
        let p = params();
        let mut prev = f64::INFINITY;
        for i in 1..=5000 {
            let d = i as f64 * 0.4;
            let pl = path_loss_db(d, &p).unwrap();
            assert!(pl <= prev + 1e-12, "path loss rose at {d} m");
            prev = pl;
        }
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(path_loss_db(0.0, &params()).is_err());
        assert!(path_loss_db(-3.0, &params()).is_err());
    }

    #[test]
    fn topology_is_in_bounds_and_deterministic() {
        let cfg = SystemConfig {
            m_aps: 30,
            k_users: 10,
            ..SystemConfig::default()
        };
        let a = drop_topology(&cfg, 7);
        let b = drop_topology(&cfg, 7);
        assert_eq!(a, b);
        assert_ne!(a, drop_topology(&cfg, 8));
        assert_eq!(a.ap_positions.len(), 30);
        assert_eq!(a.user_positions.len(), 10);
        for p in a.ap_positions.iter().chain(a.user_positions.iter()) {
            assert!(p[0] >= 0.0 && p[0] <= cfg.side_m);
            assert!(p[1] >= 0.0 && p[1] <= cfg.side_m);
        }
    }

    #[test]
    fn large_scale_without_shadowing_matches_path_loss() {
        let topo = Topology {
            ap_positions: vec![[0.0, 0.0]],
            user_positions: vec![[30.0, 40.0]],
        };
        let beta = large_scale(&topo, &params(), 0.0, 11).unwrap();
        let expected = 10f64.powf(path_loss_db(50.0, &params()).unwrap() / 10.0);
        let got = beta.get(0, 0);
        assert!(
            (got - expected).abs() / expected < 1e-12,
            "expected {expected:e}, got {got:e}"
        );
    }

    #[test]
    fn shadowing_applies_only_beyond_outer_breakpoint() {
        let topo = Topology {
            ap_positions: vec![[0.0, 0.0]],
            user_positions: vec![[40.0, 0.0], [400.0, 0.0]],
        };
        let a = large_scale(&topo, &params(), 8.0, 1).unwrap();
        let b = large_scale(&topo, &params(), 8.0, 2).unwrap();
        assert_eq!(a.get(0, 0), b.get(0, 0), "short link must not be shadowed");
        assert_ne!(a.get(0, 1), b.get(0, 1), "long link must be shadowed");
        assert!(a.get(0, 1) > 0.0);
    }

    #[test]
    fn orthogonal_pilots_have_identity_gram() {
        let book = make_pilots(8, 8, PilotMode::Orthogonal, 0).unwrap();
        for k in 0..8 {
            for j in 0..8 {
                let want = if k == j { 1.0 } else { 0.0 };
                assert_eq!(book.gram2()[(k, j)], want);
            }
        }
        assert!(make_pilots(9, 8, PilotMode::Orthogonal, 0).is_err());
    }

    #[test]
    fn random_pilots_reuse_basis_columns() {
        let book = make_pilots(40, 20, PilotMode::Random, 5).unwrap();
        let mut shared = 0;
        for k in 0..40 {
            for j in 0..40 {
                let g = book.gram2()[(k, j)];
                assert!(g == 0.0 || g == 1.0, "gram2 entry {g} is not 0 or 1");
                if k != j && g == 1.0 {
                    shared += 1;
                }
            }
        }
        assert!(shared > 0, "40 users on 20 pilots must collide");
        assert_eq!(
            make_pilots(40, 20, PilotMode::Random, 5).unwrap(),
            book,
            "pilot draw must be deterministic in the seed"
        );
    }

    #[test]
    fn pilot_gram_matches_numeric_inner_products() {
        let book = make_pilots(6, 4, PilotMode::Random, 3).unwrap();
        for k in 0..6 {
            let col_k = book.phi().column(k);
            let norm = col_k.dotc(&col_k).re;
            assert!((norm - 1.0).abs() < 1e-12, "pilot {k} norm {norm}");
            for j in 0..6 {
                let ip = book.phi().column(k).dotc(&book.phi().column(j));
                assert!(
                    (ip.norm_sqr() - book.gram2()[(k, j)]).abs() < 1e-12,
                    "gram2 mismatch at ({k},{j})"
                );
            }
        }
    }

    #[test]
    fn channel_power_matches_large_scale_gain() {
        let b = DMatrix::from_row_slice(2, 2, &[2e-13, 5e-12, 7e-14, 1e-11]);
        let beta = BetaMatrix::new(b).unwrap();
        let n = 2;
        let draws = 100_000;
        let mut acc: DMatrix<f64> = DMatrix::zeros(2, 2);
        for t in 0..draws {
            let ch = sample_channel(&beta, n, t as u64);
            for m in 0..2 {
                for k in 0..2 {
                    acc[(m, k)] += ch.at_ap(m).column(k).norm_squared();
                }
            }
        }
        for m in 0..2 {
            for k in 0..2 {
                let ratio = acc[(m, k)] / draws as f64 / (n as f64 * beta.get(m, k));
                assert!(
                    (0.97..=1.03).contains(&ratio),
                    "power ratio at ({m},{k}) is {ratio:.4}"
                );
            }
        }
    }

    #[test]
    fn zero_gain_yields_zero_channel() {
        let beta = BetaMatrix::new(DMatrix::from_element(1, 1, 0.0)).unwrap();
        let ch = sample_channel(&beta, 3, 9);
        assert!(ch.at_ap(0).iter().all(|z| z.norm() == 0.0));
    }
}
