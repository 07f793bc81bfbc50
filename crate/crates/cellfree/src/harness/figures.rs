//! The shipped experiment presets.
//!
//! Every preset derives one seed per drop from the master seed, so curves
//! inside a preset see the same topologies and channels and differ only in
//! the setting under study. Overrides are applied to each preset's baseline
//! config first; fields that define a preset's identity (antenna splits,
//! user counts, clip widths of the sized setups) are pinned afterwards and
//! cannot be overridden.

use rayon::prelude::*;

use super::{median, ExperimentOutput, ExperimentSpec, ResultRecord};
use crate::assignment::{build_active_sets, masked_stats};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimation::{estimation_stats, EstimationStats};
use crate::quantization::{backhaul_bits, matched_alpha, CaseId};
use crate::rates::{sinr_case2, PowerVector};
use crate::rng::{substream, Stream};
use crate::scenario::{drop_topology, large_scale, make_pilots, BetaMatrix, PilotBook, PilotMode};
use crate::solver::{maxmin_solve, power_allocation, SinrCoefficients};

/// Largest resolution in the fig1 sweep; the ceiling record sits past it.
pub const FIG1_ALPHA_MAX: u32 = 16;

fn apply_overrides(
    cfg: &mut SystemConfig,
    overrides: &[(String, String)],
    preset_keys: &[&str],
) -> Result<()> {
    for (key, value) in overrides {
        if preset_keys.contains(&key.as_str()) {
            continue;
        }
        cfg.set(key, value)?;
    }
    Ok(())
}

fn preset_override<'a>(overrides: &'a [(String, String)], key: &str) -> Option<&'a str> {
    overrides
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn parse_u32(key: &str, text: &str) -> Result<u32> {
    text.trim().parse().map_err(|_| Error::InvalidValue {
        key: key.into(),
        value: text.into(),
        reason: "expected a positive integer".into(),
    })
}

fn parse_usize_list(key: &str, text: &str) -> Result<Vec<usize>> {
    let items: Vec<usize> = text
        .split([';', ','])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::InvalidValue {
                key: key.into(),
                value: text.into(),
                reason: format!("`{s}` is not an integer"),
            })
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::InvalidValue {
            key: key.into(),
            value: text.into(),
            reason: "list is empty".into(),
        });
    }
    Ok(items)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn levels_of(alpha: u32) -> f64 {
    (2f64).powi(alpha as i32)
}

/// One drop's fading-independent state: gains, pilots, estimator quality.
fn drop_scene(
    cfg: &SystemConfig,
    drop_seed: u64,
) -> Result<(BetaMatrix, PilotBook, EstimationStats)> {
    let topo = drop_topology(cfg, drop_seed);
    let beta = large_scale(&topo, &cfg.path_loss, cfg.shadow_sigma_db, drop_seed)?;
    let pilots = make_pilots(cfg.k_users, cfg.tau, cfg.pilot_mode, drop_seed)?;
    let stats = estimation_stats(&beta, &pilots, cfg.pilot_snr(), cfg.tau)?;
    Ok((beta, pilots, stats))
}

fn finish_rate(cfg: &SystemConfig, sinr: f64) -> f64 {
    let rate = (1.0 + sinr).log2();
    if cfg.apply_overhead {
        rate * cfg.tau_f() as f64 / cfg.tau_c as f64
    } else {
        rate
    }
}

fn rates_from(cfg: &SystemConfig, sinr: &[f64]) -> Vec<f64> {
    sinr.iter().map(|&s| finish_rate(cfg, s)).collect()
}

/// Fans the drops across worker threads and reassembles records in trial
/// order, so output does not depend on the thread count.
fn par_drops<F>(trials: usize, seed: u64, per_drop: F) -> Result<Vec<ResultRecord>>
where
    F: Fn(usize, u64) -> Result<Vec<ResultRecord>> + Send + Sync,
{
    let nested = (0..trials)
        .into_par_iter()
        .map(|trial| per_drop(trial, substream(seed, Stream::Instance, trial as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Min rates of every record on the given curve at the given sweep value.
pub fn min_rates_for(records: &[ResultRecord], experiment: &str, sweep_value: &str) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.experiment == experiment && r.sweep_value == sweep_value)
        .map(|r| r.min_rate)
        .collect()
}

/// Average rates of every record on the given curve at the given sweep value.
pub fn avg_rates_for(records: &[ResultRecord], experiment: &str, sweep_value: &str) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.experiment == experiment && r.sweep_value == sweep_value)
        .map(|r| r.avg_rate)
        .collect()
}

/// First swept resolution whose drop-averaged rate reaches `fraction` of
/// the infinite-resolution ceiling: `(alpha, rate there, ceiling rate)`.
pub fn convergence_alpha(
    records: &[ResultRecord],
    experiment: &str,
    fraction: f64,
) -> Option<(u32, f64, f64)> {
    let ceilings = avg_rates_for(records, experiment, "inf");
    if ceilings.is_empty() {
        return None;
    }
    let ceiling = mean(&ceilings);
    for alpha in 1..=FIG1_ALPHA_MAX {
        let avgs = avg_rates_for(records, experiment, &alpha.to_string());
        if avgs.is_empty() {
            continue;
        }
        let avg = mean(&avgs);
        if avg >= fraction * ceiling {
            return Some((alpha, avg, ceiling));
        }
    }
    None
}

/// Average combine-and-forward rate versus quantizer resolution for three
/// ways of splitting 280 antennas, at full transmit power. Sweep values
/// are `1..=16` bits plus `inf` for the unquantized ceiling.
pub fn run_fig1(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    const SPLITS: [(usize, usize); 3] = [(2, 140), (4, 70), (10, 28)];
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (n_antennas, m_aps) in SPLITS {
        let mut cfg = SystemConfig::default();
        apply_overrides(&mut cfg, &spec.overrides, &[])?;
        cfg.n_antennas = n_antennas;
        cfg.m_aps = m_aps;
        cfg.pilot_mode = PilotMode::Orthogonal;
        cfg.tau = cfg.k_users;
        cfg.validate()?;
        let experiment = format!("fig1_n{n_antennas}");
        let (exp, cfg) = (experiment.as_str(), &cfg);
        let recs = par_drops(spec.trials, spec.seed, |trial, drop_seed| {
            let (beta, pilots, stats) = drop_scene(cfg, drop_seed)?;
            let q = PowerVector::full(cfg.k_users, cfg.pmax);
            let mut out = Vec::with_capacity(FIG1_ALPHA_MAX as usize + 1);
            for alpha in (1..=FIG1_ALPHA_MAX).map(Some).chain([None]) {
                let levels = alpha.map_or(f64::INFINITY, levels_of);
                let sinr = sinr_case2(
                    &q,
                    &beta,
                    stats.gamma(),
                    &pilots,
                    cfg.clip_z,
                    &vec![levels; cfg.m_aps],
                    cfg.n_antennas,
                    cfg.data_snr(),
                )?;
                let value = alpha.map_or_else(|| "inf".to_string(), |a| a.to_string());
                out.push(ResultRecord::from_rates(
                    exp.to_string(),
                    trial,
                    "alpha",
                    value,
                    rates_from(cfg, &sinr),
                ));
            }
            Ok(out)
        })?;
        records.extend(recs);
        match convergence_alpha(&records, &experiment, 0.99) {
            Some((alpha, avg, ceiling)) => summary.push(format!(
                "fig1 N={n_antennas} M={m_aps}: ceiling {ceiling:.3} bits/s/Hz, \
                 alpha={alpha} first within 1% ({avg:.3})"
            )),
            None => {
                let ceiling = mean(&avg_rates_for(&records, &experiment, "inf"));
                summary.push(format!(
                    "fig1 N={n_antennas} M={m_aps}: ceiling {ceiling:.3} bits/s/Hz, \
                     no alpha <= {FIG1_ALPHA_MAX} within 1%"
                ));
            }
        }
    }
    Ok(ExperimentOutput { records, summary })
}

/// Min-rate comparison of the alternating optimizer against the
/// equal-weight power-only baseline, under shared-pilot and orthogonal
/// operation. Each drop contributes one record per scheme and arm.
pub fn run_fig2(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut base = SystemConfig::default();
    apply_overrides(&mut base, &spec.overrides, &[])?;
    let arms = [
        ("random", PilotMode::Random, base.tau),
        ("orth", PilotMode::Orthogonal, base.k_users),
    ];
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (arm, mode, tau) in arms {
        let mut cfg = base.clone();
        cfg.pilot_mode = mode;
        cfg.tau = tau;
        cfg.validate()?;
        let q_levels = vec![levels_of(cfg.alpha_case2); cfg.m_aps];
        let experiment = format!("fig2_{arm}");
        let (exp, cfg, q_levels) = (experiment.as_str(), &cfg, &q_levels);
        let recs = par_drops(spec.trials, spec.seed, |trial, drop_seed| {
            let (beta, pilots, stats) = drop_scene(cfg, drop_seed)?;
            let solved = maxmin_solve(cfg, &beta, stats.gamma(), &pilots, q_levels)?;
            let coef = SinrCoefficients::case2(
                &beta,
                stats.gamma(),
                &pilots,
                cfg.clip_z,
                q_levels,
                cfg.n_antennas,
                cfg.data_snr(),
            )?;
            let (q_base, _) = power_allocation(&coef, cfg.pmax, cfg.epsilon * 0.1)?;
            let base_sinr = coef.sinr(&q_base);
            Ok(vec![
                ResultRecord::from_rates(
                    exp.to_string(),
                    trial,
                    "scheme",
                    "alg1".into(),
                    rates_from(cfg, &solved.sinr),
                ),
                ResultRecord::from_rates(
                    exp.to_string(),
                    trial,
                    "scheme",
                    "uniform".into(),
                    rates_from(cfg, &base_sinr),
                ),
            ])
        })?;
        records.extend(recs);
        let med_alg = median(&min_rates_for(&records, &experiment, "alg1"))?;
        let med_uni = median(&min_rates_for(&records, &experiment, "uniform"))?;
        summary.push(format!(
            "fig2 {arm} pilots (tau={tau}): median min-rate {med_alg:.3} optimized vs \
             {med_uni:.3} uniform-weight baseline bits/s/Hz (ratio {:.2})",
            med_alg / med_uni
        ));
    }
    Ok(ExperimentOutput { records, summary })
}

/// Min rate versus per-AP active-set size when each AP's bit budget is
/// fixed, over two coverage areas and two pilot setups. Recognized
/// preset overrides: `budget` (total bits, default 200), `k_m_list`
/// (semicolon- or comma-separated sizes, default `4;8;...;40`),
/// `d_list` (square sides in meters, default `1000;2000`), and
/// `pilot_arm` (`random`, `orth`, or the default `both`).
pub fn run_fig3(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut base = SystemConfig::default();
    base.tau = 30;
    apply_overrides(
        &mut base,
        &spec.overrides,
        &["budget", "k_m_list", "d_list", "pilot_arm"],
    )?;
    let budget = match preset_override(&spec.overrides, "budget") {
        Some(text) => parse_u32("budget", text)?,
        None => 200,
    };
    let k_m_list = match preset_override(&spec.overrides, "k_m_list") {
        Some(text) => parse_usize_list("k_m_list", text)?,
        None => (1..=10).map(|i| 4 * i).collect(),
    };
    let d_list: Vec<f64> = match preset_override(&spec.overrides, "d_list") {
        Some(text) => parse_usize_list("d_list", text)?
            .into_iter()
            .map(|d| d as f64)
            .collect(),
        None => vec![1000.0, 2000.0],
    };
    let pilot_arm = preset_override(&spec.overrides, "pilot_arm").unwrap_or("both");
    if !["random", "orth", "both"].contains(&pilot_arm) {
        return Err(Error::InvalidValue {
            key: "pilot_arm".into(),
            value: pilot_arm.into(),
            reason: "expected random, orth, or both".into(),
        });
    }
    for &k_m in &k_m_list {
        if k_m == 0 || k_m > base.k_users {
            return Err(Error::InvalidValue {
                key: "k_m_list".into(),
                value: k_m.to_string(),
                reason: format!("set size must lie in 1..={}", base.k_users),
            });
        }
        if budget / k_m as u32 == 0 {
            return Err(Error::InvalidValue {
                key: "k_m_list".into(),
                value: k_m.to_string(),
                reason: format!("budget {budget} leaves zero bits per sample"),
            });
        }
    }
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &side in &d_list {
        for (arm, mode, tau) in [
            ("random", PilotMode::Random, base.tau),
            ("orth", PilotMode::Orthogonal, base.k_users),
        ] {
            if pilot_arm != "both" && arm != pilot_arm {
                continue;
            }
            let mut cfg = base.clone();
            cfg.side_m = side;
            cfg.pilot_mode = mode;
            cfg.tau = tau;
            cfg.validate()?;
            let experiment = format!("fig3_d{}_{arm}", side as u64);
            let (exp, cfg, k_m_list) = (experiment.as_str(), &cfg, &k_m_list);
            let recs = par_drops(spec.trials, spec.seed, |trial, drop_seed| {
                let (beta, pilots, stats) = drop_scene(cfg, drop_seed)?;
                let mut out = Vec::with_capacity(k_m_list.len());
                for &k_m in k_m_list {
                    let alpha = budget / k_m as u32;
                    let plan = build_active_sets(&beta, k_m, alpha)?;
                    let masked = masked_stats(stats.gamma(), &plan);
                    let solved = maxmin_solve(
                        cfg,
                        &beta,
                        &masked,
                        &pilots,
                        &vec![levels_of(alpha); cfg.m_aps],
                    )?;
                    out.push(ResultRecord::from_rates(
                        exp.to_string(),
                        trial,
                        "k_m",
                        k_m.to_string(),
                        rates_from(cfg, &solved.sinr),
                    ));
                }
                Ok(out)
            })?;
            records.extend(recs);
            for &k_m in k_m_list {
                let avg_min = mean(&min_rates_for(&records, &experiment, &k_m.to_string()));
                summary.push(format!(
                    "fig3 D={}m {arm} pilots (tau={tau}) k_m={k_m} alpha={}: \
                     avg min-rate {avg_min:.3} bits/s/Hz",
                    side as u64,
                    budget / k_m as u32
                ));
            }
        }
    }
    Ok(ExperimentOutput { records, summary })
}

/// One of the two sized setups compared at equal backhaul load.
struct SizedSetup {
    label: &'static str,
    n_antennas: usize,
    k_users: usize,
    alpha1: u32,
    alpha2: u32,
    clip_y: f64,
    clip_g: f64,
    clip_z: f64,
}

/// Min rate of the two forwarding strategies versus AP count, with each
/// strategy's resolution chosen so both send the same number of bits per
/// coherence interval. Powers come from the power-only allocation.
pub fn run_fig4(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    const SETUPS: [SizedSetup; 2] = [
        SizedSetup {
            label: "a",
            n_antennas: 4,
            k_users: 20,
            alpha1: 9,
            alpha2: 2,
            clip_y: 80.0,
            clip_g: 3.0,
            clip_z: 3.0,
        },
        SizedSetup {
            label: "b",
            n_antennas: 20,
            k_users: 40,
            alpha1: 8,
            alpha2: 5,
            clip_y: 70.0,
            clip_g: 3.5,
            clip_z: 3.0,
        },
    ];
    const M_SWEEP: [usize; 5] = [20, 40, 60, 80, 100];
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for setup in &SETUPS {
        let mut cfg = SystemConfig::default();
        apply_overrides(&mut cfg, &spec.overrides, &[])?;
        cfg.n_antennas = setup.n_antennas;
        cfg.k_users = setup.k_users;
        cfg.tau = setup.k_users;
        cfg.tau_c = 200;
        cfg.pilot_mode = PilotMode::Orthogonal;
        cfg.clip_y = setup.clip_y;
        cfg.clip_g = setup.clip_g;
        cfg.clip_z = setup.clip_z;
        cfg.alpha_case1 = setup.alpha1;
        cfg.alpha_case2 = setup.alpha2;
        let tau_f = cfg.tau_f();
        let bits1 = backhaul_bits(
            CaseId::Case1,
            setup.n_antennas,
            setup.k_users,
            tau_f,
            setup.alpha1,
        );
        let bits2 = backhaul_bits(
            CaseId::Case2,
            setup.n_antennas,
            setup.k_users,
            tau_f,
            setup.alpha2,
        );
        let matched = matched_alpha(setup.n_antennas, setup.k_users, tau_f, setup.alpha1)?;
        summary.push(format!(
            "fig4 {} (N={} K={}): per-AP load {bits1} bits raw-forwarding vs {bits2} bits \
             combine-forwarding at alpha2={} (matched value {:.3}, integer: {})",
            setup.label,
            setup.n_antennas,
            setup.k_users,
            setup.alpha2,
            matched.exact,
            matched.is_integer
        ));
        for m_aps in M_SWEEP {
            cfg.m_aps = m_aps;
            cfg.validate()?;
            let c1 = crate::quantization::c_tot(cfg.clip_y, cfg.clip_g, levels_of(cfg.alpha_case1));
            let exp1 = format!("fig4_{}_case1", setup.label);
            let exp2 = format!("fig4_{}_case2", setup.label);
            let (cfg, exp1, exp2) = (&cfg, exp1.as_str(), exp2.as_str());
            let recs = par_drops(spec.trials, spec.seed, |trial, drop_seed| {
                let (beta, pilots, stats) = drop_scene(cfg, drop_seed)?;
                let coef1 = SinrCoefficients::case1(
                    &beta,
                    stats.gamma(),
                    &pilots,
                    &vec![c1; cfg.m_aps],
                    cfg.n_antennas,
                    cfg.data_snr(),
                )?;
                let (q1, _) = power_allocation(&coef1, cfg.pmax, cfg.epsilon * 0.1)?;
                let coef2 = SinrCoefficients::case2(
                    &beta,
                    stats.gamma(),
                    &pilots,
                    cfg.clip_z,
                    &vec![levels_of(cfg.alpha_case2); cfg.m_aps],
                    cfg.n_antennas,
                    cfg.data_snr(),
                )?;
                let (q2, _) = power_allocation(&coef2, cfg.pmax, cfg.epsilon * 0.1)?;
                Ok(vec![
                    ResultRecord::from_rates(
                        exp1.to_string(),
                        trial,
                        "m_aps",
                        m_aps.to_string(),
                        rates_from(cfg, &coef1.sinr(&q1)),
                    ),
                    ResultRecord::from_rates(
                        exp2.to_string(),
                        trial,
                        "m_aps",
                        m_aps.to_string(),
                        rates_from(cfg, &coef2.sinr(&q2)),
                    ),
                ])
            })?;
            records.extend(recs);
        }
        for m_aps in M_SWEEP {
            let exp1 = format!("fig4_{}_case1", setup.label);
            let exp2 = format!("fig4_{}_case2", setup.label);
            let r1 = mean(&avg_rates_for(&records, &exp1, &m_aps.to_string()));
            let r2 = mean(&avg_rates_for(&records, &exp2, &m_aps.to_string()));
            summary.push(format!(
                "fig4 {} M={m_aps}: avg rate {r1:.3} raw-forwarding vs {r2:.3} \
                 combine-forwarding bits/s/Hz",
                setup.label
            ));
        }
    }
    Ok(ExperimentOutput { records, summary })
}

/// The default configuration plus overrides, run through the alternating
/// optimizer once per drop.
pub fn run_custom(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut cfg = SystemConfig::default();
    apply_overrides(&mut cfg, &spec.overrides, &[])?;
    cfg.validate()?;
    let q_levels = vec![levels_of(cfg.alpha_case2); cfg.m_aps];
    let (cfg, q_levels) = (&cfg, &q_levels);
    let pairs = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let drop_seed = substream(spec.seed, Stream::Instance, trial as u64);
            let (beta, pilots, stats) = drop_scene(cfg, drop_seed)?;
            let solved = maxmin_solve(cfg, &beta, stats.gamma(), &pilots, q_levels)?;
            let record = ResultRecord::from_rates(
                "custom".into(),
                trial,
                "drop",
                trial.to_string(),
                rates_from(cfg, &solved.sinr),
            );
            Ok((record, solved.iterations))
        })
        .collect::<Result<Vec<_>>>()?;
    let (records, iterations): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let min_rates: Vec<f64> = records.iter().map(|r: &ResultRecord| r.min_rate).collect();
    let avg_rates: Vec<f64> = records.iter().map(|r: &ResultRecord| r.avg_rate).collect();
    let iters: Vec<f64> = iterations.iter().map(|&i: &usize| i as f64).collect();
    let summary = vec![format!(
        "custom: avg min-rate {:.3}, avg rate {:.3} bits/s/Hz, mean iterations {:.1} \
         over {} drops",
        mean(&min_rates),
        mean(&avg_rates),
        mean(&iters),
        spec.trials
    )];
    Ok(ExperimentOutput { records, summary })
}

#[cfg(test)]
mod tests {
    use super::super::{run_experiment, Preset};
    use super::*;

    fn spec_with(preset: Preset, trials: usize, overrides: &[(&str, &str)]) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(preset);
        spec.trials = trials;
        spec.seed = 7;
        spec.overrides = overrides
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        spec
    }

    #[test]
    fn fig1_rates_grow_with_resolution_and_hit_ceiling() {
        let spec = spec_with(Preset::Fig1, 2, &[("k_users", "4")]);
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 3 * 2 * (FIG1_ALPHA_MAX as usize + 1));
        for r in &out.records {
            assert_eq!(r.per_user_rates.len(), 4);
        }
        for n in [2, 10] {
            let exp = format!("fig1_n{n}");
            for trial in 0..2 {
                let series: Vec<f64> = out
                    .records
                    .iter()
                    .filter(|r| r.experiment == exp && r.trial == trial)
                    .map(|r| r.avg_rate)
                    .collect();
                assert_eq!(series.len(), FIG1_ALPHA_MAX as usize + 1);
                for pair in series.windows(2) {
                    assert!(
                        pair[1] >= pair[0] - 1e-12,
                        "rate fell from {} to {} as resolution grew",
                        pair[0],
                        pair[1]
                    );
                }
            }
            let (alpha, avg, ceiling) = convergence_alpha(&out.records, &exp, 0.99)
                .expect("some alpha should reach 99% of the ceiling");
            assert!(alpha >= 1 && avg <= ceiling * (1.0 + 1e-12));
            assert!(ceiling > 0.0);
        }
        assert_eq!(out.summary.len(), 3);
        let again = run_experiment(&spec).unwrap();
        assert_eq!(out.records, again.records, "same spec, different records");
    }

    #[test]
    fn fig2_optimizer_never_loses_to_baseline() {
        let spec = spec_with(
            Preset::Fig2,
            2,
            &[("m_aps", "10"), ("k_users", "4"), ("tau", "2")],
        );
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 2);
        for arm in ["fig2_random", "fig2_orth"] {
            for trial in 0..2 {
                let find = |scheme: &str| {
                    out.records
                        .iter()
                        .find(|r| {
                            r.experiment == arm && r.trial == trial && r.sweep_value == scheme
                        })
                        .unwrap()
                        .min_rate
                };
                let (alg, uni) = (find("alg1"), find("uniform"));
                assert!(
                    alg >= uni - 1e-9,
                    "{arm} trial {trial}: optimized {alg} below baseline {uni}"
                );
            }
        }
        assert_eq!(out.summary.len(), 2);
    }

    #[test]
    fn fig3_full_sets_match_direct_solve() {
        let spec = spec_with(
            Preset::Fig3,
            1,
            &[
                ("m_aps", "6"),
                ("k_users", "3"),
                ("tau", "2"),
                ("budget", "24"),
                ("k_m_list", "1;3"),
            ],
        );
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 2);
        let names: Vec<&str> = out.records.iter().map(|r| r.experiment.as_str()).collect();
        assert!(names.contains(&"fig3_d1000_random"));
        assert!(names.contains(&"fig3_d2000_orth"));

        let mut cfg = SystemConfig::default();
        cfg.m_aps = 6;
        cfg.k_users = 3;
        cfg.tau = 2;
        cfg.side_m = 1000.0;
        cfg.pilot_mode = PilotMode::Random;
        let drop_seed = substream(spec.seed, Stream::Instance, 0);
        let (beta, pilots, stats) = drop_scene(&cfg, drop_seed).unwrap();
        let solved = maxmin_solve(&cfg, &beta, stats.gamma(), &pilots, &vec![256.0; 6]).unwrap();
        let direct = finish_rate(&cfg, solved.t_star);
        let masked_run = out
            .records
            .iter()
            .find(|r| r.experiment == "fig3_d1000_random" && r.sweep_value == "3")
            .unwrap()
            .min_rate;
        assert_eq!(
            masked_run, direct,
            "serving every user should equal the unmasked solve"
        );
    }

    #[test]
    fn fig3_filters_restrict_the_curves() {
        let spec = spec_with(
            Preset::Fig3,
            1,
            &[
                ("m_aps", "6"),
                ("k_users", "3"),
                ("tau", "2"),
                ("budget", "24"),
                ("k_m_list", "3"),
                ("d_list", "500"),
                ("pilot_arm", "random"),
            ],
        );
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].experiment, "fig3_d500_random");
        let bad = spec_with(Preset::Fig3, 1, &[("pilot_arm", "neither")]);
        assert!(run_experiment(&bad).is_err());
    }

    #[test]
    fn fig3_rejects_oversized_sets() {
        let spec = spec_with(Preset::Fig3, 1, &[("k_users", "3"), ("k_m_list", "5")]);
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn fig4_counts_records_and_bits() {
        let spec = spec_with(Preset::Fig4, 1, &[]);
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 2 * 5 * 2);
        let text = out.summary.join("\n");
        assert!(text.contains("14400"), "summary lacks the small-setup load");
        assert!(text.contains("64000"), "summary lacks the large-setup load");
        for r in &out.records {
            let expect_users = if r.experiment.contains("_a_") { 20 } else { 40 };
            assert_eq!(r.per_user_rates.len(), expect_users);
            assert!(r.min_rate > 0.0);
        }
    }

    #[test]
    fn custom_reports_one_record_per_drop() {
        let spec = spec_with(
            Preset::Custom,
            2,
            &[("m_aps", "5"), ("k_users", "3"), ("tau", "2")],
        );
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.summary[0].starts_with("custom:"));
        let again = run_experiment(&spec).unwrap();
        assert_eq!(out.records, again.records);
    }

    #[test]
    fn unknown_override_is_rejected_by_name() {
        let spec = spec_with(Preset::Custom, 1, &[("bogus_knob", "1")]);
        match run_experiment(&spec) {
            Err(Error::UnknownKey(key)) => assert_eq!(key, "bogus_knob"),
            other => panic!("expected an unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn zero_trials_is_rejected() {
        let spec = spec_with(Preset::Custom, 0, &[]);
        assert!(run_experiment(&spec).is_err());
    }
}
