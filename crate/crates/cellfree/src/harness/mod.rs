//! Experiment drivers and tabular output.
//!
//! An [`ExperimentSpec`] names a preset, the number of channel drops, a
//! master seed, and optional `key=value` overrides for the underlying
//! [`crate::SystemConfig`]. Running it yields one [`ResultRecord`] per
//! (drop, sweep point) plus human-readable summary lines. Records go to
//! CSV with [`write_csv`]; drops run in parallel but records are emitted
//! in deterministic order, so output is identical across thread counts.

pub mod figures;

use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The shipped experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Average rate of estimate-plus-signal forwarding versus quantizer
    /// resolution, for three antenna splits with 280 antennas total.
    Fig1,
    /// Min-rate distribution of the alternating optimizer against uniform
    /// power, under random and orthogonal pilots.
    Fig2,
    /// Min rate versus per-AP active-set size under a fixed bit budget,
    /// for two coverage areas and two pilot setups.
    Fig3,
    /// Min rate of the two forwarding strategies versus AP count at
    /// matched backhaul load, for two system sizes.
    Fig4,
    /// A single configuration (defaults plus overrides) run through the
    /// alternating optimizer once per drop.
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "custom" => Ok(Preset::Custom),
            _ => Err(Error::InvalidValue {
                key: "preset".into(),
                value: s.into(),
                reason: "expected fig1, fig2, fig3, fig4, or custom".into(),
            }),
        }
    }
}

/// What to run: a preset, how many independent drops, the master seed,
/// and config overrides applied on top of the preset's baseline.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub overrides: Vec<(String, String)>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(preset: Preset) -> Self {
        ExperimentSpec {
            preset,
            overrides: Vec::new(),
            trials: 100,
            seed: 1,
        }
    }
}

/// One simulated point: the per-user rates of a single drop at a single
/// sweep setting, tagged with the curve it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub trial: usize,
    pub sweep_name: String,
    pub sweep_value: String,
    pub per_user_rates: Vec<f64>,
    pub min_rate: f64,
    pub avg_rate: f64,
}

impl ResultRecord {
    pub fn from_rates(
        experiment: String,
        trial: usize,
        sweep_name: &str,
        sweep_value: String,
        per_user_rates: Vec<f64>,
    ) -> Self {
        let min_rate = per_user_rates.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let avg_rate = per_user_rates.iter().sum::<f64>() / per_user_rates.len() as f64;
        ResultRecord {
            experiment,
            trial,
            sweep_name: sweep_name.to_string(),
            sweep_value,
            per_user_rates,
            min_rate,
            avg_rate,
        }
    }
}

/// All records of a run plus preset-specific summary lines.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub summary: Vec<String>,
}

/// Runs the preset named by `spec` and returns its records and summary.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    if spec.trials == 0 {
        return Err(Error::InvalidValue {
            key: "trials".into(),
            value: "0".into(),
            reason: "at least one drop is required".into(),
        });
    }
    match spec.preset {
        Preset::Fig1 => figures::run_fig1(spec),
        Preset::Fig2 => figures::run_fig2(spec),
        Preset::Fig3 => figures::run_fig3(spec),
        Preset::Fig4 => figures::run_fig4(spec),
        Preset::Custom => figures::run_custom(spec),
    }
}

/// Empirical distribution function: sorted `(value, fraction <= value)`
/// pairs, one per sample.
pub fn cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect())
}

/// Middle value of the samples; the mean of the two middle values when
/// the count is even.
pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok(0.5 * (sorted[n / 2 - 1] + sorted[n / 2]))
    }
}

/// Writes records as CSV. Per-user rates are semicolon-joined inside one
/// column so the row count stays one per record.
pub fn write_csv<W: Write>(records: &[ResultRecord], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "experiment,trial,sweep_name,sweep_value,per_user_rates,min_rate,avg_rate"
    )?;
    for r in records {
        let rates = r
            .per_user_rates
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.experiment, r.trial, r.sweep_name, r.sweep_value, rates, r.min_rate, r.avg_rate
        )?;
    }
    Ok(())
}
