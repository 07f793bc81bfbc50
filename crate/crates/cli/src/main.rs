//! Command-line front end: picks a preset, runs it, writes CSV.
//!
//! Records go to `--out` (or stdout when omitted); summary lines always
//! go to stderr, so piped CSV stays clean.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use cellfree::harness::{run_experiment, write_csv, ExperimentSpec, Preset};

#[derive(Parser)]
#[command(
    name = "simulate",
    version,
    about = "Uplink simulator for cell-free massive MIMO with rate-limited backhaul"
)]
struct Args {
    /// Experiment preset: fig1, fig2, fig3, fig4, or custom.
    #[arg(long)]
    preset: String,

    /// Independent topology drops per sweep point.
    #[arg(long, default_value_t = 100)]
    trials: usize,

    /// Master seed; each drop derives its own streams from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Config file of `key = value` lines, applied before any --set.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one parameter, e.g. --set k_users=20. Repeatable; the
    /// last assignment of a key wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_assignment(text: &str) -> Result<(String, String)> {
    let (key, value) = text
        .split_once('=')
        .with_context(|| format!("`{text}` is not of the form key=value"))?;
    Ok((key.trim().to_string(), value.trim().to_string()))
}

/// `key = value` lines; blank lines and lines starting with `#` skipped.
fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(parse_assignment)
        .collect()
}

fn main() -> Result<()> {
    let args = Args::parse();
    let preset: Preset = args.preset.parse()?;

    let mut overrides = Vec::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        overrides.extend(parse_config_text(&text)?);
    }
    for assignment in &args.set {
        overrides.push(parse_assignment(assignment)?);
    }

    let mut spec = ExperimentSpec::new(preset);
    spec.trials = args.trials;
    spec.seed = args.seed;
    spec.overrides = overrides;

    let output = run_experiment(&spec)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            write_csv(&output.records, &mut writer)?;
            writer.flush()?;
            eprintln!("wrote {} records to {}", output.records.len(), path.display());
        }
        None => {
            let stdout = io::stdout();
            write_csv(&output.records, &mut stdout.lock())?;
        }
    }
    for line in &output.summary {
        eprintln!("{line}");
    }
    Ok(())
}
