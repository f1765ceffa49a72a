//! CSV result files and their JSON metadata sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use vlp_core::simulator::{SweepRow, RNG_ALGORITHM};

use crate::config::ExperimentConfig;

pub const CRLB_HEADER: [&str; 5] = ["variable", "value", "scenario", "crlb_rmse_m", "flags"];
pub const MC_HEADER: [&str; 11] = [
    "variable",
    "value",
    "scenario",
    "estimator",
    "crlb_rmse_m",
    "mc_rmse_m",
    "mc_stderr_m",
    "trials",
    "boundary_hits",
    "error_trials",
    "seed",
];

fn float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_crlb_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CRLB_HEADER)?;
    for r in rows {
        w.write_record([
            r.variable.label().to_string(),
            float(r.value),
            r.scenario.to_string(),
            float(r.crlb_rmse_m),
            if r.crlb_singular {
                "singular".into()
            } else {
                String::new()
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mc_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MC_HEADER)?;
    for r in rows {
        let mc = r.mc.as_ref().context("Monte Carlo row without statistics")?;
        w.write_record([
            r.variable.label().to_string(),
            float(r.value),
            r.scenario.to_string(),
            mc.estimator.clone(),
            float(r.crlb_rmse_m),
            float(mc.rmse_m),
            float(mc.stderr_m),
            mc.trials.to_string(),
            mc.boundary_hits.to_string(),
            mc.error_trials.to_string(),
            mc.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `results.csv` -> `results.csv.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    csv.with_file_name(name)
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    rng_algorithm: &'static str,
    seed: u64,
    trials: Option<usize>,
    config: &'a ExperimentConfig,
}

pub fn write_meta(csv: &Path, command: &str, cfg: &ExperimentConfig, trials: Option<usize>) -> Result<PathBuf> {
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        rng_algorithm: RNG_ALGORITHM,
        seed: cfg.sweep.seed,
        trials,
        config: cfg,
    };
    let path = meta_path(csv);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
