//! Command implementations behind the `vlp` binary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vlp_core::geometry::Link;
use vlp_core::simulator::{crlb_sweep_distance, crlb_sweep_position, run_mc_distance, run_mc_position, SweepRow};
use vlp_core::{Exec, Mat3};

use crate::config::ExperimentConfig;
use crate::output;

pub const DEFAULT_DISTANCE_TRIALS: usize = 200;
pub const DEFAULT_POSITION_TRIALS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "vlp",
    version,
    about = "Bounds and Monte Carlo runs for RGB-LED visible light positioning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance bounds for every scenario over the sweep.
    CrlbDistance(RunArgs),
    /// Position bounds for every scenario over the sweep.
    CrlbPosition(RunArgs),
    /// Monte Carlo RMSE of the distance estimators next to their bounds.
    McDistance(RunArgs),
    /// Monte Carlo RMSE of the position estimators next to their bounds.
    McPosition(RunArgs),
    /// Check a config and print channel and energy diagnostics.
    Validate(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML experiment file; the reference scene is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output CSV, overriding `output.path`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `sweep.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `sweep.trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Run on a single thread.
    #[arg(long)]
    pub sequential: bool,
}

pub fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    CrlbDistance,
    CrlbPosition,
    McDistance,
    McPosition,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::CrlbDistance => "crlb-distance",
            Kind::CrlbPosition => "crlb-position",
            Kind::McDistance => "mc-distance",
            Kind::McPosition => "mc-position",
        }
    }
}

/// Runs a command; returns the text to print on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::CrlbDistance(a) => sweep(Kind::CrlbDistance, &a),
        Command::CrlbPosition(a) => sweep(Kind::CrlbPosition, &a),
        Command::McDistance(a) => sweep(Kind::McDistance, &a),
        Command::McPosition(a) => sweep(Kind::McPosition, &a),
        Command::Validate(a) => validate(&load(&a)?),
    }
}

fn sweep(kind: Kind, args: &RunArgs) -> Result<String> {
    let mut cfg = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.sweep.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.sweep.trials = Some(t);
    }
    cfg.validate()?;
    let exec = if args.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.output.path.clone());

    let (rows, trials): (Vec<SweepRow>, Option<usize>) = match kind {
        Kind::CrlbDistance => (
            crlb_sweep_distance(&cfg.sweep_spec(1), &cfg.distance_scene()?, exec)?,
            None,
        ),
        Kind::CrlbPosition => (
            crlb_sweep_position(&cfg.sweep_spec(1), &cfg.position_scene()?, exec)?,
            None,
        ),
        Kind::McDistance => {
            let spec = cfg.sweep_spec(DEFAULT_DISTANCE_TRIALS);
            let rows = run_mc_distance(&spec, &cfg.distance_scene()?, &cfg.distance_estimators()?, exec)?;
            (rows, Some(spec.trials))
        }
        Kind::McPosition => {
            let spec = cfg.sweep_spec(DEFAULT_POSITION_TRIALS);
            let rows = run_mc_position(&spec, &cfg.position_scene()?, &cfg.position_estimators()?, exec)?;
            (rows, Some(spec.trials))
        }
    };

    write_results(&out, &rows, trials.is_some())?;
    let meta = output::write_meta(&out, kind.name(), &cfg, trials)?;
    Ok(format!(
        "wrote {} rows to {} ({})",
        rows.len(),
        out.display(),
        meta.display()
    ))
}

fn write_results(out: &Path, rows: &[SweepRow], mc: bool) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let w = BufWriter::new(file);
    if mc {
        output::write_mc_csv(w, rows)
    } else {
        output::write_crlb_csv(w, rows)
    }
}

fn matrix(s: &mut String, name: &str, m: &Mat3) {
    let _ = writeln!(s, "{name}:");
    for row in m {
        let _ = writeln!(s, "  [{:>12.4e} {:>12.4e} {:>12.4e}]", row[0], row[1], row[2]);
    }
}

/// Diagnostics for a config: channel constants of the distance problem,
/// cross energies of the first LED and per-LED channel gains at every
/// receiver position.
pub fn validate(cfg: &ExperimentConfig) -> Result<String> {
    let mut s = String::new();
    let exec = Exec::default();

    let d = cfg.distance_scene()?;
    let _ = writeln!(
        s,
        "distance problem: x = {} m, LED height {} m",
        d.distance, d.led_height
    );
    matrix(&mut s, "gamma (rows PD, columns color)", &d.gammas()?);
    let (model, _) = d.model(exec)?;
    let ce = &model.energies;
    matrix(&mut s, "E", &ce.e);
    matrix(&mut s, "E'", &ce.e_prime);
    matrix(&mut s, "E''", &ce.e_dprime);

    let p = cfg.position_scene()?;
    let leds = p.transmitters()?;
    for (k, pos) in p.positions.iter().enumerate() {
        let _ = writeln!(s, "receiver position {k}: [{}, {}, {}]", pos.x, pos.y, pos.z);
        for (i, led) in leds.iter().enumerate() {
            let (h, los) = Link::new(led, pos, &p.receiver.orientation).gains(&p.receiver)?;
            let dist = (led.location - pos).norm();
            let _ = writeln!(
                s,
                "  LED {}: distance {dist:.4} m, line of sight {los}, h_rr {:.4e}, h_gg {:.4e}, h_bb {:.4e}",
                i + 1,
                h[0][0],
                h[1][1],
                h[2][2]
            );
        }
    }
    let _ = writeln!(s, "config is valid");
    Ok(s)
}
