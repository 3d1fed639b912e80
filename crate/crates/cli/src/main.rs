use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use cutsv::study::{parse_config, parse_h_list, parse_param, run_study, StudyConfig};

/// Convergence study for the cut Scott-Vogelius Stokes discretization on a disk.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh sizes, e.g. "1/5,1/10,1/20".
    #[arg(long)]
    h_list: Option<String>,
    /// Grad-div parameter, literal or "c/h".
    #[arg(long)]
    gamma: Option<String>,
    /// Nitsche penalty, literal or "c/h".
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: &Args) -> Result<StudyConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => StudyConfig::default(),
    };
    if let Some(h) = &args.h_list {
        cfg.h_list = parse_h_list(h).map_err(anyhow::Error::msg).context("--h-list")?;
    }
    if let Some(g) = &args.gamma {
        cfg.gamma = parse_param(g).map_err(anyhow::Error::msg).context("--gamma")?;
    }
    if let Some(e) = &args.eta {
        cfg.eta = parse_param(e).map_err(anyhow::Error::msg).context("--eta")?;
    }
    if let Some(k) = args.degree {
        cfg.degree = k;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match run_study(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    print!("{}", result.to_csv());
    for row in &result.rows {
        if let Err(e) = &row.report {
            eprintln!("h = {}: {e}", row.h);
        }
    }
    eprintln!("wrote {}", cfg.out.display());
    if result.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
