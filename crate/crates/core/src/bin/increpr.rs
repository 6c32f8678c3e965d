use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use increpr::bench::{run_cert_audit, run_fourier, run_noise_sweep, run_phase_transition, run_solve, planted_instance, ExperimentConfig};
use increpr::measurement::{save_dense_ensemble, save_factor};

#[derive(Parser)]
#[command(name = "increpr", version, about = "Phase retrieval by incremental-rank factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (CSV, JSON, ensemble or factor file by command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Comma-separated m/n ratios.
    #[arg(long, global = true)]
    m_grid: Option<String>,
    #[arg(long, global = true)]
    m_over_n: Option<f64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    field: Option<String>,
    #[arg(long, global = true)]
    lambda0: Option<f64>,
    /// Three comma-separated certificate tolerances.
    #[arg(long, global = true)]
    eps_stage: Option<String>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// svd | maxcol
    #[arg(long, global = true)]
    rank1: Option<String>,
    /// Additional `key=value` settings, repeatable.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted Gaussian instance (ensemble and true signal).
    Gen {
        /// Number of measurements (defaults to round(m_over_n * n)).
        #[arg(long)]
        m: Option<usize>,
        /// Where to write the planted signal (default: <out>.truth).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Restart solve of a saved ensemble; writes the recovered signal.
    Solve {
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// JSON summary path (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Recovery rate against m/n (CSV).
    PhaseTransition {
        /// Stage-I-only variant for the full result columns.
        #[arg(long)]
        stage_one_only: bool,
    },
    /// Mean error against SNR (CSV).
    NoiseSweep {
        /// Comma-separated SNR levels in dB.
        #[arg(long)]
        snr_db: Option<String>,
    },
    /// Oversampled Fourier reconstruction (JSON report plus PGM image).
    Fourier {
        /// P2 PGM image; a synthetic scene is used when absent.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
        /// Where to write the aligned reconstruction (default: <out>.pgm).
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Certificate and optimality audit of a saved factor (JSON).
    CertAudit {
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        factor: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// ls | poisson
        #[arg(long)]
        fidelity: Option<String>,
    },
}

fn build_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let mut set = |k: &str, v: String| cfg.set(k, &v).with_context(|| format!("--{}", k.replace('_', "-")));
    if let Some(v) = common.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = &common.out {
        set("out", v.display().to_string())?;
    }
    if let Some(v) = common.threads {
        set("threads", v.to_string())?;
    }
    if let Some(v) = common.n {
        set("n", v.to_string())?;
    }
    if let Some(v) = &common.m_grid {
        set("m_grid", v.clone())?;
    }
    if let Some(v) = common.m_over_n {
        set("m_over_n", v.to_string())?;
    }
    if let Some(v) = common.trials {
        set("trials", v.to_string())?;
    }
    if let Some(v) = &common.field {
        set("field", v.clone())?;
    }
    if let Some(v) = common.lambda0 {
        set("lambda0", v.to_string())?;
    }
    if let Some(v) = &common.eps_stage {
        set("eps_stage", v.clone())?;
    }
    if let Some(v) = common.repeats {
        set("repeats", v.to_string())?;
    }
    if let Some(v) = &common.rank1 {
        set("rank1", v.clone())?;
    }
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects key=value, got `{kv}`") };
        set(k.trim(), v.trim().to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = build_config(&cli.common)?;
    match cli.command {
        Command::Gen { m, truth } => {
            let out = cfg.out.clone().context("gen needs --out")?;
            let m = m.unwrap_or(((cfg.m_over_n * cfg.n as f64).round() as usize).max(1));
            let (ens, x, _) = planted_instance(cfg.n, m, cfg.field, cfg.seed)?;
            save_dense_ensemble(&ens, &out)?;
            let x = increpr::linalg::CMat::from_column_slice(x.len(), 1, &x);
            save_factor(&x, cfg.field, &truth.unwrap_or_else(|| with_suffix(&out, ".truth")))?;
        }
        Command::Solve { ensemble, init, truth, summary } => {
            cfg.ensemble = ensemble.or(cfg.ensemble);
            cfg.factor = init.or(cfg.factor);
            cfg.truth = truth.or(cfg.truth);
            let (report, signal) = run_solve(&cfg)?;
            if let Some(out) = &cfg.out {
                let x = increpr::linalg::CMat::from_column_slice(signal.len(), 1, &signal);
                save_factor(&x, report.field, out)?;
            }
            write_json(summary.as_deref(), &report)?;
        }
        Command::PhaseTransition { stage_one_only } => {
            cfg.stage_one_only |= stage_one_only;
            let mut w = sink(cfg.out.as_deref())?;
            run_phase_transition(&cfg, &mut w)?;
        }
        Command::NoiseSweep { snr_db } => {
            if let Some(v) = snr_db {
                cfg.set("snr_db", &v)?;
            }
            let mut w = sink(cfg.out.as_deref())?;
            run_noise_sweep(&cfg, &mut w)?;
        }
        Command::Fourier { image, size, starts, pgm } => {
            cfg.image = image.or(cfg.image);
            cfg.image_size = size.unwrap_or(cfg.image_size);
            cfg.starts = starts.unwrap_or(cfg.starts);
            cfg.validate()?;
            let (report, aligned) = run_fourier(&cfg)?;
            let pgm = pgm.or_else(|| cfg.out.as_ref().map(|o| with_suffix(o, ".pgm")));
            if let Some(p) = pgm {
                aligned.write_pgm(&p, 255)?;
            }
            write_json(cfg.out.as_deref(), &report)?;
        }
        Command::CertAudit { ensemble, factor, lambda, epsilon, fidelity } => {
            cfg.ensemble = ensemble.or(cfg.ensemble);
            cfg.factor = factor.or(cfg.factor);
            cfg.lambda = lambda.unwrap_or(cfg.lambda);
            cfg.epsilon = epsilon.or(cfg.epsilon);
            if let Some(f) = fidelity {
                cfg.set("fidelity", &f)?;
            }
            let report = run_cert_audit(&cfg)?;
            write_json(cfg.out.as_deref(), &report)?;
        }
    }
    Ok(())
}
