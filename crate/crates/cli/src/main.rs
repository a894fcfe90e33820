//! `nlg`: experiment runner for non-local energy studies.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{DenoiseArgs, Run};
use config::Config;
use output::Output;

#[derive(Parser)]
#[command(name = "nlg", version, about = "Non-local energy studies: constants, energies, limits, cells, minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to NLG_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Limit constants and admissibility of the configured kernels.
    Kernels(Common),
    /// Energy breakdown of the configured field for each ε.
    Energy(Common),
    /// ε-sequence of energies against the continuum limit.
    LimitStudy(Common),
    /// Tail gaps between cutoffs.
    TruncationStudy(Common),
    /// Bulk density from affine cell problems.
    CellBulk(Common),
    /// Surface density from step cell problems.
    CellSurf(Common),
    /// Dirichlet minimization of the configured datum.
    Minimize(Common),
    /// Fidelity-regularized image restoration (synthetic two-region image without --input).
    Denoise {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output PGM path, or a directory for `denoised.pgm`; falls back to
        /// `denoise.output`, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Property suites on the configured family.
    Verify(Common),
}

fn threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("NLG_THREADS") {
            Ok(v) => Some(v.trim().parse().context("NLG_THREADS must be a positive integer")?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    Ok(())
}

fn load(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Config::parse(""),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (name, common, denoise) = match cli.command {
        Command::Kernels(c) => ("kernels", c, None),
        Command::Energy(c) => ("energy", c, None),
        Command::LimitStudy(c) => ("limit-study", c, None),
        Command::TruncationStudy(c) => ("truncation-study", c, None),
        Command::CellBulk(c) => ("cell-bulk", c, None),
        Command::CellSurf(c) => ("cell-surf", c, None),
        Command::Minimize(c) => ("minimize", c, None),
        Command::Verify(c) => ("verify", c, None),
        Command::Denoise { input, eps, tau, config, out, seed, threads } => {
            // A broken config is reported by the main load below.
            let from_cfg = || load(&config).ok()?.get("denoise.output").map(PathBuf::from);
            let out = out.or_else(from_cfg).unwrap_or_else(|| PathBuf::from("out"));
            let is_image = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            let (dir, image) = if is_image {
                let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), PathBuf::from);
                (dir, out)
            } else {
                (out.clone(), out.join("denoised.pgm"))
            };
            ("denoise", Common { config, out: dir, seed, threads }, Some(DenoiseArgs { input, eps, tau, image }))
        }
    };
    threads(common.threads)?;
    let cfg = load(&common.config)?;
    let seed = match common.seed {
        Some(s) => s,
        None => cfg.seed()?,
    };
    let mut r = Run { cfg: &cfg, out: Output::new(&common.out)?, seed };
    match name {
        "kernels" => commands::kernels(&mut r)?,
        "energy" => commands::energy(&mut r)?,
        "limit-study" => commands::limit_study(&mut r)?,
        "truncation-study" => commands::truncation_study(&mut r)?,
        "cell-bulk" => commands::cell(&mut r, true)?,
        "cell-surf" => commands::cell(&mut r, false)?,
        "minimize" => commands::minimize(&mut r)?,
        "verify" => commands::verify(&mut r)?,
        "denoise" => commands::denoise_cmd(&mut r, denoise.as_ref().expect("denoise args"))?,
        _ => unreachable!(),
    }
    r.out.finish(name)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
