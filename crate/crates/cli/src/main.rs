//! `jawkit`: batch frontend for splint error analysis.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jawkit::lie_stats::StdConvention;
use jawkit::se3::Se3Mode;

use crate::config::{parse_roi, Config, NoiseKind};
use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "jawkit", version, about = "Rigid-transform error analysis for occlusal splints")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Include per-iteration registration traces in JSON outputs.
    #[arg(long, global = true)]
    trace: bool,
    /// SE(3) tangent parametrization.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Se3Mode>,
    /// Standard deviation convention.
    #[arg(long = "std", global = true, value_parser = parse_std)]
    std_convention: Option<StdConvention>,
    /// Distance maps mask magnitudes above this (mm).
    #[arg(long, global = true, value_name = "MM")]
    clamp: Option<f64>,
    /// Region of interest of distance maps (mm).
    #[arg(long, global = true, value_name = "LO:HI", value_parser = parse_roi)]
    roi: Option<[f64; 2]>,
    /// Skip PNG and SVG output.
    #[arg(long, global = true)]
    no_images: bool,
}

fn parse_mode(s: &str) -> Result<Se3Mode, String> {
    match s {
        "coupled" => Ok(Se3Mode::Coupled),
        "product" => Ok(Se3Mode::Product),
        other => Err(format!("expected coupled or product, got '{other}'")),
    }
}

fn parse_std(s: &str) -> Result<StdConvention, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rigidly register a source point set onto a target surface.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Initial transform (JSON) applied to the source.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Start from a principal-axes alignment instead of `--init`.
        #[arg(long, conflicts_with = "init")]
        prealign: bool,
        /// Correspondence radius (mm).
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Report loop errors of a transform tree.
    TreeCheck {
        tree: PathBuf,
        /// Closed frame list such as F,C,K,F; repeatable.
        #[arg(long = "cycle", action = clap::ArgAction::Append)]
        cycles: Vec<String>,
    },
    /// Karcher mean of a sample set.
    Mean { samples: PathBuf },
    /// Descriptive statistics, PCA ellipsoids and plots of a sample set.
    Stats { samples: PathBuf },
    /// Per-vertex distance from a source mesh to a target surface.
    Distmap {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        signed: bool,
    },
    /// Joint distance maps for planned and measured mandible poses.
    Simulate { scenario: PathBuf },
    /// Write a synthetic fixture: meshes, scans and a ground-truth manifest.
    GenFixture {
        #[arg(long)]
        splints: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Scan vertex noise (mm).
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long, value_enum)]
        noise: Option<NoiseKind>,
    },
    /// Full pipeline on a fixture manifest: registration, statistics, joints.
    Report { manifest: PathBuf },
    /// Fixture generation (unless the config names a manifest), report, and
    /// tree check (if the config names a tree).
    RunAll,
}

fn build_config(global: &GlobalArgs) -> CliResult<Config> {
    let mut c = match &global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(o) = &global.out {
        c.out = Some(o.clone());
    }
    if global.jobs.is_some() {
        c.jobs = global.jobs;
    }
    if let Some(s) = global.seed {
        c.seed = s;
    }
    if let Some(m) = global.mode {
        c.mode = m;
    }
    if let Some(s) = global.std_convention {
        c.std = s;
    }
    if let Some(v) = global.clamp {
        c.clamp_mm = Some(v);
    }
    if let Some(r) = global.roi {
        c.roi = Some(r);
    }
    if global.no_images {
        c.images = false;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = build_config(&cli.global)?;
    if let Some(n) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let trace = cli.global.trace;
    match cli.command {
        Command::Register { source, target, init, prealign, radius } => {
            if let Some(r) = radius {
                config.icp.max_correspondence_mm = r;
                config.validate()?;
            }
            commands::register(&config, &source, &target, init.as_deref(), prealign, trace)
        }
        Command::TreeCheck { tree, cycles } => commands::tree_check(&config, &tree, &cycles),
        Command::Mean { samples } => commands::mean(&config, &samples),
        Command::Stats { samples } => commands::stats(&config, &samples),
        Command::Distmap { source, target, signed } => {
            let roi = cli.global.roi.map(|[lo, hi]| (lo, hi));
            commands::distmap(&config, &source, &target, signed, roi)
        }
        Command::Simulate { scenario } => commands::simulate(&config, &scenario),
        Command::GenFixture { splints, repeats, jitter, noise } => {
            let f = &mut config.fixture;
            f.splints = splints.unwrap_or(f.splints);
            f.repeats = repeats.unwrap_or(f.repeats);
            f.jitter_sigma_mm = jitter.unwrap_or(f.jitter_sigma_mm);
            f.noise = noise.unwrap_or(f.noise);
            config.validate()?;
            commands::gen_fixture(&config, &config.out_dir()).map(|_| ())
        }
        Command::Report { manifest } => commands::report(&config, &manifest, &config.out_dir()),
        Command::RunAll => commands::run_all(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JAWKIT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(error::IO) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
