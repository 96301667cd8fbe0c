use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pbrom_cli::*;
use pbrom_core::closure::ClosureKind;
use pbrom_core::pod::RankCriterion;
use pbrom_core::rom::RomVariant;

/// Reduced-order flow model pipeline. Each subcommand is one stage and
/// communicates with the others only through files.
#[derive(Parser)]
#[command(name = "pbrom", version)]
struct Cli {
    /// Seed for every random draw of the stage (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RankArgs {
    /// Explicit velocity rank.
    #[arg(long, conflicts_with = "energy")]
    rank: Option<usize>,
    /// Cumulative energy fraction that picks the velocity rank.
    #[arg(long)]
    energy: Option<f64>,
    /// Pressure rank (defaults to the velocity rank).
    #[arg(long)]
    pressure_rank: Option<usize>,
}

impl RankArgs {
    fn criterion(&self) -> RankCriterion {
        match (self.rank, self.energy) {
            (Some(r), _) => RankCriterion::Explicit(r),
            (None, Some(e)) => RankCriterion::Energy(e),
            (None, None) => RankCriterion::Energy(0.99),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and write a snapshot ensemble.
    FomRun {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// POD of an ensemble: basis files and eigenvalue spectra.
    Pod {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep at most this many modes.
        #[arg(long)]
        max_rank: Option<usize>,
    },
    /// Galerkin operators for one variant.
    Build {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        variant: RomVariant,
        #[command(flatten)]
        rank: RankArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a residual closure to the training trajectory of a bundle.
    TrainClosure {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        kind: ClosureKind,
        /// JSON file with `elm` and/or `narx` settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate a reduced model and write its trajectory CSV.
    RomRun {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        closure: Option<PathBuf>,
        #[arg(long)]
        variant: RomVariant,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a trajectory with its ensemble.
    Eval {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Wall-clock cost of full and reduced model per simulated second.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        closure: Option<PathBuf>,
        #[arg(long)]
        variant: RomVariant,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Shorter full-model run whose cost is scaled to `duration`.
        #[arg(long)]
        fom_duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FomRun { config, out } => {
            let mut cfg = load_config(&config).with_context(|| format!("fom-run: reading {}", config.display()))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let hash = fom_run(&cfg, &out).context("fom-run")?;
            println!("ensemble {} case {hash}", out.display());
        }
        Command::Pod { ensemble, out, max_rank } => {
            let s = pod_stage(&ensemble, &out, max_rank).context("pod")?;
            match s.pressure_rank {
                Some(rp) => println!("velocity rank {}, pressure rank {rp}", s.velocity_rank),
                None => println!("velocity rank {}", s.velocity_rank),
            }
        }
        Command::Build { ensemble, basis, variant, rank, out } => {
            let b = build_stage(
                &ensemble,
                &basis,
                variant,
                rank.criterion(),
                rank.pressure_rank.map(RankCriterion::Explicit),
                &out,
            )
            .context("build")?;
            println!("operators r = {}, rp = {}", b.operators.r, b.operators.rp);
        }
        Command::TrainClosure { bundle, ensemble, kind, config, out } => {
            let settings = match config {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(&p).with_context(|| format!("train-closure: reading {}", p.display()))?,
                )
                .with_context(|| format!("train-closure: parsing {}", p.display()))?,
                None => ClosureSettings::default(),
            };
            train_stage(&bundle, &ensemble, kind, cli.seed, &settings, &out).context("train-closure")?;
            println!("{kind} closure {}", out.display());
        }
        Command::RomRun { bundle, closure, variant, t_end, dt, out } => {
            let t = rom_run_stage(&bundle, closure.as_deref(), variant, t_end, dt, &out).context("rom-run")?;
            if let Some(td) = t.diverged_at {
                eprintln!("warning: model {variant} diverged at t = {td}");
            }
            println!("{} samples to {}", t.times.len(), out.display());
        }
        Command::Eval { trajectory, ensemble, basis, bundle, out, svg } => {
            let s = eval_stage(&trajectory, &ensemble, &basis, &bundle, &out, svg).context("eval")?;
            println!("velocity RMSE sum {:.6e}", s.velocity.total());
            if let Some(p) = &s.pressure {
                println!("pressure RMSE sum {:.6e}", p.total());
            }
        }
        Command::Bench { config, bundle, closure, variant, duration, fom_duration, out } => {
            let cfg = load_config(&config).with_context(|| format!("bench: reading {}", config.display()))?;
            let r = bench_stage(&cfg, &bundle, closure.as_deref(), variant, duration, fom_duration, &out)
                .context("bench")?;
            println!(
                "FOM {:.4e} s/s, ROM {:.4e} s/s, ratio {:.1}",
                r.fom_seconds_per_second, r.rom_seconds_per_second, r.ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
