use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use msip::env::UtilityMode;
use msip::harness::{
    build_cell, calibrate, emit_csv, emit_plot, read_csv, run_cell, run_sweep, write_sweep, ExperimentSpec, PlotKind,
};

#[derive(Parser)]
#[command(name = "msip", version, about = "Preference-feedback RL experiments: runs, sweeps, plots, calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Planner evaluation mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Rollout pairs per policy in monte-carlo mode.
    #[arg(long, default_value_t = 10_000)]
    mc_samples: usize,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single cell: the first agent, M and ω of the config.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full (agent, M, ω, seed) grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Render an SVG from a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "regret-vs-k")]
        kind: PlotKind,
        /// Output file (.svg) or directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config document without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Confidence-set coverage over the config's seeds for the first agent.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(ExperimentSpec, PathBuf)> {
    let mut spec = ExperimentSpec::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(mode) = common.mode {
        spec = spec.with_mode(match mode {
            Mode::Exact => UtilityMode::Exact,
            Mode::Mc => UtilityMode::MonteCarlo { samples: common.mc_samples, seed: 0 },
        });
    }
    if let Some(w) = common.workers {
        spec.workers = w;
    }
    spec.validate()?;
    let out = common.out.clone().or_else(|| spec.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((spec, out))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PREF_REGRET_LOG", "info")).init();
    match Cli::parse().command {
        Command::Run { common, seed } => {
            let (spec, out) = load(&common)?;
            let mut cell = spec.cells()[0];
            if let Some(s) = seed {
                cell.seed = s;
            }
            let result = run_cell(&spec, &cell);
            let records = match result.outcome {
                Ok(r) => r,
                Err(e) => bail!("run {} failed: {e}", result.run_id),
            };
            ensure_dir(&out)?;
            let path = out.join(format!("{}.csv", result.run_id));
            emit_csv(&records, &path)?;
            if let Some(last) = records.last() {
                println!("{}: K={} cumulative regret {:.6} (L* = {:.6})", result.run_id, last.episode, last.cum_regret, last.l_star);
            }
            println!("wrote {}", path.display());
        }
        Command::Sweep { common } => {
            let (spec, out) = load(&common)?;
            log::info!("sweep: {} cells on {} workers", spec.cells().len(), spec.workers);
            let results = run_sweep(&spec)?;
            let failed = results.iter().filter(|r| r.outcome.is_err()).count();
            let merged = write_sweep(&results, &out)?;
            println!("{} cells, {} failed; wrote {}", results.len(), failed, merged.display());
        }
        Command::Plot { input, kind, out } => {
            let records = read_csv(&input)?;
            let name = format!("{}.svg", serde_kind(kind));
            let path = match out {
                Some(p) if p.extension().is_some_and(|e| e == "svg") => p,
                Some(dir) => {
                    ensure_dir(&dir)?;
                    dir.join(name)
                }
                None => input.with_file_name(name),
            };
            emit_plot(&records, kind, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Validate { config } => {
            let spec = ExperimentSpec::load(&config)?;
            for cell in spec.cells() {
                build_cell(&spec, &cell).map_err(anyhow::Error::msg).with_context(|| cell.run_id(&spec))?;
            }
            println!("{}: ok ({} cells)", config.display(), spec.cells().len());
        }
        Command::Calibrate { common } => {
            let (spec, out) = load(&common)?;
            let cell = spec.cells()[0];
            let (instance, panel) = build_cell(&spec, &cell).map_err(anyhow::Error::msg)?;
            let report = calibrate(&spec.agents[0], &instance, &panel, spec.episodes, &spec.seeds, spec.workers)?;
            ensure_dir(&out)?;
            let path = out.join("calibration.txt");
            let text = format!(
                "seeds {}\ncovered_r {}\ncovered_p {}\ncovered_both {}\nfailed_runs {}\nfraction {:.4}\n",
                report.seeds,
                report.covered_r,
                report.covered_p,
                report.covered_both,
                report.failed_runs,
                report.fraction()
            );
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn serde_kind(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::RegretVsK => "regret-vs-k",
        PlotKind::RegretVsM => "regret-vs-m",
        PlotKind::RegretVsOmega => "regret-vs-omega",
    }
}
