use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use swarmlink::harness::{
    attention_heatmaps, cost_table, default_power_grid, eval_run, format_table, run_dir_for,
    standard_mechanisms, sweep, train_run, write_costs_csv, write_eval_artifacts, write_heatmaps,
    write_sweep_csv, ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "swarmlink", version, about = "Communication-aided multi-UAV path planning: training, evaluation, sweeps, and cost accounting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured mechanism for every seed in the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the last checkpoint when one exists.
        #[arg(long)]
        resume: bool,
        /// Run the seeds in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate trained checkpoints across helper transmit powers under the
    /// modeled channel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding `<mechanism>/seed<k>/checkpoint.bin` layouts.
        #[arg(long)]
        runs: PathBuf,
        /// Comma-separated dBm values (default 15..=40 in 1 dB steps).
        #[arg(long)]
        powers: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-agent attention score matrices for a world snapshot.
    DumpAttention {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        scenario_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print model sizes and per-round communication bits per mechanism.
    Costs {
        #[arg(long)]
        config: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a default configuration file.
    InitConfig {
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<(), HarnessError> {
    match Cli::parse().command {
        Command::Train { config, seed, out, resume, parallel } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let label = cfg.mechanism.label();
            let seeds = cfg.seeds.clone();
            let job = |s: &u64| -> Result<(), HarnessError> {
                let dir = run_dir_for(&cfg.out_dir, &label, *s);
                train_run(&cfg, *s, &dir, resume, false)?;
                eprintln!("seed {s}: wrote {}", dir.display());
                Ok(())
            };
            if parallel {
                seeds.par_iter().map(job).collect::<Result<Vec<_>, _>>()?;
            } else {
                seeds.iter().map(job).collect::<Result<Vec<_>, _>>()?;
            }
            Ok(())
        }
        Command::Eval { config, checkpoint, episodes, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let seed = seed.unwrap_or_else(|| cfg.seeds[0]);
            let (all, summary) = eval_run(&cfg, &checkpoint, episodes, seed)?;
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.join("eval"));
            write_eval_artifacts(&out_dir, &all, &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::Sweep { config, runs, powers, episodes, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let powers: Vec<f64> = match powers {
                Some(list) => list
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|_| {
                            HarnessError::Config(format!("powers: '{p}' is not a number"))
                        })
                    })
                    .collect::<Result<_, _>>()?,
                None => default_power_grid(),
            };
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let seed = seed.unwrap_or_else(|| cfg.seeds[0]);
            let rows = sweep(
                &cfg,
                &runs,
                seed,
                &powers,
                episodes,
                &standard_mechanisms(),
                |w| eprintln!("warning: {w}"),
            )?;
            let out_path = out.unwrap_or_else(|| cfg.out_dir.join("sweep.csv"));
            write_sweep_csv(&out_path, &rows)?;
            eprintln!("wrote {} ({} rows)", out_path.display(), rows.len());
            Ok(())
        }
        Command::DumpAttention { config, checkpoint, scenario_seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let heatmaps = attention_heatmaps(&cfg, &checkpoint, scenario_seed)?;
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.join("attention"));
            write_heatmaps(&out_dir, &heatmaps)?;
            eprintln!("wrote {} ({} agents)", out_dir.display(), heatmaps.len());
            Ok(())
        }
        Command::Costs { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = cost_table(&cfg)?;
            print!("{}", format_table(&rows));
            if let Some(path) = out {
                write_costs_csv(&path, &rows)?;
            }
            Ok(())
        }
        Command::InitConfig { profile, out } => {
            let cfg = match profile {
                Profile::Desk => ExperimentConfig::desk_profile(),
                Profile::Paper => ExperimentConfig::paper_profile(),
            };
            cfg.save(&out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}
