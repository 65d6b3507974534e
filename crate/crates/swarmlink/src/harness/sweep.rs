//! Helper-power sweep: evaluate trained checkpoints under the modeled
//! channel across a grid of downlink transmit powers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::comms::{dbm_to_watts, Method};
use crate::madrl::ChannelMode;
use crate::nn::load_blocks;

use super::config::ExperimentConfig;
use super::evalrun::{eval_loaded, EvalSummary};
use super::train::{build_learners, load_all, run_dir_for};
use super::HarnessError;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mechanism: String,
    pub power_dbm: f64,
    pub summary: EvalSummary,
}

/// The four mechanism variants the experiments compare.
pub fn standard_mechanisms() -> Vec<Method> {
    vec![
        Method::Isha { iterations: 3 },
        Method::Isha { iterations: 1 },
        Method::Mha { heads: 3 },
        Method::Vanilla,
    ]
}

/// Sweep `powers_dbm` for every mechanism with a trained checkpoint under
/// `runs_dir` (layout `<runs>/<mechanism>/seed<k>/checkpoint.bin`).
/// Mechanisms without a checkpoint are reported and skipped.
pub fn sweep(
    base: &ExperimentConfig,
    runs_dir: &Path,
    seed: u64,
    powers_dbm: &[f64],
    episodes: usize,
    mechanisms: &[Method],
    mut warn: impl FnMut(String),
) -> Result<Vec<SweepRow>, HarnessError> {
    let mut rows = Vec::new();
    for &mechanism in mechanisms {
        let label = mechanism.label();
        let checkpoint = run_dir_for(runs_dir, &label, seed).join("checkpoint.bin");
        if !checkpoint.exists() {
            warn(format!("missing checkpoint for {label}: {}", checkpoint.display()));
            continue;
        }
        let mut cfg = base.clone();
        cfg.mechanism = mechanism;
        cfg.channel_mode = ChannelMode::Modeled;
        cfg.validate()?;
        let (mut agents, mut helper) = build_learners(&cfg, seed)?;
        let blocks = load_blocks(&checkpoint)?;
        load_all(&mut agents, &mut helper, &blocks)?;
        for &p in powers_dbm {
            let mut point = cfg.clone();
            point.channel.tx_power_helper_w = dbm_to_watts(p);
            let (_, summary) = eval_loaded(&point, &mut agents, &mut helper, episodes, seed)?;
            rows.push(SweepRow { mechanism: label.clone(), power_dbm: p, summary });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "mechanism,power_dbm,episodes,mean_system_reward,travel_time_mean_s,travel_time_max_s,\
         mean_collision_events,collision_rate,arrival_fraction,energy_j,control_interval_s,dl_stale_fraction"
    )?;
    for r in rows {
        let s = &r.summary;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mechanism,
            r.power_dbm,
            s.episodes,
            s.mean_system_reward,
            s.mean_travel_time_mean_s,
            s.mean_travel_time_max_s,
            s.mean_collision_events,
            s.collision_rate,
            s.arrival_fraction,
            s.mean_energy_j,
            s.mean_control_interval_s,
            s.dl_stale_fraction
        )?;
    }
    Ok(())
}

/// Default sweep grid: 15..=40 dBm in 1 dB steps.
pub fn default_power_grid() -> Vec<f64> {
    (15..=40).map(|p| p as f64).collect()
}
