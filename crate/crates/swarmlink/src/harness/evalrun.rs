//! Deterministic-policy evaluation: trajectory logs, link logs under the
//! modeled channel, and a summary.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comms::PayloadSpec;
use crate::env::World;
use crate::madrl::{run_episode, EpisodeStats, Helper, RunMode, RunOptions, SacAgent, Scales};
use crate::nn::load_blocks;

use super::config::{derive_seed, ExperimentConfig};
use super::train::{build_learners, eval_world_seed, load_all};
use super::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_system_reward: f64,
    /// Discounted system return at the configured gamma.
    pub mean_discounted_return: f64,
    pub mean_travel_time_mean_s: f64,
    pub mean_travel_time_max_s: f64,
    pub mean_collision_events: f64,
    pub collision_rate: f64,
    pub arrival_fraction: f64,
    pub mean_energy_j: f64,
    pub mean_control_interval_s: f64,
    pub dl_stale_fraction: f64,
    pub total_ul_bits: u64,
    pub total_dl_bits: u64,
}

/// Check that a checkpoint's manifest (when present) matches the configured
/// mechanism before loading.
pub fn check_mechanism(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<(), HarnessError> {
    let manifest_path = checkpoint.with_file_name("manifest.json");
    if manifest_path.exists() {
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if let Some(label) = manifest["mechanism"].as_str() {
            let want = cfg.mechanism.label();
            if label != want {
                return Err(HarnessError::MechanismMismatch {
                    checkpoint: label.to_string(),
                    config: want,
                });
            }
        }
    }
    Ok(())
}

/// Load a checkpoint and run deterministic episodes; returns per-episode
/// stats plus the aggregate summary.
pub fn eval_run(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    episodes: usize,
    master_seed: u64,
) -> Result<(Vec<EpisodeStats>, EvalSummary), HarnessError> {
    check_mechanism(cfg, checkpoint)?;
    let (mut agents, mut helper) = build_learners(cfg, master_seed)?;
    let blocks = load_blocks(checkpoint)?;
    load_all(&mut agents, &mut helper, &blocks)?;
    eval_loaded(cfg, &mut agents, &mut helper, episodes, master_seed)
}

/// Evaluation over already-loaded learners (used by sweeps to avoid
/// re-reading checkpoints per power point).
pub fn eval_loaded(
    cfg: &ExperimentConfig,
    agents: &mut [SacAgent],
    helper: &mut Helper,
    episodes: usize,
    master_seed: u64,
) -> Result<(Vec<EpisodeStats>, EvalSummary), HarnessError> {
    let scales = Scales::from_world(&cfg.world);
    let payload = PayloadSpec::new(cfg.mechanism, cfg.world.n_agents);
    let mut all = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut world = World::new(cfg.world.clone(), eval_world_seed(master_seed, ep));
        let opts = RunOptions {
            mode: RunMode::Eval,
            channel_mode: cfg.channel_mode,
            channel: &cfg.channel,
            payload,
            record_trajectories: true,
            record_links: true,
        };
        // Deterministic mode draws no action noise; the RNG is still
        // threaded through for API uniformity.
        let mut action_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(master_seed, 7, ep as u64));
        let stats = run_episode(
            &mut world,
            agents,
            helper,
            &opts,
            &scales,
            &mut action_rng,
            None,
        );
        all.push(stats);
    }
    let summary = summarize(&all, cfg);
    Ok((all, summary))
}

fn summarize(all: &[EpisodeStats], cfg: &ExperimentConfig) -> EvalSummary {
    let n = all.len().max(1) as f64;
    let discounted = all
        .iter()
        .map(|s| crate::madrl::evaluate_return(&s.rewards_per_step, cfg.sac.gamma).1)
        .sum::<f64>()
        / n;
    let stale_dl: u64 = all
        .iter()
        .map(|s| s.links.iter().filter(|l| l.stale_dl).count() as u64)
        .sum();
    let total_links: u64 = all.iter().map(|s| s.links.len() as u64).sum();
    EvalSummary {
        episodes: all.len(),
        mean_system_reward: all.iter().map(|s| s.system_reward).sum::<f64>() / n,
        mean_discounted_return: discounted,
        mean_travel_time_mean_s: all.iter().map(|s| s.travel_time_mean_s).sum::<f64>() / n,
        mean_travel_time_max_s: all.iter().map(|s| s.travel_time_max_s).sum::<f64>() / n,
        mean_collision_events: all.iter().map(|s| s.collision_events as f64).sum::<f64>() / n,
        collision_rate: all.iter().map(|s| s.collision_rate).sum::<f64>() / n,
        arrival_fraction: all
            .iter()
            .map(|s| if s.all_arrived { 1.0 } else { 0.0 })
            .sum::<f64>()
            / n,
        mean_energy_j: all.iter().map(|s| s.energy_j).sum::<f64>() / n,
        mean_control_interval_s: all
            .iter()
            .map(|s| if s.steps > 0 { s.sim_time_s / s.steps as f64 } else { 0.0 })
            .sum::<f64>()
            / n,
        dl_stale_fraction: if total_links > 0 {
            stale_dl as f64 / total_links as f64
        } else {
            0.0
        },
        total_ul_bits: all.iter().map(|s| s.ul_bits).sum(),
        total_dl_bits: all.iter().map(|s| s.dl_bits).sum(),
    }
}

/// Write trajectory and link CSVs plus the summary JSON for an evaluation.
pub fn write_eval_artifacts(
    out_dir: &Path,
    all: &[EpisodeStats],
    summary: &EvalSummary,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut traj = fs::File::create(out_dir.join("trajectories.csv"))?;
    writeln!(
        traj,
        "episode,step,time_s,agent,px,py,vx,vy,reward_pos,reward_neg"
    )?;
    for (ep, stats) in all.iter().enumerate() {
        for r in &stats.trajectories {
            writeln!(
                traj,
                "{},{},{},{},{},{},{},{},{},{}",
                ep, r.step, r.time_s, r.agent, r.px, r.py, r.vx, r.vy, r.reward_pos, r.reward_neg
            )?;
        }
    }
    let any_links = all.iter().any(|s| !s.links.is_empty());
    if any_links {
        let mut links = fs::File::create(out_dir.join("links.csv"))?;
        writeln!(
            links,
            "episode,step,agent,path_loss_db,ul_rate_bps,dl_rate_bps,ul_delay_s,dl_delay_s,stale_ul,stale_dl,energy_j"
        )?;
        for (ep, stats) in all.iter().enumerate() {
            for l in &stats.links {
                writeln!(
                    links,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    ep,
                    l.step,
                    l.agent,
                    l.path_loss_db,
                    l.ul_rate_bps,
                    l.dl_rate_bps,
                    l.ul_delay_s,
                    l.dl_delay_s,
                    l.stale_ul,
                    l.stale_dl,
                    l.energy_j
                )?;
            }
        }
    }
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    Ok(())
}
