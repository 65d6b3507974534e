//! Training runs: episode loop per seed, metrics CSV, checkpoints, and a
//! manifest sufficient to re-run the experiment bit-identically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::comms::PayloadSpec;
use crate::env::World;
use crate::madrl::{
    run_episode, AgentLearningRates, EpisodeStats, Helper, ReplayBuffer, RunMode, RunOptions,
    SacAgent, Scales, TrainState,
};
use crate::nn::{load_blocks, save_blocks, ParamBlock};

use super::config::{derive_seed, ExperimentConfig};
use super::HarnessError;

const STREAM_AGENT_INIT: u64 = 1;
const STREAM_HELPER_INIT: u64 = 2;
const STREAM_WORLD: u64 = 3;
const STREAM_ACTION: u64 = 4;
const STREAM_UPDATE: u64 = 5;
const STREAM_EVAL_WORLD: u64 = 6;
const CHECKPOINT_EVERY: usize = 50;

/// One metrics CSV row; everything here is deterministic for a fixed
/// config and seed (wall-clock timing goes to the run log instead).
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub episode: usize,
    pub steps: usize,
    pub sim_time_s: f64,
    pub per_agent_reward: Vec<f64>,
    pub system_reward: f64,
    pub collision_events: u64,
    pub collision_pair_steps: u64,
    pub collision_rate: f64,
    pub travel_time_mean_s: f64,
    pub travel_time_max_s: f64,
    pub ul_bits: u64,
    pub dl_bits: u64,
    pub energy_j: f64,
    pub updates: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

impl MetricsRow {
    pub fn from_stats(episode: usize, stats: &EpisodeStats) -> Self {
        Self {
            episode,
            steps: stats.steps,
            sim_time_s: stats.sim_time_s,
            per_agent_reward: stats.per_agent_reward.clone(),
            system_reward: stats.system_reward,
            collision_events: stats.collision_events,
            collision_pair_steps: stats.collision_pair_steps,
            collision_rate: stats.collision_rate,
            travel_time_mean_s: stats.travel_time_mean_s,
            travel_time_max_s: stats.travel_time_max_s,
            ul_bits: stats.ul_bits,
            dl_bits: stats.dl_bits,
            energy_j: stats.energy_j,
            updates: stats.updates_run,
            critic_loss: stats.mean_critic_loss,
            actor_loss: stats.mean_actor_loss,
        }
    }

    pub fn csv_header(n_agents: usize) -> String {
        let mut cols = vec!["episode".into(), "steps".into(), "sim_time_s".into()];
        for i in 0..n_agents {
            cols.push(format!("reward_agent{i}"));
        }
        cols.extend(
            [
                "system_reward",
                "collision_events",
                "collision_pair_steps",
                "collision_rate",
                "travel_time_mean_s",
                "travel_time_max_s",
                "ul_bits",
                "dl_bits",
                "energy_j",
                "updates",
                "critic_loss",
                "actor_loss",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.episode.to_string(),
            self.steps.to_string(),
            format!("{}", self.sim_time_s),
        ];
        for r in &self.per_agent_reward {
            cols.push(format!("{r}"));
        }
        cols.push(format!("{}", self.system_reward));
        cols.push(self.collision_events.to_string());
        cols.push(self.collision_pair_steps.to_string());
        cols.push(format!("{}", self.collision_rate));
        cols.push(format!("{}", self.travel_time_mean_s));
        cols.push(format!("{}", self.travel_time_max_s));
        cols.push(self.ul_bits.to_string());
        cols.push(self.dl_bits.to_string());
        cols.push(format!("{}", self.energy_j));
        cols.push(self.updates.to_string());
        cols.push(format!("{}", self.critic_loss));
        cols.push(format!("{}", self.actor_loss));
        cols.join(",")
    }
}

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub checkpoint: PathBuf,
    pub run_dir: PathBuf,
}

/// Build the agent set and helper for a config and master seed.
pub fn build_learners(
    cfg: &ExperimentConfig,
    master_seed: u64,
) -> Result<(Vec<SacAgent>, Helper), HarnessError> {
    let mut helper_rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, STREAM_HELPER_INIT, 0));
    let helper = Helper::new(
        cfg.mechanism,
        cfg.world.n_agents,
        cfg.beta,
        cfg.sac.lr_attention,
        &mut helper_rng,
    )
    .map_err(|e| HarnessError::Config(format!("mechanism: {e}")))?;
    let lrs = AgentLearningRates { actor: cfg.sac.lr_actor, critic: cfg.sac.lr_critic };
    let agents = (0..cfg.world.n_agents)
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(master_seed, STREAM_AGENT_INIT, i as u64));
            SacAgent::new(helper.message_dim(), lrs, &mut rng)
        })
        .collect();
    Ok((agents, helper))
}

/// World seed for a given training episode.
pub fn world_seed(master_seed: u64, episode: usize) -> u64 {
    derive_seed(master_seed, STREAM_WORLD, episode as u64)
}

/// World seed for a given evaluation episode (distinct stream from training).
pub fn eval_world_seed(master_seed: u64, episode: usize) -> u64 {
    derive_seed(master_seed, STREAM_EVAL_WORLD, episode as u64)
}

/// Train one seed: runs `cfg.sac.episodes` episodes, appends one metrics row
/// per episode, checkpoints periodically, and writes a manifest. With
/// `resume`, continues from the last checkpoint (replay buffer and optimizer
/// moments restart; metrics keep appending).
pub fn train_run(
    cfg: &ExperimentConfig,
    master_seed: u64,
    run_dir: &Path,
    resume: bool,
    quiet: bool,
) -> Result<TrainOutcome, HarnessError> {
    fs::create_dir_all(run_dir)?;
    let metrics_path = run_dir.join("metrics.csv");
    let checkpoint_path = run_dir.join("checkpoint.bin");
    let manifest_path = run_dir.join("manifest.json");

    let (mut agents, mut helper) = build_learners(cfg, master_seed)?;
    let mut start_episode = 0usize;
    if resume && manifest_path.exists() {
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        start_episode = manifest["episodes_completed"].as_u64().unwrap_or(0) as usize;
        if start_episode > 0 && checkpoint_path.exists() {
            let blocks = load_blocks(&checkpoint_path)?;
            load_all(&mut agents, &mut helper, &blocks)?;
        }
    }
    if start_episode >= cfg.sac.episodes {
        let rows = Vec::new();
        return Ok(TrainOutcome { rows, checkpoint: checkpoint_path, run_dir: run_dir.into() });
    }

    let mut metrics = if start_episode > 0 && metrics_path.exists() {
        fs::OpenOptions::new().append(true).open(&metrics_path)?
    } else {
        let mut f = fs::File::create(&metrics_path)?;
        writeln!(f, "{}", MetricsRow::csv_header(cfg.world.n_agents))?;
        f
    };
    let mut run_log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(run_dir.join("run.log"))?;

    let scales = Scales::from_world(&cfg.world);
    let payload = PayloadSpec::new(cfg.mechanism, cfg.world.n_agents);
    let mut replay = ReplayBuffer::new(cfg.sac.replay_capacity);
    let mut global_step: u64 = (start_episode * cfg.world.max_episode_steps) as u64;
    let mut action_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(master_seed, STREAM_ACTION, start_episode as u64));
    let mut update_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(master_seed, STREAM_UPDATE, start_episode as u64));

    let started = std::time::Instant::now();
    let mut rows = Vec::with_capacity(cfg.sac.episodes - start_episode);
    for episode in start_episode..cfg.sac.episodes {
        let mut world = World::new(cfg.world.clone(), world_seed(master_seed, episode));
        let opts = RunOptions {
            mode: RunMode::Train,
            channel_mode: cfg.channel_mode,
            channel: &cfg.channel,
            payload,
            record_trajectories: false,
            record_links: false,
        };
        let stats = run_episode(
            &mut world,
            &mut agents,
            &mut helper,
            &opts,
            &scales,
            &mut action_rng,
            Some(TrainState {
                replay: &mut replay,
                sac: &cfg.sac,
                global_step: &mut global_step,
                update_rng: &mut update_rng,
            }),
        );
        let row = MetricsRow::from_stats(episode, &stats);
        writeln!(metrics, "{}", row.csv_row())?;
        rows.push(row);

        let last = episode + 1 == cfg.sac.episodes;
        if (episode + 1) % CHECKPOINT_EVERY == 0 || last {
            metrics.flush()?;
            save_blocks(&checkpoint_path, &collect_blocks(&agents, &helper))?;
            write_manifest(&manifest_path, cfg, master_seed, episode + 1)?;
            writeln!(
                run_log,
                "episode {} / {} ({:.1}s elapsed, {} updates)",
                episode + 1,
                cfg.sac.episodes,
                started.elapsed().as_secs_f64(),
                global_step / cfg.sac.steps_per_update as u64
            )?;
            if !quiet {
                eprintln!(
                    "[{}] seed {master_seed}: episode {}/{} ({:.1}s)",
                    cfg.mechanism.label(),
                    episode + 1,
                    cfg.sac.episodes,
                    started.elapsed().as_secs_f64()
                );
            }
        }
    }
    metrics.flush()?;
    Ok(TrainOutcome { rows, checkpoint: checkpoint_path, run_dir: run_dir.into() })
}

pub fn collect_blocks(agents: &[SacAgent], helper: &Helper) -> Vec<ParamBlock> {
    let mut blocks = Vec::new();
    for (i, a) in agents.iter().enumerate() {
        blocks.extend(a.blocks(&format!("agent{i}")));
    }
    blocks.extend(helper.blocks());
    blocks
}

pub fn load_all(
    agents: &mut [SacAgent],
    helper: &mut Helper,
    blocks: &[ParamBlock],
) -> Result<(), HarnessError> {
    for (i, a) in agents.iter_mut().enumerate() {
        a.load(&format!("agent{i}"), blocks)?;
    }
    helper.load(blocks)?;
    Ok(())
}

fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    episodes_completed: usize,
) -> Result<(), HarnessError> {
    let manifest = serde_json::json!({
        "config": cfg,
        "config_sha256": cfg.sha256(),
        "mechanism": cfg.mechanism.label(),
        "seed": seed,
        "episodes_completed": episodes_completed,
        "checkpoint": "checkpoint.bin",
        "crate_version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Directory layout helper: `<out>/<mechanism>/seed<k>`.
pub fn run_dir_for(out_dir: &Path, mechanism_label: &str, seed: u64) -> PathBuf {
    out_dir.join(mechanism_label).join(format!("seed{seed}"))
}
