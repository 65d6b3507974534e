//! Experiment configuration: a single JSON document covering the world, the
//! channel, the helper mechanism, and the learner. `SWARMLINK_OUT` and
//! `SWARMLINK_SEED` environment variables override the output directory and
//! seed list; everything else comes from the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comms::{ChannelConfig, Method};
use crate::env::WorldConfig;
use crate::madrl::{ChannelMode, SacConfig};

use super::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub channel: ChannelConfig,
    pub mechanism: Method,
    /// ISHA softmax temperature.
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub sac: SacConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub channel_mode: ChannelMode,
    /// Episodes per evaluation or sweep point.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
}

fn default_beta() -> f64 {
    1.0
}

fn default_eval_episodes() -> usize {
    10
}

impl ExperimentConfig {
    /// Small-region profile sized so a full training grid runs on a
    /// desktop: 200 x 200 m, 500 episodes, ideal channel at a 0.1 s
    /// control interval.
    pub fn desk_profile() -> Self {
        Self {
            world: WorldConfig {
                n_agents: 4,
                region_side_m: 200.0,
                altitude_m: 50.0,
                destination_m: [100.0, 100.0],
                goal_reward_cap: 1.0,
                collision_radius_m: 5.0,
                goal_radius_m: 10.0,
                wind_std: 0.2,
                a_max: 5.0,
                // low enough that every spawn can reach the goal inside the
                // episode budget
                v_max: 15.0,
                max_episode_steps: 200,
            },
            channel: ChannelConfig {
                bandwidth_hz: 5e6,
                tx_power_uav_w: 0.1,
                tx_power_helper_w: 1.0,
                noise_density_w_per_hz: 1e-13,
                carrier_freq_hz: 2e9,
                helper_position: [200.0, 200.0, 10.0],
                delay_limit_s: 1.0,
                float_width_bits: 32,
            },
            mechanism: Method::Isha { iterations: 3 },
            beta: 1.0,
            sac: SacConfig {
                // horizon long enough to see the goal from any spawn while
                // keeping value magnitudes learnable in the episode budget
                gamma: 0.98,
                // matched to this task's ~0.1-0.3 per-step reward scale
                entropy_weight: 0.01,
                tau: 0.02,
                batch_size: 64,
                replay_capacity: 20_000,
                warmup_steps: 1000,
                steps_per_update: 3,
                episodes: 500,
                lr_actor: 2e-3,
                lr_critic: 3e-3,
                lr_attention: 2e-3,
            },
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs/desk"),
            channel_mode: ChannelMode::PerfectFixedInterval { dt: 0.1 },
            eval_episodes: 10,
        }
    }

    /// Full-scale profile: 1000 x 1000 m, helper at the far corner,
    /// destination at the origin corner.
    pub fn paper_profile() -> Self {
        let mut cfg = Self::desk_profile();
        cfg.world.region_side_m = 1000.0;
        cfg.world.destination_m = [0.0, 0.0];
        cfg.world.max_episode_steps = 600;
        cfg.channel.helper_position = [1000.0, 1000.0, 10.0];
        cfg.sac = SacConfig::default();
        cfg.sac.episodes = 2000;
        cfg.out_dir = PathBuf::from("runs/paper");
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let Ok(out) = std::env::var("SWARMLINK_OUT") {
            cfg.out_dir = PathBuf::from(out);
        }
        if let Ok(seed) = std::env::var("SWARMLINK_SEED") {
            let s = seed
                .parse::<u64>()
                .map_err(|_| HarnessError::Config("SWARMLINK_SEED: not an integer".into()))?;
            cfg.seeds = vec![s];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Field-path-prefixed validation of the whole document.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.world
            .validate()
            .map_err(|e| HarnessError::Config(format!("world.{e}")))?;
        self.channel
            .validate()
            .map_err(|e| HarnessError::Config(format!("channel.{e}")))?;
        self.sac
            .validate()
            .map_err(|e| HarnessError::Config(format!("sac.{e}")))?;
        match self.mechanism {
            Method::Isha { iterations } => {
                if iterations == 0 || iterations > self.world.n_agents - 1 {
                    return Err(HarnessError::Config(format!(
                        "mechanism.iterations: must be in 1..={} (n_agents - 1), got {iterations}",
                        self.world.n_agents - 1
                    )));
                }
            }
            Method::Mha { heads } => {
                if heads == 0 || crate::attention::EMBEDDING_DIM % heads != 0 {
                    return Err(HarnessError::Config(format!(
                        "mechanism.heads: must divide {}, got {heads}",
                        crate::attention::EMBEDDING_DIM
                    )));
                }
            }
            Method::Vanilla => {}
        }
        if self.beta <= 0.0 {
            return Err(HarnessError::Config("beta: must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds: must be non-empty".into()));
        }
        if self.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes: must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the canonical serialized config, recorded in run manifests.
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Mix a master seed with a stream tag and index into an independent seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
