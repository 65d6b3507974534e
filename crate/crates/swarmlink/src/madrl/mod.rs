//! Per-agent soft actor-critic with twin critics, the shared helper
//! attention instances, replay, and the training/evaluation episode loop.

pub mod agent;
pub mod replay;
pub mod rollout;
pub mod update;

pub use agent::{AgentLearningRates, SacAgent, Scales, ACTION_DIM, STATE_DIM};
pub use replay::{ReplayBuffer, RoundRecord, Transition};
pub use rollout::{
    evaluate_return, run_episode, ChannelMode, EpisodeStats, LinkRow, RunMode, RunOptions,
    TrainState, TrajectoryRow,
};
pub use update::{sac_losses, sac_update, sac_update_batch, GradBundle, UpdateBatch, UpdateDiagnostics};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionGrads, AttentionParams};
use crate::comms::Method;
use crate::nn::{load_mlp, mlp_blocks, AdamState, NnError, ParamBlock};

/// Soft actor-critic hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacConfig {
    /// Discount factor, in (0, 1].
    pub gamma: f64,
    /// Entropy regularization weight (fixed, not auto-tuned).
    pub entropy_weight: f64,
    /// Target smoothing coefficient, in (0, 1].
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps collected before updates start.
    pub warmup_steps: usize,
    /// Environment steps per gradient update.
    pub steps_per_update: usize,
    /// Training episodes per seed.
    pub episodes: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_attention: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            entropy_weight: 0.2,
            tau: 0.005,
            batch_size: 256,
            replay_capacity: 100_000,
            warmup_steps: 1000,
            steps_per_update: 1,
            episodes: 500,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_attention: 3e-4,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma: must be in (0, 1]".into());
        }
        if self.entropy_weight < 0.0 {
            return Err("entropy_weight: must be non-negative".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err("tau: must be in (0, 1]".into());
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err("batch_size/replay_capacity: must be positive".into());
        }
        if self.steps_per_update == 0 {
            return Err("steps_per_update: must be positive".into());
        }
        if self.episodes == 0 {
            return Err("episodes: must be positive".into());
        }
        for (name, lr) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_attention", self.lr_attention),
        ] {
            if lr <= 0.0 {
                return Err(format!("{name}: must be positive"));
            }
        }
        Ok(())
    }
}

/// Adam states mirroring an [`AttentionParams`] structure.
pub enum AttentionAdam {
    Vanilla,
    Isha { q: AdamState, k: AdamState, v: AdamState, output: AdamState },
    Mha { heads: Vec<(AdamState, AdamState, AdamState)>, output: AdamState },
}

impl AttentionAdam {
    pub fn new(params: &AttentionParams, lr: f64) -> Self {
        match params {
            AttentionParams::Vanilla { .. } => AttentionAdam::Vanilla,
            AttentionParams::Isha { q, k, v, output, .. } => AttentionAdam::Isha {
                q: AdamState::for_model(q, lr),
                k: AdamState::for_model(k, lr),
                v: AdamState::for_model(v, lr),
                output: AdamState::for_model(output, lr),
            },
            AttentionParams::Mha { heads, output, .. } => AttentionAdam::Mha {
                heads: heads
                    .iter()
                    .map(|h| {
                        (
                            AdamState::for_model(&h.q, lr),
                            AdamState::for_model(&h.k, lr),
                            AdamState::for_model(&h.v, lr),
                        )
                    })
                    .collect(),
                output: AdamState::for_model(output, lr),
            },
        }
    }

    pub fn step(&mut self, params: &mut AttentionParams, grads: &AttentionGrads) {
        match (self, params, grads) {
            (AttentionAdam::Vanilla, AttentionParams::Vanilla { .. }, AttentionGrads::Vanilla) => {}
            (
                AttentionAdam::Isha { q, k, v, output },
                AttentionParams::Isha { q: pq, k: pk, v: pv, output: po, .. },
                AttentionGrads::Isha { q: gq, k: gk, v: gv, output: go },
            ) => {
                q.step(pq, gq);
                k.step(pk, gk);
                v.step(pv, gv);
                output.step(po, go);
            }
            (
                AttentionAdam::Mha { heads, output },
                AttentionParams::Mha { heads: ph, output: po, .. },
                AttentionGrads::Mha { heads: gh, output: go },
            ) => {
                for ((opt, p), g) in heads.iter_mut().zip(ph.iter_mut()).zip(gh) {
                    opt.0.step(&mut p.q, &g.0);
                    opt.1.step(&mut p.k, &g.1);
                    opt.2.step(&mut p.v, &g.2);
                }
                output.step(po, go);
            }
            _ => panic!("attention optimizer does not match parameter structure"),
        }
    }
}

/// The communication helper: one attention instance per path, mirroring the
/// separate actor/critic embedding streams.
pub struct Helper {
    pub actor_attention: AttentionParams,
    pub critic_attention: AttentionParams,
    pub opt_actor: AttentionAdam,
    pub opt_critic: AttentionAdam,
}

fn build_attention(
    method: Method,
    n_agents: usize,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<AttentionParams, crate::attention::AttentionError> {
    match method {
        Method::Vanilla => Ok(AttentionParams::new_vanilla(n_agents)),
        Method::Isha { iterations } => AttentionParams::new_isha(n_agents, iterations, beta, rng),
        Method::Mha { heads } => AttentionParams::new_mha(n_agents, heads, rng),
    }
}

impl Helper {
    pub fn new(
        method: Method,
        n_agents: usize,
        beta: f64,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, crate::attention::AttentionError> {
        let actor_attention = build_attention(method, n_agents, beta, rng)?;
        let critic_attention = build_attention(method, n_agents, beta, rng)?;
        let opt_actor = AttentionAdam::new(&actor_attention, lr);
        let opt_critic = AttentionAdam::new(&critic_attention, lr);
        Ok(Self { actor_attention, critic_attention, opt_actor, opt_critic })
    }

    /// Helper-side model size (both path instances).
    pub fn parameter_count(&self) -> usize {
        self.actor_attention.parameter_count() + self.critic_attention.parameter_count()
    }

    pub fn message_dim(&self) -> usize {
        self.actor_attention.message_dim()
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        out.extend(attention_blocks("helper/actor", &self.actor_attention));
        out.extend(attention_blocks("helper/critic", &self.critic_attention));
        out
    }

    pub fn load(&mut self, blocks: &[ParamBlock]) -> Result<(), NnError> {
        load_attention("helper/actor", &mut self.actor_attention, blocks)?;
        load_attention("helper/critic", &mut self.critic_attention, blocks)
    }
}

/// Named parameter blocks of an attention instance.
pub fn attention_blocks(prefix: &str, params: &AttentionParams) -> Vec<ParamBlock> {
    let mut out = Vec::new();
    match params {
        AttentionParams::Vanilla { .. } => {}
        AttentionParams::Isha { q, k, v, output, .. } => {
            out.extend(mlp_blocks(&format!("{prefix}/q"), q));
            out.extend(mlp_blocks(&format!("{prefix}/k"), k));
            out.extend(mlp_blocks(&format!("{prefix}/v"), v));
            out.extend(mlp_blocks(&format!("{prefix}/output"), output));
        }
        AttentionParams::Mha { heads, output, .. } => {
            for (h, head) in heads.iter().enumerate() {
                out.extend(mlp_blocks(&format!("{prefix}/head{h}/q"), &head.q));
                out.extend(mlp_blocks(&format!("{prefix}/head{h}/k"), &head.k));
                out.extend(mlp_blocks(&format!("{prefix}/head{h}/v"), &head.v));
            }
            out.extend(mlp_blocks(&format!("{prefix}/output"), output));
        }
    }
    out
}

/// Gradient blocks matching [`attention_blocks`] order and naming.
pub fn attention_grad_blocks(prefix: &str, grads: &AttentionGrads) -> Vec<ParamBlock> {
    use crate::nn::mlp_grad_blocks;
    let mut out = Vec::new();
    match grads {
        AttentionGrads::Vanilla => {}
        AttentionGrads::Isha { q, k, v, output } => {
            out.extend(mlp_grad_blocks(&format!("{prefix}/q"), q));
            out.extend(mlp_grad_blocks(&format!("{prefix}/k"), k));
            out.extend(mlp_grad_blocks(&format!("{prefix}/v"), v));
            out.extend(mlp_grad_blocks(&format!("{prefix}/output"), output));
        }
        AttentionGrads::Mha { heads, output } => {
            for (h, (q, k, v)) in heads.iter().enumerate() {
                out.extend(mlp_grad_blocks(&format!("{prefix}/head{h}/q"), q));
                out.extend(mlp_grad_blocks(&format!("{prefix}/head{h}/k"), k));
                out.extend(mlp_grad_blocks(&format!("{prefix}/head{h}/v"), v));
            }
            out.extend(mlp_grad_blocks(&format!("{prefix}/output"), output));
        }
    }
    out
}

/// Restore an attention instance from blocks produced by [`attention_blocks`].
pub fn load_attention(
    prefix: &str,
    params: &mut AttentionParams,
    blocks: &[ParamBlock],
) -> Result<(), NnError> {
    match params {
        AttentionParams::Vanilla { .. } => Ok(()),
        AttentionParams::Isha { q, k, v, output, .. } => {
            load_mlp(&format!("{prefix}/q"), q, blocks)?;
            load_mlp(&format!("{prefix}/k"), k, blocks)?;
            load_mlp(&format!("{prefix}/v"), v, blocks)?;
            load_mlp(&format!("{prefix}/output"), output, blocks)
        }
        AttentionParams::Mha { heads, output, .. } => {
            for (h, head) in heads.iter_mut().enumerate() {
                load_mlp(&format!("{prefix}/head{h}/q"), &mut head.q, blocks)?;
                load_mlp(&format!("{prefix}/head{h}/k"), &mut head.k, blocks)?;
                load_mlp(&format!("{prefix}/head{h}/v"), &mut head.v, blocks)?;
            }
            load_mlp(&format!("{prefix}/output"), output, blocks)
        }
    }
}
