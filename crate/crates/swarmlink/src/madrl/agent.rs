//! One UAV agent's networks: actor/critic encoders that produce the uplink
//! embeddings, the Gaussian policy head, twin critic heads, and their target
//! copies.

use rand::Rng;

use crate::attention::EMBEDDING_DIM;
use crate::env::{ControlAction, UavState, WorldConfig};
use crate::nn::{
    gaussian_policy_sample, load_mlp, mlp_blocks, squashed_mean, Activation, AdamState,
    GaussianSample, Mlp, NnError, ParamBlock, Tensor2,
};

/// Raw state features fed to the encoders: position and velocity, normalized.
pub const STATE_DIM: usize = 4;
/// Planar acceleration command.
pub const ACTION_DIM: usize = 2;

/// Normalization constants shared by rollouts and updates.
#[derive(Debug, Clone, Copy)]
pub struct Scales {
    pub region_side_m: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Scales {
    pub fn from_world(cfg: &WorldConfig) -> Self {
        Self { region_side_m: cfg.region_side_m, v_max: cfg.v_max, a_max: cfg.a_max }
    }

    pub fn norm_state(&self, s: &UavState) -> [f64; STATE_DIM] {
        [
            s.position[0] / self.region_side_m,
            s.position[1] / self.region_side_m,
            s.velocity[0] / self.v_max,
            s.velocity[1] / self.v_max,
        ]
    }

    pub fn norm_action(&self, a: &ControlAction) -> [f64; ACTION_DIM] {
        [a.acceleration[0] / self.a_max, a.acceleration[1] / self.a_max]
    }
}

/// Per-agent learning rates.
#[derive(Debug, Clone, Copy)]
pub struct AgentLearningRates {
    pub actor: f64,
    pub critic: f64,
}

pub struct SacAgent {
    /// state -> 63-dim uplink embedding (actor path).
    pub actor_encoder: Mlp,
    /// state+action -> 63-dim uplink embedding (critic path).
    pub critic_encoder: Mlp,
    /// concat(embedding, message) -> (mean, log_std) of the squashed Gaussian.
    pub policy_head: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub target_critic_encoder: Mlp,
    pub target_q1: Mlp,
    pub target_q2: Mlp,
    pub opt_actor_encoder: AdamState,
    pub opt_policy: AdamState,
    pub opt_critic_encoder: AdamState,
    pub opt_q1: AdamState,
    pub opt_q2: AdamState,
}

impl SacAgent {
    /// `message_dim` is the helper-message width for the configured
    /// mechanism; the head input is the local embedding plus the message.
    pub fn new(message_dim: usize, lrs: AgentLearningRates, rng: &mut impl Rng) -> Self {
        let actor_encoder =
            Mlp::dense_stack(&[STATE_DIM, EMBEDDING_DIM, EMBEDDING_DIM, EMBEDDING_DIM], Activation::Relu, rng);
        let critic_encoder = Mlp::dense_stack(
            &[STATE_DIM + ACTION_DIM, EMBEDDING_DIM, EMBEDDING_DIM, EMBEDDING_DIM],
            Activation::Relu,
            rng,
        );
        let head_in = EMBEDDING_DIM + message_dim;
        let mut policy_head =
            Mlp::dense_stack(&[head_in, 100, 100, 100, 2 * ACTION_DIM], Activation::Relu, rng);
        policy_head.scale_last_dense(0.01);
        let mut q1 = Mlp::dense_stack(&[head_in, 100, 100, 100, 1], Activation::Relu, rng);
        let mut q2 = Mlp::dense_stack(&[head_in, 100, 100, 100, 1], Activation::Relu, rng);
        q1.scale_last_dense(0.01);
        q2.scale_last_dense(0.01);
        let target_critic_encoder = critic_encoder.clone();
        let target_q1 = q1.clone();
        let target_q2 = q2.clone();
        let opt_actor_encoder = AdamState::for_model(&actor_encoder, lrs.actor);
        let opt_policy = AdamState::for_model(&policy_head, lrs.actor);
        let opt_critic_encoder = AdamState::for_model(&critic_encoder, lrs.critic);
        let opt_q1 = AdamState::for_model(&q1, lrs.critic);
        let opt_q2 = AdamState::for_model(&q2, lrs.critic);
        Self {
            actor_encoder,
            critic_encoder,
            policy_head,
            q1,
            q2,
            target_critic_encoder,
            target_q1,
            target_q2,
            opt_actor_encoder,
            opt_policy,
            opt_critic_encoder,
            opt_q1,
            opt_q2,
        }
    }

    /// Actor-path embedding of a state.
    pub fn encode_state(&self, state: &UavState, scales: &Scales) -> Vec<f64> {
        let x = Tensor2::from_row(&scales.norm_state(state));
        self.actor_encoder.forward_nograd(&x).row(0).to_vec()
    }

    /// Critic-path embedding of a state-action pair.
    pub fn encode_state_action(
        &self,
        state: &UavState,
        action: &ControlAction,
        scales: &Scales,
    ) -> Vec<f64> {
        let s = scales.norm_state(state);
        let a = scales.norm_action(action);
        let mut input = [0.0; STATE_DIM + ACTION_DIM];
        input[..STATE_DIM].copy_from_slice(&s);
        input[STATE_DIM..].copy_from_slice(&a);
        let x = Tensor2::from_row(&input);
        self.critic_encoder.forward_nograd(&x).row(0).to_vec()
    }

    /// Policy output for one embedding+message pair: (mean, log_std) in the
    /// normalized action space.
    pub fn policy_output(&self, embedding: &[f64], message: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut input = Vec::with_capacity(embedding.len() + message.len());
        input.extend_from_slice(embedding);
        input.extend_from_slice(message);
        let out = self.policy_head.forward_nograd(&Tensor2::from_row(&input));
        let row = out.row(0);
        (row[..ACTION_DIM].to_vec(), row[ACTION_DIM..].to_vec())
    }

    /// Choose an action. Stochastic mode samples the squashed Gaussian;
    /// deterministic mode returns the squashed mean. Physical units.
    pub fn act(
        &self,
        state: &UavState,
        message: &[f64],
        stochastic: bool,
        scales: &Scales,
        rng: &mut impl Rng,
    ) -> (ControlAction, Option<GaussianSample>) {
        let embedding = self.encode_state(state, scales);
        let (mean, log_std) = self.policy_output(&embedding, message);
        if stochastic {
            let sample = gaussian_policy_sample(&mean, &log_std, scales.a_max, rng);
            let action = ControlAction::new([sample.action[0], sample.action[1]]);
            (action, Some(sample))
        } else {
            let a = squashed_mean(&mean, scales.a_max);
            (ControlAction::new([a[0], a[1]]), None)
        }
    }

    /// Twin critic estimates for a state-action pair and critic-path message.
    pub fn critic_value(
        &self,
        state: &UavState,
        action: &ControlAction,
        message: &[f64],
        scales: &Scales,
    ) -> (f64, f64) {
        let embedding = self.encode_state_action(state, action, scales);
        let mut input = Vec::with_capacity(embedding.len() + message.len());
        input.extend_from_slice(&embedding);
        input.extend_from_slice(message);
        let x = Tensor2::from_row(&input);
        (
            self.q1.forward_nograd(&x).get(0, 0),
            self.q2.forward_nograd(&x).get(0, 0),
        )
    }

    /// Agent-side model size (encoders plus heads; targets are copies and
    /// not counted).
    pub fn parameter_count(&self) -> usize {
        self.actor_encoder.parameter_count()
            + self.critic_encoder.parameter_count()
            + self.policy_head.parameter_count()
            + self.q1.parameter_count()
            + self.q2.parameter_count()
    }

    pub fn blocks(&self, prefix: &str) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        out.extend(mlp_blocks(&format!("{prefix}/actor_encoder"), &self.actor_encoder));
        out.extend(mlp_blocks(&format!("{prefix}/critic_encoder"), &self.critic_encoder));
        out.extend(mlp_blocks(&format!("{prefix}/policy_head"), &self.policy_head));
        out.extend(mlp_blocks(&format!("{prefix}/q1"), &self.q1));
        out.extend(mlp_blocks(&format!("{prefix}/q2"), &self.q2));
        out.extend(mlp_blocks(&format!("{prefix}/target_critic_encoder"), &self.target_critic_encoder));
        out.extend(mlp_blocks(&format!("{prefix}/target_q1"), &self.target_q1));
        out.extend(mlp_blocks(&format!("{prefix}/target_q2"), &self.target_q2));
        out
    }

    pub fn load(&mut self, prefix: &str, blocks: &[ParamBlock]) -> Result<(), NnError> {
        load_mlp(&format!("{prefix}/actor_encoder"), &mut self.actor_encoder, blocks)?;
        load_mlp(&format!("{prefix}/critic_encoder"), &mut self.critic_encoder, blocks)?;
        load_mlp(&format!("{prefix}/policy_head"), &mut self.policy_head, blocks)?;
        load_mlp(&format!("{prefix}/q1"), &mut self.q1, blocks)?;
        load_mlp(&format!("{prefix}/q2"), &mut self.q2, blocks)?;
        load_mlp(&format!("{prefix}/target_critic_encoder"), &mut self.target_critic_encoder, blocks)?;
        load_mlp(&format!("{prefix}/target_q1"), &mut self.target_q1, blocks)?;
        load_mlp(&format!("{prefix}/target_q2"), &mut self.target_q2, blocks)?;
        Ok(())
    }
}
