//! Batched soft actor-critic update across all agents and the helper.
//!
//! Per sampled round, current-step messages are recomputed from stored
//! states/actions so gradients reach the helper attention parameters; the
//! bootstrap target replays the stored next-round messages as data. Critic
//! targets use twin target heads with the minimum combination and an
//! entropy bonus; the actor maximizes `min Q - lambda * log pi` through the
//! reparameterized squashed Gaussian.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::agent::{Scales, SacAgent, ACTION_DIM, STATE_DIM};
use super::replay::ReplayBuffer;
use super::{Helper, SacConfig};
use crate::attention::EMBEDDING_DIM;
use crate::nn::{
    gaussian_policy_backward, gaussian_policy_with_noise, soft_update, GaussianSample, Tensor2,
};

/// Loss and entropy diagnostics for one update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Mean of -log pi over the resampled actions.
    pub mean_entropy: f64,
    /// Update abandoned because a loss went non-finite.
    pub skipped: bool,
}

/// Rows of `stacked` belonging to one agent, assuming round-major layout
/// (row `b * n_agents + agent`).
fn agent_rows(stacked: &Tensor2, n_agents: usize, agent: usize) -> Tensor2 {
    let b = stacked.rows() / n_agents;
    let mut out = Tensor2::zeros(b, stacked.cols());
    for i in 0..b {
        out.row_mut(i).copy_from_slice(stacked.row(i * n_agents + agent));
    }
    out
}

fn set_agent_rows(stacked: &mut Tensor2, n_agents: usize, agent: usize, part: &Tensor2) {
    for i in 0..part.rows() {
        stacked.row_mut(i * n_agents + agent).copy_from_slice(part.row(i));
    }
}

/// Sample each row's squashed Gaussian with supplied noise. Policy nets emit
/// `[mean | log_std]`; actions live in the normalized space (scale 1).
fn sample_rows(
    policy_out: &Tensor2,
    noise: &Tensor2,
) -> (Tensor2, Vec<f64>, Vec<GaussianSample>) {
    let b = policy_out.rows();
    let mut actions = Tensor2::zeros(b, ACTION_DIM);
    let mut log_probs = Vec::with_capacity(b);
    let mut samples = Vec::with_capacity(b);
    for r in 0..b {
        let row = policy_out.row(r);
        let sample = gaussian_policy_with_noise(
            &row[..ACTION_DIM],
            &row[ACTION_DIM..],
            1.0,
            noise.row(r),
        );
        actions.row_mut(r).copy_from_slice(&sample.action);
        log_probs.push(sample.log_prob);
        samples.push(sample);
    }
    (actions, log_probs, samples)
}

fn draw_noise(rng: &mut ChaCha8Rng, rows: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(rows, ACTION_DIM);
    for v in out.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    out
}

/// Per-network gradients of one update, exposed for verification.
pub struct GradBundle {
    pub critic_encoders: Vec<crate::nn::MlpGrads>,
    pub q1: Vec<crate::nn::MlpGrads>,
    pub q2: Vec<crate::nn::MlpGrads>,
    pub actor_encoders: Vec<crate::nn::MlpGrads>,
    pub policy_heads: Vec<crate::nn::MlpGrads>,
    pub critic_attention: crate::attention::AttentionGrads,
    pub actor_attention: crate::attention::AttentionGrads,
}

/// The batch a single update consumes, extracted from sampled rounds.
pub struct UpdateBatch {
    pub s: Vec<Tensor2>,
    pub u: Vec<Tensor2>,
    pub s_next: Vec<Tensor2>,
    pub rewards: Vec<Vec<f64>>,
    pub m_next_actor: Vec<Tensor2>,
    pub m_next_critic: Vec<Tensor2>,
    pub cont: Vec<f64>,
    pub noise_next: Vec<Tensor2>,
    pub noise_new: Vec<Tensor2>,
}

impl UpdateBatch {
    pub fn gather(
        agents_len: usize,
        mdim: usize,
        buffer: &ReplayBuffer,
        indices: &[usize],
        scales: &Scales,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = agents_len;
        let b = indices.len();
        let mut s = vec![Tensor2::zeros(b, STATE_DIM); n];
        let mut u = vec![Tensor2::zeros(b, ACTION_DIM); n];
        let mut s_next = vec![Tensor2::zeros(b, STATE_DIM); n];
        let mut rewards = vec![vec![0.0; b]; n];
        let mut m_next_actor = vec![Tensor2::zeros(b, mdim); n];
        let mut m_next_critic = vec![Tensor2::zeros(b, mdim); n];
        let mut cont = vec![0.0; b];
        for (row, &idx) in indices.iter().enumerate() {
            let rec = buffer.get(idx);
            cont[row] = if rec.terminal { 0.0 } else { 1.0 };
            for agent in 0..n {
                let tr = &rec.per_agent[agent];
                s[agent].row_mut(row).copy_from_slice(&scales.norm_state(&tr.state));
                u[agent].row_mut(row).copy_from_slice(&scales.norm_action(&tr.action));
                s_next[agent]
                    .row_mut(row)
                    .copy_from_slice(&scales.norm_state(&tr.next_state));
                rewards[agent][row] = tr.reward;
                m_next_actor[agent].row_mut(row).copy_from_slice(&tr.next_message);
                m_next_critic[agent]
                    .row_mut(row)
                    .copy_from_slice(&rec.next_critic_messages[agent]);
            }
        }
        // Noise is pre-drawn in a fixed order so results do not depend on
        // evaluation order.
        let noise_next: Vec<Tensor2> = (0..n).map(|_| draw_noise(rng, b)).collect();
        let noise_new: Vec<Tensor2> = (0..n).map(|_| draw_noise(rng, b)).collect();
        Self { s, u, s_next, rewards, m_next_actor, m_next_critic, cont, noise_next, noise_new }
    }
}

/// One gradient update over a sampled batch of rounds.
pub fn sac_update(
    agents: &mut [SacAgent],
    helper: &mut Helper,
    buffer: &ReplayBuffer,
    indices: &[usize],
    cfg: &SacConfig,
    scales: &Scales,
    rng: &mut ChaCha8Rng,
) -> UpdateDiagnostics {
    let batch = UpdateBatch::gather(agents.len(), helper.message_dim(), buffer, indices, scales, rng);
    sac_update_batch(agents, helper, &batch, cfg, true).0
}

/// Compute gradients on a prepared batch; `apply` controls whether parameter
/// and target updates actually happen. With `apply = false` both losses and
/// all gradients are evaluated at the incoming parameters.
pub fn sac_update_batch(
    agents: &mut [SacAgent],
    helper: &mut Helper,
    batch: &UpdateBatch,
    cfg: &SacConfig,
    apply: bool,
) -> (UpdateDiagnostics, Option<GradBundle>) {
    let n = agents.len();
    let b = batch.cont.len();
    let mdim = helper.message_dim();
    debug_assert!(b > 0);
    let UpdateBatch { s, u, s_next, rewards, m_next_actor, m_next_critic, cont, noise_next, noise_new } =
        batch;

    // ---- Bootstrap targets (constants). -----------------------------------
    let mut targets = vec![vec![0.0; b]; n];
    for agent in 0..n {
        let a = &agents[agent];
        let xpi_next = a.actor_encoder.forward_nograd(&s_next[agent]);
        let pol_out = a
            .policy_head
            .forward_nograd(&Tensor2::hcat(&[&xpi_next, &m_next_actor[agent]]));
        let (a_next, logp_next, _) = sample_rows(&pol_out, &noise_next[agent]);
        let xq_next = a
            .target_critic_encoder
            .forward_nograd(&Tensor2::hcat(&[&s_next[agent], &a_next]));
        let tq_in = Tensor2::hcat(&[&xq_next, &m_next_critic[agent]]);
        let q1t = a.target_q1.forward_nograd(&tq_in);
        let q2t = a.target_q2.forward_nograd(&tq_in);
        for row in 0..b {
            let q = q1t.get(row, 0).min(q2t.get(row, 0));
            targets[agent][row] = rewards[agent][row]
                + cfg.gamma * cont[row] * (q - cfg.entropy_weight * logp_next[row]);
        }
    }

    // ---- Critic step. ------------------------------------------------------
    let mut enc_tapes = Vec::with_capacity(n);
    let mut xq_stack = Tensor2::zeros(b * n, EMBEDDING_DIM);
    for agent in 0..n {
        let enc_in = Tensor2::hcat(&[&s[agent], &u[agent]]);
        let tape = agents[agent].critic_encoder.forward(&enc_in);
        set_agent_rows(&mut xq_stack, n, agent, tape.output());
        enc_tapes.push(tape);
    }
    let (mq_stack, attn_q_fwd) = helper.critic_attention.forward_batch(&xq_stack);

    let mut critic_loss = 0.0;
    let mut head_tapes = Vec::with_capacity(n);
    let mut q_preds = Vec::with_capacity(n);
    let mut mq_per_agent = Vec::with_capacity(n);
    for agent in 0..n {
        let mq = agent_rows(&mq_stack, n, agent);
        let head_in = Tensor2::hcat(&[enc_tapes[agent].output(), &mq]);
        let t1 = agents[agent].q1.forward(&head_in);
        let t2 = agents[agent].q2.forward(&head_in);
        let (q1v, q2v) = (t1.output().clone(), t2.output().clone());
        for row in 0..b {
            let e1 = q1v.get(row, 0) - targets[agent][row];
            let e2 = q2v.get(row, 0) - targets[agent][row];
            critic_loss += (e1 * e1 + e2 * e2) / b as f64;
        }
        head_tapes.push((t1, t2));
        q_preds.push((q1v, q2v));
        mq_per_agent.push(mq);
    }
    critic_loss /= n as f64;
    if !critic_loss.is_finite() {
        return (
            UpdateDiagnostics {
                critic_loss,
                actor_loss: f64::NAN,
                mean_entropy: f64::NAN,
                skipped: true,
            },
            None,
        );
    }

    let mut g_attn_q = helper.critic_attention.zero_grads();
    let mut dmq_stack = Tensor2::zeros(b * n, mdim);
    let mut dxq_direct = Vec::with_capacity(n);
    let mut g_enc = Vec::with_capacity(n);
    let mut g_q1 = Vec::with_capacity(n);
    let mut g_q2 = Vec::with_capacity(n);
    for agent in 0..n {
        let (t1, t2) = &head_tapes[agent];
        let (q1v, q2v) = &q_preds[agent];
        let mut d1 = Tensor2::zeros(b, 1);
        let mut d2 = Tensor2::zeros(b, 1);
        for row in 0..b {
            d1.set(row, 0, 2.0 * (q1v.get(row, 0) - targets[agent][row]) / b as f64);
            d2.set(row, 0, 2.0 * (q2v.get(row, 0) - targets[agent][row]) / b as f64);
        }
        let mut gq1 = agents[agent].q1.zero_grads();
        let mut gq2 = agents[agent].q2.zero_grads();
        let mut dhead = agents[agent].q1.backward(t1, &d1, Some(&mut gq1));
        dhead.add_assign(&agents[agent].q2.backward(t2, &d2, Some(&mut gq2)));
        let (dxq, dmq) = dhead.hsplit(EMBEDDING_DIM);
        set_agent_rows(&mut dmq_stack, n, agent, &dmq);
        dxq_direct.push(dxq);
        g_q1.push(gq1);
        g_q2.push(gq2);
    }
    let dxq_attn = helper
        .critic_attention
        .backward_batch(&attn_q_fwd, &dmq_stack, Some(&mut g_attn_q));
    for agent in 0..n {
        let mut dxq = dxq_direct[agent].clone();
        dxq.add_assign(&agent_rows(&dxq_attn, n, agent));
        let mut genc = agents[agent].critic_encoder.zero_grads();
        agents[agent]
            .critic_encoder
            .backward(&enc_tapes[agent], &dxq, Some(&mut genc));
        g_enc.push(genc);
    }
    if apply {
        for agent in 0..n {
            let a = &mut agents[agent];
            a.opt_critic_encoder.step(&mut a.critic_encoder, &g_enc[agent]);
            a.opt_q1.step(&mut a.q1, &g_q1[agent]);
            a.opt_q2.step(&mut a.q2, &g_q2[agent]);
        }
        helper
            .opt_critic
            .step(&mut helper.critic_attention, &g_attn_q);
    }

    // ---- Actor step. -------------------------------------------------------
    let mut a_tapes = Vec::with_capacity(n);
    let mut xpi_stack = Tensor2::zeros(b * n, EMBEDDING_DIM);
    for agent in 0..n {
        let tape = agents[agent].actor_encoder.forward(&s[agent]);
        set_agent_rows(&mut xpi_stack, n, agent, tape.output());
        a_tapes.push(tape);
    }
    let (mpi_stack, attn_pi_fwd) = helper.actor_attention.forward_batch(&xpi_stack);

    let mut actor_loss = 0.0;
    let mut entropy = 0.0;
    let mut pol_tapes = Vec::with_capacity(n);
    let mut samples_per_agent = Vec::with_capacity(n);
    let mut qe_tapes = Vec::with_capacity(n);
    let mut qhead_tapes = Vec::with_capacity(n);
    for agent in 0..n {
        let mpi = agent_rows(&mpi_stack, n, agent);
        let pol_in = Tensor2::hcat(&[a_tapes[agent].output(), &mpi]);
        let pol_tape = agents[agent].policy_head.forward(&pol_in);
        let (a_new, logp_new, samples) = sample_rows(pol_tape.output(), &noise_new[agent]);
        // Q at the resampled action; the critic-path message is held fixed
        // at its stored-action value, so action gradients flow through the
        // critic encoder only.
        let qe_tape = agents[agent]
            .critic_encoder
            .forward(&Tensor2::hcat(&[&s[agent], &a_new]));
        let head_in = Tensor2::hcat(&[qe_tape.output(), &mq_per_agent[agent]]);
        let h1 = agents[agent].q1.forward(&head_in);
        let h2 = agents[agent].q2.forward(&head_in);
        for row in 0..b {
            let qmin = h1.output().get(row, 0).min(h2.output().get(row, 0));
            actor_loss += (cfg.entropy_weight * logp_new[row] - qmin) / b as f64;
            entropy += -logp_new[row] / (b * n) as f64;
        }
        pol_tapes.push(pol_tape);
        samples_per_agent.push(samples);
        qe_tapes.push(qe_tape);
        qhead_tapes.push((h1, h2));
    }
    actor_loss /= n as f64;
    if !actor_loss.is_finite() {
        return (
            UpdateDiagnostics {
                critic_loss,
                actor_loss,
                mean_entropy: entropy,
                skipped: true,
            },
            None,
        );
    }

    let mut g_attn_pi = helper.actor_attention.zero_grads();
    let mut dmpi_stack = Tensor2::zeros(b * n, mdim);
    let mut dxpi_direct = Vec::with_capacity(n);
    let mut g_pol = Vec::with_capacity(n);
    for agent in 0..n {
        let (h1, h2) = &qhead_tapes[agent];
        let mut d1 = Tensor2::zeros(b, 1);
        let mut d2 = Tensor2::zeros(b, 1);
        for row in 0..b {
            // route the gradient through whichever head realized the min
            if h1.output().get(row, 0) <= h2.output().get(row, 0) {
                d1.set(row, 0, -1.0 / b as f64);
            } else {
                d2.set(row, 0, -1.0 / b as f64);
            }
        }
        let mut dhead = agents[agent].q1.backward_input(h1, &d1);
        dhead.add_assign(&agents[agent].q2.backward_input(h2, &d2));
        let (dxq_new, _dmq_frozen) = dhead.hsplit(EMBEDDING_DIM);
        let denc_in = agents[agent]
            .critic_encoder
            .backward_input(&qe_tapes[agent], &dxq_new);
        let (_ds, da_new) = denc_in.hsplit(STATE_DIM);
        let mut dpol_out = Tensor2::zeros(b, 2 * ACTION_DIM);
        for row in 0..b {
            let (dmean, dlogstd) = gaussian_policy_backward(
                &samples_per_agent[agent][row],
                da_new.row(row),
                cfg.entropy_weight / b as f64,
            );
            let dst = dpol_out.row_mut(row);
            dst[..ACTION_DIM].copy_from_slice(&dmean);
            dst[ACTION_DIM..].copy_from_slice(&dlogstd);
        }
        let mut gpol = agents[agent].policy_head.zero_grads();
        let dpol_in = agents[agent]
            .policy_head
            .backward(&pol_tapes[agent], &dpol_out, Some(&mut gpol));
        let (dxpi, dmpi) = dpol_in.hsplit(EMBEDDING_DIM);
        set_agent_rows(&mut dmpi_stack, n, agent, &dmpi);
        dxpi_direct.push(dxpi);
        g_pol.push(gpol);
    }
    let dxpi_attn = helper
        .actor_attention
        .backward_batch(&attn_pi_fwd, &dmpi_stack, Some(&mut g_attn_pi));
    let mut g_aenc = Vec::with_capacity(n);
    for agent in 0..n {
        let mut dxpi = dxpi_direct[agent].clone();
        dxpi.add_assign(&agent_rows(&dxpi_attn, n, agent));
        let mut genc = agents[agent].actor_encoder.zero_grads();
        agents[agent]
            .actor_encoder
            .backward(&a_tapes[agent], &dxpi, Some(&mut genc));
        g_aenc.push(genc);
    }
    if apply {
        for agent in 0..n {
            let a = &mut agents[agent];
            a.opt_actor_encoder.step(&mut a.actor_encoder, &g_aenc[agent]);
            a.opt_policy.step(&mut a.policy_head, &g_pol[agent]);
        }
        helper.opt_actor.step(&mut helper.actor_attention, &g_attn_pi);

        // ---- Target tracking. ----------------------------------------------
        for a in agents.iter_mut() {
            soft_update(&mut a.target_critic_encoder, &a.critic_encoder, cfg.tau);
            soft_update(&mut a.target_q1, &a.q1, cfg.tau);
            soft_update(&mut a.target_q2, &a.q2, cfg.tau);
        }
    }

    let bundle = GradBundle {
        critic_encoders: g_enc,
        q1: g_q1,
        q2: g_q2,
        actor_encoders: g_aenc,
        policy_heads: g_pol,
        critic_attention: g_attn_q,
        actor_attention: g_attn_pi,
    };
    (
        UpdateDiagnostics { critic_loss, actor_loss, mean_entropy: entropy, skipped: false },
        Some(bundle),
    )
}

/// Forward-only evaluation of the two losses on a prepared batch, at the
/// current parameters, with the batch's fixed noise. Mirrors
/// [`sac_update_batch`] with `apply = false` and is what finite-difference
/// probes evaluate.
pub fn sac_losses(
    agents: &[SacAgent],
    helper: &Helper,
    batch: &UpdateBatch,
    cfg: &SacConfig,
) -> (f64, f64) {
    let n = agents.len();
    let b = batch.cont.len();
    let mut targets = vec![vec![0.0; b]; n];
    for agent in 0..n {
        let a = &agents[agent];
        let xpi_next = a.actor_encoder.forward_nograd(&batch.s_next[agent]);
        let pol_out = a
            .policy_head
            .forward_nograd(&Tensor2::hcat(&[&xpi_next, &batch.m_next_actor[agent]]));
        let (a_next, logp_next, _) = sample_rows(&pol_out, &batch.noise_next[agent]);
        let xq_next = a
            .target_critic_encoder
            .forward_nograd(&Tensor2::hcat(&[&batch.s_next[agent], &a_next]));
        let tq_in = Tensor2::hcat(&[&xq_next, &batch.m_next_critic[agent]]);
        let q1t = a.target_q1.forward_nograd(&tq_in);
        let q2t = a.target_q2.forward_nograd(&tq_in);
        for row in 0..b {
            let q = q1t.get(row, 0).min(q2t.get(row, 0));
            targets[agent][row] = batch.rewards[agent][row]
                + cfg.gamma * batch.cont[row] * (q - cfg.entropy_weight * logp_next[row]);
        }
    }

    let mut xq_stack = Tensor2::zeros(b * n, EMBEDDING_DIM);
    let mut xq_per_agent = Vec::with_capacity(n);
    for agent in 0..n {
        let enc_in = Tensor2::hcat(&[&batch.s[agent], &batch.u[agent]]);
        let xq = agents[agent].critic_encoder.forward_nograd(&enc_in);
        set_agent_rows(&mut xq_stack, n, agent, &xq);
        xq_per_agent.push(xq);
    }
    let mq_stack = helper.critic_attention.forward_batch_nograd(&xq_stack);
    let mut critic_loss = 0.0;
    let mut mq_per_agent = Vec::with_capacity(n);
    for agent in 0..n {
        let mq = agent_rows(&mq_stack, n, agent);
        let head_in = Tensor2::hcat(&[&xq_per_agent[agent], &mq]);
        let q1 = agents[agent].q1.forward_nograd(&head_in);
        let q2 = agents[agent].q2.forward_nograd(&head_in);
        for row in 0..b {
            let e1 = q1.get(row, 0) - targets[agent][row];
            let e2 = q2.get(row, 0) - targets[agent][row];
            critic_loss += (e1 * e1 + e2 * e2) / b as f64;
        }
        mq_per_agent.push(mq);
    }
    critic_loss /= n as f64;

    let mut xpi_stack = Tensor2::zeros(b * n, EMBEDDING_DIM);
    let mut xpi_per_agent = Vec::with_capacity(n);
    for agent in 0..n {
        let xpi = agents[agent].actor_encoder.forward_nograd(&batch.s[agent]);
        set_agent_rows(&mut xpi_stack, n, agent, &xpi);
        xpi_per_agent.push(xpi);
    }
    let mpi_stack = helper.actor_attention.forward_batch_nograd(&xpi_stack);
    let mut actor_loss = 0.0;
    for agent in 0..n {
        let mpi = agent_rows(&mpi_stack, n, agent);
        let pol_in = Tensor2::hcat(&[&xpi_per_agent[agent], &mpi]);
        let pol_out = agents[agent].policy_head.forward_nograd(&pol_in);
        let (a_new, logp_new, _) = sample_rows(&pol_out, &batch.noise_new[agent]);
        let xq_new = agents[agent]
            .critic_encoder
            .forward_nograd(&Tensor2::hcat(&[&batch.s[agent], &a_new]));
        let head_in = Tensor2::hcat(&[&xq_new, &mq_per_agent[agent]]);
        let h1 = agents[agent].q1.forward_nograd(&head_in);
        let h2 = agents[agent].q2.forward_nograd(&head_in);
        for row in 0..b {
            let qmin = h1.get(row, 0).min(h2.get(row, 0));
            actor_loss += (cfg.entropy_weight * logp_new[row] - qmin) / b as f64;
        }
    }
    actor_loss /= n as f64;
    (critic_loss, actor_loss)
}
