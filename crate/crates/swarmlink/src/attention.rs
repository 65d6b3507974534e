//! The helper's message-generation mechanisms.
//!
//! Given the set of per-agent state embeddings, the helper computes one
//! message per agent:
//!
//! - **ISHA** (iterative single-head attention): one shared q/k/v set; at
//!   each iteration a temperature softmax is taken over the not-yet
//!   eliminated agents, a 63-dim weighted value sum is compressed to a
//!   21-dim sub-message, and the highest-scoring agent is eliminated from
//!   later iterations. The message is the iteration-ordered tuple of
//!   sub-messages.
//! - **MHA**: parallel heads with independent q/k/v projections to
//!   63/N_H dims each, softmax over the other agents, concatenated and
//!   projected back to 63.
//! - **Vanilla**: the raw foreign embeddings, concatenated in agent order.
//!
//! Gradients flow through everything except the argmax eliminations, whose
//! masks are held fixed during the backward pass.

use rand::Rng;

use crate::nn::{
    linear_norm, single_dense, softmax_temp, softmax_temp_backward, Activation, Mlp, MlpGrads,
    MlpTape, Tensor2,
};

/// Embedding width fixed by the helper's 63 x 63 q/k/v networks.
pub const EMBEDDING_DIM: usize = 63;
/// ISHA sub-message width fixed by the 63 x 21 output network.
pub const SUB_MESSAGE_DIM: usize = 21;

#[derive(Debug, thiserror::Error)]
pub enum AttentionError {
    #[error("iterations ({iterations}) must be <= n_agents - 1 ({max})")]
    TooManyIterations { iterations: usize, max: usize },
    #[error("embedding dim {dim} is not divisible by {heads} heads")]
    HeadsDontDivide { dim: usize, heads: usize },
    #[error("mechanism needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("the vanilla relay has no attention scores")]
    NoScores,
}

/// Per-agent embeddings for one round, one row per agent.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub vectors: Tensor2,
}

impl EmbeddingSet {
    pub fn new(vectors: Tensor2) -> Self {
        assert_eq!(vectors.cols(), EMBEDDING_DIM);
        Self { vectors }
    }

    pub fn n_agents(&self) -> usize {
        self.vectors.rows()
    }
}

/// One agent's attention internals: relevance scores, per-iteration (or
/// per-head) score rows, and the elimination order.
#[derive(Debug, Clone)]
pub struct AttentionWork {
    pub agent: usize,
    pub query: Vec<f64>,
    pub keys: Tensor2,
    pub values: Tensor2,
    /// Dot-product relevance against every agent (self included; self is
    /// masked in the score rows).
    pub rho: Vec<f64>,
    /// Row `c` holds the iteration-`c` (ISHA) or head-`c` (MHA) scores.
    pub scores: Vec<Vec<f64>>,
    /// ISHA elimination order (argmax per iteration); empty for MHA.
    pub eliminated: Vec<usize>,
}

impl AttentionWork {
    /// Rows = iterations/heads, cols = agents; what the heatmap dump writes.
    pub fn score_heatmap(&self) -> Vec<Vec<f64>> {
        self.scores.clone()
    }
}

/// One agent's helper message.
#[derive(Debug, Clone)]
pub struct HelperMessage {
    pub agent: usize,
    /// ISHA: the N_I sub-messages in iteration order; MHA: one 63-dim
    /// message; Vanilla: the N-1 foreign embeddings in agent order.
    pub data: Vec<f64>,
}

/// Relevance of agent `n`'s query against every key row.
pub fn relevance_scores(query: &[f64], keys: &Tensor2) -> Vec<f64> {
    (0..keys.rows())
        .map(|m| dot(query, keys.row(m)))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of the iterative score calculation for one agent.
#[derive(Debug, Clone)]
pub struct IshaScores {
    /// One score vector per iteration; entries on eliminated/self agents are
    /// exactly zero.
    pub alphas: Vec<Vec<f64>>,
    /// Agent eliminated after each iteration (the per-iteration argmax).
    pub eliminated: Vec<usize>,
}

/// The elimination loop: start with the self-agent masked, then repeatedly
/// softmax the relevance scores and knock out the argmax. Ties break toward
/// the lowest agent index.
pub fn isha_scores(
    rho: &[f64],
    agent: usize,
    iterations: usize,
    beta: f64,
) -> Result<IshaScores, AttentionError> {
    let n = rho.len();
    if iterations > n.saturating_sub(1) {
        return Err(AttentionError::TooManyIterations { iterations, max: n.saturating_sub(1) });
    }
    let mut mask = vec![false; n];
    mask[agent] = true;
    let mut alphas = Vec::with_capacity(iterations);
    let mut eliminated = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let alpha = softmax_temp(rho, beta, &mask).expect("unmasked entries remain by iteration bound");
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for (m, &a) in alpha.iter().enumerate() {
            if !mask[m] && a > best_score {
                best = m;
                best_score = a;
            }
        }
        mask[best] = true;
        eliminated.push(best);
        alphas.push(alpha);
    }
    Ok(IshaScores { alphas, eliminated })
}

pub struct Head {
    pub q: Mlp,
    pub k: Mlp,
    pub v: Mlp,
}

/// Parameters of one message-generation mechanism instance. The training
/// stack keeps two instances, one for the actor path and one for the critic
/// path.
pub enum AttentionParams {
    Vanilla { n_agents: usize },
    Isha { q: Mlp, k: Mlp, v: Mlp, output: Mlp, iterations: usize, beta: f64, n_agents: usize },
    Mha { heads: Vec<Head>, output: Mlp, n_agents: usize },
}

/// Gradient buffers mirroring [`AttentionParams`].
pub enum AttentionGrads {
    Vanilla,
    Isha { q: MlpGrads, k: MlpGrads, v: MlpGrads, output: MlpGrads },
    Mha { heads: Vec<(MlpGrads, MlpGrads, MlpGrads)>, output: MlpGrads },
}

impl AttentionGrads {
    pub fn zero(&mut self) {
        match self {
            AttentionGrads::Vanilla => {}
            AttentionGrads::Isha { q, k, v, output } => {
                q.zero();
                k.zero();
                v.zero();
                output.zero();
            }
            AttentionGrads::Mha { heads, output } => {
                for (q, k, v) in heads {
                    q.zero();
                    k.zero();
                    v.zero();
                }
                output.zero();
            }
        }
    }
}

/// Everything a batched forward pass retains for backward.
pub struct AttentionForward {
    q_tape: Option<MlpTape>,
    k_tape: Option<MlpTape>,
    v_tape: Option<MlpTape>,
    /// MHA: one (q, k, v) tape triple per head.
    head_tapes: Vec<(MlpTape, MlpTape, MlpTape)>,
    output_tape: Option<MlpTape>,
    /// Per (entry, level): score vector over agents. Entry = round-major
    /// (round * n_agents + agent); level = iteration (ISHA) or head (MHA).
    alphas: Vec<Vec<Vec<f64>>>,
    n_rounds: usize,
}

impl AttentionParams {
    pub fn new_vanilla(n_agents: usize) -> Self {
        AttentionParams::Vanilla { n_agents }
    }

    pub fn new_isha(
        n_agents: usize,
        iterations: usize,
        beta: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, AttentionError> {
        if n_agents < 2 {
            return Err(AttentionError::TooFewAgents(n_agents));
        }
        if iterations == 0 || iterations > n_agents - 1 {
            return Err(AttentionError::TooManyIterations { iterations, max: n_agents - 1 });
        }
        Ok(AttentionParams::Isha {
            q: linear_norm(EMBEDDING_DIM, EMBEDDING_DIM, rng),
            k: linear_norm(EMBEDDING_DIM, EMBEDDING_DIM, rng),
            v: linear_norm(EMBEDDING_DIM, EMBEDDING_DIM, rng),
            // the non-linear compressor that shrinks each weighted sum
            output: single_dense(EMBEDDING_DIM, SUB_MESSAGE_DIM, Activation::Relu, rng),
            iterations,
            beta,
            n_agents,
        })
    }

    pub fn new_mha(
        n_agents: usize,
        n_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, AttentionError> {
        if n_agents < 2 {
            return Err(AttentionError::TooFewAgents(n_agents));
        }
        if n_heads == 0 || EMBEDDING_DIM % n_heads != 0 {
            return Err(AttentionError::HeadsDontDivide { dim: EMBEDDING_DIM, heads: n_heads });
        }
        let head_dim = EMBEDDING_DIM / n_heads;
        let heads = (0..n_heads)
            .map(|_| Head {
                q: linear_norm(EMBEDDING_DIM, head_dim, rng),
                k: linear_norm(EMBEDDING_DIM, head_dim, rng),
                v: linear_norm(EMBEDDING_DIM, head_dim, rng),
            })
            .collect();
        Ok(AttentionParams::Mha {
            heads,
            output: single_dense(EMBEDDING_DIM, EMBEDDING_DIM, Activation::Identity, rng),
            n_agents,
        })
    }

    pub fn n_agents(&self) -> usize {
        match self {
            AttentionParams::Vanilla { n_agents }
            | AttentionParams::Isha { n_agents, .. }
            | AttentionParams::Mha { n_agents, .. } => *n_agents,
        }
    }

    /// Width of one agent's message.
    pub fn message_dim(&self) -> usize {
        match self {
            AttentionParams::Vanilla { n_agents } => (n_agents - 1) * EMBEDDING_DIM,
            AttentionParams::Isha { iterations, .. } => iterations * SUB_MESSAGE_DIM,
            AttentionParams::Mha { .. } => EMBEDDING_DIM,
        }
    }

    /// Helper-side model size.
    pub fn parameter_count(&self) -> usize {
        match self {
            AttentionParams::Vanilla { .. } => 0,
            AttentionParams::Isha { q, k, v, output, .. } => {
                q.parameter_count() + k.parameter_count() + v.parameter_count() + output.parameter_count()
            }
            AttentionParams::Mha { heads, output, .. } => {
                heads
                    .iter()
                    .map(|h| h.q.parameter_count() + h.k.parameter_count() + h.v.parameter_count())
                    .sum::<usize>()
                    + output.parameter_count()
            }
        }
    }

    pub fn zero_grads(&self) -> AttentionGrads {
        match self {
            AttentionParams::Vanilla { .. } => AttentionGrads::Vanilla,
            AttentionParams::Isha { q, k, v, output, .. } => AttentionGrads::Isha {
                q: q.zero_grads(),
                k: k.zero_grads(),
                v: v.zero_grads(),
                output: output.zero_grads(),
            },
            AttentionParams::Mha { heads, output, .. } => AttentionGrads::Mha {
                heads: heads
                    .iter()
                    .map(|h| (h.q.zero_grads(), h.k.zero_grads(), h.v.zero_grads()))
                    .collect(),
                output: output.zero_grads(),
            },
        }
    }

    /// q/k/v projections of an embedding set (the ISHA shared set).
    pub fn compute_qkv(&self, embeddings: &Tensor2) -> Option<(Tensor2, Tensor2, Tensor2)> {
        match self {
            AttentionParams::Isha { q, k, v, .. } => Some((
                q.forward_nograd(embeddings),
                k.forward_nograd(embeddings),
                v.forward_nograd(embeddings),
            )),
            _ => None,
        }
    }

    /// Batched forward pass. `x` stacks `n_rounds` rounds of `n_agents`
    /// embeddings each, round-major; the result has one message row per
    /// (round, agent) in the same order.
    pub fn forward_batch(&self, x: &Tensor2) -> (Tensor2, AttentionForward) {
        let n = self.n_agents();
        assert_eq!(x.rows() % n, 0, "stacked rows must be a multiple of n_agents");
        let n_rounds = x.rows() / n;
        match self {
            AttentionParams::Vanilla { .. } => {
                let msg = vanilla_forward(x, n);
                (
                    msg,
                    AttentionForward {
                        q_tape: None,
                        k_tape: None,
                        v_tape: None,
                        head_tapes: Vec::new(),
                        output_tape: None,
                        alphas: Vec::new(),
                        n_rounds,
                    },
                )
            }
            AttentionParams::Isha { q, k, v, output, iterations, beta, .. } => {
                let q_tape = q.forward(x);
                let k_tape = k.forward(x);
                let v_tape = v.forward(x);
                let (qm, km, vm) = (q_tape.output(), k_tape.output(), v_tape.output());
                let mut y = Tensor2::zeros(n_rounds * n * iterations, EMBEDDING_DIM);
                let mut alphas = Vec::with_capacity(n_rounds * n);
                for b in 0..n_rounds {
                    for agent in 0..n {
                        let row = b * n + agent;
                        let rho: Vec<f64> = (0..n)
                            .map(|m| dot(qm.row(row), km.row(b * n + m)))
                            .collect();
                        let scores = isha_scores(&rho, agent, *iterations, *beta)
                            .expect("iteration bound validated at construction");
                        for (c, alpha) in scores.alphas.iter().enumerate() {
                            let dst = y.row_mut((b * n + agent) * iterations + c);
                            for (m, &a) in alpha.iter().enumerate() {
                                if a != 0.0 {
                                    let vrow = vm.row(b * n + m);
                                    for (d, vv) in dst.iter_mut().zip(vrow) {
                                        *d += a * vv;
                                    }
                                }
                            }
                        }
                        alphas.push(scores.alphas);
                    }
                }
                let output_tape = output.forward(&y);
                let sub = output_tape.output();
                // concatenate the N_I sub-messages per (round, agent)
                let mut msg = Tensor2::zeros(n_rounds * n, iterations * SUB_MESSAGE_DIM);
                for e in 0..n_rounds * n {
                    let dst = msg.row_mut(e);
                    for c in 0..*iterations {
                        dst[c * SUB_MESSAGE_DIM..(c + 1) * SUB_MESSAGE_DIM]
                            .copy_from_slice(sub.row(e * iterations + c));
                    }
                }
                (
                    msg,
                    AttentionForward {
                        q_tape: Some(q_tape),
                        k_tape: Some(k_tape),
                        v_tape: Some(v_tape),
                        head_tapes: Vec::new(),
                        output_tape: Some(output_tape),
                        alphas,
                        n_rounds,
                    },
                )
            }
            AttentionParams::Mha { heads, output, .. } => {
                let head_dim = EMBEDDING_DIM / heads.len();
                let mut concat = Tensor2::zeros(x.rows(), EMBEDDING_DIM);
                let mut head_tapes = Vec::with_capacity(heads.len());
                let mut alphas = vec![Vec::with_capacity(heads.len()); x.rows()];
                for (h, head) in heads.iter().enumerate() {
                    let q_tape = head.q.forward(x);
                    let k_tape = head.k.forward(x);
                    let v_tape = head.v.forward(x);
                    {
                        let (qm, km, vm) = (q_tape.output(), k_tape.output(), v_tape.output());
                        for b in 0..n_rounds {
                            for agent in 0..n {
                                let row = b * n + agent;
                                let rho: Vec<f64> = (0..n)
                                    .map(|m| dot(qm.row(row), km.row(b * n + m)))
                                    .collect();
                                let mut mask = vec![false; n];
                                mask[agent] = true;
                                let alpha = softmax_temp(&rho, 1.0, &mask)
                                    .expect("n_agents >= 2 validated at construction");
                                let dst = &mut concat.row_mut(row)[h * head_dim..(h + 1) * head_dim];
                                for (m, &a) in alpha.iter().enumerate() {
                                    if a != 0.0 {
                                        let vrow = vm.row(b * n + m);
                                        for (d, vv) in dst.iter_mut().zip(vrow) {
                                            *d += a * vv;
                                        }
                                    }
                                }
                                alphas[row].push(alpha);
                            }
                        }
                    }
                    head_tapes.push((q_tape, k_tape, v_tape));
                }
                let output_tape = output.forward(&concat);
                let msg = output_tape.output().clone();
                (
                    msg,
                    AttentionForward {
                        q_tape: None,
                        k_tape: None,
                        v_tape: None,
                        head_tapes,
                        output_tape: Some(output_tape),
                        alphas,
                        n_rounds,
                    },
                )
            }
        }
    }

    /// Forward without gradient bookkeeping.
    pub fn forward_batch_nograd(&self, x: &Tensor2) -> Tensor2 {
        self.forward_batch(x).0
    }

    /// Batched backward pass. Accumulates parameter gradients into `grads`
    /// (when provided) and returns the gradient with respect to the stacked
    /// embeddings. The elimination masks recorded at forward time are held
    /// fixed.
    pub fn backward_batch(
        &self,
        fwd: &AttentionForward,
        dmsg: &Tensor2,
        mut grads: Option<&mut AttentionGrads>,
    ) -> Tensor2 {
        let n = self.n_agents();
        let n_rounds = fwd.n_rounds;
        match self {
            AttentionParams::Vanilla { .. } => vanilla_backward(dmsg, n),
            AttentionParams::Isha { q, k, v, output, iterations, beta, .. } => {
                let q_tape = fwd.q_tape.as_ref().unwrap();
                let k_tape = fwd.k_tape.as_ref().unwrap();
                let v_tape = fwd.v_tape.as_ref().unwrap();
                let output_tape = fwd.output_tape.as_ref().unwrap();
                // un-concatenate into per-sub-message rows
                let mut dsub = Tensor2::zeros(n_rounds * n * iterations, SUB_MESSAGE_DIM);
                for e in 0..n_rounds * n {
                    let src = dmsg.row(e);
                    for c in 0..*iterations {
                        dsub.row_mut(e * iterations + c)
                            .copy_from_slice(&src[c * SUB_MESSAGE_DIM..(c + 1) * SUB_MESSAGE_DIM]);
                    }
                }
                let out_grads = match grads.as_deref_mut() {
                    Some(AttentionGrads::Isha { output, .. }) => Some(output),
                    _ => None,
                };
                let dy = output.backward(output_tape, &dsub, out_grads);
                let (qm, km, vm) =
                    (q_tape.output(), k_tape.output(), v_tape.output());
                let mut dq = Tensor2::zeros(n_rounds * n, EMBEDDING_DIM);
                let mut dk = Tensor2::zeros(n_rounds * n, EMBEDDING_DIM);
                let mut dv = Tensor2::zeros(n_rounds * n, EMBEDDING_DIM);
                for b in 0..n_rounds {
                    for agent in 0..n {
                        let row = b * n + agent;
                        let levels = &fwd.alphas[row];
                        let mut drho = vec![0.0; n];
                        for (c, alpha) in levels.iter().enumerate() {
                            let dyrow = dy.row((b * n + agent) * iterations + c);
                            let mask: Vec<bool> = alpha.iter().map(|&a| a == 0.0).collect();
                            let mut dalpha = vec![0.0; n];
                            for m in 0..n {
                                if !mask[m] {
                                    dalpha[m] = dot(dyrow, vm.row(b * n + m));
                                    let dst = dv.row_mut(b * n + m);
                                    for (d, g) in dst.iter_mut().zip(dyrow) {
                                        *d += alpha[m] * g;
                                    }
                                }
                            }
                            let ds = softmax_temp_backward(alpha, *beta, &mask, &dalpha);
                            for m in 0..n {
                                drho[m] += ds[m];
                            }
                        }
                        for m in 0..n {
                            if drho[m] != 0.0 {
                                let krow = km.row(b * n + m);
                                let dqrow = dq.row_mut(row);
                                for (d, kv) in dqrow.iter_mut().zip(krow) {
                                    *d += drho[m] * kv;
                                }
                                let qrow = qm.row(row);
                                let dkrow = dk.row_mut(b * n + m);
                                for (d, qv) in dkrow.iter_mut().zip(qrow) {
                                    *d += drho[m] * qv;
                                }
                            }
                        }
                    }
                }
                let (gq, gk, gv) = match grads.as_deref_mut() {
                    Some(AttentionGrads::Isha { q, k, v, .. }) => (Some(q), Some(k), Some(v)),
                    _ => (None, None, None),
                };
                let mut dx = q.backward(q_tape, &dq, gq.map(|g| &mut *g));
                dx.add_assign(&k.backward(k_tape, &dk, gk.map(|g| &mut *g)));
                dx.add_assign(&v.backward(v_tape, &dv, gv.map(|g| &mut *g)));
                dx
            }
            AttentionParams::Mha { heads, output, .. } => {
                let head_dim = EMBEDDING_DIM / heads.len();
                let output_tape = fwd.output_tape.as_ref().unwrap();
                let out_grads = match grads.as_deref_mut() {
                    Some(AttentionGrads::Mha { output, .. }) => Some(output),
                    _ => None,
                };
                let dconcat = output.backward(output_tape, dmsg, out_grads);
                let mut dx = Tensor2::zeros(dmsg.rows(), EMBEDDING_DIM);
                for (h, head) in heads.iter().enumerate() {
                    let (q_tape, k_tape, v_tape) = &fwd.head_tapes[h];
                    let (qm, km, vm) = (q_tape.output(), k_tape.output(), v_tape.output());
                    let mut dq = Tensor2::zeros(dmsg.rows(), head_dim);
                    let mut dk = Tensor2::zeros(dmsg.rows(), head_dim);
                    let mut dv = Tensor2::zeros(dmsg.rows(), head_dim);
                    for b in 0..n_rounds {
                        for agent in 0..n {
                            let row = b * n + agent;
                            let alpha = &fwd.alphas[row][h];
                            let dyrow = &dconcat.row(row)[h * head_dim..(h + 1) * head_dim];
                            let mask: Vec<bool> = (0..n).map(|m| m == agent).collect();
                            let mut dalpha = vec![0.0; n];
                            for m in 0..n {
                                if m != agent {
                                    dalpha[m] = dot(dyrow, vm.row(b * n + m));
                                    let dst = dv.row_mut(b * n + m);
                                    for (d, g) in dst.iter_mut().zip(dyrow) {
                                        *d += alpha[m] * g;
                                    }
                                }
                            }
                            let drho = softmax_temp_backward(alpha, 1.0, &mask, &dalpha);
                            for m in 0..n {
                                if drho[m] != 0.0 {
                                    let krow = km.row(b * n + m);
                                    let dqrow = dq.row_mut(row);
                                    for (d, kv) in dqrow.iter_mut().zip(krow) {
                                        *d += drho[m] * kv;
                                    }
                                    let qrow = qm.row(row);
                                    let dkrow = dk.row_mut(b * n + m);
                                    for (d, qv) in dkrow.iter_mut().zip(qrow) {
                                        *d += drho[m] * qv;
                                    }
                                }
                            }
                        }
                    }
                    let (gq, gk, gv) = match grads.as_deref_mut() {
                        Some(AttentionGrads::Mha { heads, .. }) => {
                            let (q, k, v) = &mut heads[h];
                            (Some(q), Some(k), Some(v))
                        }
                        _ => (None, None, None),
                    };
                    dx.add_assign(&head.q.backward(q_tape, &dq, gq.map(|g| &mut *g)));
                    dx.add_assign(&head.k.backward(k_tape, &dk, gk.map(|g| &mut *g)));
                    dx.add_assign(&head.v.backward(v_tape, &dv, gv.map(|g| &mut *g)));
                }
                dx
            }
        }
    }

    /// Messages for every agent of a single round.
    pub fn messages(&self, embeddings: &EmbeddingSet) -> Vec<HelperMessage> {
        let (msg, _) = self.forward_batch(&embeddings.vectors);
        (0..self.n_agents())
            .map(|agent| HelperMessage { agent, data: msg.row(agent).to_vec() })
            .collect()
    }

    /// Attention internals for every agent of a round (heatmaps, tests).
    pub fn attention_work(
        &self,
        embeddings: &EmbeddingSet,
    ) -> Result<Vec<AttentionWork>, AttentionError> {
        let n = self.n_agents();
        assert_eq!(embeddings.n_agents(), n);
        match self {
            AttentionParams::Vanilla { .. } => Err(AttentionError::NoScores),
            AttentionParams::Isha { iterations, beta, .. } => {
                let (qm, km, vm) = self
                    .compute_qkv(&embeddings.vectors)
                    .expect("isha has qkv");
                (0..n)
                    .map(|agent| {
                        let rho = relevance_scores(qm.row(agent), &km);
                        let scores = isha_scores(&rho, agent, *iterations, *beta)?;
                        Ok(AttentionWork {
                            agent,
                            query: qm.row(agent).to_vec(),
                            keys: km.clone(),
                            values: vm.clone(),
                            rho,
                            scores: scores.alphas,
                            eliminated: scores.eliminated,
                        })
                    })
                    .collect()
            }
            AttentionParams::Mha { heads, .. } => (0..n)
                .map(|agent| {
                    let mut score_rows = Vec::with_capacity(heads.len());
                    let mut rho_first = Vec::new();
                    let mut q_first = Vec::new();
                    let mut k_first = Tensor2::zeros(0, 0);
                    let mut v_first = Tensor2::zeros(0, 0);
                    for (h, head) in heads.iter().enumerate() {
                        let qm = head.q.forward_nograd(&embeddings.vectors);
                        let km = head.k.forward_nograd(&embeddings.vectors);
                        let vm = head.v.forward_nograd(&embeddings.vectors);
                        let rho = relevance_scores(qm.row(agent), &km);
                        let mut mask = vec![false; n];
                        mask[agent] = true;
                        let alpha =
                            softmax_temp(&rho, 1.0, &mask).expect("n >= 2 at construction");
                        if h == 0 {
                            rho_first = rho;
                            q_first = qm.row(agent).to_vec();
                            k_first = km;
                            v_first = vm;
                        }
                        score_rows.push(alpha);
                    }
                    Ok(AttentionWork {
                        agent,
                        query: q_first.clone(),
                        keys: k_first.clone(),
                        values: v_first.clone(),
                        rho: rho_first.clone(),
                        scores: score_rows,
                        eliminated: Vec::new(),
                    })
                })
                .collect(),
        }
    }
}

/// Concatenation of the other agents' embeddings in agent-index order.
pub fn vanilla_message(embeddings: &EmbeddingSet, agent: usize) -> HelperMessage {
    let n = embeddings.n_agents();
    let mut data = Vec::with_capacity((n - 1) * EMBEDDING_DIM);
    for m in 0..n {
        if m != agent {
            data.extend_from_slice(embeddings.vectors.row(m));
        }
    }
    HelperMessage { agent, data }
}

fn vanilla_forward(x: &Tensor2, n: usize) -> Tensor2 {
    let n_rounds = x.rows() / n;
    let width = n.saturating_sub(1) * EMBEDDING_DIM;
    let mut msg = Tensor2::zeros(x.rows(), width);
    for b in 0..n_rounds {
        for agent in 0..n {
            let dst = msg.row_mut(b * n + agent);
            let mut off = 0;
            for m in 0..n {
                if m != agent {
                    dst[off..off + EMBEDDING_DIM].copy_from_slice(x.row(b * n + m));
                    off += EMBEDDING_DIM;
                }
            }
        }
    }
    msg
}

fn vanilla_backward(dmsg: &Tensor2, n: usize) -> Tensor2 {
    let n_rounds = dmsg.rows() / n;
    let mut dx = Tensor2::zeros(dmsg.rows(), EMBEDDING_DIM);
    for b in 0..n_rounds {
        for agent in 0..n {
            let src = dmsg.row(b * n + agent);
            let mut off = 0;
            for m in 0..n {
                if m != agent {
                    let dst = dx.row_mut(b * n + m);
                    for (d, g) in dst.iter_mut().zip(&src[off..off + EMBEDDING_DIM]) {
                        *d += g;
                    }
                    off += EMBEDDING_DIM;
                }
            }
        }
    }
    dx
}
