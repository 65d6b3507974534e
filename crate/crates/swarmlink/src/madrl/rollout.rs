//! Episode loop: agents upload embeddings, the helper computes and
//! distributes messages (through the modeled channel or an ideal one),
//! agents act, the world steps, and in training mode transitions are stored
//! and gradient updates interleaved.

use rand_chacha::ChaCha8Rng;

use super::agent::{SacAgent, Scales};
use super::replay::{ReplayBuffer, RoundRecord, Transition};
use super::update::{sac_update, UpdateDiagnostics};
use super::{Helper, SacConfig};
use crate::attention::EMBEDDING_DIM;
use crate::comms::{
    control_interval, payload_bits, round_delays, ChannelConfig, Direction, PayloadSpec,
};
use crate::env::{negative_reward, positive_reward, ControlAction, World};
use crate::nn::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Eval,
}

/// How communication shapes the control loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelMode {
    /// Ideal links and a fixed control interval (the training setting).
    PerfectFixedInterval { dt: f64 },
    /// Delays, staleness, and energy from the link model; the control
    /// interval is the slowest agent's round trip, capped at the limit.
    Modeled,
}

pub struct RunOptions<'a> {
    pub mode: RunMode,
    pub channel_mode: ChannelMode,
    pub channel: &'a ChannelConfig,
    pub payload: PayloadSpec,
    pub record_trajectories: bool,
    pub record_links: bool,
}

/// Per-step, per-agent trajectory record (positions after the step).
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time_s: f64,
    pub agent: usize,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub reward_pos: f64,
    pub reward_neg: f64,
}

/// Per-round, per-agent link record under the modeled channel.
#[derive(Debug, Clone)]
pub struct LinkRow {
    pub step: usize,
    pub agent: usize,
    pub path_loss_db: f64,
    pub ul_rate_bps: f64,
    pub dl_rate_bps: f64,
    pub ul_delay_s: f64,
    pub dl_delay_s: f64,
    pub stale_ul: bool,
    pub stale_dl: bool,
    pub energy_j: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeStats {
    pub per_agent_reward: Vec<f64>,
    pub system_reward: f64,
    /// Collision onsets: a pair entering the collision radius counts once
    /// until it separates again.
    pub collision_events: u64,
    /// Raw collided pair-steps (pairs in collision, summed over steps).
    pub collision_pair_steps: u64,
    /// Onsets normalized by steps times pairs.
    pub collision_rate: f64,
    pub steps: usize,
    pub sim_time_s: f64,
    pub travel_time_mean_s: f64,
    pub travel_time_max_s: f64,
    pub all_arrived: bool,
    pub ul_bits: u64,
    pub dl_bits: u64,
    pub energy_j: f64,
    /// Rewards per step per agent, for discounted-return evaluation.
    pub rewards_per_step: Vec<Vec<f64>>,
    pub trajectories: Vec<TrajectoryRow>,
    pub links: Vec<LinkRow>,
    pub updates_run: u64,
    pub mean_critic_loss: f64,
    pub mean_actor_loss: f64,
    pub skipped_updates: u64,
}

/// Mutable training context threaded through episodes.
pub struct TrainState<'a> {
    pub replay: &'a mut ReplayBuffer,
    pub sac: &'a SacConfig,
    pub global_step: &'a mut u64,
    pub update_rng: &'a mut ChaCha8Rng,
}

struct PendingRound {
    states: Vec<crate::env::UavState>,
    messages: Vec<Vec<f64>>,
    actions: Vec<ControlAction>,
    rewards: Vec<f64>,
    next_states: Vec<crate::env::UavState>,
}

/// Run one episode. Training mode samples stochastic actions, stores
/// transitions, and interleaves gradient updates at the configured cadence;
/// evaluation mode acts deterministically and stores nothing.
pub fn run_episode(
    world: &mut World,
    agents: &mut [SacAgent],
    helper: &mut Helper,
    opts: &RunOptions,
    scales: &Scales,
    action_rng: &mut ChaCha8Rng,
    mut train: Option<TrainState>,
) -> EpisodeStats {
    let n = agents.len();
    assert_eq!(world.n_agents(), n);
    let mdim = helper.message_dim();
    let ul_bits_round = payload_bits(&opts.payload, Direction::Uplink) * n as u64;
    let dl_bits_round = payload_bits(&opts.payload, Direction::Downlink) * n as u64;

    let mut last_ul: Vec<Vec<f64>> = vec![vec![0.0; EMBEDDING_DIM]; n];
    let mut last_dl: Vec<Vec<f64>> = vec![vec![0.0; mdim]; n];
    let mut pending: Option<PendingRound> = None;
    let mut in_collision: Vec<Vec<bool>> = vec![vec![false; n]; n];

    let mut stats = EpisodeStats {
        per_agent_reward: vec![0.0; n],
        system_reward: 0.0,
        collision_events: 0,
        collision_pair_steps: 0,
        collision_rate: 0.0,
        steps: 0,
        sim_time_s: 0.0,
        travel_time_mean_s: 0.0,
        travel_time_max_s: 0.0,
        all_arrived: false,
        ul_bits: 0,
        dl_bits: 0,
        energy_j: 0.0,
        rewards_per_step: Vec::new(),
        trajectories: Vec::new(),
        links: Vec::new(),
        updates_run: 0,
        mean_critic_loss: 0.0,
        mean_actor_loss: 0.0,
        skipped_updates: 0,
    };
    let mut loss_acc = (0.0f64, 0.0f64, 0u64);

    loop {
        let step = world.step_count;
        // Uplink: agents encode their states.
        let embeddings: Vec<Vec<f64>> = (0..n)
            .map(|i| agents[i].encode_state(&world.states[i], scales))
            .collect();

        // Channel leg bookkeeping.
        let (dt, helper_view, stale_dl_flags) = match opts.channel_mode {
            ChannelMode::PerfectFixedInterval { dt } => {
                last_ul.clone_from(&embeddings);
                (dt, embeddings.clone(), vec![false; n])
            }
            ChannelMode::Modeled => {
                let budgets = round_delays(&world.states, &opts.payload, opts.channel);
                let dt = control_interval(&budgets, opts.channel.delay_limit_s);
                let mut view = Vec::with_capacity(n);
                for i in 0..n {
                    if budgets[i].stale_ul {
                        view.push(last_ul[i].clone());
                    } else {
                        last_ul[i] = embeddings[i].clone();
                        view.push(embeddings[i].clone());
                    }
                }
                let stale_dl: Vec<bool> = budgets.iter().map(|b| b.stale_dl).collect();
                stats.energy_j += budgets.iter().map(|b| b.energy_j).sum::<f64>();
                if opts.record_links {
                    for (i, b) in budgets.iter().enumerate() {
                        stats.links.push(LinkRow {
                            step,
                            agent: i,
                            path_loss_db: b.path_loss_db,
                            ul_rate_bps: b.ul_rate_bps,
                            dl_rate_bps: b.dl_rate_bps,
                            ul_delay_s: b.ul_delay_s,
                            dl_delay_s: b.dl_delay_s,
                            stale_ul: b.stale_ul,
                            stale_dl: b.stale_dl,
                            energy_j: b.energy_j,
                        });
                    }
                }
                (dt, view, stale_dl)
            }
        };
        stats.ul_bits += ul_bits_round;
        stats.dl_bits += dl_bits_round;

        // Helper computes messages from its (possibly stale) view.
        let mut view_mat = Tensor2::zeros(n, EMBEDDING_DIM);
        for (i, v) in helper_view.iter().enumerate() {
            view_mat.row_mut(i).copy_from_slice(v);
        }
        let fresh_messages = helper
            .actor_attention
            .forward_batch_nograd(&view_mat);
        let mut received: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            if stale_dl_flags[i] {
                received.push(last_dl[i].clone());
            } else {
                last_dl[i] = fresh_messages.row(i).to_vec();
                received.push(last_dl[i].clone());
            }
        }

        // Agents act on their local embedding plus the received message.
        let stochastic = opts.mode == RunMode::Train;
        let actions: Vec<ControlAction> = (0..n)
            .map(|i| {
                agents[i]
                    .act(&world.states[i], &received[i], stochastic, scales, action_rng)
                    .0
            })
            .collect();

        // Critic-path messages (training only): encode state-action pairs
        // and run the critic attention instance; centralized training runs
        // over an ideal backhaul, so no staleness here.
        let critic_messages: Option<Vec<Vec<f64>>> = if opts.mode == RunMode::Train {
            let mut xq = Tensor2::zeros(n, EMBEDDING_DIM);
            for i in 0..n {
                let e = agents[i].encode_state_action(&world.states[i], &actions[i], scales);
                xq.row_mut(i).copy_from_slice(&e);
            }
            let mq = helper.critic_attention.forward_batch_nograd(&xq);
            Some((0..n).map(|i| mq.row(i).to_vec()).collect())
        } else {
            None
        };

        // The previous round's record becomes complete once this round's
        // received messages exist.
        if let (Some(prev), Some(ts)) = (pending.take(), train.as_mut()) {
            push_record(prev, &received, critic_messages.as_ref().unwrap(), ts.replay);
        }

        let pre_states = world.states.clone();
        let outcome = world.step(&actions, dt);

        // collision accounting: pair-steps plus onsets
        stats.collision_pair_steps += outcome.collided_pairs.len() as u64;
        let mut now: Vec<(usize, usize)> = outcome.collided_pairs.clone();
        now.sort_unstable();
        for i in 0..n {
            for j in (i + 1)..n {
                let colliding = now.binary_search(&(i, j)).is_ok();
                if colliding && !in_collision[i][j] {
                    stats.collision_events += 1;
                }
                in_collision[i][j] = colliding;
            }
        }

        for i in 0..n {
            stats.per_agent_reward[i] += outcome.rewards[i];
        }
        stats.rewards_per_step.push(outcome.rewards.clone());
        if opts.record_trajectories {
            for i in 0..n {
                stats.trajectories.push(TrajectoryRow {
                    step,
                    time_s: world.time_s,
                    agent: i,
                    px: world.states[i].position[0],
                    py: world.states[i].position[1],
                    vx: world.states[i].velocity[0],
                    vy: world.states[i].velocity[1],
                    reward_pos: positive_reward(&world.states[i], &world.cfg),
                    reward_neg: negative_reward(i, &world.states, &world.cfg),
                });
            }
        }

        if opts.mode == RunMode::Train {
            pending = Some(PendingRound {
                states: pre_states,
                messages: received.clone(),
                actions: actions.clone(),
                rewards: outcome.rewards.clone(),
                next_states: world.states.clone(),
            });
        }

        // Gradient updates at the configured cadence.
        if let Some(ts) = train.as_mut() {
            *ts.global_step += 1;
            if *ts.global_step >= ts.sac.warmup_steps as u64
                && *ts.global_step % ts.sac.steps_per_update as u64 == 0
                && ts.replay.len() >= ts.sac.batch_size
            {
                let indices = ts.replay.sample_indices(ts.update_rng, ts.sac.batch_size);
                let diag: UpdateDiagnostics =
                    sac_update(agents, helper, ts.replay, &indices, ts.sac, scales, ts.update_rng);
                stats.updates_run += 1;
                if diag.skipped {
                    stats.skipped_updates += 1;
                } else {
                    loss_acc.0 += diag.critic_loss;
                    loss_acc.1 += diag.actor_loss;
                    loss_acc.2 += 1;
                }
            }
        }

        if outcome.episode_over {
            break;
        }
    }

    // Complete the final pending record with fresh end-of-episode messages.
    if let (Some(prev), Some(ts)) = (pending.take(), train.as_mut()) {
        let mut xpi = Tensor2::zeros(n, EMBEDDING_DIM);
        for i in 0..n {
            let e = agents[i].encode_state(&world.states[i], scales);
            xpi.row_mut(i).copy_from_slice(&e);
        }
        let final_actor = helper.actor_attention.forward_batch_nograd(&xpi);
        let final_actor_msgs: Vec<Vec<f64>> =
            (0..n).map(|i| final_actor.row(i).to_vec()).collect();
        // synthesize next-round actions for the critic-path message
        let next_actions: Vec<ControlAction> = (0..n)
            .map(|i| {
                agents[i]
                    .act(&world.states[i], &final_actor_msgs[i], true, scales, action_rng)
                    .0
            })
            .collect();
        let mut xq = Tensor2::zeros(n, EMBEDDING_DIM);
        for i in 0..n {
            let e = agents[i].encode_state_action(&world.states[i], &next_actions[i], scales);
            xq.row_mut(i).copy_from_slice(&e);
        }
        let final_critic = helper.critic_attention.forward_batch_nograd(&xq);
        let final_critic_msgs: Vec<Vec<f64>> =
            (0..n).map(|i| final_critic.row(i).to_vec()).collect();
        push_record(prev, &final_actor_msgs, &final_critic_msgs, ts.replay);
    }

    stats.steps = world.step_count;
    stats.sim_time_s = world.time_s;
    let travel = world.travel_times();
    stats.travel_time_mean_s = travel.iter().sum::<f64>() / n as f64;
    stats.travel_time_max_s = travel.iter().fold(0.0f64, |a, &b| a.max(b));
    stats.all_arrived = world.arrived.iter().all(|&a| a);
    stats.system_reward = stats.per_agent_reward.iter().sum();
    let pairs = (n * (n - 1) / 2).max(1) as f64;
    stats.collision_rate = stats.collision_events as f64 / (stats.steps as f64 * pairs);
    if loss_acc.2 > 0 {
        stats.mean_critic_loss = loss_acc.0 / loss_acc.2 as f64;
        stats.mean_actor_loss = loss_acc.1 / loss_acc.2 as f64;
    }
    stats
}

fn push_record(
    prev: PendingRound,
    next_messages: &[Vec<f64>],
    next_critic_messages: &[Vec<f64>],
    replay: &mut ReplayBuffer,
) {
    let n = prev.states.len();
    let per_agent = (0..n)
        .map(|i| Transition {
            state: prev.states[i],
            message: prev.messages[i].clone(),
            action: prev.actions[i],
            reward: prev.rewards[i],
            next_state: prev.next_states[i],
            next_message: next_messages[i].clone(),
            done: false,
        })
        .collect();
    replay.push(RoundRecord {
        per_agent,
        next_critic_messages: next_critic_messages.to_vec(),
        terminal: false,
    });
}

/// Discounted return per agent plus the system total (the reporting metric;
/// the entropy bonus is excluded at evaluation).
pub fn evaluate_return(rewards_per_step: &[Vec<f64>], gamma: f64) -> (Vec<f64>, f64) {
    let n = rewards_per_step.first().map_or(0, Vec::len);
    let mut per_agent = vec![0.0; n];
    let mut discount = 1.0;
    for step in rewards_per_step {
        for (acc, r) in per_agent.iter_mut().zip(step) {
            *acc += discount * r;
        }
        discount *= gamma;
    }
    let system = per_agent.iter().sum();
    (per_agent, system)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_geometric() {
        let rewards = vec![vec![1.0], vec![1.0], vec![1.0]];
        let (per, system) = evaluate_return(&rewards, 0.5);
        assert!((per[0] - 1.75).abs() < 1e-12);
        assert!((system - 1.75).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_gamma_one() {
        let rewards = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 1.0]];
        let (per, system) = evaluate_return(&rewards, 1.0);
        assert_eq!(per, vec![6.0, 1.0]);
        assert_eq!(system, 7.0);
    }

    #[test]
    fn discounted_return_matches_brute_force() {
        let gamma = 0.97;
        let rewards: Vec<Vec<f64>> = (0..40)
            .map(|t| vec![(t as f64 * 0.37).sin(), (t as f64 * 0.11).cos()])
            .collect();
        let (per, _) = evaluate_return(&rewards, gamma);
        for agent in 0..2 {
            let brute: f64 = rewards
                .iter()
                .enumerate()
                .map(|(t, r)| gamma.powi(t as i32) * r[agent])
                .sum();
            assert!((per[agent] - brute).abs() < 1e-12);
        }
    }
}
