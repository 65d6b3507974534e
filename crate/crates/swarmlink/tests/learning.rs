//! Behavioral checks of the learner that sit between unit tests and the
//! acceptance suite: critic regression on a fixed dataset, eval-mode purity,
//! degenerate episode shapes, and resumable training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmlink::comms::{Method, PayloadSpec};
use swarmlink::env::{ControlAction, UavState, World};
use swarmlink::harness::{run_dir_for, train_run, ExperimentConfig};
use swarmlink::madrl::{
    run_episode, sac_update, AgentLearningRates, ChannelMode, Helper, ReplayBuffer, RoundRecord,
    RunMode, RunOptions, SacAgent, SacConfig, Scales, Transition,
};

fn scales() -> Scales {
    Scales { region_side_m: 1000.0, v_max: 30.0, a_max: 5.0 }
}

/// With gamma = 0 and lambda = 0 the critic target is the raw reward, so on
/// a fixed dataset the twin heads regress to the mean reward of each
/// state-action bin.
#[test]
fn critic_converges_to_bin_means_on_fixed_dataset() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lrs = AgentLearningRates { actor: 1e-3, critic: 3e-3 };
    let mut helper = Helper::new(Method::Vanilla, 1, 1.0, 1e-3, &mut rng).unwrap();
    let mut agents = vec![SacAgent::new(0, lrs, &mut rng)];
    let cfg = SacConfig {
        gamma: 0.0,
        entropy_weight: 0.0,
        tau: 0.02,
        batch_size: 64,
        replay_capacity: 4096,
        warmup_steps: 0,
        steps_per_update: 1,
        episodes: 1,
        lr_actor: 1e-3,
        lr_critic: 3e-3,
        lr_attention: 1e-3,
    };
    // two bins: (s_a, u_a) with rewards around 1.0, (s_b, u_b) around -0.5
    let bins = [
        (UavState::at([100.0, 100.0], 50.0), ControlAction::new([2.0, 0.0]), 1.0),
        (UavState::at([800.0, 300.0], 50.0), ControlAction::new([-1.0, 1.0]), -0.5),
    ];
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    for i in 0..1024 {
        let (state, action, mean) = bins[i % 2];
        let noise = rng.gen_range(-0.2..0.2);
        buffer.push(RoundRecord {
            per_agent: vec![Transition {
                state,
                message: vec![],
                action,
                reward: mean + noise,
                next_state: state,
                next_message: vec![],
                done: true,
            }],
            next_critic_messages: vec![vec![]],
            terminal: true,
        });
    }
    for _ in 0..800 {
        let indices = buffer.sample_indices(&mut rng, cfg.batch_size);
        sac_update(&mut agents, &mut helper, &buffer, &indices, &cfg, &scales(), &mut rng);
    }
    for (state, action, mean) in bins {
        let (q1, q2) = agents[0].critic_value(&state, &action, &[], &scales());
        assert!(
            (q1 - mean).abs() < 0.1 && (q2 - mean).abs() < 0.1,
            "bin mean {mean}: twin heads predicted {q1:.3}, {q2:.3}"
        );
    }
}

fn desk_world_cfg() -> swarmlink::env::WorldConfig {
    ExperimentConfig::desk_profile().world
}

fn build(mechanism: Method, seed: u64) -> (Vec<SacAgent>, Helper) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let helper = Helper::new(mechanism, 4, 1.0, 1e-3, &mut rng).unwrap();
    let lrs = AgentLearningRates { actor: 1e-3, critic: 1e-3 };
    let agents = (0..4).map(|_| SacAgent::new(helper.message_dim(), lrs, &mut rng)).collect();
    (agents, helper)
}

/// Evaluation episodes store nothing, run deterministic actions, and leave
/// parameters untouched.
#[test]
fn eval_mode_is_pure() {
    let cfg = ExperimentConfig::desk_profile();
    let (mut agents, mut helper) = build(Method::Isha { iterations: 2 }, 9);
    let world_scales = Scales::from_world(&cfg.world);
    let probe_state = UavState::at([50.0, 70.0], 50.0);
    let probe_msg = vec![0.1; helper.message_dim()];
    let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
    let (before, _) = agents[0].act(&probe_state, &probe_msg, false, &world_scales, &mut probe_rng);

    let payload = PayloadSpec::new(Method::Isha { iterations: 2 }, 4);
    let opts = RunOptions {
        mode: RunMode::Eval,
        channel_mode: ChannelMode::PerfectFixedInterval { dt: 0.1 },
        channel: &cfg.channel,
        payload,
        record_trajectories: true,
        record_links: false,
    };
    let mut world = World::new(desk_world_cfg(), 11);
    let mut action_rng = ChaCha8Rng::seed_from_u64(1);
    let stats = run_episode(
        &mut world,
        &mut agents,
        &mut helper,
        &opts,
        &world_scales,
        &mut action_rng,
        None,
    );
    assert_eq!(stats.updates_run, 0);
    assert_eq!(stats.trajectories.len(), stats.steps * 4);

    let (after, _) = agents[0].act(&probe_state, &probe_msg, false, &world_scales, &mut probe_rng);
    assert_eq!(before, after, "evaluation must not change behavior");
}

/// A goal ring that covers the whole region means every agent starts
/// arrived: zero travel time, rewards all goal-cap plus proximity terms.
#[test]
fn all_agents_starting_at_destination() {
    let mut cfg = desk_world_cfg();
    cfg.goal_radius_m = 1000.0; // covers the region
    let mut world = World::new(cfg.clone(), 5);
    assert!(world.arrived.iter().all(|&a| a));
    let out = world.step(&vec![ControlAction::zero(); 4], 0.1);
    assert!(world.travel_times().iter().all(|&t| t == 0.0));
    for (i, r) in out.rewards.iter().enumerate() {
        let expected = swarmlink::env::positive_reward(&world.states[i], &cfg)
            + swarmlink::env::negative_reward(i, &world.states, &cfg);
        assert!((r - expected).abs() < 1e-12);
    }
}

/// Training interrupted at a checkpoint resumes and keeps appending to the
/// same metrics file: partial runs are valid prefixes.
#[test]
fn training_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::desk_profile();
    cfg.mechanism = Method::Isha { iterations: 1 };
    cfg.sac.episodes = 50; // one checkpoint interval
    cfg.sac.warmup_steps = 200;
    let run_dir = run_dir_for(dir.path(), "isha1", 0);
    train_run(&cfg, 0, &run_dir, false, true).unwrap();
    let rows_before =
        std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap().lines().count();
    assert_eq!(rows_before, 51); // header + 50

    cfg.sac.episodes = 60;
    train_run(&cfg, 0, &run_dir, true, true).unwrap();
    let text = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 61, "resume appends the remaining episodes");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["episodes_completed"], 60);
}

/// Stale legs reuse the last delivered payload; with a hopeless uplink the
/// helper keeps acting on the initial zero view.
#[test]
fn modeled_channel_staleness_freezes_payloads() {
    let mut cfg = ExperimentConfig::desk_profile();
    // far geometry and hopeless powers: every leg stale
    cfg.channel.tx_power_uav_w = 1e-9;
    cfg.channel.tx_power_helper_w = 1e-9;
    cfg.channel.helper_position = [1e6, 1e6, 10.0];
    cfg.world.max_episode_steps = 5;
    let (mut agents, mut helper) = build(Method::Isha { iterations: 1 }, 13);
    let payload = PayloadSpec::new(Method::Isha { iterations: 1 }, 4);
    let opts = RunOptions {
        mode: RunMode::Eval,
        channel_mode: ChannelMode::Modeled,
        channel: &cfg.channel,
        payload,
        record_trajectories: false,
        record_links: true,
    };
    let mut world = World::new(cfg.world.clone(), 1);
    let mut action_rng = ChaCha8Rng::seed_from_u64(2);
    let stats = run_episode(
        &mut world,
        &mut agents,
        &mut helper,
        &opts,
        &Scales::from_world(&cfg.world),
        &mut action_rng,
        None,
    );
    assert!(!stats.links.is_empty());
    assert!(stats.links.iter().all(|l| l.stale_ul && l.stale_dl));
    // the realized control interval saturates at the delay limit
    let dt = stats.sim_time_s / stats.steps as f64;
    assert!((dt - cfg.channel.delay_limit_s).abs() < 1e-12);
    // energy charged for the whole window on both legs each round
    let expected = stats.steps as f64
        * 4.0
        * (cfg.channel.tx_power_uav_w + cfg.channel.tx_power_helper_w)
        * cfg.channel.delay_limit_s;
    assert!((stats.energy_j - expected).abs() / expected < 1e-9);
}
