//! Diagnostic probe: load a checkpoint and report what the policy and
//! critics are doing at representative states.
//!
//!     cargo run --release --example probe -- <config.json> <checkpoint.bin>

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarmlink::env::{ControlAction, UavState, World};
use swarmlink::harness::{build_learners, load_all, ExperimentConfig};
use swarmlink::madrl::Scales;
use swarmlink::nn::{load_blocks, Tensor2};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg = ExperimentConfig::load(std::path::Path::new(&args[1])).unwrap();
    let (mut agents, mut helper) = build_learners(&cfg, 0).unwrap();
    let blocks = load_blocks(std::path::Path::new(&args[2])).unwrap();
    load_all(&mut agents, &mut helper, &blocks).unwrap();
    let scales = Scales::from_world(&cfg.world);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let world = World::new(cfg.world.clone(), 123);
    let mut emb = Tensor2::zeros(cfg.world.n_agents, 63);
    for i in 0..cfg.world.n_agents {
        emb.row_mut(i).copy_from_slice(&agents[i].encode_state(&world.states[i], &scales));
    }
    let messages = helper.actor_attention.forward_batch_nograd(&emb);

    for (i, agent) in agents.iter().enumerate() {
        let s = &world.states[i];
        let msg = messages.row(i);
        let e = agent.encode_state(s, &scales);
        let (mean, log_std) = agent.policy_output(&e, msg);
        let (det, _) = agent.act(s, msg, false, &scales, &mut rng);
        let d = ((s.position[0] - cfg.world.destination_m[0]).powi(2)
            + (s.position[1] - cfg.world.destination_m[1]).powi(2))
        .sqrt();
        // direction toward goal
        let gx = (cfg.world.destination_m[0] - s.position[0]) / d;
        let gy = (cfg.world.destination_m[1] - s.position[1]) / d;
        let a = det.acceleration;
        let amag = (a[0] * a[0] + a[1] * a[1]).sqrt();
        let align = if amag > 1e-9 { (a[0] * gx + a[1] * gy) / amag } else { 0.0 };
        let mut critic_msg = vec![0.0; helper.critic_attention.message_dim()];
        critic_msg.clone_from_slice(
            helper
                .critic_attention
                .forward_batch_nograd(&{
                    let mut xq = Tensor2::zeros(cfg.world.n_agents, 63);
                    for j in 0..cfg.world.n_agents {
                        xq.row_mut(j).copy_from_slice(&agents[j].encode_state_action(
                            &world.states[j],
                            &det,
                            &scales,
                        ));
                    }
                    xq
                })
                .row(i),
        );
        let (q1, q2) = agent.critic_value(s, &det, &critic_msg, &scales);
        println!(
            "agent {i}: dist {d:6.1} m | mean ({:+.2},{:+.2}) log_std ({:+.2},{:+.2}) | \
             det action ({:+.2},{:+.2}) mag {amag:.2} align {align:+.2} | q ({q1:+.2},{q2:+.2})",
            mean[0], mean[1], log_std[0], log_std[1], a[0], a[1]
        );
    }
}
