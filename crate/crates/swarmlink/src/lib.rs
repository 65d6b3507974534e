//! Communication-aided multi-UAV path planning.
//!
//! A desk-scale simulator and training stack for helper-assisted swarm
//! control: UAV agents upload state embeddings to a ground helper, the
//! helper condenses them into per-agent messages with an attention
//! mechanism (iterative single-head, multi-head, or full relay), and each
//! agent's soft actor-critic policy consumes its message to plan a path to
//! a common destination while avoiding the other agents.
//!
//! Modules:
//! - [`env`] — planar UAV kinematics, rewards, collision/arrival events.
//! - [`comms`] — path loss, data rate, UL/DL delays, staleness, energy.
//! - [`nn`] — small dense-network kernel with hand-rolled backprop.
//! - [`attention`] — the helper's message generation mechanisms.
//! - [`madrl`] — per-agent soft actor-critic plus the helper training loop.
//! - [`harness`] — configs, CLI entry points, metrics CSVs, sweeps.

pub mod attention;
pub mod comms;
pub mod env;
pub mod harness;
pub mod madrl;
pub mod nn;
