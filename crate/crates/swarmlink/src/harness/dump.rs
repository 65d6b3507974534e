//! Attention-score heatmap dumps for a world snapshot.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::attention::{AttentionError, EmbeddingSet, EMBEDDING_DIM};
use crate::env::World;
use crate::madrl::Scales;
use crate::nn::{load_blocks, Tensor2};

use super::config::ExperimentConfig;
use super::evalrun::check_mechanism;
use super::train::{build_learners, load_all};
use super::HarnessError;

/// For each agent, the iteration/head-by-agent score matrix at a seeded
/// world snapshot.
pub fn attention_heatmaps(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    scenario_seed: u64,
) -> Result<Vec<(usize, Vec<Vec<f64>>)>, HarnessError> {
    check_mechanism(cfg, checkpoint)?;
    let (mut agents, mut helper) = build_learners(cfg, scenario_seed)?;
    let blocks = load_blocks(checkpoint)?;
    load_all(&mut agents, &mut helper, &blocks)?;

    let world = World::new(cfg.world.clone(), scenario_seed);
    let scales = Scales::from_world(&cfg.world);
    let mut embeddings = Tensor2::zeros(cfg.world.n_agents, EMBEDDING_DIM);
    for (i, agent) in agents.iter().enumerate() {
        embeddings
            .row_mut(i)
            .copy_from_slice(&agent.encode_state(&world.states[i], &scales));
    }
    let works = helper
        .actor_attention
        .attention_work(&EmbeddingSet::new(embeddings))
        .map_err(|e| match e {
            AttentionError::NoScores => HarnessError::NoAttentionScores,
            other => HarnessError::Config(other.to_string()),
        })?;
    Ok(works.into_iter().map(|w| (w.agent, w.score_heatmap())).collect())
}

/// One CSV per agent: rows are iterations (ISHA) or heads (MHA), columns are
/// the attended agents.
pub fn write_heatmaps(
    out_dir: &Path,
    heatmaps: &[(usize, Vec<Vec<f64>>)],
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    for (agent, rows) in heatmaps {
        let mut f = fs::File::create(out_dir.join(format!("attention_agent{agent}.csv")))?;
        let n = rows.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..n).map(|m| format!("score_agent{m}")).collect();
        writeln!(f, "row,{}", header.join(","))?;
        for (c, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{},{}", c, cells.join(","))?;
        }
    }
    Ok(())
}
