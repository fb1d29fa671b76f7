//! Argmax partition of visited states by cluster assignment.

use serde::Serialize;

use crate::envs::{EnvKind, LevelSet};
use crate::ppo::{evaluate, Checkpoint, EvalStep, ModelMode, PolicyValueNet};

use super::stats::{chi_square_independence, ChiSquare};
use super::AnalysisError;

/// A visited state, as written to the partition dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateRecord {
    pub cluster: usize,
    pub level_id: usize,
    pub step: usize,
    pub feature_vector: Vec<f64>,
    pub obstacle_label: u8,
    pub max_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub n_clusters: usize,
    pub label_count: usize,
    /// `sets[i]` holds the states whose largest assignment is cluster `i`.
    pub sets: Vec<Vec<StateRecord>>,
}

/// Index of the largest entry, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl ClusterPartition {
    pub fn from_steps(steps: &[(usize, EvalStep)], n_clusters: usize, label_count: usize) -> Self {
        let mut sets = vec![Vec::new(); n_clusters];
        for (level_id, s) in steps {
            let cluster = argmax(&s.alpha);
            sets[cluster].push(StateRecord {
                cluster,
                level_id: *level_id,
                step: s.step,
                feature_vector: s.obs.clone(),
                obstacle_label: s.obstacle_label,
                max_alpha: s.alpha[cluster],
            });
        }
        Self { n_clusters, label_count, sets }
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Every record sits in the set of its own argmax cluster, so the sets are
    /// disjoint, and together they hold `expected` records.
    pub fn is_partition_of(&self, expected: usize) -> bool {
        self.total() == expected && self.sets.iter().enumerate().all(|(i, set)| set.iter().all(|r| r.cluster == i))
    }

    pub fn confident_share(&self, threshold: f64) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        self.sets.iter().flatten().filter(|r| r.max_alpha >= threshold).count() as f64 / n as f64
    }

    /// `table[cluster][label]` counts.
    pub fn contingency(&self) -> Vec<Vec<u64>> {
        self.sets
            .iter()
            .map(|set| {
                let mut row = vec![0u64; self.label_count];
                for r in set {
                    row[r.obstacle_label as usize] += 1;
                }
                row
            })
            .collect()
    }

    pub fn label_association(&self) -> Result<ChiSquare, AnalysisError> {
        chi_square_independence(&self.contingency())
    }

    pub const SUMMARY_HEADER: &'static str = "cluster,states,share,mean_max_alpha";

    pub fn summary_csv(&self) -> String {
        let total = self.total().max(1) as f64;
        let mut out = format!("{}\n", Self::SUMMARY_HEADER);
        for (i, set) in self.sets.iter().enumerate() {
            let mean = if set.is_empty() { 0.0 } else { set.iter().map(|r| r.max_alpha).sum::<f64>() / set.len() as f64 };
            out.push_str(&format!("{i},{},{:.6},{:.6}\n", set.len(), set.len() as f64 / total, mean));
        }
        out
    }

    pub fn contingency_csv(&self) -> String {
        let labels: Vec<String> = (0..self.label_count).map(|l| format!("label_{l}")).collect();
        let mut out = format!("cluster,{}\n", labels.join(","));
        for (i, row) in self.contingency().iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{i},{}\n", cells.join(",")));
        }
        out
    }

    /// Line-delimited JSON records, cluster by cluster.
    pub fn dump_jsonl(&self) -> String {
        self.sets
            .iter()
            .flatten()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

/// Plays evaluation episodes until `sample_count` states are visited and
/// partitions them by argmax assignment.
pub fn partition_states(
    net: &PolicyValueNet,
    kind: &EnvKind,
    levels: &LevelSet,
    sample_count: usize,
    seed: u64,
) -> Result<ClusterPartition, AnalysisError> {
    if sample_count == 0 {
        return Err(AnalysisError::Input("sample count must be positive".into()));
    }
    // evaluation with more episodes replays the shorter run as a prefix
    let mut episodes = levels.len().max(1);
    let steps = loop {
        let eps = evaluate(net, kind, levels, episodes, seed, true)?;
        let steps: Vec<(usize, EvalStep)> =
            eps.into_iter().flat_map(|e| e.steps.into_iter().map(move |s| (e.level_id, s))).take(sample_count).collect();
        if steps.len() == sample_count {
            break steps;
        }
        episodes *= 2;
    };
    let partition = ClusterPartition::from_steps(&steps, net.n_clusters(), kind.label_count());
    debug_assert!(partition.is_partition_of(sample_count));
    Ok(partition)
}

/// [`partition_states`] for a stored checkpoint; the baseline has no cluster head.
pub fn partition_checkpoint(
    ckpt: &Checkpoint,
    levels: &LevelSet,
    sample_count: usize,
    seed: u64,
) -> Result<ClusterPartition, AnalysisError> {
    let cfg = ckpt.config()?;
    if cfg.mode == ModelMode::Rl2 {
        return Err(AnalysisError::Input("partition requires cluster head; checkpoint was trained in rl2 mode".into()));
    }
    let net = ckpt.network()?;
    partition_states(&net, &cfg.env, levels, sample_count, seed)
}
