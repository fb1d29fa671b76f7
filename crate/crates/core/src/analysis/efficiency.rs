//! Reward and episode-length comparison of several agents on shared levels.

use crate::envs::{EnvKind, LevelSet};
use crate::ppo::{evaluate, EvalEpisode, EvalSummary, PolicyValueNet};

use super::AnalysisError;

/// One agent to evaluate.
#[derive(Debug, Clone)]
pub struct EfficiencyEntry<'a> {
    pub label: String,
    pub net: &'a PolicyValueNet,
    pub kind: EnvKind,
    pub levels: LevelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub labels: Vec<String>,
    pub summaries: Vec<EvalSummary>,
    /// `episodes[agent][episode]`, aligned across agents by level.
    pub episodes: Vec<Vec<EvalEpisode>>,
}

impl EfficiencyReport {
    pub const TABLE_HEADER: &'static str = "agent,episodes,mean_reward,mean_episode_length,mean_revisits,mean_delta";

    pub fn table_csv(&self) -> String {
        let mut out = format!("{}\n", Self::TABLE_HEADER);
        for (label, s) in self.labels.iter().zip(&self.summaries) {
            out.push_str(&format!(
                "{label},{},{:.6},{:.6},{:.6},{:.6}\n",
                s.episodes, s.mean_reward, s.mean_episode_length, s.mean_revisits, s.mean_delta
            ));
        }
        out
    }

    /// One row per episode with every agent's length, revisits and reward side by side.
    pub fn paired_csv(&self) -> String {
        let mut header = vec!["episode".to_string(), "level_seed".to_string()];
        for field in ["length", "revisits", "reward"] {
            header.extend(self.labels.iter().map(|l| format!("{field}_{l}")));
        }
        let mut out = header.join(",") + "\n";
        let n = self.episodes.first().map_or(0, Vec::len);
        for i in 0..n {
            let mut row = vec![i.to_string(), self.episodes[0][i].level_seed.to_string()];
            row.extend(self.episodes.iter().map(|e| e[i].length.to_string()));
            row.extend(self.episodes.iter().map(|e| e[i].revisits.to_string()));
            row.extend(self.episodes.iter().map(|e| format!("{:.6}", e[i].total_reward)));
            out.push_str(&(row.join(",") + "\n"));
        }
        out
    }
}

/// Evaluates every entry with the same seed and episode count.
pub fn efficiency_report(entries: &[EfficiencyEntry], episodes: usize, seed: u64) -> Result<EfficiencyReport, AnalysisError> {
    if entries.len() < 2 {
        return Err(AnalysisError::Input("efficiency report compares at least two agents".into()));
    }
    if episodes == 0 {
        return Err(AnalysisError::Input("episode count must be positive".into()));
    }
    let first = &entries[0];
    for e in &entries[1..] {
        if e.levels != first.levels || e.kind != first.kind {
            return Err(AnalysisError::Input(format!(
                "{} and {} were evaluated on different level sets",
                first.label, e.label
            )));
        }
    }
    let mut report = EfficiencyReport { labels: Vec::new(), summaries: Vec::new(), episodes: Vec::new() };
    for e in entries {
        let eps = evaluate(e.net, &e.kind, &e.levels, episodes, seed, false)?;
        report.labels.push(e.label.clone());
        report.summaries.push(EvalSummary::from_episodes(&eps));
        report.episodes.push(eps);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> PolicyValueNet {
        PolicyValueNet::new(&mut ChaCha8Rng::seed_from_u64(seed), 56, 4, 4, 4, 2)
    }

    #[test]
    fn identical_agents_give_identical_rows() {
        let a = net(1);
        let levels = LevelSet::from_count(4, 100);
        let entry = |label: &str| EfficiencyEntry { label: label.into(), net: &a, kind: EnvKind::CorridorCoin, levels: levels.clone() };
        let report = efficiency_report(&[entry("x"), entry("y")], 6, 3).unwrap();
        assert_eq!(report.summaries[0], report.summaries[1]);
        let table = report.table_csv();
        let rows: Vec<&str> = table.lines().skip(1).collect();
        assert_eq!(rows[0].trim_start_matches("x,"), rows[1].trim_start_matches("y,"));
        assert_eq!(report.paired_csv().lines().count(), 7);
    }

    #[test]
    fn mismatched_levels_are_rejected() {
        let (a, b) = (net(1), net(2));
        let entries = [
            EfficiencyEntry { label: "a".into(), net: &a, kind: EnvKind::CorridorCoin, levels: LevelSet::from_count(4, 0) },
            EfficiencyEntry { label: "b".into(), net: &b, kind: EnvKind::CorridorCoin, levels: LevelSet::from_count(4, 1) },
        ];
        assert!(efficiency_report(&entries, 4, 0).is_err());
        assert!(efficiency_report(&entries[..1], 4, 0).is_err());
    }
}
