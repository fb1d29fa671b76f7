//! Association between inverse confusion and reward across training runs.

use crate::ppo::{EvalRow, ModelMode};

use super::stats::pearson;
use super::AnalysisError;

/// Evaluation log of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub name: String,
    pub mode: ModelMode,
    pub evals: Vec<EvalRow>,
}

/// One (1/δ, reward) pair taken from a logged evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSample {
    pub run: String,
    pub step: u64,
    pub inverse_confusion: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub samples: Vec<CorrelationSample>,
    pub r: f64,
}

impl CorrelationReport {
    pub const SAMPLE_HEADER: &'static str = "run,step,inverse_confusion,reward";

    pub fn samples_csv(&self) -> String {
        let mut out = format!("{}\n", Self::SAMPLE_HEADER);
        for s in &self.samples {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", s.run, s.step, s.inverse_confusion, s.reward));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!("samples,pearson_r\n{},{:.6}\n", self.samples.len(), self.r)
    }
}

/// Pairs every logged evaluation with step in `[from, to]` (each counted
/// once, in run then step order) and correlates mean 1/δ with mean reward.
pub fn confusion_reward_study(runs: &[RunLog], from: u64, to: u64) -> Result<CorrelationReport, AnalysisError> {
    if runs.is_empty() {
        return Err(AnalysisError::Input("no runs supplied".into()));
    }
    if let Some(run) = runs.iter().find(|r| r.mode != ModelMode::Dve) {
        return Err(AnalysisError::Input(format!(
            "run {} used mode {}; the correlation study reads dve runs only",
            run.name,
            run.mode.name()
        )));
    }
    let samples: Vec<CorrelationSample> = runs
        .iter()
        .flat_map(|run| {
            run.evals.iter().filter(|e| (from..=to).contains(&e.step)).map(|e| CorrelationSample {
                run: run.name.clone(),
                step: e.step,
                inverse_confusion: e.summary.mean_inv_delta,
                reward: e.summary.mean_reward,
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(AnalysisError::EmptyWindow { from, to });
    }
    let x: Vec<f64> = samples.iter().map(|s| s.inverse_confusion).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let r = pearson(&x, &y)?;
    Ok(CorrelationReport { samples, r })
}
