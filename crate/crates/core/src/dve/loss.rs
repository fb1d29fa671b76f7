use crate::numerics::{Tape, Var};

use super::DveError;

/// Differentiable confusion-contribution loss.
///
/// `alpha` is an `[S, N_b]` node of assignment rows; `trajectory_of_row[s]`
/// names the trajectory segment each row belongs to (ids `0..trajectories`).
///
/// `k1 · mean_s log(δ_s + ε) + k2 · mean_τ log(Σᵢ ρᵢ(τ)² + ε)`
pub fn cc_loss(
    tape: &mut Tape,
    alpha: Var,
    trajectory_of_row: &[usize],
    trajectories: usize,
    k1: f64,
    k2: f64,
    eps_log: f64,
) -> Result<Var, DveError> {
    let rows = tape.value(alpha).rows();
    if rows == 0 || trajectories == 0 || trajectory_of_row.is_empty() {
        return Err(DveError::EmptyBatch);
    }
    if trajectory_of_row.len() != rows {
        return Err(DveError::ClusterCount { expected: rows, got: trajectory_of_row.len() });
    }
    let n = tape.value(alpha).cols() as f64;
    let sq = tape.square(alpha);
    let sq_sum = tape.sum_rows(sq);
    let scaled = tape.scale(sq_sum, n);
    let delta = tape.recip(scaled);

    let guarded = tape.add_scalar(delta, eps_log);
    let log_delta = tape.log(guarded);
    let confusion_term = tape.mean(log_delta)?;

    let weighted = tape.mul_col(alpha, delta)?;
    let rho = tape
        .segment_mean(weighted, trajectory_of_row, trajectories)
        .map_err(|_| DveError::EmptyTrajectory)?;
    let rho_sq = tape.square(rho);
    let rho_sq_sum = tape.sum_rows(rho_sq);
    let guarded = tape.add_scalar(rho_sq_sum, eps_log);
    let log_rho = tape.log(guarded);
    let contribution_term = tape.mean(log_rho)?;

    let a = tape.scale(confusion_term, k1);
    let b = tape.scale(contribution_term, k2);
    Ok(tape.add(a, b)?)
}
