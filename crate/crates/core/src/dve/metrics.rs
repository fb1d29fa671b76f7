//! Confusion and contribution of cluster assignments, and the weighted value
//! they produce.

use super::DveError;

/// Tolerance on `|Σα - 1|` and on negative entries.
pub const SIMPLEX_TOL: f64 = 1e-6;

pub fn check_simplex(alpha: &[f64]) -> Result<(), DveError> {
    if alpha.is_empty() {
        return Err(DveError::EmptyAssignment);
    }
    let total: f64 = alpha.iter().sum();
    let negative = alpha.iter().any(|&a| a < -SIMPLEX_TOL || !a.is_finite());
    if negative || (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(DveError::OffSimplex { total });
    }
    Ok(())
}

/// `Σ αᵢ V̂ᵢ`: the value estimate interpolated across cluster means.
pub fn combine(alpha: &[f64], means: &[f64]) -> Result<f64, DveError> {
    check_simplex(alpha)?;
    if alpha.len() != means.len() {
        return Err(DveError::ClusterCount { expected: alpha.len(), got: means.len() });
    }
    Ok(alpha.iter().zip(means).map(|(a, m)| a * m).sum())
}

/// `δ = 1 / (N_b Σ αᵢ²)`, in `[1/N_b, 1]`.
pub fn confusion(alpha: &[f64]) -> Result<f64, DveError> {
    check_simplex(alpha)?;
    Ok(confusion_unchecked(alpha))
}

pub(crate) fn confusion_unchecked(alpha: &[f64]) -> f64 {
    let sq: f64 = alpha.iter().map(|a| a * a).sum();
    1.0 / (alpha.len() as f64 * sq)
}

/// `ρᵢ(τ) = (1/T) Σ_t δ_t αᵢ,t` over one trajectory.
pub fn contribution(trajectory: &[Vec<f64>]) -> Result<Vec<f64>, DveError> {
    let first = trajectory.first().ok_or(DveError::EmptyTrajectory)?;
    let n = first.len();
    let mut rho = vec![0.0; n];
    for alpha in trajectory {
        if alpha.len() != n {
            return Err(DveError::ClusterCount { expected: n, got: alpha.len() });
        }
        let delta = confusion(alpha)?;
        for (r, a) in rho.iter_mut().zip(alpha) {
            *r += delta * a;
        }
    }
    let t = trajectory.len() as f64;
    rho.iter_mut().for_each(|r| *r /= t);
    Ok(rho)
}

/// Per-trajectory value of the confusion-contribution objective, evaluated
/// without recording gradients.
pub fn cc_loss_value(
    trajectories: &[Vec<Vec<f64>>],
    k1: f64,
    k2: f64,
    eps_log: f64,
) -> Result<f64, DveError> {
    if trajectories.is_empty() {
        return Err(DveError::EmptyBatch);
    }
    let mut log_delta = 0.0;
    let mut steps = 0usize;
    let mut log_rho = 0.0;
    for traj in trajectories {
        let rho = contribution(traj)?;
        log_rho += (rho.iter().map(|r| r * r).sum::<f64>() + eps_log).ln();
        for alpha in traj {
            log_delta += (confusion_unchecked(alpha) + eps_log).ln();
            steps += 1;
        }
    }
    Ok(k1 * log_delta / steps as f64 + k2 * log_rho / trajectories.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn combine_examples() {
        assert_eq!(combine(&[1.0, 0.0, 0.0], &[5.0, -2.0, 7.0]).unwrap(), 5.0);
        assert_eq!(combine(&[0.5, 0.5], &[2.0, 4.0]).unwrap(), 3.0);
        assert_abs_diff_eq!(combine(&[0.2, 0.8], &[1.0, -1.0]).unwrap(), -0.6, epsilon = 1e-15);
    }

    #[test]
    fn combine_rejects_off_simplex() {
        assert!(matches!(combine(&[0.6, 0.6], &[1.0, 1.0]), Err(DveError::OffSimplex { .. })));
        assert!(combine(&[1.2, -0.2], &[1.0, 1.0]).is_err());
        assert!(matches!(combine(&[0.5, 0.5], &[1.0]), Err(DveError::ClusterCount { .. })));
    }

    #[test]
    fn confusion_examples() {
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(confusion(&[third, third, third]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(confusion(&[1.0, 0.0, 0.0]).unwrap(), third, epsilon = 1e-15);
        assert_abs_diff_eq!(confusion(&[0.5, 0.3, 0.2]).unwrap(), 0.877193, epsilon = 1e-6);
    }

    #[test]
    fn contribution_examples() {
        let rho = contribution(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(rho, vec![0.5, 0.0]);
        let rho = contribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(rho[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn contribution_of_empty_trajectory_is_error() {
        assert!(matches!(contribution(&[]), Err(DveError::EmptyTrajectory)));
    }

    #[test]
    fn cc_loss_value_examples() {
        let uniform = vec![vec![vec![0.5, 0.5]]];
        assert_abs_diff_eq!(cc_loss_value(&uniform, 1.0, 1.0, 0.0).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-6);
        let onehot = vec![vec![vec![1.0, 0.0]]];
        assert_abs_diff_eq!(cc_loss_value(&onehot, 1.0, 1.0, 0.0).unwrap(), -2.079442, epsilon = 1e-6);
        assert_eq!(cc_loss_value(&onehot, 0.0, 0.0, 1e-8).unwrap(), 0.0);
        assert!(matches!(cc_loss_value(&[], 1.0, 1.0, 0.0), Err(DveError::EmptyBatch)));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-9).then(|| w.iter().map(|v| v / s).collect())
        })
    }

    proptest! {
        #[test]
        fn confusion_is_bounded(alpha in (2usize..9).prop_flat_map(simplex)) {
            let n = alpha.len() as f64;
            let d = confusion(&alpha).unwrap();
            prop_assert!(d >= 1.0 / n - 1e-12 && d <= 1.0 + 1e-12);
        }

        #[test]
        fn sharpening_never_increases_confusion(alpha in simplex(4), shift in 0.0f64..1.0) {
            let arg = alpha.iter().enumerate().fold(0, |b, (i, &v)| if v > alpha[b] { i } else { b });
            let mut sharp: Vec<f64> = alpha.iter().map(|v| v * (1.0 - shift)).collect();
            sharp[arg] += shift;
            prop_assert!(confusion(&sharp).unwrap() <= confusion(&alpha).unwrap() + 1e-12);
        }

        #[test]
        fn contributions_sum_to_mean_confusion(traj in prop::collection::vec(simplex(3), 1..40)) {
            let rho = contribution(&traj).unwrap();
            let mean_delta: f64 = traj.iter().map(|a| confusion(a).unwrap()).sum::<f64>() / traj.len() as f64;
            prop_assert!((rho.iter().sum::<f64>() - mean_delta).abs() <= 1e-12);
            prop_assert!(rho.iter().all(|&r| r >= 0.0));
        }

        #[test]
        fn combine_stays_in_hull(alpha in simplex(5), means in prop::collection::vec(-50.0f64..50.0, 5)) {
            let v = combine(&alpha, &means).unwrap();
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}
