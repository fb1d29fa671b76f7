//! Generalized advantage estimation.

use super::PpoError;

/// Advantages and value targets for one contiguous segment.
///
/// `dones[t]` marks that the episode ended after step `t`. When the segment is
/// cut mid-episode, `bootstrap` must hold the value of the state that follows
/// the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: Option<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PpoError::Buffer(format!(
            "segment arrays disagree: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let truncated = !dones[n - 1];
    let tail = match bootstrap {
        Some(v) => v,
        None if truncated => return Err(PpoError::MissingBootstrap),
        None => 0.0,
    };
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { tail };
        let td = rewards[t] + gamma * next_value * live - values[t];
        running = td + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0, std 1; the std is floored at 1e-8.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_terminal_step() {
        for (g, l) in [(0.9, 0.95), (0.5, 0.0), (1.0, 1.0)] {
            let (a, r) = compute_gae(&[1.0], &[0.0], &[true], None, g, l).unwrap();
            assert_eq!(a, vec![1.0]);
            assert_eq!(r, vec![1.0]);
        }
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let rewards = [1.0, 0.5, -0.2, 2.0];
        let values = [0.3, -0.1, 0.8, 0.4];
        let dones = [false, true, false, false];
        let (a, _) = compute_gae(&rewards, &values, &dones, Some(0.7), 0.9, 0.0).unwrap();
        let next = [-0.1, 0.0, 0.4, 0.7];
        for t in 0..4 {
            let live = if dones[t] { 0.0 } else { 1.0 };
            assert_abs_diff_eq!(a[t], rewards[t] + 0.9 * next[t] * live - values[t], epsilon = 1e-15);
        }
    }

    #[test]
    fn missing_bootstrap_is_error() {
        assert!(matches!(
            compute_gae(&[0.0, 1.0], &[0.0, 0.0], &[false, false], None, 0.9, 0.9),
            Err(PpoError::MissingBootstrap)
        ));
        assert!(compute_gae(&[0.0], &[0.0, 1.0], &[true], None, 0.9, 0.9).is_err());
    }

    #[test]
    fn normalized_moments() {
        let mut v = vec![3.0, -1.0, 4.0, 1.0, 5.0, 9.0];
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 6.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
        assert!(mean.abs() <= 1e-10);
        assert_abs_diff_eq!(std, 1.0, epsilon = 1e-6);
        let mut flat = vec![2.0; 4];
        normalize(&mut flat);
        assert!(flat.iter().all(|x| *x == 0.0));
    }
}
