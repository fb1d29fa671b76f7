//! Product-moment correlation and the chi-square test of independence.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::AnalysisError;

/// Pearson correlation coefficient of paired samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Input(format!("sample lengths differ ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(AnalysisError::Input("correlation needs at least two samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) || !sxy.is_finite() {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Result of a chi-square test on a contingency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson's chi-square test of independence. Empty rows and columns are
/// dropped; a table that collapses to one row or column has p = 1.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquare, AnalysisError> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(AnalysisError::Input("contingency table rows differ in length".into()));
    }
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let rows: Vec<usize> = (0..table.len()).filter(|&r| row_sums[r] > 0).collect();
    let kept: Vec<usize> = (0..cols).filter(|&c| col_sums[c] > 0).collect();
    let total: u64 = row_sums.iter().sum();
    if total == 0 {
        return Err(AnalysisError::Input("contingency table is empty".into()));
    }
    if rows.len() < 2 || kept.len() < 2 {
        return Ok(ChiSquare { statistic: 0.0, dof: 0, p_value: 1.0 });
    }
    let mut statistic = 0.0;
    for &r in &rows {
        for &c in &kept {
            let expected = row_sums[r] as f64 * col_sums[c] as f64 / total as f64;
            let diff = table[r][c] as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = (rows.len() - 1) * (kept.len() - 1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| AnalysisError::Input(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: dist.sf(statistic) })
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(AnalysisError::ZeroVariance)));
        assert!(matches!(pearson(&[1.0, 2.0], &[5.0, 5.0]), Err(AnalysisError::ZeroVariance)));
        assert!(pearson(&[1.0], &[2.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn chi_square_reference_values() {
        // perfectly balanced table: no association
        let even = chi_square_independence(&[vec![10, 10], vec![10, 10]]).unwrap();
        assert_abs_diff_eq!(even.statistic, 0.0);
        assert_abs_diff_eq!(even.p_value, 1.0, epsilon = 1e-12);
        // [[20,5],[5,20]]: expected 12.5 everywhere, statistic 4 * 7.5² / 12.5 = 18
        let strong = chi_square_independence(&[vec![20, 5], vec![5, 20]]).unwrap();
        assert_abs_diff_eq!(strong.statistic, 18.0, epsilon = 1e-12);
        assert_eq!(strong.dof, 1);
        // survival of chi2(1) at 18 is erfc(3)
        assert_abs_diff_eq!(strong.p_value, 2.209049699858544e-5, epsilon = 1e-12);
    }

    #[test]
    fn chi_square_drops_empty_margins() {
        let t = chi_square_independence(&[vec![4, 0, 6], vec![0, 0, 0]]).unwrap();
        assert_eq!(t.dof, 0);
        assert_eq!(t.p_value, 1.0);
        assert!(chi_square_independence(&[vec![0, 0]]).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| (prop::collection::vec(-100.0..100.0f64, n), prop::collection::vec(-100.0..100.0f64, n)))
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_affine_invariant(
            (x, y) in paired(),
            a in 0.1..50.0f64,
            b in -100.0..100.0f64,
            c in 0.1..50.0f64,
            d in -100.0..100.0f64,
        ) {
            let Ok(r) = pearson(&x, &y) else { return Ok(()) };
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            prop_assert!((pearson(&xs, &ys).unwrap() - r).abs() < 1e-9);
            let flipped: Vec<f64> = y.iter().map(|v| -c * v + d).collect();
            prop_assert!((pearson(&x, &flipped).unwrap() + r).abs() < 1e-9);
        }
    }
}
