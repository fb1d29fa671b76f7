use super::{Gradients, NumericsError, ParamSet};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name, flat index, analytic and numeric value of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares `analytic` against central finite differences of `loss` with step `h`.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// near-zero entries from reporting huge ratios for differences at the 1e-10 level.
pub fn check_gradients<F>(
    params: &ParamSet,
    analytic: &Gradients,
    h: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&ParamSet) -> Result<f64, NumericsError>,
{
    let mut probe = params.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None };
    for slot in 0..params.len() {
        for i in 0..params.get(slot).len() {
            let original = params.get(slot).data()[i];
            probe.tensors_mut()[slot].data_mut()[i] = original + h;
            let up = loss(&probe)?;
            probe.tensors_mut()[slot].data_mut()[i] = original - h;
            let down = loss(&probe)?;
            probe.tensors_mut()[slot].data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(slot).data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.names()[slot].clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
