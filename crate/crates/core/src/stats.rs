//! Monte Carlo summaries and the 3-SE gate.

use serde::Serialize;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCResult {
    pub estimate: f64,
    #[serde(rename = "se")]
    pub standard_error: f64,
    pub n: usize,
    /// `|estimate − target| ≤ 3·SE`; `true` when there is no target.
    pub pass: bool,
}

impl MCResult {
    /// Summarises `values` against an optional target. The sum runs in slice
    /// order so the result does not depend on how the values were produced.
    pub fn from_values(values: &[f64], target: Option<f64>) -> Self {
        let (estimate, standard_error) = mean_se(values);
        let pass = match target {
            Some(t) => gate(estimate - t, standard_error),
            None => estimate.is_finite(),
        };
        MCResult {
            estimate,
            standard_error,
            n: values.len(),
            pass,
        }
    }
}

/// `|diff| ≤ 3·se`, with an exact zero accepted at `se = 0`.
pub fn gate(diff: f64, se: f64) -> bool {
    diff.is_finite() && se.is_finite() && diff.abs() <= 3.0 * se
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Sample variance of `values` and the standard error of that variance,
/// `sqrt((m4 − s⁴)/n)` from the fourth central moment.
pub fn variance_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2: f64 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4: f64 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2) / n).max(0.0).sqrt())
}
