//! Summation of nonnegative-ish term sequences (typically integrals over
//! dyadic intervals `[2^k, 2^{k+1}]`) with convergence classification.
//!
//! A sequence is declared convergent when the last `window` terms are all
//! negligible relative to the partial sum (Cauchy criterion), or when they
//! decay geometrically with a stable ratio so the remainder can be summed in
//! closed form. When the term budget runs out, the mean log-ratio of the
//! final window decides: growing terms diverge, decaying terms converge via
//! extrapolation, and a flat fit is reported as indeterminate.

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct SeriesOptions {
    /// Relative size below which a term counts as negligible.
    pub cauchy_rel: f64,
    /// Number of consecutive terms inspected by every test.
    pub window: usize,
    pub max_terms: usize,
    /// Half-width of the band around zero for the mean `log2` term ratio
    /// that is treated as flat.
    pub flat_tol: f64,
    /// Admissible relative error of an extrapolated remainder.
    pub extrap_rel: f64,
}

impl SeriesOptions {
    /// Moment tests: Cauchy at `1e-6` over 8 consecutive doublings. The
    /// budget stops at `2^500`, well before polynomially decaying densities
    /// turn subnormal.
    pub fn moment() -> Self {
        SeriesOptions {
            cauchy_rel: 1e-6,
            window: 8,
            max_terms: 500,
            flat_tol: 1e-3,
            extrap_rel: 1e-8,
        }
    }

    /// Integrals that must be accurate to near machine precision.
    pub fn fine() -> Self {
        SeriesOptions {
            cauchy_rel: 1e-15,
            window: 8,
            max_terms: 1000,
            flat_tol: 1e-3,
            extrap_rel: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStatus {
    Converged,
    Divergent,
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct SeriesOutcome {
    pub status: SeriesStatus,
    pub partial: f64,
    /// Extrapolated sum of the terms that were not evaluated.
    pub remainder: f64,
    pub terms: Vec<f64>,
}

impl SeriesOutcome {
    pub fn total(&self) -> f64 {
        self.partial + self.remainder
    }
}

/// Geometric mean of consecutive ratios in `w` and the largest relative
/// deviation of a single ratio from it. `None` unless all terms share a sign
/// and are nonzero.
fn ratio_fit(w: &[f64]) -> Option<(f64, f64)> {
    if w.len() < 2 {
        return None;
    }
    let positive = w[0] > 0.0;
    if w.iter().any(|&t| t == 0.0 || (t > 0.0) != positive) {
        return None;
    }
    let ratios: Vec<f64> = w.windows(2).map(|p| p[1] / p[0]).collect();
    let mean_log = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    let r = mean_log.exp();
    let spread = ratios
        .iter()
        .map(|x| (x / r - 1.0).abs())
        .fold(0.0, f64::max);
    Some((r, spread))
}

fn outcome(status: SeriesStatus, partial: f64, remainder: f64, terms: Vec<f64>) -> SeriesOutcome {
    SeriesOutcome {
        status,
        partial,
        remainder,
        terms,
    }
}

/// Sums `term(0), term(1), ...` until one of the classification rules fires.
pub fn sum_terms<F>(mut term: F, opts: &SeriesOptions) -> Result<SeriesOutcome>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut terms = Vec::new();
    let mut partial = 0.0;
    for k in 0..opts.max_terms {
        let c = term(k)?;
        if !c.is_finite() {
            terms.push(c);
            return Ok(outcome(SeriesStatus::Divergent, f64::INFINITY, 0.0, terms));
        }
        terms.push(c);
        partial += c;
        if terms.len() < opts.window {
            continue;
        }
        let w = &terms[terms.len() - opts.window..];
        if w.iter().all(|t| t.abs() <= opts.cauchy_rel * partial.abs()) {
            return Ok(outcome(SeriesStatus::Converged, partial, 0.0, terms));
        }
        if let Some((r, spread)) = ratio_fit(w) {
            if r < 1.0 - opts.flat_tol {
                let rem = c * r / (1.0 - r);
                let err = rem.abs() * spread / (1.0 - r);
                if err <= opts.extrap_rel * (partial + rem).abs() {
                    return Ok(outcome(SeriesStatus::Converged, partial, rem, terms));
                }
            }
        }
    }
    let w = &terms[terms.len().saturating_sub(opts.window)..];
    if w.iter().all(|&t| t == 0.0) {
        return Ok(outcome(SeriesStatus::Converged, partial, 0.0, terms));
    }
    match ratio_fit(w) {
        Some((r, _)) => {
            let lam = r.log2();
            if lam > opts.flat_tol {
                Ok(outcome(SeriesStatus::Divergent, f64::INFINITY, 0.0, terms))
            } else if lam < -opts.flat_tol {
                let rem = w[w.len() - 1] * r / (1.0 - r);
                Ok(outcome(SeriesStatus::Converged, partial, rem, terms))
            } else {
                Ok(outcome(SeriesStatus::Indeterminate, partial, 0.0, terms))
            }
        }
        None => Ok(outcome(SeriesStatus::Indeterminate, partial, 0.0, terms)),
    }
}
