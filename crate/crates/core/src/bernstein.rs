//! Bernstein functions `φ(u) = b·u + ∫(1 − e^{−ux}) ν(dx)`, the moment
//! condition `∫_1^∞ x^{p/2} ν(dx) < ∞`, and the index of a subordinator at
//! the origin.
//!
//! The Lévy–Khintchine integral is evaluated on dyadic chunks: `(0, 1]` is
//! split into `[2^{-k-1}, 2^{-k}]` and `(1, ∞)` into `[2^k, 2^{k+1}]`, each
//! chunk integrated by adaptive Gauss–Kronrod and the chunk sequence summed
//! by [`crate::series::sum_terms`]. The same doubling decomposition decides
//! whether tail moments of `ν` are finite.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::quad::{adaptive, QuadOptions};
use crate::series::{sum_terms, SeriesOptions, SeriesOutcome, SeriesStatus};

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ClosedForm = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Lévy measure on `(0, ∞)`.
#[derive(Clone)]
pub enum LevyMeasure {
    None,
    /// `c·x^{−1−α} dx`, `α ∈ (0, 1)`.
    PowerLaw { c: f64, alpha: f64 },
    /// `shape·x^{−1}·e^{−rate·x} dx`.
    Gamma { shape: f64, rate: f64 },
    /// Finitely many atoms `(x_i, w_i)`.
    Atoms(Vec<(f64, f64)>),
    /// `mass·∫_0^1 v·e^{−vx} dv dx = mass·(1 − e^{−x}(1 + x))/x² dx`, the
    /// measure behind `φ(u) = u·log(1 + 1/u)`.
    UniformRateMixture { mass: f64 },
    /// A density supported on `(0, x_max]`.
    BoundedDensity { x_max: f64, density: DensityFn },
    /// A density on `(0, ∞)` with no declared tail behaviour.
    Density { density: DensityFn },
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyMeasure::None => write!(f, "None"),
            LevyMeasure::PowerLaw { c, alpha } => write!(f, "PowerLaw(c={c}, alpha={alpha})"),
            LevyMeasure::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            LevyMeasure::Atoms(a) => write!(f, "Atoms({a:?})"),
            LevyMeasure::UniformRateMixture { mass } => write!(f, "UniformRateMixture(mass={mass})"),
            LevyMeasure::BoundedDensity { x_max, .. } => write!(f, "BoundedDensity(x_max={x_max})"),
            LevyMeasure::Density { .. } => write!(f, "Density"),
        }
    }
}

/// Tail behaviour used for closed-form moment decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TailClass {
    /// Density decays like `x^{exponent}`.
    Power(f64),
    /// All moments finite.
    Light,
    Unknown,
}

fn mixture_density(x: f64) -> f64 {
    if x < 0.05 {
        // 1/2 − x/3 + x²/8 − x³/30 + x⁴/144 − x⁵/840 + x⁶/5760
        let c = [
            0.5,
            -1.0 / 3.0,
            1.0 / 8.0,
            -1.0 / 30.0,
            1.0 / 144.0,
            -1.0 / 840.0,
            1.0 / 5760.0,
        ];
        c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

fn chunk_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-13,
        max_intervals: 200,
    }
}

/// `∫_{2^{-k-1}}^{2^{-k}} g`, clipped to `(0, x_max]`.
fn lower_chunk<G: Fn(f64) -> f64>(g: &G, k: usize, x_max: f64) -> Result<f64> {
    let hi = 0.5f64.powi(k as i32).min(x_max);
    let lo = 0.5f64.powi(k as i32 + 1);
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive(g, lo, hi, chunk_opts()).map(|e| e.value)
}

/// `∫_{2^k}^{2^{k+1}} g`, clipped to `(0, x_max]`.
fn upper_chunk<G: Fn(f64) -> f64>(g: &G, k: usize, x_max: f64) -> Result<f64> {
    let lo = 2f64.powi(k as i32);
    let hi = (2.0 * lo).min(x_max);
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive(g, lo, hi, chunk_opts()).map(|e| e.value)
}

impl LevyMeasure {
    fn is_zero(&self) -> bool {
        match self {
            LevyMeasure::None => true,
            LevyMeasure::Atoms(a) => a.iter().all(|&(_, w)| w == 0.0),
            LevyMeasure::PowerLaw { c, .. } => *c == 0.0,
            LevyMeasure::Gamma { shape, .. } => *shape == 0.0,
            LevyMeasure::UniformRateMixture { mass } => *mass == 0.0,
            _ => false,
        }
    }

    /// Density of the absolutely continuous kinds at `x > 0`.
    fn density(&self, x: f64) -> f64 {
        match self {
            LevyMeasure::PowerLaw { c, alpha } => c * x.powf(-1.0 - alpha),
            LevyMeasure::Gamma { shape, rate } => shape * (-rate * x).exp() / x,
            LevyMeasure::UniformRateMixture { mass } => mass * mixture_density(x),
            LevyMeasure::BoundedDensity { x_max, density } => {
                if x <= *x_max {
                    density(x)
                } else {
                    0.0
                }
            }
            LevyMeasure::Density { density } => density(x),
            LevyMeasure::None | LevyMeasure::Atoms(_) => 0.0,
        }
    }

    fn support_end(&self) -> f64 {
        match self {
            LevyMeasure::BoundedDensity { x_max, .. } => *x_max,
            _ => f64::INFINITY,
        }
    }

    fn tail_class(&self) -> TailClass {
        match self {
            LevyMeasure::PowerLaw { alpha, .. } => TailClass::Power(-1.0 - alpha),
            LevyMeasure::UniformRateMixture { .. } => TailClass::Power(-2.0),
            LevyMeasure::Density { .. } => TailClass::Unknown,
            _ => TailClass::Light,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::None => Ok(()),
            LevyMeasure::PowerLaw { c, alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(invalid(format!("power-law index must lie in (0,1), got {alpha}")));
                }
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(invalid(format!("power-law constant must be nonnegative, got {c}")));
                }
                Ok(())
            }
            LevyMeasure::Gamma { shape, rate } => {
                if !(*shape >= 0.0 && shape.is_finite() && *rate > 0.0 && rate.is_finite()) {
                    return Err(invalid(format!(
                        "gamma measure needs shape >= 0 and rate > 0, got ({shape}, {rate})"
                    )));
                }
                Ok(())
            }
            LevyMeasure::Atoms(atoms) => {
                for &(x, w) in atoms {
                    if !(x > 0.0 && x.is_finite() && w >= 0.0 && w.is_finite()) {
                        return Err(invalid(format!(
                            "atoms need positive finite location and nonnegative weight, got ({x}, {w})"
                        )));
                    }
                }
                Ok(())
            }
            LevyMeasure::UniformRateMixture { mass } => {
                if !(*mass >= 0.0 && mass.is_finite()) {
                    return Err(invalid(format!("mixture mass must be nonnegative, got {mass}")));
                }
                Ok(())
            }
            LevyMeasure::BoundedDensity { .. } | LevyMeasure::Density { .. } => {
                let end = self.support_end();
                if !(end > 0.0) {
                    return Err(invalid(format!("x_max must be positive, got {end}")));
                }
                let probe_hi = end.min(1e6);
                for i in 0..=200 {
                    let x = 1e-8 * (probe_hi / 1e-8).powf(i as f64 / 200.0);
                    let v = self.density(x);
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(invalid(format!("Lévy density must be finite and nonnegative; f({x}) = {v}")));
                    }
                }
                // ∫ (x ∧ 1) ν(dx) < ∞
                let g_lo = |x: f64| x * self.density(x);
                let lo = sum_terms(|k| lower_chunk(&g_lo, k, end), &SeriesOptions::moment())?;
                let g_hi = |x: f64| self.density(x);
                let hi = sum_terms(|k| upper_chunk(&g_hi, k, end), &SeriesOptions::moment())?;
                if lo.status != SeriesStatus::Converged || hi.status != SeriesStatus::Converged {
                    return Err(invalid(
                        "Lévy measure violates the integrability condition ∫(x∧1)ν(dx) < ∞",
                    ));
                }
                Ok(())
            }
        }
    }

    /// `∫ (1 − e^{−ux}) ν(dx)` by quadrature (atoms summed exactly).
    fn laplace_integral(&self, u: f64) -> Result<f64> {
        match self {
            LevyMeasure::None => Ok(0.0),
            LevyMeasure::Atoms(atoms) => Ok(atoms.iter().map(|&(x, w)| -w * (-u * x).exp_m1()).sum()),
            _ => {
                let end = self.support_end();
                let g = |x: f64| -(-u * x).exp_m1() * self.density(x);
                let what = format!("Lévy–Khintchine integral at u = {u}");
                let lo = sum_terms(|k| lower_chunk(&g, k, end), &SeriesOptions::fine())?;
                let lo = converged(lo, &what)?;
                let hi = if end > 1.0 {
                    let hi = sum_terms(|k| upper_chunk(&g, k, end), &SeriesOptions::fine())?;
                    converged(hi, &what)?
                } else {
                    0.0
                };
                Ok(lo + hi)
            }
        }
    }

    /// `∫_{(0,1]} x ν(dx)`.
    fn first_moment_near_zero(&self) -> Result<f64> {
        match self {
            LevyMeasure::None => Ok(0.0),
            LevyMeasure::Atoms(atoms) => Ok(atoms.iter().filter(|a| a.0 <= 1.0).map(|&(x, w)| x * w).sum()),
            LevyMeasure::PowerLaw { c, alpha } => Ok(c / (1.0 - alpha)),
            _ => {
                let g = |x: f64| x * self.density(x);
                let out = sum_terms(|k| lower_chunk(&g, k, self.support_end()), &SeriesOptions::fine())?;
                converged(out, "first moment of ν on (0,1]")
            }
        }
    }

    /// `∫_1^∞ x^{q} ν(dx)` classified by the dyadic growth test.
    fn tail_moment_series(&self, q: f64) -> Result<SeriesOutcome> {
        let g = |x: f64| x.powf(q) * self.density(x);
        sum_terms(|k| upper_chunk(&g, k, self.support_end()), &SeriesOptions::moment())
    }
}

fn converged(out: SeriesOutcome, what: &str) -> Result<f64> {
    match out.status {
        SeriesStatus::Converged => Ok(out.total()),
        _ => Err(Error::NumericFailure {
            what: what.to_string(),
            residual: out.terms.last().copied().unwrap_or(f64::NAN).abs(),
        }),
    }
}

/// A Bernstein function `φ(u) = b·u + ∫(1 − e^{−ux}) ν(dx)`.
#[derive(Clone)]
pub struct BernsteinFunction {
    drift: f64,
    levy: LevyMeasure,
    closed_form: Option<ClosedForm>,
}

impl fmt::Debug for BernsteinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BernsteinFunction")
            .field("drift", &self.drift)
            .field("levy", &self.levy)
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl BernsteinFunction {
    /// Validates `(b, ν)` and spot-checks monotonicity and concavity of `φ`.
    pub fn new(drift: f64, levy: LevyMeasure, closed_form: Option<ClosedForm>) -> Result<Self> {
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(invalid(format!("drift must be nonnegative and finite, got {drift}")));
        }
        levy.validate()?;
        if drift == 0.0 && levy.is_zero() {
            return Err(invalid("trivial Bernstein function: b = 0 and ν = 0"));
        }
        let bf = BernsteinFunction {
            drift,
            levy,
            closed_form,
        };
        bf.spot_check_shape()?;
        Ok(bf)
    }

    /// α-stable: `φ(u) = u^α`.
    pub fn stable(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("stable index must lie in (0,1), got {alpha}")));
        }
        let c = alpha / gamma(1.0 - alpha);
        Self::new(
            0.0,
            LevyMeasure::PowerLaw { c, alpha },
            Some(Arc::new(move |u: f64| u.powf(alpha))),
        )
    }

    /// Gamma subordinator: `φ(u) = shape·log(1 + u/rate)`.
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(
            0.0,
            LevyMeasure::Gamma { shape, rate },
            Some(Arc::new(move |u: f64| shape * (u / rate).ln_1p())),
        )
    }

    /// Pure drift: `φ(u) = b·u`.
    pub fn drift_only(b: f64) -> Result<Self> {
        Self::new(b, LevyMeasure::None, Some(Arc::new(move |u: f64| b * u)))
    }

    /// Compound Poisson with atoms `(x_i, w_i)` plus drift.
    pub fn compound_poisson(atoms: Vec<(f64, f64)>, b: f64) -> Result<Self> {
        let cf = atoms.clone();
        Self::new(
            b,
            LevyMeasure::Atoms(atoms),
            Some(Arc::new(move |u: f64| {
                b * u + cf.iter().map(|&(x, w)| -w * (-u * x).exp_m1()).sum::<f64>()
            })),
        )
    }

    /// `φ(u) = u·log(1 + 1/u)`.
    pub fn log_family() -> Result<Self> {
        Self::new(
            0.0,
            LevyMeasure::UniformRateMixture { mass: 1.0 },
            Some(Arc::new(|u: f64| u * (1.0 / u).ln_1p())),
        )
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn levy(&self) -> &LevyMeasure {
        &self.levy
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    fn spot_check_shape(&self) -> Result<()> {
        let grid: Vec<f64> = (-3..=3).map(|k| 10f64.powi(k)).collect();
        let vals = grid.iter().map(|&u| self.phi(u)).collect::<Result<Vec<_>>>()?;
        for i in 0..vals.len() {
            if !(vals[i] > 0.0) {
                return Err(invalid(format!("φ({}) = {} is not positive", grid[i], vals[i])));
            }
        }
        for i in 1..vals.len() {
            if vals[i] < vals[i - 1] * (1.0 - 1e-12) {
                return Err(invalid("φ is not nondecreasing on the spot-check grid"));
            }
        }
        for i in 2..vals.len() {
            let s1 = (vals[i - 1] - vals[i - 2]) / (grid[i - 1] - grid[i - 2]);
            let s2 = (vals[i] - vals[i - 1]) / (grid[i] - grid[i - 1]);
            if s2 > s1 * (1.0 + 1e-9) + 1e-300 {
                return Err(invalid("φ is not concave on the spot-check grid"));
            }
        }
        Ok(())
    }

    /// `φ(u)`: the closed form when one is attached, quadrature otherwise.
    pub fn phi(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(invalid(format!("φ needs u > 0, got {u}")));
        }
        match &self.closed_form {
            Some(cf) => Ok(cf(u)),
            None => self.phi_quadrature(u),
        }
    }

    /// `φ(u)` through the Lévy–Khintchine integral, ignoring any closed form.
    pub fn phi_quadrature(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(invalid(format!("φ needs u > 0, got {u}")));
        }
        Ok(self.drift * u + self.levy.laplace_integral(u)?)
    }

    /// `φ'(0+) = b + ∫ x ν(dx)`; `+∞` when the tail first moment diverges.
    pub fn phi_prime_at_zero(&self) -> Result<f64> {
        let hp = self.hp_check(2.0)?;
        match hp.status {
            HpStatus::Fails => Ok(f64::INFINITY),
            HpStatus::Indeterminate => Err(Error::NumericFailure {
                what: "first moment of ν (tail fit is flat)".into(),
                residual: f64::NAN,
            }),
            HpStatus::Holds => {
                let tail = match hp.moment {
                    Some(m) => m,
                    None => {
                        return Err(Error::NumericFailure {
                            what: "first moment of ν on (1, ∞)".into(),
                            residual: f64::NAN,
                        })
                    }
                };
                Ok(self.drift + self.levy.first_moment_near_zero()? + tail)
            }
        }
    }

    /// Decides whether `∫_1^∞ x^{p/2} ν(dx) < ∞`.
    pub fn hp_check(&self, p: f64) -> Result<HpCheck> {
        if !p.is_finite() {
            return Err(invalid(format!("moment order must be finite, got {p}")));
        }
        let q = p / 2.0;
        let levy = &self.levy;
        let check = match levy {
            LevyMeasure::None => HpCheck::holds(0.0, HpMethod::Trivial),
            LevyMeasure::Atoms(atoms) => HpCheck::holds(
                atoms.iter().filter(|a| a.0 > 1.0).map(|&(x, w)| w * x.powf(q)).sum(),
                HpMethod::Trivial,
            ),
            LevyMeasure::PowerLaw { c, alpha } => {
                if q < *alpha {
                    HpCheck::holds(c / (alpha - q), HpMethod::ClosedForm)
                } else {
                    HpCheck::fails(HpMethod::ClosedForm)
                }
            }
            LevyMeasure::BoundedDensity { x_max, .. } if *x_max <= 1.0 => {
                HpCheck::holds(0.0, HpMethod::Trivial)
            }
            _ => {
                let out = levy.tail_moment_series(q)?;
                match levy.tail_class() {
                    TailClass::Power(exp) => {
                        if q + exp < -1.0 {
                            HpCheck {
                                status: HpStatus::Holds,
                                moment: (out.status == SeriesStatus::Converged).then(|| out.total()),
                                method: HpMethod::ClosedForm,
                            }
                        } else {
                            HpCheck::fails(HpMethod::ClosedForm)
                        }
                    }
                    TailClass::Light | TailClass::Unknown => match out.status {
                        SeriesStatus::Converged => HpCheck::holds(out.total(), HpMethod::Quadrature),
                        SeriesStatus::Divergent => HpCheck::fails(HpMethod::Quadrature),
                        SeriesStatus::Indeterminate => HpCheck {
                            status: HpStatus::Indeterminate,
                            moment: None,
                            method: HpMethod::Quadrature,
                        },
                    },
                }
            }
        };
        // ν(1, ∞) < ∞ for every Lévy measure.
        if p <= 0.0 && check.status != HpStatus::Holds {
            return Ok(HpCheck {
                status: HpStatus::Holds,
                moment: None,
                method: HpMethod::Trivial,
            });
        }
        Ok(check)
    }

    /// Estimates the index at the origin by the log-log slope of `φ` and by
    /// bisection on the critical tail-moment order.
    pub fn index_sigma0(&self, cfg: &IndexConfig) -> Result<IndexReport> {
        if !(cfg.u_min > 0.0 && cfg.u_min < cfg.u_max && cfg.points >= 2) {
            return Err(invalid("index grid needs 0 < u_min < u_max and at least two points"));
        }
        let n = cfg.points;
        let mut phi_grid = Vec::with_capacity(n);
        for i in 0..n {
            // decreasing towards the origin
            let frac = i as f64 / (n - 1) as f64;
            let u = (cfg.u_max.ln() + frac * (cfg.u_min.ln() - cfg.u_max.ln())).exp();
            phi_grid.push((u, self.phi(u)?));
        }
        let xs: Vec<f64> = phi_grid.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = phi_grid.iter().map(|p| p.1.ln()).collect();
        let sigma0_limit = least_squares_slope(&xs, &ys).clamp(0.0, 1.0);

        let mut trace = Vec::new();
        let probe = |rho: f64, trace: &mut Vec<(f64, HpStatus)>| -> Result<HpStatus> {
            let s = self.hp_check(2.0 * rho)?.status;
            trace.push((rho, s));
            Ok(s)
        };
        let mut moment_status = MomentStatus::Determinate;
        let sigma0_moment = if probe(1.0, &mut trace)? == HpStatus::Holds {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > cfg.rho_tol {
                let mid = 0.5 * (lo + hi);
                match probe(mid, &mut trace)? {
                    HpStatus::Holds => lo = mid,
                    HpStatus::Fails => hi = mid,
                    HpStatus::Indeterminate => {
                        // Widen around the undecided point until both sides decide.
                        let mut resolved = false;
                        for step in [0.005, 0.01, 0.02] {
                            let left = probe((mid - step).max(lo), &mut trace)?;
                            let right = probe((mid + step).min(hi), &mut trace)?;
                            if left == HpStatus::Holds && right == HpStatus::Fails {
                                lo = (mid - step).max(lo);
                                hi = (mid + step).min(hi);
                                resolved = true;
                                break;
                            }
                        }
                        if !resolved {
                            moment_status = MomentStatus::Indeterminate;
                            lo = mid;
                            hi = mid;
                        }
                        if hi - lo <= 2.0 * 0.02 + cfg.rho_tol {
                            break;
                        }
                    }
                }
            }
            0.5 * (lo + hi)
        };
        Ok(IndexReport {
            sigma0_limit,
            sigma0_moment,
            agreement_gap: (sigma0_limit - sigma0_moment).abs(),
            moment_status,
            diagnostics: IndexDiagnostics {
                phi_grid,
                rho_trace: trace,
            },
        })
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HpStatus {
    Holds,
    Fails,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HpMethod {
    Trivial,
    ClosedForm,
    Quadrature,
}

/// Outcome of a tail-moment test.
#[derive(Debug, Clone, Serialize)]
pub struct HpCheck {
    pub status: HpStatus,
    /// `∫_1^∞ x^{p/2} ν(dx)` when finite and computed.
    pub moment: Option<f64>,
    pub method: HpMethod,
}

impl HpCheck {
    fn holds(moment: f64, method: HpMethod) -> Self {
        HpCheck {
            status: HpStatus::Holds,
            moment: Some(moment),
            method,
        }
    }

    fn fails(method: HpMethod) -> Self {
        HpCheck {
            status: HpStatus::Fails,
            moment: None,
            method,
        }
    }
}

/// Grid parameters for [`BernsteinFunction::index_sigma0`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub u_min: f64,
    pub u_max: f64,
    pub points: usize,
    pub rho_tol: f64,
}

impl Default for IndexConfig {
    /// The window sits far below `u = 1e-8`: slowly varying factors such as
    /// `log(1/u)` bias a log-log slope by about `1/log(1/u)`.
    fn default() -> Self {
        IndexConfig {
            u_min: 1e-200,
            u_max: 1e-20,
            points: 50,
            rho_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentStatus {
    Determinate,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexDiagnostics {
    pub phi_grid: Vec<(f64, f64)>,
    pub rho_trace: Vec<(f64, HpStatus)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub sigma0_limit: f64,
    pub sigma0_moment: f64,
    pub agreement_gap: f64,
    pub moment_status: MomentStatus,
    pub diagnostics: IndexDiagnostics,
}

/// JSON family specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FamilySpec {
    Stable {
        alpha: f64,
    },
    Gamma {
        #[serde(default = "one")]
        shape: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    #[serde(alias = "deterministic")]
    Drift {
        #[serde(alias = "c")]
        b: f64,
    },
    Cpp {
        atoms: Vec<(f64, f64)>,
        #[serde(default)]
        b: f64,
    },
    Log {
        #[serde(default = "log_form")]
        form: String,
    },
}

fn one() -> f64 {
    1.0
}

fn log_form() -> String {
    "u*log(1+1/u)".into()
}

impl FamilySpec {
    pub fn build(&self) -> Result<BernsteinFunction> {
        match self {
            FamilySpec::Stable { alpha } => BernsteinFunction::stable(*alpha),
            FamilySpec::Gamma { shape, rate } => BernsteinFunction::gamma(*shape, *rate),
            FamilySpec::Drift { b } => BernsteinFunction::drift_only(*b),
            FamilySpec::Cpp { atoms, b } => BernsteinFunction::compound_poisson(atoms.clone(), *b),
            FamilySpec::Log { form } => {
                let compact: String = form.chars().filter(|c| !c.is_whitespace()).collect();
                if compact != "u*log(1+1/u)" {
                    return Err(invalid(format!("unsupported log-family form {form:?}")));
                }
                BernsteinFunction::log_family()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + b.abs())
    }

    #[test]
    fn phi_examples() {
        let st = BernsteinFunction::stable(0.5).unwrap();
        assert_eq!(st.phi(4.0).unwrap(), 2.0);
        let d = BernsteinFunction::drift_only(3.0).unwrap();
        assert_eq!(d.phi(2.0).unwrap(), 6.0);
        assert_eq!(d.phi_quadrature(2.0).unwrap(), 6.0);
        let g = BernsteinFunction::gamma(1.0, 1.0).unwrap();
        assert!((g.phi_quadrature(1.0).unwrap() - 0.693147).abs() < 1e-6);
        assert!((g.phi_quadrature(1.0).unwrap() - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn phi_rejects_nonpositive_argument() {
        let st = BernsteinFunction::stable(0.5).unwrap();
        assert!(st.phi(0.0).is_err());
        assert!(st.phi(-1.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_forms_on_log_grid() {
        let fams = [
            BernsteinFunction::stable(0.3).unwrap(),
            BernsteinFunction::stable(0.5).unwrap(),
            BernsteinFunction::stable(0.7).unwrap(),
            BernsteinFunction::gamma(1.0, 1.0).unwrap(),
            BernsteinFunction::gamma(2.0, 0.5).unwrap(),
            BernsteinFunction::log_family().unwrap(),
            BernsteinFunction::compound_poisson(vec![(0.5, 1.0), (3.0, 0.2)], 0.1).unwrap(),
        ];
        for bf in &fams {
            for k in 0..=45 {
                let u = 10f64.powf(-6.0 + 9.0 * k as f64 / 45.0);
                let q = bf.phi_quadrature(u).unwrap();
                let c = bf.phi(u).unwrap();
                assert!(rel(q, c) <= 1e-7, "{bf:?} u={u} quad={q} closed={c}");
            }
        }
    }

    #[test]
    fn trivial_function_rejected() {
        assert!(BernsteinFunction::new(0.0, LevyMeasure::None, None).is_err());
        assert!(BernsteinFunction::new(-1.0, LevyMeasure::None, None).is_err());
    }

    #[test]
    fn nonintegrable_density_rejected() {
        // x^{-2} near zero violates ∫(x∧1)ν(dx) < ∞.
        let d: DensityFn = Arc::new(|x: f64| x.powi(-2));
        let r = BernsteinFunction::new(0.0, LevyMeasure::BoundedDensity { x_max: 1.0, density: d }, None);
        assert!(r.is_err());
    }

    #[test]
    fn phi_prime_at_zero_examples() {
        assert_eq!(BernsteinFunction::drift_only(3.0).unwrap().phi_prime_at_zero().unwrap(), 3.0);
        assert!(BernsteinFunction::stable(0.5).unwrap().phi_prime_at_zero().unwrap().is_infinite());
        assert!(BernsteinFunction::log_family().unwrap().phi_prime_at_zero().unwrap().is_infinite());
        let g = BernsteinFunction::gamma(1.0, 1.0).unwrap().phi_prime_at_zero().unwrap();
        assert!((g - 1.0).abs() < 1e-9, "{g}");
    }

    #[test]
    fn stable_first_moment_diverges_under_generic_quadrature() {
        // Same measure without the closed-form tail class: x·x^{-1.5} grows.
        let c = 0.5 / gamma(0.5);
        let d: DensityFn = Arc::new(move |x: f64| c * x.powf(-1.5));
        let bf = BernsteinFunction::new(0.0, LevyMeasure::Density { density: d }, None).unwrap();
        assert_eq!(bf.hp_check(2.0).unwrap().status, HpStatus::Fails);
        assert!(bf.phi_prime_at_zero().unwrap().is_infinite());
    }

    #[test]
    fn hp_examples() {
        let st = BernsteinFunction::stable(0.5).unwrap();
        let h = st.hp_check(0.8).unwrap();
        assert_eq!(h.status, HpStatus::Holds);
        // oracle: generic quadrature of ∫_1^∞ c·x^{0.4-1.5} dx = c/0.1
        let c = 0.5 / gamma(0.5);
        let d: DensityFn = Arc::new(move |x: f64| c * x.powf(-1.5));
        let generic = BernsteinFunction::new(0.0, LevyMeasure::Density { density: d }, None).unwrap();
        let g = generic.hp_check(0.8).unwrap();
        assert_eq!(g.status, HpStatus::Holds);
        assert!(rel(g.moment.unwrap(), c / 0.1) < 1e-6, "{:?}", g.moment);
        assert!(rel(h.moment.unwrap(), g.moment.unwrap()) < 1e-6);

        assert_eq!(st.hp_check(1.0).unwrap().status, HpStatus::Fails);
        // x^{-1} tail under the generic path: partial integrals grow like log
        let gen1 = generic.hp_check(1.0).unwrap();
        assert_eq!(gen1.status, HpStatus::Indeterminate);

        let bounded = BernsteinFunction::compound_poisson(vec![(0.3, 2.0), (1.0, 0.5)], 0.0).unwrap();
        assert_eq!(bounded.hp_check(10.0).unwrap().status, HpStatus::Holds);
        let d: DensityFn = Arc::new(|_x: f64| 1.0);
        let bd = BernsteinFunction::new(0.0, LevyMeasure::BoundedDensity { x_max: 1.0, density: d }, None).unwrap();
        assert_eq!(bd.hp_check(10.0).unwrap().status, HpStatus::Holds);
    }

    #[test]
    fn hp_nonpositive_order_always_holds() {
        let st = BernsteinFunction::stable(0.2).unwrap();
        for p in [-3.0, -0.5, 0.0] {
            assert_eq!(st.hp_check(p).unwrap().status, HpStatus::Holds);
        }
    }

    #[test]
    fn gamma_moments_quadrature() {
        // ∫_1^∞ x^{-1} e^{-x} · x dx = e^{-1}
        let g = BernsteinFunction::gamma(1.0, 1.0).unwrap();
        let h = g.hp_check(2.0).unwrap();
        assert_eq!(h.status, HpStatus::Holds);
        assert!(rel(h.moment.unwrap(), (-1f64).exp()) < 1e-8);
        assert_eq!(g.hp_check(12.0).unwrap().status, HpStatus::Holds);
    }

    #[test]
    fn log_family_moment_boundary() {
        let lf = BernsteinFunction::log_family().unwrap();
        assert_eq!(lf.hp_check(2.0).unwrap().status, HpStatus::Fails);
        assert_eq!(lf.hp_check(1.9).unwrap().status, HpStatus::Holds);
    }

    #[test]
    fn index_examples() {
        let cfg = IndexConfig::default();
        let r = BernsteinFunction::stable(0.7).unwrap().index_sigma0(&cfg).unwrap();
        assert!((r.sigma0_limit - 0.7).abs() < 0.05 && (r.sigma0_moment - 0.7).abs() < 0.05);
        let r = BernsteinFunction::drift_only(1.0).unwrap().index_sigma0(&cfg).unwrap();
        assert_eq!(r.sigma0_moment, 1.0);
        assert!((r.sigma0_limit - 1.0).abs() < 1e-9);
        let r = BernsteinFunction::log_family().unwrap().index_sigma0(&cfg).unwrap();
        assert!(r.sigma0_limit >= 0.95 && r.sigma0_moment >= 0.95, "{r:?}");
        assert!(r.agreement_gap <= 0.05);
    }

    #[test]
    fn short_window_biases_log_family_slope() {
        let cfg = IndexConfig {
            u_min: 1e-8,
            u_max: 1e-2,
            ..IndexConfig::default()
        };
        let r = BernsteinFunction::log_family().unwrap().index_sigma0(&cfg).unwrap();
        assert!(r.sigma0_limit < 0.95, "{}", r.sigma0_limit);
    }

    #[test]
    fn index_from_quadrature_only_family() {
        // power law without a closed form: slope from quadrature, moment
        // order from the dyadic growth test
        let alpha = 0.4;
        let c = alpha / gamma(1.0 - alpha);
        let d: DensityFn = Arc::new(move |x: f64| c * x.powf(-1.0 - alpha));
        let bf = BernsteinFunction::new(0.0, LevyMeasure::Density { density: d }, None).unwrap();
        let cfg = IndexConfig {
            u_min: 1e-60,
            u_max: 1e-10,
            points: 12,
            rho_tol: 1e-3,
        };
        let r = bf.index_sigma0(&cfg).unwrap();
        assert!((r.sigma0_limit - alpha).abs() < 0.01, "{r:?}");
        assert!((r.sigma0_moment - alpha).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn family_spec_json() {
        let f: FamilySpec = serde_json::from_str(r#"{"family":"stable","alpha":0.5}"#).unwrap();
        assert_eq!(f, FamilySpec::Stable { alpha: 0.5 });
        let f: FamilySpec = serde_json::from_str(r#"{"family":"gamma"}"#).unwrap();
        assert_eq!(f, FamilySpec::Gamma { shape: 1.0, rate: 1.0 });
        let f: FamilySpec = serde_json::from_str(r#"{"family":"cpp","atoms":[[0.5,1.0]],"b":0.0}"#).unwrap();
        assert!(f.build().is_ok());
        let f: FamilySpec = serde_json::from_str(r#"{"family":"log","form":"u*log(1+1/u)"}"#).unwrap();
        assert!(f.build().is_ok());
        let f: FamilySpec = serde_json::from_str(r#"{"family":"drift","b":3.0}"#).unwrap();
        assert_eq!(f.build().unwrap().phi(1.0).unwrap(), 3.0);
        let e = serde_json::from_str::<FamilySpec>(r#"{"alpha":0.5}"#).unwrap_err();
        assert!(e.to_string().contains("family"), "{e}");
    }
}
