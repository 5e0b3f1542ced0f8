//! Subordinators on a finite horizon: exact increment samplers, the
//! essential supremum of `S_T`, survival tables for `t ↦ P(S_T ≥ t)` and the
//! analytic tail bound `min(1, 2T∫_0^∞ φ(u/t) e^{−u} du)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::path::Path;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma_ur;

use crate::bernstein::{BernsteinFunction, FamilySpec, IndexConfig};
use crate::error::{invalid, Error, Result};
use crate::quad::integrate_exp_weighted;
use crate::series::{sum_terms, SeriesOptions, SeriesOutcome};
use crate::stats::MCResult;

/// Model JSON: a family specification plus the horizon `"T"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// Distributional family of a subordinator.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Stable { alpha: f64 },
    /// `S_t ~ Gamma(shape·t, rate)`.
    Gamma { shape: f64, rate: f64 },
    /// Atoms `(x_i, w_i)` of the Lévy measure plus drift.
    CompoundPoisson { atoms: Vec<(f64, f64)>, drift: f64 },
    /// Jumps `E/V` with `E ~ Exp(1)`, `V ~ U(0,1)` at rate `mass`; the
    /// Laplace exponent is `mass·u·log(1 + 1/u)`.
    UniformRateMixture { mass: f64 },
    Deterministic { c: f64 },
}

#[derive(Debug, Clone)]
pub struct SubordinatorModel {
    family: Family,
    horizon: f64,
    bernstein: BernsteinFunction,
}

/// Observed values `ℓ_{t_i}` of a subordinator path and its terminal value `ℓ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub terminal: f64,
}

impl SubordinatorPath {
    /// Nondecreasing, finite, and zero at `t = 0`.
    pub fn is_valid(&self) -> bool {
        let mut prev = 0.0;
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if !v.is_finite() || v < prev || (t == 0.0 && v != 0.0) {
                return false;
            }
            prev = v;
        }
        self.terminal.is_finite() && self.terminal >= prev
    }
}

/// Positive `α`-stable variate with `E e^{−uX} = e^{−u^α}` (Kanter's
/// representation), evaluated in the log domain.
fn stable_variate<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    let ln = (alpha * u).sin().ln() - u.sin().ln() / alpha
        + (1.0 - alpha) / alpha * (((1.0 - alpha) * u).sin().ln() - e.ln());
    ln.exp()
}

impl SubordinatorModel {
    pub fn new(family: Family, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon T must be positive and finite, got {horizon}")));
        }
        let bernstein = match &family {
            Family::Stable { alpha } => BernsteinFunction::stable(*alpha)?,
            Family::Gamma { shape, rate } => BernsteinFunction::gamma(*shape, *rate)?,
            Family::CompoundPoisson { atoms, drift } => {
                BernsteinFunction::compound_poisson(atoms.clone(), *drift)?
            }
            Family::UniformRateMixture { mass } => {
                if *mass != 1.0 {
                    return Err(invalid(format!("mixture family supports mass 1 only, got {mass}")));
                }
                BernsteinFunction::log_family()?
            }
            Family::Deterministic { c } => BernsteinFunction::drift_only(*c)?,
        };
        Ok(SubordinatorModel {
            family,
            horizon,
            bernstein,
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let horizon = spec
            .horizon
            .ok_or_else(|| Error::Config("missing field `T` in model".into()))?;
        // validates the family parameters
        spec.family.build()?;
        let family = match &spec.family {
            FamilySpec::Stable { alpha } => Family::Stable { alpha: *alpha },
            FamilySpec::Gamma { shape, rate } => Family::Gamma {
                shape: *shape,
                rate: *rate,
            },
            FamilySpec::Drift { b } => Family::Deterministic { c: *b },
            FamilySpec::Cpp { atoms, b } => Family::CompoundPoisson {
                atoms: atoms.clone(),
                drift: *b,
            },
            FamilySpec::Log { .. } => Family::UniformRateMixture { mass: 1.0 },
        };
        Self::new(family, horizon)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bernstein(&self) -> &BernsteinFunction {
        &self.bernstein
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.family, Family::Deterministic { .. })
    }

    /// `M = ess sup S_T`: `cT` for a deterministic subordinator, `+∞` for
    /// every other family on a finite horizon.
    pub fn ess_sup(&self) -> f64 {
        match self.family {
            Family::Deterministic { c } => c * self.horizon,
            _ => f64::INFINITY,
        }
    }

    /// One draw of `S_{t+dt} − S_t`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        if dt <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Stable { alpha } => dt.powf(1.0 / alpha) * stable_variate(*alpha, rng),
            Family::Gamma { shape, rate } => Gamma::new(shape * dt, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            Family::CompoundPoisson { atoms, drift } => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let mut s = drift * dt;
                for _ in 0..poisson_count(total * dt, rng) {
                    let mut pick = rng.random::<f64>() * total;
                    let mut x = atoms[atoms.len() - 1].0;
                    for &(xi, wi) in atoms {
                        if pick < wi {
                            x = xi;
                            break;
                        }
                        pick -= wi;
                    }
                    s += x;
                }
                s
            }
            Family::UniformRateMixture { mass } => {
                let mut s = 0.0;
                for _ in 0..poisson_count(mass * dt, rng) {
                    let e: f64 = rng.sample(Exp1);
                    let v: f64 = rng.sample(Open01);
                    s += e / v;
                }
                s
            }
            Family::Deterministic { c } => c * dt,
        }
    }

    /// One draw of `S_T`.
    pub fn sample_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_increment(self.horizon, rng)
    }

    /// Samples `ℓ` at the sorted times in `[0, T]` and appends `ℓ_T`.
    pub fn sample_path<R: Rng + ?Sized>(&self, times: &[f64], rng: &mut R) -> Result<SubordinatorPath> {
        let mut prev = 0.0;
        for &t in times {
            if !(t >= prev && t <= self.horizon) {
                return Err(invalid(format!(
                    "observation times must be sorted in [0, {}]; got {times:?}",
                    self.horizon
                )));
            }
            prev = t;
        }
        if let Family::Deterministic { c } = self.family {
            return Ok(SubordinatorPath {
                times: times.to_vec(),
                values: times.iter().map(|t| c * t).collect(),
                terminal: c * self.horizon,
            });
        }
        let mut values = Vec::with_capacity(times.len());
        let (mut t_prev, mut level) = (0.0, 0.0);
        for &t in times {
            level += self.sample_increment(t - t_prev, rng);
            values.push(level);
            t_prev = t;
        }
        let terminal = level + self.sample_increment(self.horizon - t_prev, rng);
        Ok(SubordinatorPath {
            times: times.to_vec(),
            values,
            terminal,
        })
    }

    /// `P(S_T ≥ t)` where it is available in closed form: deterministic,
    /// gamma, and the ½-stable family (Lévy distribution).
    pub fn exact_survival(&self, t: f64) -> Option<f64> {
        if t <= 0.0 {
            return Some(1.0);
        }
        let big_t = self.horizon;
        match self.family {
            Family::Deterministic { c } => Some(if t <= c * big_t { 1.0 } else { 0.0 }),
            Family::Gamma { shape, rate } => Some(gamma_ur(shape * big_t, rate * t)),
            Family::Stable { alpha } if alpha == 0.5 => Some(erf(big_t / (2.0 * t.sqrt()))),
            _ => None,
        }
    }

    pub fn has_exact_survival(&self) -> bool {
        self.exact_survival(1.0).is_some()
    }

    /// `min(1, 2T∫_0^∞ φ(u/t) e^{−u} du)` for `t ≥ 1`.
    pub fn tail_upper_bound(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(invalid(format!("tail bound needs t >= 1, got {t}")));
        }
        if t.is_infinite() {
            return Ok(0.0);
        }
        let bf = &self.bernstein;
        let failure = RefCell::new(None);
        let (v, _) = integrate_exp_weighted(|u| match bf.phi(u / t) {
            Ok(p) => p,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        })?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if !v.is_finite() {
            return Err(Error::NumericFailure {
                what: format!("tail bound quadrature at t = {t}"),
                residual: f64::NAN,
            });
        }
        Ok((2.0 * self.horizon * v).min(1.0))
    }

    /// `∫_1^∞ [bound(t)]^θ dt` summed over doublings `[2^k, 2^{k+1}]`.
    pub fn tail_bound_integral(&self, theta: f64) -> Result<SeriesOutcome> {
        let f = |t: f64| self.tail_upper_bound(t).map(|b| b.powf(theta));
        sum_terms(
            |k| {
                let a = 2f64.powi(k as i32);
                let failure = RefCell::new(None);
                let est = crate::quad::adaptive(
                    |t| match f(t) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            f64::NAN
                        }
                    },
                    a,
                    2.0 * a,
                    crate::quad::QuadOptions {
                        abs_tol: 1e-300,
                        rel_tol: 1e-10,
                        max_intervals: 100,
                    },
                );
                match failure.into_inner() {
                    Some(e) => Err(e),
                    None => est.map(|e| e.value),
                }
            },
            &SeriesOptions::moment(),
        )
    }

    /// Exponent `σ` of the power extrapolation `t^{−σ}` used beyond a
    /// tail table: the log-log slope estimate of the index at the origin.
    pub fn tail_exponent(&self) -> Result<f64> {
        if self.is_deterministic() {
            return Ok(0.0);
        }
        Ok(self.bernstein.index_sigma0(&IndexConfig::default())?.sigma0_limit)
    }

    /// Monte Carlo check of `E e^{−uS_T} = e^{−Tφ(u)}`.
    pub fn laplace_check<R: Rng + ?Sized>(&self, u: f64, n: usize, rng: &mut R) -> Result<MCResult> {
        let target = (-self.horizon * self.bernstein.phi(u)?).exp();
        let vals: Vec<f64> = (0..n).map(|_| (-u * self.sample_terminal(rng)).exp()).collect();
        Ok(MCResult::from_values(&vals, Some(target)))
    }
}

fn poisson_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(lambda).expect("finite positive rate").sample(rng);
    n as u64
}

/// Nonincreasing least-squares projection (pool adjacent violators).
fn isotonic_nonincreasing(values: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (v2, n2) = blocks[blocks.len() - 1];
            let (v1, n1) = blocks[blocks.len() - 2];
            if v1 >= v2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((v1 * n1 as f64 + v2 * n2 as f64) / n as f64, n);
        }
    }
    let mut i = 0;
    for (v, n) in blocks {
        for slot in &mut values[i..i + n] {
            *slot = v;
        }
        i += n;
    }
}

/// Survival table for `P(S_T ≥ t)` with a monotone log-linear interpolant.
///
/// The interpolant runs through `(0, 1)` and every grid point with positive
/// survival. If some grid point has survival zero, the table's support ends
/// at the last positive knot and the survival is zero beyond it. Otherwise
/// it is extended by `s_L·(t/t_L)^{−σ}` past the last knot `(t_L, s_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    t_grid: Vec<f64>,
    survival: Vec<f64>,
    se: Vec<f64>,
    sample_count: Option<usize>,
    tail_exponent: f64,
    knot_t: Vec<f64>,
    knot_ln: Vec<f64>,
    support_end: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TailRow {
    t: f64,
    survival: f64,
    se: f64,
}

impl TailTable {
    /// Builds a table from survival values on a grid. Values are projected
    /// onto nonincreasing sequences before the interpolant is formed.
    pub fn new(
        t_grid: Vec<f64>,
        mut survival: Vec<f64>,
        se: Vec<f64>,
        sample_count: Option<usize>,
        tail_exponent: f64,
    ) -> Result<Self> {
        if t_grid.is_empty() || t_grid.len() != survival.len() || se.len() != survival.len() {
            return Err(invalid("tail table needs equally long, nonempty grid, survival and se"));
        }
        if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !t_grid.iter().all(|t| t.is_finite()) {
            return Err(invalid("tail grid must be strictly increasing, positive and finite"));
        }
        if survival.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(invalid("survival values must lie in [0, 1]"));
        }
        if !(tail_exponent >= 0.0 && tail_exponent.is_finite()) {
            return Err(invalid(format!("tail exponent must be nonnegative, got {tail_exponent}")));
        }
        isotonic_nonincreasing(&mut survival);
        let mut knot_t = vec![0.0];
        let mut knot_ln = vec![0.0];
        let mut support_end = None;
        for (&t, &s) in t_grid.iter().zip(&survival) {
            if s > 0.0 {
                knot_t.push(t);
                knot_ln.push(s.ln());
            } else {
                support_end = Some(*knot_t.last().unwrap());
                break;
            }
        }
        Ok(TailTable {
            t_grid,
            survival,
            se,
            sample_count,
            tail_exponent,
            knot_t,
            knot_ln,
            support_end,
        })
    }

    /// Survival `1` on `[0, end]` and `0` beyond: a deterministic subordinator.
    pub fn deterministic(end: f64) -> Result<Self> {
        if !(end > 0.0 && end.is_finite()) {
            return Err(invalid(format!("deterministic support end must be positive, got {end}")));
        }
        let mut t = Self::new(vec![end], vec![1.0], vec![0.0], None, 0.0)?;
        t.support_end = Some(end);
        Ok(t)
    }

    /// Empirical survival `#{S ≥ t_j}/N` with binomial standard errors.
    pub fn from_samples(t_grid: Vec<f64>, samples: &mut [f64], tail_exponent: f64) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(invalid("tail table needs at least one sample"));
        }
        samples.sort_by(f64::total_cmp);
        let survival: Vec<f64> = t_grid
            .iter()
            .map(|&t| (n - samples.partition_point(|&x| x < t)) as f64 / n as f64)
            .collect();
        let se = survival.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).collect();
        Self::new(t_grid, survival, se, Some(n), tail_exponent)
    }

    /// Exact table on `t_grid` when the model's survival is known in closed form.
    pub fn exact(model: &SubordinatorModel, t_grid: Vec<f64>) -> Option<Result<Self>> {
        if model.is_deterministic() {
            return Some(Self::deterministic(model.ess_sup()));
        }
        model.exact_survival(1.0)?;
        let survival: Vec<f64> = t_grid.iter().map(|&t| model.exact_survival(t).unwrap()).collect();
        let se = vec![0.0; t_grid.len()];
        Some(model.tail_exponent().and_then(|s| Self::new(t_grid, survival, se, None, s)))
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn survival_values(&self) -> &[f64] {
        &self.survival
    }

    pub fn se(&self) -> &[f64] {
        &self.se
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.sample_count
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    /// End of the region where the table's survival is positive, if finite.
    pub fn support_end(&self) -> Option<f64> {
        self.support_end
    }

    /// The knots `(t, ln s)` of the interpolant, starting at `(0, 0)`.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knot_t.iter().copied().zip(self.knot_ln.iter().copied())
    }

    fn last_knot(&self) -> (f64, f64) {
        (*self.knot_t.last().unwrap(), *self.knot_ln.last().unwrap())
    }

    /// Interpolated `ln P(S_T ≥ t)`; `-∞` outside the support.
    pub fn ln_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (t_l, ln_l) = self.last_knot();
        if t > t_l {
            return match self.support_end {
                Some(_) => f64::NEG_INFINITY,
                None => ln_l - self.tail_exponent * (t / t_l).ln(),
            };
        }
        let j = self.knot_t.partition_point(|&k| k < t).max(1);
        let (t0, t1) = (self.knot_t[j - 1], self.knot_t[j]);
        let (l0, l1) = (self.knot_ln[j - 1], self.knot_ln[j]);
        l0 + (l1 - l0) * (t - t0) / (t1 - t0)
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.ln_survival(t).exp()
    }

    /// `inf{t ≥ 0 : P(S_T ≥ t) ≤ y}` under the interpolant.
    pub fn inverse(&self, y: f64) -> f64 {
        if y >= 1.0 {
            return 0.0;
        }
        if y <= 0.0 {
            return self.support_end.unwrap_or(f64::INFINITY);
        }
        let ly = y.ln();
        for j in 1..self.knot_t.len() {
            if self.knot_ln[j] <= ly {
                let (t0, t1) = (self.knot_t[j - 1], self.knot_t[j]);
                let (l0, l1) = (self.knot_ln[j - 1], self.knot_ln[j]);
                if l0 <= ly {
                    return t0;
                }
                return t0 + (ly - l0) / (l1 - l0) * (t1 - t0);
            }
        }
        let (t_l, ln_l) = self.last_knot();
        match self.support_end {
            Some(end) => end,
            None if self.tail_exponent > 0.0 => t_l * ((ln_l - ly) / self.tail_exponent).exp(),
            None => f64::INFINITY,
        }
    }

    /// `∫_a^b [P(S_T ≥ t)]^e dt` over the part of `[a, b]` inside the
    /// support, in closed form per interpolation piece; `+∞` when divergent.
    pub fn weight_integral(&self, a: f64, b: f64, e: f64) -> f64 {
        let a = a.max(0.0);
        let b = match self.support_end {
            Some(end) => b.min(end),
            None => b,
        };
        if !(b > a) {
            return 0.0;
        }
        let mut total = 0.0;
        let first = self.knot_t.partition_point(|&k| k <= a).max(1);
        for j in first..self.knot_t.len() {
            let (t0, t1) = (self.knot_t[j - 1], self.knot_t[j]);
            if t0 >= b {
                break;
            }
            let (lo, hi) = (a.max(t0), b.min(t1));
            if hi <= lo {
                continue;
            }
            let slope = (self.knot_ln[j] - self.knot_ln[j - 1]) / (t1 - t0);
            let l_lo = self.knot_ln[j - 1] + slope * (lo - t0);
            total += exp_linear_integral(e * l_lo, e * slope, hi - lo);
        }
        let (t_l, ln_l) = self.last_knot();
        if self.support_end.is_none() && b > t_l {
            let lo = a.max(t_l);
            // ∫ s_L^e (t/t_L)^{p} dt with p = −σe
            let p = -self.tail_exponent * e;
            let scale = (e * ln_l).exp() * t_l;
            let (x, y) = (lo / t_l, b / t_l);
            let piece = if y.is_infinite() {
                if p < -1.0 {
                    -x.powf(p + 1.0) / (p + 1.0)
                } else {
                    f64::INFINITY
                }
            } else if p == -1.0 {
                (y / x).ln()
            } else {
                (y.powf(p + 1.0) - x.powf(p + 1.0)) / (p + 1.0)
            };
            total += scale * piece;
        }
        total
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for ((&t, &s), &se) in self.t_grid.iter().zip(&self.survival).zip(&self.se) {
            w.serialize(TailRow { t, survival: s, se })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫_0^len exp(c0 + c1·x) dx`, stable for small `c1·len`.
fn exp_linear_integral(c0: f64, c1: f64, len: f64) -> f64 {
    let z = c1 * len;
    let factor = if z.abs() < 1e-12 { 1.0 + 0.5 * z } else { z.exp_m1() / z };
    c0.exp() * len * factor
}

/// Empirical survival from `n` independent draws of `S_T`. A deterministic
/// model yields its exact table without sampling.
pub fn tail_estimate<R: Rng + ?Sized>(
    model: &SubordinatorModel,
    t_grid: Vec<f64>,
    n: usize,
    rng: &mut R,
) -> Result<TailTable> {
    if model.is_deterministic() {
        return TailTable::deterministic(model.ess_sup());
    }
    if n < 1000 {
        return Err(invalid(format!("tail estimate needs N >= 1000, got {n}")));
    }
    let mut draws: Vec<f64> = (0..n).map(|_| model.sample_terminal(rng)).collect();
    TailTable::from_samples(t_grid, &mut draws, model.tail_exponent()?)
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default tail grid: 40 points per decade on `[1e-3, 1e4]`.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(1e-3, 1e4, 281)
}
