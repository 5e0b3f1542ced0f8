//! Shift functions with piecewise-constant derivative and the weighted
//! Cameron–Martin spaces `H^(κ)` with weight `[P(S_T ≥ t)]^κ`.
//!
//! Between tail-table knots the weight is `exp(κ·(a + b·t))`, so every
//! integral of `⟨g′, h′⟩` against a power of the survival function is a
//! finite sum of closed-form pieces.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::{gate, MCResult};
use crate::subordinator::{SubordinatorModel, TailTable};

/// `h(t) = ∫_0^t h′`, with `h′` constant on each `(τ_{j−1}, τ_j]` and zero
/// after the last breakpoint (which may be `+∞`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShiftJson", into = "ShiftJson")]
pub struct ShiftFunction {
    d: usize,
    breakpoints: Vec<f64>,
    derivatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Breakpoint {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftJson {
    d: usize,
    breakpoints: Vec<Breakpoint>,
    derivatives: Vec<Vec<f64>>,
}

impl TryFrom<ShiftJson> for ShiftFunction {
    type Error = Error;

    fn try_from(j: ShiftJson) -> Result<Self> {
        let breakpoints = j
            .breakpoints
            .into_iter()
            .map(|b| match b {
                Breakpoint::Number(x) => Ok(x),
                Breakpoint::Text(s) if matches!(s.as_str(), "inf" | "Infinity" | "+inf") => Ok(f64::INFINITY),
                Breakpoint::Text(s) => Err(invalid(format!("breakpoint {s:?} is not a number or \"inf\""))),
            })
            .collect::<Result<Vec<_>>>()?;
        ShiftFunction::new(j.d, breakpoints, j.derivatives)
    }
}

impl From<ShiftFunction> for ShiftJson {
    fn from(h: ShiftFunction) -> Self {
        ShiftJson {
            d: h.d,
            breakpoints: h
                .breakpoints
                .into_iter()
                .map(|b| {
                    if b.is_infinite() {
                        Breakpoint::Text("inf".into())
                    } else {
                        Breakpoint::Number(b)
                    }
                })
                .collect(),
            derivatives: h.derivatives,
        }
    }
}

/// Per-coordinate `∫ h′_k` and `∫ (h′_k)²` over an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl ShiftFunction {
    pub fn new(d: usize, breakpoints: Vec<f64>, derivatives: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("shift dimension must be positive"));
        }
        if breakpoints.first() != Some(&0.0) {
            return Err(invalid("breakpoints must start at 0"));
        }
        if derivatives.len() + 1 != breakpoints.len() {
            return Err(invalid(format!(
                "{} breakpoints need {} derivative rows, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                derivatives.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) || w[0].is_infinite() {
                return Err(invalid(format!("breakpoints must increase strictly; got {breakpoints:?}")));
            }
        }
        for row in &derivatives {
            if row.len() != d || row.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("derivative rows must hold {d} finite values; got {row:?}")));
            }
        }
        Ok(ShiftFunction {
            d,
            breakpoints,
            derivatives,
        })
    }

    pub fn zero(d: usize) -> Self {
        ShiftFunction {
            d,
            breakpoints: vec![0.0],
            derivatives: Vec::new(),
        }
    }

    /// One-dimensional shift with `h′ = values[j]` on `(breaks[j], breaks[j+1]]`.
    pub fn scalar(breakpoints: Vec<f64>, values: &[f64]) -> Result<Self> {
        Self::new(1, breakpoints, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn derivatives(&self) -> &[Vec<f64>] {
        &self.derivatives
    }

    /// `(start, end, h′)` for every piece.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.derivatives)
            .map(|(w, d)| (w[0], w[1], d.as_slice()))
    }

    pub fn is_zero(&self) -> bool {
        self.derivatives.iter().all(|r| r.iter().all(|&v| v == 0.0))
    }

    /// End of the last piece with nonzero derivative (`0` for `h ≡ 0`).
    pub fn support_end(&self) -> f64 {
        self.segments()
            .filter(|(_, _, d)| d.iter().any(|&v| v != 0.0))
            .map(|(_, b, _)| b)
            .fold(0.0, f64::max)
    }

    /// `h′(t)` (right-closed pieces; zero outside the breakpoints).
    pub fn derivative_at(&self, t: f64) -> Vec<f64> {
        let j = self.breakpoints.partition_point(|&b| b < t);
        if t <= 0.0 || j == 0 || j > self.derivatives.len() {
            return vec![0.0; self.d];
        }
        self.derivatives[j - 1].clone()
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (a, b, d) in self.segments() {
            if t <= a {
                break;
            }
            let len = b.min(t) - a;
            for (o, v) in out.iter_mut().zip(d) {
                *o += v * len;
            }
        }
        out
    }

    /// `∫_a^b h′_k` and `∫_a^b (h′_k)²` per coordinate, `0 ≤ a ≤ b < ∞`.
    pub fn moments(&self, a: f64, b: f64) -> SegmentMoments {
        let mut m = SegmentMoments {
            first: vec![0.0; self.d],
            second: vec![0.0; self.d],
        };
        for (lo, hi, d) in self.segments() {
            let len = hi.min(b) - lo.max(a);
            if len <= 0.0 {
                continue;
            }
            for k in 0..self.d {
                m.first[k] += d[k] * len;
                m.second[k] += d[k] * d[k] * len;
            }
        }
        m
    }

    /// `∫_0^b |h′|²`.
    pub fn quadratic(&self, b: f64) -> f64 {
        self.moments(0.0, b).second.iter().sum()
    }
}

/// A possibly divergent integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn finite(self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(v),
            Integral::Divergent => None,
        }
    }
}

/// `H^(κ)` with weight `[P(S_T ≥ t)]^κ` on `[0, M]`, `M` the end of the
/// table's support.
#[derive(Debug, Clone)]
pub struct WeightedSpace {
    kappa: f64,
    tail: Arc<TailTable>,
}

impl WeightedSpace {
    pub fn new(kappa: f64, tail: Arc<TailTable>) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(invalid(format!("κ must be finite, got {kappa}")));
        }
        Ok(WeightedSpace { kappa, tail })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tail(&self) -> &Arc<TailTable> {
        &self.tail
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(kappa, self.tail.clone())
    }

    pub fn horizon(&self) -> f64 {
        self.tail.support_end().unwrap_or(f64::INFINITY)
    }

    /// `[P(S_T ≥ t)]^κ` with `0^0 := 1`.
    pub fn weight(&self, t: f64) -> f64 {
        if self.kappa == 0.0 {
            return 1.0;
        }
        (self.kappa * self.tail.ln_survival(t)).exp()
    }

    /// `∫_a^b ⟨g′, h′⟩ [P(S_T ≥ t)]^e dt` over `[a, b] ∩ [0, M]`.
    pub fn product_integral(&self, g: &ShiftFunction, h: &ShiftFunction, a: f64, b: f64, e: f64) -> Result<Integral> {
        if g.dim() != h.dim() {
            return Err(invalid(format!("dimension mismatch: {} vs {}", g.dim(), h.dim())));
        }
        let mut total = 0.0;
        for (lo, hi, coef) in common_refinement(g, h) {
            let (lo, hi) = (lo.max(a), hi.min(b));
            if hi <= lo || coef == 0.0 {
                continue;
            }
            let w = self.tail.weight_integral(lo, hi, e);
            if !w.is_finite() {
                return Ok(Integral::Divergent);
            }
            total += coef * w;
        }
        if total.is_finite() {
            Ok(Integral::Finite(total))
        } else {
            Ok(Integral::Divergent)
        }
    }

    /// `⟨g, h⟩_{H^(κ)} = ∫_0^M ⟨g′, h′⟩ [P(S_T ≥ t)]^κ dt`.
    pub fn inner_product(&self, g: &ShiftFunction, h: &ShiftFunction) -> Result<Integral> {
        self.product_integral(g, h, 0.0, f64::INFINITY, self.kappa)
    }

    pub fn norm_sq(&self, h: &ShiftFunction) -> Result<Integral> {
        self.inner_product(h, h)
    }

    /// Decides `‖h‖_{H^(κ)} < ∞` and records `∫_0^{2^k}` for `k = 0, 1, …`
    /// up to the end of `h`'s support (at most `2^64`).
    pub fn membership(&self, h: &ShiftFunction) -> Result<Membership> {
        let norm = self.norm_sq(h)?;
        let mut trace = Vec::new();
        let reach = h.support_end().min(self.horizon());
        for k in 0..=64 {
            let upper = 2f64.powi(k);
            let part = self.product_integral(h, h, 0.0, upper, self.kappa)?;
            trace.push((upper, part.finite().unwrap_or(f64::INFINITY)));
            if upper >= reach || part == Integral::Divergent {
                break;
            }
        }
        let status = match norm {
            Integral::Finite(v) if v.is_nan() => MembershipStatus::Indeterminate,
            Integral::Finite(_) => MembershipStatus::Member,
            Integral::Divergent => MembershipStatus::NotMember,
        };
        Ok(Membership {
            status,
            norm_sq: norm.finite(),
            trace,
        })
    }
}

/// Pieces `(start, end, ⟨g′, h′⟩)` on the union of both breakpoint sets.
fn common_refinement(g: &ShiftFunction, h: &ShiftFunction) -> Vec<(f64, f64, f64)> {
    let mut pts: Vec<f64> = g.breakpoints().iter().chain(h.breakpoints()).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| {
            let mid = if w[1].is_infinite() { w[0] + 1.0 } else { 0.5 * (w[0] + w[1]) };
            let (dg, dh) = (g.derivative_at(mid), h.derivative_at(mid));
            (w[0], w[1], dg.iter().zip(&dh).map(|(x, y)| x * y).sum())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipStatus {
    Member,
    NotMember,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct Membership {
    pub status: MembershipStatus,
    pub norm_sq: Option<f64>,
    /// `(2^k, ∫_0^{2^k} |h′|² [P(S_T ≥ t)]^κ dt)`.
    pub trace: Vec<(f64, f64)>,
}

/// One block `B_m = [a_m, a_{m+1})` of the separating construction.
#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub m: usize,
    pub start: f64,
    pub end: f64,
    /// `Φ(B_m) = ∫_{B_m} [P(S_T ≥ t)]^{κ₁} dt`.
    pub phi_kappa1: f64,
    pub phi_kappa2: f64,
    pub derivative: f64,
    pub contributing: bool,
}

/// A shift in `H^(κ₂)` but not in `H^(κ₁)`, truncated after `m_max` blocks.
#[derive(Debug, Clone)]
pub struct GgvvConstruction {
    pub kappa1: f64,
    pub kappa2: f64,
    pub shift: ShiftFunction,
    pub blocks: Vec<Block>,
    tail: Arc<TailTable>,
}

/// Builds `h` with `|h′| = sqrt(m/Φ(B_m))` on the blocks
/// `B_m = {t : (m+1)^{−3} < [P(S_T ≥ t)]^{κ₂−κ₁} ≤ m^{−3}}` of the
/// interpolated tail, so each block adds `m` to the `κ₁` norm and at most
/// `m^{−2}` to the `κ₂` norm.
pub fn ggvv_construct(kappa1: f64, kappa2: f64, tail: Arc<TailTable>, m_max: usize) -> Result<GgvvConstruction> {
    if !(kappa1 < kappa2) || !kappa1.is_finite() || !kappa2.is_finite() {
        return Err(invalid(format!("need finite κ₁ < κ₂, got {kappa1}, {kappa2}")));
    }
    if m_max == 0 {
        return Err(invalid("m_max must be positive"));
    }
    if let Some(end) = tail.support_end() {
        return Err(Error::ConstructionFailure(format!(
            "tail vanishes beyond t = {end}; the construction needs P(S_T ≥ t) > 0 for all t (M = ∞)"
        )));
    }
    if tail.tail_exponent() <= 0.0 {
        return Err(Error::ConstructionFailure(
            "tail extrapolation does not decay to 0; the construction needs a strictly decreasing tail".into(),
        ));
    }
    let delta = kappa2 - kappa1;
    let a: Vec<f64> = (1..=m_max + 1)
        .map(|m| tail.inverse((m as f64).powf(-3.0 / delta)))
        .collect();
    let mut blocks = Vec::with_capacity(m_max);
    let mut breaks = vec![0.0];
    let mut derivs = Vec::new();
    for m in 1..=m_max {
        let (start, end) = (a[m - 1], a[m]);
        let mut block = Block {
            m,
            start,
            end,
            phi_kappa1: 0.0,
            phi_kappa2: 0.0,
            derivative: 0.0,
            contributing: false,
        };
        if end > start && end.is_finite() {
            block.phi_kappa1 = tail.weight_integral(start, end, kappa1);
            block.phi_kappa2 = tail.weight_integral(start, end, kappa2);
            if block.phi_kappa1 > 0.0 && block.phi_kappa1.is_finite() {
                block.contributing = true;
                block.derivative = (m as f64 / block.phi_kappa1).sqrt();
            }
            if start > *breaks.last().unwrap() {
                breaks.push(start);
                derivs.push(vec![0.0]);
            }
            breaks.push(end);
            derivs.push(vec![block.derivative]);
        }
        blocks.push(block);
    }
    if !blocks.iter().any(|b| b.contributing) {
        return Err(Error::ConstructionFailure(format!(
            "no contributing blocks for m <= {m_max}; increase m_max"
        )));
    }
    Ok(GgvvConstruction {
        kappa1,
        kappa2,
        shift: ShiftFunction::new(1, breaks, derivs)?,
        blocks,
        tail,
    })
}

#[derive(Debug, Serialize)]
struct BlockRow {
    m: usize,
    start: f64,
    end: f64,
    phi_kappa1: f64,
    phi_kappa2: f64,
    derivative: f64,
    contributing: bool,
}

impl GgvvConstruction {
    /// The shift restricted to the first `k` contributing blocks.
    pub fn truncated(&self, k: usize) -> Result<ShiftFunction> {
        let keep: Vec<&Block> = self.blocks.iter().filter(|b| b.contributing).take(k).collect();
        let Some(last) = keep.last() else {
            return Ok(ShiftFunction::zero(1));
        };
        let cut = last.end;
        let mut breaks = vec![0.0];
        let mut derivs = Vec::new();
        for (w, d) in self.shift.breakpoints().windows(2).zip(self.shift.derivatives()) {
            if w[1] > cut {
                break;
            }
            breaks.push(w[1]);
            derivs.push(d.clone());
        }
        ShiftFunction::new(1, breaks, derivs)
    }

    /// `‖h_k‖²_{H^(κ)}` for the first `k` contributing blocks.
    pub fn truncated_norm_sq(&self, kappa: f64, k: usize) -> Result<Integral> {
        WeightedSpace::new(kappa, self.tail.clone())?.norm_sq(&self.truncated(k)?)
    }

    /// `∫_{B_m} |h′|² [P(S_T ≥ t)]^κ dt` for each contributing block.
    pub fn block_contributions(&self, kappa: f64) -> Vec<(usize, f64)> {
        self.blocks
            .iter()
            .filter(|b| b.contributing)
            .map(|b| (b.m, b.derivative.powi(2) * self.tail.weight_integral(b.start, b.end, kappa)))
            .collect()
    }

    /// Membership of the untruncated shift, from the decay of the block
    /// contributions `c_m`: a log-log slope of `c_m` against `m` over the
    /// upper half of the blocks below `−1.1` means a convergent series,
    /// above `−0.9` a divergent one.
    pub fn membership(&self, kappa: f64) -> MembershipStatus {
        let contrib = self.block_contributions(kappa);
        if contrib.iter().any(|c| !c.1.is_finite()) {
            return MembershipStatus::NotMember;
        }
        let upper: Vec<(f64, f64)> = contrib
            .iter()
            .filter(|c| c.0 * 2 > self.blocks.len() && c.1 > 0.0)
            .map(|&(m, c)| ((m as f64).ln(), c.ln()))
            .collect();
        if upper.len() < 3 {
            return MembershipStatus::Indeterminate;
        }
        let n = upper.len() as f64;
        let mx = upper.iter().map(|p| p.0).sum::<f64>() / n;
        let my = upper.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = upper.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = upper.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        if slope < -1.1 {
            MembershipStatus::Member
        } else if slope > -0.9 {
            MembershipStatus::NotMember
        } else {
            MembershipStatus::Indeterminate
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for b in &self.blocks {
            w.serialize(BlockRow {
                m: b.m,
                start: b.start,
                end: b.end,
                phi_kappa1: b.phi_kappa1,
                phi_kappa2: b.phi_kappa2,
                derivative: b.derivative,
                contributing: b.contributing,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `x ↦ ∫_0^x ⟨g′, h′⟩ [P(S_T ≥ t)]^e dt`, tabulated at every breakpoint
/// and tail knot so each evaluation touches a single interpolation piece.
struct Cumulative<'a> {
    tail: &'a TailTable,
    e: f64,
    pts: Vec<f64>,
    coef: Vec<f64>,
    cum: Vec<f64>,
}

impl<'a> Cumulative<'a> {
    fn new(g: &ShiftFunction, h: &ShiftFunction, tail: &'a TailTable, e: f64) -> Result<Self> {
        let end = tail.support_end().unwrap_or(f64::INFINITY);
        let mut pts: Vec<f64> = g
            .breakpoints()
            .iter()
            .chain(h.breakpoints())
            .copied()
            .chain(tail.knots().map(|k| k.0))
            .filter(|&t| t < end)
            .collect();
        if end.is_finite() {
            pts.push(end);
        }
        pts.push(f64::INFINITY);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let pieces = common_refinement(g, h);
        let coef_at = |t: f64| {
            pieces
                .iter()
                .find(|p| p.0 <= t && t < p.1)
                .map(|p| p.2)
                .unwrap_or(0.0)
        };
        let coef: Vec<f64> = pts.windows(2).map(|w| coef_at(w[0])).collect();
        let mut cum = vec![0.0];
        for (w, &c) in pts.windows(2).zip(&coef) {
            let prev = *cum.last().unwrap();
            let add = if c == 0.0 || w[1].is_infinite() { 0.0 } else { c * tail.weight_integral(w[0], w[1], e) };
            if !add.is_finite() {
                return Err(Error::NumericFailure {
                    what: "cumulative weighted integral".into(),
                    residual: add,
                });
            }
            cum.push(prev + add);
        }
        Ok(Cumulative { tail, e, pts, coef, cum })
    }

    fn eval(&self, x: f64) -> f64 {
        let j = self.pts.partition_point(|&p| p <= x).saturating_sub(1);
        if j + 1 >= self.pts.len() {
            return self.cum[j];
        }
        let c = self.coef[j];
        let part = if c == 0.0 { 0.0 } else { c * self.tail.weight_integral(self.pts[j], x, self.e) };
        self.cum[j] + part
    }
}

/// Both sides of `∫_0^M ⟨g′,h′⟩ P^κ dt = E ∫_0^{S_T} ⟨g′,h′⟩ P^{κ−1} dt`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: MCResult,
    pub difference: f64,
    /// Standard error of the difference, including the tail table's own
    /// sampling error when the table is empirical.
    pub se: f64,
    pub pass: bool,
}

/// Checks the expectation identity with `N` draws of `S_T`. With an
/// empirical tail table built from `N_t` independent draws, the table error
/// contributes `Var(Y)/N_t` to the variance of the difference, `Y` the
/// per-draw integral, so the standard error is inflated by `sqrt(1 + N/N_t)`.
pub fn expectation_identity_check<R: Rng + ?Sized>(
    g: &ShiftFunction,
    h: &ShiftFunction,
    space: &WeightedSpace,
    model: &SubordinatorModel,
    n: usize,
    rng: &mut R,
) -> Result<IdentityCheck> {
    let lhs = match space.inner_product(g, h)? {
        Integral::Finite(v) => v,
        Integral::Divergent => {
            return Err(Error::Precondition(
                "⟨g, h⟩ diverges in H^(κ); the identity needs a finite left side".into(),
            ))
        }
    };
    let cum = Cumulative::new(g, h, space.tail(), space.kappa() - 1.0)?;
    let vals: Vec<f64> = (0..n).map(|_| cum.eval(model.sample_terminal(rng))).collect();
    let rhs = MCResult::from_values(&vals, Some(lhs));
    let inflate = match space.tail().sample_count() {
        Some(nt) => (1.0 + n as f64 / nt as f64).sqrt(),
        None => 1.0,
    };
    let se = rhs.standard_error * inflate;
    let difference = lhs - rhs.estimate;
    Ok(IdentityCheck {
        lhs,
        rhs,
        difference,
        se,
        pass: gate(difference, se),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinator::{default_t_grid, Family};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_shift() -> ShiftFunction {
        ShiftFunction::scalar(vec![0.0, 1.0], &[1.0]).unwrap()
    }

    fn stable_space(kappa: f64) -> WeightedSpace {
        let m = SubordinatorModel::new(Family::Stable { alpha: 0.5 }, 1.0).unwrap();
        let t = TailTable::exact(&m, default_t_grid()).unwrap().unwrap();
        WeightedSpace::new(kappa, Arc::new(t)).unwrap()
    }

    #[test]
    fn shift_values_are_continuous() {
        let h = ShiftFunction::scalar(vec![0.0, 1.0, 3.0, f64::INFINITY], &[2.0, -1.0, 0.5]).unwrap();
        assert_eq!(h.value(0.0), vec![0.0]);
        assert_eq!(h.value(1.0), vec![2.0]);
        assert_eq!(h.value(3.0), vec![0.0]);
        assert_eq!(h.value(5.0), vec![1.0]);
        assert_eq!(h.derivative_at(1.0), vec![2.0]);
        assert_eq!(h.derivative_at(1.0 + 1e-9), vec![-1.0]);
        assert_eq!(h.support_end(), f64::INFINITY);
        assert_eq!(h.quadratic(3.0), 4.0 + 2.0);
    }

    #[test]
    fn shift_json_roundtrip() {
        let src = r#"{"d":1,"breakpoints":[0,1,"inf"],"derivatives":[[1.0],[0.5]]}"#;
        let h: ShiftFunction = serde_json::from_str(src).unwrap();
        assert_eq!(h.breakpoints()[2], f64::INFINITY);
        let back: ShiftFunction = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
        assert!(serde_json::from_str::<ShiftFunction>(r#"{"d":1,"breakpoints":[0.5,1],"derivatives":[[1]]}"#).is_err());
        assert!(serde_json::from_str::<ShiftFunction>(r#"{"d":2,"breakpoints":[0,1],"derivatives":[[1]]}"#).is_err());
    }

    #[test]
    fn unweighted_norm_is_l2() {
        let space = stable_space(0.0);
        assert_eq!(space.norm_sq(&unit_shift()).unwrap(), Integral::Finite(1.0));
    }

    #[test]
    fn deterministic_weight_is_one() {
        let tail = Arc::new(TailTable::deterministic(1.0).unwrap());
        for kappa in [-2.0, 0.0, 0.7] {
            let space = WeightedSpace::new(kappa, tail.clone()).unwrap();
            assert_eq!(space.norm_sq(&unit_shift()).unwrap(), Integral::Finite(1.0));
        }
    }

    #[test]
    fn stable_weighted_norm_matches_trapezoid() {
        let space = stable_space(-1.0);
        let h = ShiftFunction::scalar(vec![0.0, 10.0], &[1.0]).unwrap();
        let exact = space.norm_sq(&h).unwrap().finite().unwrap();
        // fine-grid trapezoid oracle on the same interpolant
        let n = 2_000_000;
        let dt = 10.0 / n as f64;
        let tail = space.tail();
        let trap: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w / tail.survival(i as f64 * dt)
            })
            .sum::<f64>()
            * dt;
        assert!((exact - trap).abs() < 1e-6 * exact, "{exact} vs {trap}");
    }

    #[test]
    fn divergence_is_a_status() {
        // weight t^{+1/2} on an infinite support
        let space = stable_space(-1.0);
        let h = ShiftFunction::scalar(vec![0.0, f64::INFINITY], &[1.0]).unwrap();
        assert_eq!(space.norm_sq(&h).unwrap(), Integral::Divergent);
        let m = space.membership(&h).unwrap();
        assert_eq!(m.status, MembershipStatus::NotMember);
        assert_eq!(m.trace.len(), 65);
        // weight t^{−1} is still not integrable, t^{−3/2} is
        assert_eq!(space.with_kappa(2.0).unwrap().membership(&h).unwrap().status, MembershipStatus::NotMember);
        assert_eq!(space.with_kappa(3.0).unwrap().membership(&h).unwrap().status, MembershipStatus::Member);
    }

    #[test]
    fn compact_shift_is_member() {
        let h = ShiftFunction::scalar(vec![0.0, 2.0, 5.0], &[1.0, -3.0]).unwrap();
        for kappa in [-3.0, 0.0, 2.0] {
            let m = stable_space(kappa).membership(&h).unwrap();
            assert_eq!(m.status, MembershipStatus::Member);
            let last = m.trace.last().unwrap();
            assert!(last.0 >= 5.0);
            assert!((last.1 - m.norm_sq.unwrap()).abs() <= 1e-12 * last.1);
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let h2 = ShiftFunction::new(2, vec![0.0, 1.0], vec![vec![1.0, 0.0]]).unwrap();
        assert!(stable_space(0.0).inner_product(&unit_shift(), &h2).is_err());
    }

    #[test]
    fn ggvv_blocks_sum_exactly() {
        let space = stable_space(0.0);
        let c = ggvv_construct(-0.5, 0.5, space.tail().clone(), 40).unwrap();
        let mut expected = 0.0;
        for (k, b) in c.blocks.iter().filter(|b| b.contributing).enumerate() {
            expected += b.m as f64;
            let got = c.truncated_norm_sq(-0.5, k + 1).unwrap().finite().unwrap();
            assert!((got - expected).abs() <= 1e-9 * expected, "k={k}: {got} vs {expected}");
        }
        let k2 = c.truncated_norm_sq(0.5, usize::MAX).unwrap().finite().unwrap();
        assert!(k2 <= std::f64::consts::PI.powi(2) / 6.0 + 1e-9, "{k2}");
        assert_eq!(c.membership(-0.5), MembershipStatus::NotMember);
        assert_eq!(c.membership(0.5), MembershipStatus::Member);
    }

    #[test]
    fn ggvv_rejects_compact_tail() {
        let tail = Arc::new(TailTable::deterministic(1.0).unwrap());
        assert!(matches!(ggvv_construct(0.0, 1.0, tail, 10), Err(Error::ConstructionFailure(_))));
    }

    #[test]
    fn identity_deterministic_is_exact() {
        let m = SubordinatorModel::new(Family::Deterministic { c: 1.0 }, 1.0).unwrap();
        let space = WeightedSpace::new(0.0, Arc::new(TailTable::exact(&m, vec![]).unwrap().unwrap())).unwrap();
        let h = unit_shift();
        let r = expectation_identity_check(&h, &h, &space, &m, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.rhs.estimate, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn identity_gamma_first_moment() {
        // κ = 1, h′ = g′ = 1 on [0, ∞): both sides equal E S_T = 1.
        let m = SubordinatorModel::new(Family::Gamma { shape: 1.0, rate: 1.0 }, 1.0).unwrap();
        let t = TailTable::exact(&m, default_t_grid()).unwrap().unwrap();
        let space = WeightedSpace::new(1.0, Arc::new(t)).unwrap();
        let h = ShiftFunction::scalar(vec![0.0, f64::INFINITY], &[1.0]).unwrap();
        let r = expectation_identity_check(&h, &h, &space, &m, 100_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-4, "{}", r.lhs);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn identity_rejects_divergent_lhs() {
        let m = SubordinatorModel::new(Family::Stable { alpha: 0.5 }, 1.0).unwrap();
        let space = stable_space(-1.0);
        let h = ShiftFunction::scalar(vec![0.0, f64::INFINITY], &[1.0]).unwrap();
        let r = expectation_identity_check(&h, &h, &space, &m, 1000, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn identity_stable_negative_kappa() {
        let m = SubordinatorModel::new(Family::Stable { alpha: 0.5 }, 1.0).unwrap();
        let space = stable_space(-0.5);
        let h = ShiftFunction::scalar(vec![0.0, 0.5, 2.0, 4.0], &[1.0, -0.5, 2.0]).unwrap();
        let g = ShiftFunction::scalar(vec![0.0, 3.0], &[0.7]).unwrap();
        let r = expectation_identity_check(&g, &h, &space, &m, 100_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
