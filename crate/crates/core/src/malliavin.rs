//! Cylinder functions `F(w∘ℓ) = f(w(ℓ_{t_1}), …, w(ℓ_{t_n}))`, their
//! derivatives along shifts `h∘ℓ`, Riesz gradients in `H^(κ)`, the adjoint
//! `D_h^*`, and the pathwise Dirichlet energy.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pathsim::{shifted_observations, PathSample};
use crate::shiftspace::{Integral, ShiftFunction, WeightedSpace};

/// Smooth bounded kernels `f : ℝ^{d·n} → ℝ` with analytic gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum Kernel {
    /// `tanh(a·x + β)`
    Tanh {
        a: Vec<f64>,
        #[serde(default)]
        beta: f64,
    },
    /// `exp(−|x − x₀|²/(2s²))`
    Bump {
        #[serde(alias = "x0")]
        center: Vec<f64>,
        #[serde(alias = "s")]
        scale: f64,
    },
    /// `cos(a·x)`
    Cosine { a: Vec<f64> },
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CylinderJson", into = "CylinderJson")]
pub struct CylinderFunction {
    kernel: Kernel,
    times: Vec<f64>,
    d: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CylinderJson {
    #[serde(flatten)]
    kernel: Kernel,
    times: Vec<f64>,
    #[serde(default = "default_dim")]
    d: usize,
}

impl TryFrom<CylinderJson> for CylinderFunction {
    type Error = Error;

    fn try_from(j: CylinderJson) -> Result<Self> {
        CylinderFunction::new(j.kernel, j.times, j.d)
    }
}

impl From<CylinderFunction> for CylinderJson {
    fn from(f: CylinderFunction) -> Self {
        CylinderJson {
            kernel: f.kernel,
            times: f.times,
            d: f.d,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl CylinderFunction {
    pub fn new(kernel: Kernel, times: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || times.is_empty() {
            return Err(invalid("cylinder function needs d >= 1 and at least one time"));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(invalid(format!("cylinder times must increase strictly from >= 0; got {times:?}")));
        }
        let len = d * times.len();
        let check = |name: &str, v: &[f64]| {
            if v.len() != len || v.iter().any(|x| !x.is_finite()) {
                Err(invalid(format!("`{name}` must hold d·n = {len} finite values, got {}", v.len())))
            } else {
                Ok(())
            }
        };
        match &kernel {
            Kernel::Tanh { a, beta } => {
                check("a", a)?;
                if !beta.is_finite() {
                    return Err(invalid("`beta` must be finite"));
                }
            }
            Kernel::Bump { center, scale } => {
                check("center", center)?;
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(invalid(format!("bump scale must be positive, got {scale}")));
                }
            }
            Kernel::Cosine { a } => check("a", a)?,
            Kernel::Constant { value } => {
                if !value.is_finite() {
                    return Err(invalid("constant kernel value must be finite"));
                }
            }
        }
        Ok(CylinderFunction { kernel, times, d })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `f(x)` for `x = (x_1, …, x_n)` flattened, `x_i ∈ ℝ^d`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kernel {
            Kernel::Tanh { a, beta } => (dot(a, x) + beta).tanh(),
            Kernel::Bump { center, scale } => {
                let r2: f64 = x.iter().zip(center).map(|(u, c)| (u - c).powi(2)).sum();
                (-r2 / (2.0 * scale * scale)).exp()
            }
            Kernel::Cosine { a } => dot(a, x).cos(),
            Kernel::Constant { value } => *value,
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.kernel {
            Kernel::Tanh { a, beta } => {
                let th = (dot(a, x) + beta).tanh();
                a.iter().map(|ai| (1.0 - th * th) * ai).collect()
            }
            Kernel::Bump { center, scale } => {
                let f = self.eval(x);
                x.iter().zip(center).map(|(u, c)| -(u - c) / (scale * scale) * f).collect()
            }
            Kernel::Cosine { a } => {
                let s = dot(a, x).sin();
                a.iter().map(|ai| -s * ai).collect()
            }
            Kernel::Constant { .. } => vec![0.0; x.len()],
        }
    }

    /// `‖f‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        match &self.kernel {
            Kernel::Tanh { .. } | Kernel::Bump { .. } | Kernel::Cosine { .. } => 1.0,
            Kernel::Constant { value } => value.abs(),
        }
    }

    /// `‖∇_i f‖_∞` for each observation block `i`.
    pub fn grad_bounds(&self) -> Vec<f64> {
        let n = self.times.len();
        let block_norm = |v: &[f64], i: usize| v[i * self.d..(i + 1) * self.d].iter().map(|x| x * x).sum::<f64>().sqrt();
        match &self.kernel {
            Kernel::Tanh { a, .. } | Kernel::Cosine { a } => (0..n).map(|i| block_norm(a, i)).collect(),
            // sup_r r/s² · e^{−r²/(2s²)} = 1/(s√e)
            Kernel::Bump { scale, .. } => vec![1.0 / (scale * std::f64::consts::E.sqrt()); n],
            Kernel::Constant { .. } => vec![0.0; n],
        }
    }

    /// Indices of this function's times among the sample's observation times.
    fn positions(&self, sample: &PathSample) -> Result<Vec<usize>> {
        if sample.dim() != self.d {
            return Err(invalid(format!("dimension mismatch: F has d = {}, sample has {}", self.d, sample.dim())));
        }
        self.times
            .iter()
            .map(|t| {
                sample
                    .times()
                    .iter()
                    .position(|s| s == t)
                    .ok_or_else(|| invalid(format!("time {t} is not an observation time of the sample")))
            })
            .collect()
    }

    fn gather(&self, obs: &[Vec<f64>], pos: &[usize]) -> Vec<f64> {
        pos.iter().flat_map(|&p| obs[p].iter().copied()).collect()
    }

    /// `F` on the sample's observations `W(ℓ_{t_i})`.
    pub fn eval_on(&self, sample: &PathSample) -> Result<f64> {
        let pos = self.positions(sample)?;
        Ok(self.eval(&self.gather(&sample.w_obs, &pos)))
    }

    /// `F` on the shifted observations `W(ℓ_{t_i}) + h(ℓ_{t_i})`.
    pub fn eval_shifted(&self, sample: &PathSample) -> Result<f64> {
        let pos = self.positions(sample)?;
        Ok(self.eval(&self.gather(&shifted_observations(sample), &pos)))
    }

    /// Observations, knots `ℓ_{t_i}`, and `∇f` at the observations.
    fn local(&self, sample: &PathSample) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let pos = self.positions(sample)?;
        let x = self.gather(&sample.w_obs, &pos);
        let knots = pos.iter().map(|&p| sample.knots()[p]).collect();
        let g = self.grad(&x);
        Ok((x, knots, g))
    }
}

/// `D_hF = Σ_i ⟨∇_i f(obs), h(ℓ_{t_i})⟩`.
pub fn directional_derivative(f: &CylinderFunction, sample: &PathSample, h: &ShiftFunction) -> Result<f64> {
    if h.dim() != f.dim() {
        return Err(invalid("shift and cylinder function dimensions differ"));
    }
    let (_, knots, g) = f.local(sample)?;
    let d = f.dim();
    Ok(knots
        .iter()
        .enumerate()
        .map(|(i, &s)| dot(&g[i * d..(i + 1) * d], &h.value(s)))
        .sum())
}

/// `D^(κ)F = Σ_i γ_i ∫_0^{· ∧ ℓ_{t_i}} [P(S_T ≥ s)]^{−κ} ds`, stored by
/// coefficients `γ_i = ∇_i f(obs)` and knots `ℓ_{t_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientElement {
    pub kappa: f64,
    pub gammas: Vec<Vec<f64>>,
    pub knots: Vec<f64>,
}

/// `∫_0^x [P(S_T ≥ s)]^{−κ} ds`.
fn knot_integral(space: &WeightedSpace, x: f64) -> f64 {
    if space.kappa() == 0.0 {
        return x.min(space.horizon());
    }
    space.tail().weight_integral(0.0, x, -space.kappa())
}

fn check_support(space: &WeightedSpace, terminal: f64) -> Result<()> {
    let end = space.horizon();
    if terminal > end {
        return Err(Error::DegenerateWeight { at: terminal });
    }
    Ok(())
}

pub fn gradient(f: &CylinderFunction, sample: &PathSample, space: &WeightedSpace) -> Result<GradientElement> {
    check_support(space, sample.sub_path.terminal)?;
    let (_, knots, g) = f.local(sample)?;
    let d = f.dim();
    Ok(GradientElement {
        kappa: space.kappa(),
        gammas: g.chunks(d).map(|c| c.to_vec()).collect(),
        knots,
    })
}

impl GradientElement {
    pub fn dim(&self) -> usize {
        self.gammas.first().map_or(0, |g| g.len())
    }

    pub fn is_zero(&self) -> bool {
        self.gammas.iter().all(|g| g.iter().all(|&v| v == 0.0))
    }

    /// Value of the element at `t`.
    pub fn value(&self, t: f64, space: &WeightedSpace) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (g, &l) in self.gammas.iter().zip(&self.knots) {
            let k = knot_integral(space, t.min(l));
            for (o, v) in out.iter_mut().zip(g) {
                *o += v * k;
            }
        }
        out
    }

    /// For `κ = 0` the element is `t ↦ Σ γ_i (t ∧ ℓ_{t_i})`, itself a shift
    /// with piecewise-constant derivative.
    pub fn to_shift(&self) -> Result<ShiftFunction> {
        if self.kappa != 0.0 {
            return Err(invalid("only κ = 0 gradients are piecewise linear"));
        }
        let d = self.dim().max(1);
        let mut pts: Vec<f64> = self.knots.iter().copied().filter(|&l| l > 0.0).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut breaks = vec![0.0];
        let mut derivs = Vec::new();
        for &p in &pts {
            let mut row = vec![0.0; d];
            for (g, &l) in self.gammas.iter().zip(&self.knots) {
                if l >= p {
                    for (r, v) in row.iter_mut().zip(g) {
                        *r += v;
                    }
                }
            }
            breaks.push(p);
            derivs.push(row);
        }
        ShiftFunction::new(d, breaks, derivs)
    }
}

fn check_pairing(g: &GradientElement, h: &ShiftFunction, space: &WeightedSpace) -> Result<()> {
    if g.kappa != space.kappa() {
        return Err(invalid(format!("gradient built for κ = {}, space has κ = {}", g.kappa, space.kappa())));
    }
    if !g.gammas.is_empty() && g.dim() != h.dim() {
        return Err(invalid("gradient and shift dimensions differ"));
    }
    Ok(())
}

/// `⟨D^(κ)F, h⟩_{H^(κ)}`. The derivative of the element is
/// `Σ γ_i 1_{[0, ℓ_{t_i}]} P^{−κ}`, so against the weight `P^κ` the pairing
/// telescopes to `Σ_i ⟨γ_i, h(ℓ_{t_i})⟩`.
pub fn riesz_pairing(g: &GradientElement, h: &ShiftFunction, space: &WeightedSpace) -> Result<f64> {
    check_pairing(g, h, space)?;
    Ok(g.gammas.iter().zip(&g.knots).map(|(gi, &l)| dot(gi, &h.value(l))).sum())
}

/// The same pairing summed over the intervals between sorted knots: on
/// `(ℓ_(j−1), ℓ_(j)]` the active coefficient is `Σ_{i: ℓ_i ≥ ℓ_(j)} γ_i`.
pub fn riesz_pairing_segments(g: &GradientElement, h: &ShiftFunction, space: &WeightedSpace) -> Result<f64> {
    check_pairing(g, h, space)?;
    let mut pts: Vec<f64> = g.knots.clone();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    let mut prev = 0.0;
    for &p in &pts {
        if p > prev {
            let m = h.moments(prev, p);
            for (gi, &l) in g.gammas.iter().zip(&g.knots) {
                if l >= p {
                    total += dot(gi, &m.first);
                }
            }
        }
        prev = p;
    }
    Ok(total)
}

/// `‖D^(κ)F‖² = Σ_{i,j} ⟨γ_i, γ_j⟩ ∫_0^{ℓ_{t_i} ∧ ℓ_{t_j}} P^{−κ}`. At
/// `κ = 0` this is also checked against `Σ_i (ℓ_{t_i} − ℓ_{t_{i−1}}) |Σ_{j≥i} γ_j|²`.
pub fn grad_norm_sq(f: &CylinderFunction, sample: &PathSample, space: &WeightedSpace) -> Result<f64> {
    let g = gradient(f, sample, space)?;
    let n = g.knots.len();
    let k: Vec<f64> = g.knots.iter().map(|&l| knot_integral(space, l)).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            // knots are nondecreasing in i
            total += dot(&g.gammas[i], &g.gammas[j]) * k[i.min(j)];
        }
    }
    if space.kappa() == 0.0 {
        let inc = energy_increment_form(f, sample)?;
        let scale = total.abs().max(inc.abs());
        if (total - inc).abs() > 1e-10 * scale {
            return Err(Error::Invariant(format!(
                "gradient norm {total} differs from the increment form {inc}"
            )));
        }
    }
    Ok(total)
}

/// `Σ_i (ℓ_{t_i} − ℓ_{t_{i−1}}) |Σ_{j≥i} ∇_j f(obs)|²` with `ℓ_{t_0} = 0`.
pub fn energy_increment_form(f: &CylinderFunction, sample: &PathSample) -> Result<f64> {
    let (_, knots, g) = f.local(sample)?;
    let d = f.dim();
    let n = knots.len();
    let mut tail_sum = vec![0.0; d];
    let mut total = 0.0;
    for i in (0..n).rev() {
        for k in 0..d {
            tail_sum[k] += g[i * d + k];
        }
        let prev = if i == 0 { 0.0 } else { knots[i - 1] };
        total += (knots[i] - prev) * tail_sum.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total)
}

/// `D_h^*G = −D_hG + G·∫_0^{S_T} h′ dW`; the sample must carry `I` for `h`.
pub fn ibp_star(g: &CylinderFunction, sample: &PathSample, h: &ShiftFunction) -> Result<f64> {
    if **sample.shift() != *h {
        return Err(invalid("the sample's Wiener integral was drawn for a different shift"));
    }
    Ok(-directional_derivative(g, sample, h)? + g.eval_on(sample)? * sample.wiener_integral)
}

/// `Σ_i ‖∇_i f‖_∞ (∫_0^{ℓ_{t_i}} P^{−κ})^{1/2} ‖h‖_{H^(κ)}`, an upper bound
/// for `|D_hF|` on this sample.
pub fn boundedness_bound(f: &CylinderFunction, sample: &PathSample, h: &ShiftFunction, space: &WeightedSpace) -> Result<f64> {
    check_support(space, sample.sub_path.terminal)?;
    let norm = match space.norm_sq(h)? {
        Integral::Finite(v) => v.max(0.0).sqrt(),
        Integral::Divergent => return Ok(f64::INFINITY),
    };
    let (_, knots, _) = f.local(sample)?;
    Ok(f.grad_bounds()
        .iter()
        .zip(&knots)
        .map(|(b, &l)| b * knot_integral(space, l).sqrt())
        .sum::<f64>()
        * norm)
}
