//! Quadrature primitives: adaptive Gauss–Kronrod (7/15) on finite
//! intervals, Gauss–Laguerre nodes, and dyadic-chunk summation for
//! integrals over unbounded ranges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::series::{sum_terms, SeriesOptions, SeriesStatus};

// Kronrod abscissae; odd indices (1, 3, 5) and the centre are shared with
// the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// An integral value with its absolute error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 400,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut resabs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (1.0f64).min((200.0 * error / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Panel {
        a,
        b,
        value,
        error,
        resabs,
    }
}

/// Adaptive Gauss–Kronrod integration of `f` over the finite interval `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "adaptive quadrature needs finite limits, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
        });
    }
    let first = qk15(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let tol = |total: f64| opts.abs_tol.max(opts.rel_tol * total.abs());
    while err > tol(total) && heap.len() < opts.max_intervals {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = qk15(&f, worst.a, mid);
        let right = qk15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let (value, abs_error, resabs) = heap
        .iter()
        .fold((0.0, 0.0, 0.0), |(v, e, r), p| (v + p.value, e + p.error, r + p.resabs));
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            what: format!("adaptive quadrature on [{a:e}, {b:e}]"),
            residual: f64::INFINITY,
        });
    }
    // error estimates stall near roundoff; accept that as converged
    let floor = 1000.0 * f64::EPSILON * resabs;
    if abs_error > tol(value).max(floor) {
        return Err(Error::NumericFailure {
            what: format!("adaptive quadrature on [{a:e}, {b:e}]"),
            residual: abs_error,
        });
    }
    Ok(Estimate { value, abs_error })
}

/// `∫_a^b f` with the default tolerances; convenience wrapper.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    adaptive(f, a, b, QuadOptions::default()).map(|e| e.value)
}

/// Nodes and weights of the `n`-point Gauss–Laguerre rule for
/// `∫_0^∞ f(u) e^{-u} du`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Laguerre rule needs at least one node");
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n {
        // Initial guesses follow the classical asymptotic spacing.
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut deriv = 0.0;
        let mut prev = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
            }
            deriv = nf * (p1 - p2) / z;
            prev = p2;
            let step = p1 / deriv;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = -1.0 / (deriv * nf * prev);
    }
    (nodes, weights)
}

fn laguerre_64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_laguerre(64))
}

fn laguerre_48() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_laguerre(48))
}

fn apply_rule<F: Fn(f64) -> f64>(f: &F, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    rule.0.iter().zip(&rule.1).map(|(&x, &w)| w * f(x)).sum()
}

/// How a Laguerre-weighted integral was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaguerreRoute {
    GaussLaguerre64,
    AdaptiveFallback,
}

/// `∫_0^∞ f(u) e^{-u} du`: 64-point Gauss–Laguerre, accepted when it agrees
/// with the 48-point rule to `1e-10` relative; otherwise the adaptive dyadic
/// route of [`integrate_exp_weighted_adaptive`].
pub fn integrate_exp_weighted<F: Fn(f64) -> f64>(f: F) -> Result<(f64, LaguerreRoute)> {
    let hi = apply_rule(&f, laguerre_64());
    let lo = apply_rule(&f, laguerre_48());
    if hi.is_finite() && (hi - lo).abs() <= 1e-10 * hi.abs().max(f64::MIN_POSITIVE) {
        return Ok((hi, LaguerreRoute::GaussLaguerre64));
    }
    integrate_exp_weighted_adaptive(f).map(|v| (v, LaguerreRoute::AdaptiveFallback))
}

/// `∫_0^∞ f(u) e^{-u} du` over `[0,1]` and the dyadic chunks `[2^k, 2^{k+1}]`.
pub fn integrate_exp_weighted_adaptive<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let g = |u: f64| f(u) * (-u).exp();
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_intervals: 400,
    };
    let head = adaptive(g, 0.0, 1.0, opts)?.value;
    let tail = sum_terms(
        |k| {
            let a = 2f64.powi(k as i32);
            // Exponential decay makes far chunks vanish; keep abs_tol tiny but
            // nonzero so underflowed panels are accepted.
            let o = QuadOptions {
                abs_tol: 1e-300,
                ..opts
            };
            adaptive(g, a, 2.0 * a, o).map(|e| e.value)
        },
        &SeriesOptions::fine(),
    )?;
    match tail.status {
        SeriesStatus::Converged => Ok(head + tail.total()),
        _ => Err(Error::NumericFailure {
            what: "exponentially weighted integral on [0, inf)".into(),
            residual: tail.terms.last().copied().unwrap_or(f64::NAN).abs(),
        }),
    }
}
