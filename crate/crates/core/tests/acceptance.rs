//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subpath::bernstein::{BernsteinFunction, HpStatus, IndexConfig};
use subpath::harness::{replica_rng, run, Experiment, ExperimentConfig, Report, Role, Runner};
use subpath::malliavin::{
    directional_derivative, energy_increment_form, gradient, grad_norm_sq, riesz_pairing, riesz_pairing_segments,
    CylinderFunction, Kernel,
};
use subpath::pathsim::sample_joint;
use subpath::shiftspace::{ggvv_construct, Integral, MembershipStatus, ShiftFunction, WeightedSpace};
use subpath::stats::variance_se;
use subpath::subordinator::{default_t_grid, log_grid, Family, SubordinatorModel, TailTable};

type Outcome = Result<(bool, String), String>;

const THREADS: usize = 1;
const DET: &str = r#"{"family": "deterministic", "c": 1.0, "T": 1.0}"#;
const GAMMA: &str = r#"{"family": "gamma", "shape": 1.0, "rate": 1.0, "T": 1.0}"#;
const STABLE: &str = r#"{"family": "stable", "alpha": 0.5, "T": 1.0}"#;
// rises to 0.4 at t = 0.5 and returns to 0 at t = 1.5
const SHIFT: &str = r#"{"d": 1, "breakpoints": [0.0, 0.5, 1.5], "derivatives": [[0.8], [-0.4]]}"#;
const TANH: &str = r#"{"kernel": "tanh", "a": [1.0, -0.5], "beta": 0.2, "times": [0.4, 0.9]}"#;
const BUMP: &str = r#"{"kernel": "bump", "center": [0.0, 0.5], "scale": 1.0, "times": [0.4, 0.9]}"#;
const COSINE: &str = r#"{"kernel": "cosine", "a": [0.7, -0.3], "times": [0.4, 0.9]}"#;

fn config(body: String) -> Result<ExperimentConfig, String> {
    ExperimentConfig::from_json(&body).map_err(|e| e.to_string())
}

fn experiment(exp: Experiment, body: String) -> Result<Report, String> {
    run(exp, &config(body)?, THREADS).map_err(|e| e.to_string())
}

fn summary(r: &Report) -> String {
    format!("{:+.3e} ± {:.2e} (n = {})", r.estimate, r.se, r.n)
}

fn quasi_invariance() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, model) in [("deterministic", DET), ("gamma", GAMMA), ("stable(0.5)", STABLE)] {
        let start = Instant::now();
        let r = experiment(
            Experiment::VerifyQi,
            format!(r#"{{"model": {model}, "shift": {SHIFT}, "f": {TANH}, "n": 200000, "seed": 42}}"#),
        )?;
        let secs = start.elapsed().as_secs_f64();
        ok &= r.pass && secs < 60.0;
        parts.push(format!("{name}: {} in {secs:.1}s", summary(&r)));
    }
    Ok((ok, parts.join("; ")))
}

fn unit_mass() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, model) in [("deterministic", DET), ("gamma", GAMMA), ("stable(0.5)", STABLE)] {
        let r = experiment(
            Experiment::Simulate,
            format!(r#"{{"model": {model}, "shift": {SHIFT}, "times": [0.4, 0.9], "n": 200000, "seed": 43}}"#),
        )?;
        ok &= r.pass && (r.estimate - 1.0).abs() <= 3.0 * r.se;
        parts.push(format!("{name}: E Z = {:.4} ± {:.1e}", r.estimate, r.se));
    }
    Ok((ok, parts.join("; ")))
}

fn ibp() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, model) in [("gamma", GAMMA), ("stable(0.5)", STABLE)] {
        // the per-replica difference is symmetric in (F, G), so G stays fixed
        for (kname, f) in [("tanh", TANH), ("bump", BUMP)] {
            let r = experiment(
                Experiment::VerifyIbp,
                format!(r#"{{"model": {model}, "shift": {SHIFT}, "f": {f}, "g": {COSINE}, "n": 200000, "seed": 44}}"#),
            )?;
            ok &= r.pass;
            parts.push(format!("{name}×{kname}: {}", summary(&r)));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn index() -> Outcome {
    let cfg = IndexConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.3, 0.5, 0.7] {
        let r = BernsteinFunction::stable(alpha)
            .and_then(|b| b.index_sigma0(&cfg))
            .map_err(|e| e.to_string())?;
        ok &= (r.sigma0_limit - alpha).abs() <= 0.05 && (r.sigma0_moment - alpha).abs() <= 0.05;
        parts.push(format!("α={alpha}: limit {:.4}, moment {:.4}", r.sigma0_limit, r.sigma0_moment));
    }
    let log = BernsteinFunction::log_family().map_err(|e| e.to_string())?;
    let r = log.index_sigma0(&cfg).map_err(|e| e.to_string())?;
    let hp = log.hp_check(2.0).map_err(|e| e.to_string())?;
    ok &= r.sigma0_limit >= 0.95 && r.sigma0_moment >= 0.95 && hp.status == HpStatus::Fails;
    parts.push(format!(
        "u·log(1+1/u): limit {:.4}, moment {:.4}, hp(2) {:?}",
        r.sigma0_limit, r.sigma0_moment, hp.status
    ));
    Ok((ok, parts.join("; ")))
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn tail() -> Outcome {
    let m = SubordinatorModel::new(Family::Stable { alpha: 0.5 }, 1.0).map_err(|e| e.to_string())?;
    let n = 100_000;
    let mut draws: Vec<f64> = (0..n).map(|i| m.sample_terminal(&mut replica_rng(5, Role::Main, i))).collect();
    draws.sort_by(f64::total_cmp);
    let survival = |t: f64| (draws.len() - draws.partition_point(|&x| x < t)) as f64 / n as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [1.0, 10.0, 100.0, 1000.0] {
        let p = survival(t);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let bound = m.tail_upper_bound(t).map_err(|e| e.to_string())?;
        ok &= p <= bound + 3.0 * se;
        parts.push(format!("t={t}: {p:.4} ≤ {bound:.4}"));
    }
    let pts: Vec<(f64, f64)> = log_grid(10.0, 1000.0, 21).into_iter().map(|t| (t, survival(t))).collect();
    let slope = loglog_slope(&pts);
    ok &= (-0.6..=-0.4).contains(&slope);
    parts.push(format!("slope {slope:.4}"));
    Ok((ok, parts.join("; ")))
}

fn expectation_identity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for kappa in [-0.5, 0.0, 0.5] {
        let r = experiment(
            Experiment::VerifyIdentity,
            format!(
                r#"{{"model": {GAMMA}, "shift": {SHIFT},
                    "g_shift": {{"d": 1, "breakpoints": [0.0, 1.0, 3.0], "derivatives": [[1.0], [0.5]]}},
                    "kappa": {kappa}, "n": 100000, "seed": 45}}"#
            ),
        )?;
        ok &= r.pass;
        parts.push(format!("κ={kappa}: {}", summary(&r)));
    }
    Ok((ok, parts.join("; ")))
}

fn random_shift(r: &mut ChaCha8Rng) -> ShiftFunction {
    let k = r.random_range(1..6);
    let mut b = vec![0.0];
    for _ in 0..k {
        b.push(b.last().unwrap() + r.random_range(0.05..4.0));
    }
    if r.random::<bool>() {
        *b.last_mut().unwrap() = f64::INFINITY;
    }
    let v: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
    ShiftFunction::scalar(b, &v).unwrap()
}

fn random_cylinder(r: &mut ChaCha8Rng) -> CylinderFunction {
    let n = r.random_range(1..4);
    let times: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let a: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let kernel = if r.random::<bool>() {
        Kernel::Tanh { a, beta: r.random_range(-1.0..1.0) }
    } else {
        Kernel::Bump { center: a, scale: r.random_range(0.3..2.0) }
    };
    CylinderFunction::new(kernel, times, 1).unwrap()
}

fn exact_models() -> Vec<(SubordinatorModel, Arc<TailTable>)> {
    [Family::Stable { alpha: 0.5 }, Family::Gamma { shape: 1.0, rate: 1.0 }, Family::Deterministic { c: 1.0 }]
        .into_iter()
        .map(|f| {
            let m = SubordinatorModel::new(f, 1.0).unwrap();
            let t = Arc::new(TailTable::exact(&m, default_t_grid()).unwrap().unwrap());
            (m, t)
        })
        .collect()
}

fn riesz_exactness() -> Outcome {
    let models = exact_models();
    let mut r = ChaCha8Rng::seed_from_u64(46);
    let (mut worst_pair, mut worst_norm) = (0.0f64, 0.0f64);
    let mut fd_ok = 0;
    let mut fd_checked = 0;
    for i in 0..100 {
        let (m, table) = &models[i % models.len()];
        let kappa = r.random_range(-1.0..1.0);
        let space = WeightedSpace::new(kappa, table.clone()).map_err(|e| e.to_string())?;
        let plain = WeightedSpace::new(0.0, table.clone()).map_err(|e| e.to_string())?;
        let f = random_cylinder(&mut r);
        let h = Arc::new(random_shift(&mut r));
        let s = sample_joint(m, &h, f.times(), &mut r).map_err(|e| e.to_string())?;
        let d = directional_derivative(&f, &s, &h).map_err(|e| e.to_string())?;
        let g = gradient(&f, &s, &space).map_err(|e| e.to_string())?;
        let scale = g.gammas.iter().zip(&g.knots).map(|(gi, &l)| (gi[0] * h.value(l)[0]).abs()).sum::<f64>().max(1e-300);
        for p in [riesz_pairing(&g, &h, &space), riesz_pairing_segments(&g, &h, &space)] {
            worst_pair = worst_pair.max((p.map_err(|e| e.to_string())? - d).abs() / scale);
        }
        let double = grad_norm_sq(&f, &s, &plain).map_err(|e| e.to_string())?;
        let inc = energy_increment_form(&f, &s).map_err(|e| e.to_string())?;
        worst_norm = worst_norm.max((double - inc).abs() / double.abs().max(inc.abs()).max(1e-300));

        let x: Vec<f64> = s.w_obs.iter().map(|w| w[0]).collect();
        let hv: Vec<f64> = s.knots().iter().map(|&l| h.value(l)[0]).collect();
        let size = hv.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let err = |eps: f64| {
            let eps = eps / size;
            let moved: Vec<f64> = x.iter().zip(&hv).map(|(a, b)| a + eps * b).collect();
            ((f.eval(&moved) - f.eval(&x)) / eps - d).abs() / size
        };
        let (e1, e2, e3) = (err(1e-3), err(1e-4), err(1e-5));
        if e2 > 1e-8 {
            fd_checked += 1;
            if e2 < e1 && e3 < e2 && (e2 / e3).log10() >= 0.9 {
                fd_ok += 1;
            }
        }
    }
    let ok = worst_pair <= 1e-8 && worst_norm <= 1e-10 && fd_ok == fd_checked && fd_checked > 50;
    Ok((
        ok,
        format!(
            "pairing rel. err ≤ {worst_pair:.1e}; κ=0 norm rel. err ≤ {worst_norm:.1e}; first-order FD on {fd_ok}/{fd_checked} instances"
        ),
    ))
}

fn weighted_space() -> Outcome {
    let models = exact_models();
    let mut r = ChaCha8Rng::seed_from_u64(47);
    let mut violations = 0;
    for i in 0..100 {
        let (_, table) = &models[i % models.len()];
        let h = random_shift(&mut r);
        let k1 = r.random_range(-2.0..2.0);
        let k2 = k1 + r.random_range(0.0..2.0);
        let lo = WeightedSpace::new(k1, table.clone()).map_err(|e| e.to_string())?;
        let hi = WeightedSpace::new(k2, table.clone()).map_err(|e| e.to_string())?;
        let a = lo.norm_sq(&h).map_err(|e| e.to_string())?;
        let b = hi.norm_sq(&h).map_err(|e| e.to_string())?;
        let member_lo = lo.membership(&h).map_err(|e| e.to_string())?.status == MembershipStatus::Member;
        let member_hi = hi.membership(&h).map_err(|e| e.to_string())?.status == MembershipStatus::Member;
        let monotone = match (a, b) {
            (Integral::Finite(a), Integral::Finite(b)) => b <= a * (1.0 + 1e-12),
            (Integral::Divergent, _) => true,
            (Integral::Finite(_), Integral::Divergent) => false,
        };
        if !monotone || (member_lo && !member_hi) {
            violations += 1;
        }
    }
    let table = models[0].1.clone();
    let c = ggvv_construct(-0.5, 0.5, table, 40).map_err(|e| e.to_string())?;
    let k = c.blocks.iter().filter(|b| b.contributing).count();
    let sum_m: f64 = c.blocks.iter().filter(|b| b.contributing).map(|b| b.m as f64).sum();
    let n1 = c.truncated_norm_sq(-0.5, k).map_err(|e| e.to_string())?.finite().unwrap_or(f64::INFINITY);
    let n2 = c.truncated_norm_sq(0.5, k).map_err(|e| e.to_string())?.finite().unwrap_or(f64::INFINITY);
    let bound = std::f64::consts::PI.powi(2) / 6.0;
    let ok = violations == 0 && (n1 - sum_m).abs() <= 1e-9 * sum_m && n2 <= bound + 1e-9 && k > 0;
    Ok((
        ok,
        format!(
            "{violations} monotonicity/nesting violations in 100 shifts; {k} blocks: κ₁-norm² {n1:.9} vs Σm {sum_m}, κ₂-norm² {n2:.6} ≤ π²/6"
        ),
    ))
}

fn ito_isometry() -> Outcome {
    let m = SubordinatorModel::new(Family::Deterministic { c: 1.0 }, 1.0).map_err(|e| e.to_string())?;
    let h = Arc::new(ShiftFunction::scalar(vec![0.0, 0.3, 0.8, 2.0], &[1.5, -0.7, 2.0]).map_err(|e| e.to_string())?);
    let runner = Runner::new(48, THREADS);
    let draws = runner
        .map(Role::Main, 100_000, |rng| sample_joint(&m, &h, &[0.5, 1.0], rng).map(|s| (s.wiener_integral, s.quad)))
        .map_err(|e| e.to_string())?;
    let is: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let q = draws[0].1;
    let all_same = draws.iter().all(|d| d.1 == q);
    // S_1 = 1, so Q = ∫_0^1 |h′|²
    let oracle = 0.3 * 1.5f64.powi(2) + 0.5 * 0.7f64.powi(2) + 0.2 * 2.0f64.powi(2);
    let (var, se) = variance_se(&is);
    let ok = all_same && (q - oracle).abs() < 1e-12 && (var - q).abs() <= 3.0 * se;
    Ok((ok, format!("Var I = {var:.4} ± {se:.1e}, Q = {q:.4}")))
}

fn determinism() -> Outcome {
    let cases = [
        (Experiment::VerifyQi, format!(r#"{{"model": {GAMMA}, "shift": {SHIFT}, "f": {TANH}, "n": 20000, "seed": 49}}"#)),
        (
            Experiment::VerifyIbp,
            format!(r#"{{"model": {STABLE}, "shift": {SHIFT}, "f": {TANH}, "g": {BUMP}, "n": 20000, "seed": 49}}"#),
        ),
        (
            Experiment::Energy,
            format!(r#"{{"model": {STABLE}, "f": {TANH}, "kappa": -1.2, "n": 20000, "seed": 49}}"#),
        ),
        (
            Experiment::VerifyIdentity,
            format!(
                r#"{{"model": {{"family": "cpp", "atoms": [[0.5, 1.0], [2.0, 0.3]], "T": 1.0}}, "shift": {SHIFT}, "n": 20000, "tail_n": 20000, "seed": 49}}"#
            ),
        ),
    ];
    let mut ok = true;
    for (exp, body) in cases {
        let cfg = config(body)?;
        let one = run(exp, &cfg, 1).and_then(|r| r.to_json()).map_err(|e| e.to_string())?;
        let eight = run(exp, &cfg, 8).and_then(|r| r.to_json()).map_err(|e| e.to_string())?;
        ok &= one == eight;
    }
    Ok((ok, "verify-qi, verify-ibp, energy, verify-identity reports compared at 1 and 8 workers".into()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("quasi-invariance", quasi_invariance),
        ("unit mass", unit_mass),
        ("integration by parts", ibp),
        ("index", index),
        ("tail", tail),
        ("expectation identity", expectation_identity),
        ("Riesz/gradient exactness", riesz_exactness),
        ("weighted-space properties", weighted_space),
        ("Itô isometry", ito_isometry),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {:<26} {} [{:.1}s] {detail}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
