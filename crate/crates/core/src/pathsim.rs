//! Joint exact sampling of Brownian observations at subordinated times with
//! the Wiener integral `I = ∫_0^{S_T} h′·dW` and `Q = ∫_0^{S_T} |h′|²`, and
//! the density `Z = exp(I − Q/2)`.
//!
//! Given the subordinator path, `(W(s_i) − W(s_{i−1}), ∫_{s_{i−1}}^{s_i} h′_k dW_k)`
//! is Gaussian per coordinate with covariance built from `∫ h′_k` and
//! `∫ (h′_k)²` over the interval, so no time discretisation is involved.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::shiftspace::ShiftFunction;
use crate::subordinator::{SubordinatorModel, SubordinatorPath};

#[derive(Debug, Clone)]
pub struct PathSample {
    pub sub_path: SubordinatorPath,
    /// `W(s_i)` for each observation, `d` coordinates each.
    pub w_obs: Vec<Vec<f64>>,
    pub wiener_integral: f64,
    pub quad: f64,
    /// `h(s_i)` for each observation.
    pub shift_values: Vec<Vec<f64>>,
    shift: Arc<ShiftFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityValue {
    pub log_z: f64,
    pub z: f64,
    pub overflow: bool,
}

impl PathSample {
    /// Observation times `t_i` in `[0, T]`.
    pub fn times(&self) -> &[f64] {
        &self.sub_path.times
    }

    /// Subordinated times `s_i = ℓ_{t_i}`.
    pub fn knots(&self) -> &[f64] {
        &self.sub_path.values
    }

    pub fn shift(&self) -> &Arc<ShiftFunction> {
        &self.shift
    }

    pub fn dim(&self) -> usize {
        self.shift.dim()
    }
}

/// Draws the subordinator path at `times`, then the Brownian increments and
/// partial Wiener integrals on every interval `[s_{i−1}, s_i]`, including
/// the last one `[s_n, ℓ_T]`, which carries no observation.
pub fn sample_joint<R: Rng + ?Sized>(
    model: &SubordinatorModel,
    shift: &Arc<ShiftFunction>,
    times: &[f64],
    rng: &mut R,
) -> Result<PathSample> {
    let sub_path = model.sample_path(times, rng)?;
    let d = shift.dim();
    let mut w = vec![0.0; d];
    let mut w_obs = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    let mut prev = 0.0;
    let ends = sub_path.values.iter().copied().chain(std::iter::once(sub_path.terminal));
    for (i, s) in ends.enumerate() {
        let dt = s - prev;
        let mom = if dt > 0.0 { Some(shift.moments(prev, s)) } else { None };
        for k in 0..d {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let Some(m) = &mom else { continue };
            let dw = dt.sqrt() * z1;
            let (c, v) = (m.first[k], m.second[k]);
            let mut cond = v - c * c / dt;
            if cond < 0.0 {
                if cond < -1e-12 * v.max(1.0) {
                    return Err(Error::Invariant(format!(
                        "negative conditional variance {cond:e} on [{prev}, {s}]"
                    )));
                }
                cond = 0.0;
            }
            w[k] += dw;
            integral += c / dt * dw + cond.sqrt() * z2;
        }
        if i < times.len() {
            w_obs.push(w.clone());
        }
        prev = s;
    }
    let quad = shift.quadratic(sub_path.terminal);
    let shift_values = sub_path.values.iter().map(|&s| shift.value(s)).collect();
    Ok(PathSample {
        sub_path,
        w_obs,
        wiener_integral: integral,
        quad,
        shift_values,
        shift: shift.clone(),
    })
}

/// `dμ_h^S/dμ^S = exp(I − Q/2)`, kept in the log domain.
pub fn density(sample: &PathSample) -> DensityValue {
    density_from(sample.wiener_integral, sample.quad)
}

pub fn density_from(i: f64, q: f64) -> DensityValue {
    let log_z = i - 0.5 * q;
    let z = log_z.exp();
    DensityValue {
        log_z,
        z,
        overflow: z.is_infinite(),
    }
}

/// `W(s_i) + h(s_i)`.
pub fn shifted_observations(sample: &PathSample) -> Vec<Vec<f64>> {
    sample
        .w_obs
        .iter()
        .zip(&sample.shift_values)
        .map(|(w, h)| w.iter().zip(h).map(|(a, b)| a + b).collect())
        .collect()
}

/// Writes `replica, s_1..s_n, s*, W(s_1)..W(s_n), I, Q, log_z` rows
/// (one-dimensional observations; coordinate `k` of each row otherwise).
pub fn write_samples_csv<W: Write>(out: W, samples: &[(usize, PathSample)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = samples.first() else {
        w.flush()?;
        return Ok(());
    };
    let n = first.knots().len();
    let d = first.dim();
    let mut header = vec!["replica".to_string()];
    header.extend((1..=n).map(|i| format!("s{i}")));
    header.push("s_star".into());
    for i in 1..=n {
        for k in 0..d {
            header.push(if d == 1 { format!("w{i}") } else { format!("w{i}_{k}") });
        }
    }
    header.extend(["I", "Q", "log_z"].map(String::from));
    w.write_record(&header)?;
    for (rep, s) in samples {
        if s.knots().len() != n || s.dim() != d {
            return Err(invalid("all dumped samples must share observation count and dimension"));
        }
        let mut row = vec![rep.to_string()];
        row.extend(s.knots().iter().map(|v| v.to_string()));
        row.push(s.sub_path.terminal.to_string());
        row.extend(s.w_obs.iter().flatten().map(|v| v.to_string()));
        row.push(s.wiener_integral.to_string());
        row.push(s.quad.to_string());
        row.push(density(s).log_z.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{variance_se, MCResult};
    use crate::subordinator::Family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det() -> SubordinatorModel {
        SubordinatorModel::new(Family::Deterministic { c: 1.0 }, 1.0).unwrap()
    }

    #[test]
    fn zero_shift_gives_unit_density() {
        let m = SubordinatorModel::new(Family::Gamma { shape: 1.0, rate: 1.0 }, 1.0).unwrap();
        let h = Arc::new(ShiftFunction::zero(2));
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = sample_joint(&m, &h, &[0.3, 0.8], &mut r).unwrap();
            assert_eq!(s.wiener_integral, 0.0);
            assert_eq!(s.quad, 0.0);
            assert_eq!(density(&s).z, 1.0);
            assert_eq!(shifted_observations(&s), s.w_obs);
            assert_eq!(s.w_obs[0].len(), 2);
        }
    }

    #[test]
    fn density_arithmetic() {
        let v = density_from(2.0, 2.0);
        assert_eq!(v.log_z, 1.0);
        assert!((v.z - std::f64::consts::E).abs() < 1e-15);
        assert!(density_from(1000.0, 0.0).overflow);
        assert_eq!(density_from(0.0, 0.0).z, 1.0);
    }

    #[test]
    fn ito_isometry_deterministic() {
        let h = Arc::new(ShiftFunction::scalar(vec![0.0, 1.0], &[1.0]).unwrap());
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..100_000)
            .map(|_| {
                let s = sample_joint(&det(), &h, &[0.4, 0.9], &mut r).unwrap();
                assert_eq!(s.quad, 1.0);
                s.wiener_integral
            })
            .collect();
        let (var, se) = variance_se(&vals);
        assert!((var - 1.0).abs() <= 3.0 * se, "{var} ± {se}");
    }

    #[test]
    fn flat_interval_has_no_increment() {
        let m = SubordinatorModel::new(Family::CompoundPoisson { atoms: vec![(1.0, 0.01)], drift: 0.0 }, 1.0).unwrap();
        let h = Arc::new(ShiftFunction::scalar(vec![0.0, 5.0], &[1.0]).unwrap());
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let s = sample_joint(&m, &h, &[0.5], &mut r).unwrap();
        // with overwhelming probability there is no jump: every interval is empty
        assert_eq!(s.sub_path.terminal, 0.0);
        assert_eq!(s.w_obs[0], vec![0.0]);
        assert_eq!(s.wiener_integral, 0.0);
    }

    #[test]
    fn shifted_observation_in_deterministic_case() {
        let h = Arc::new(ShiftFunction::scalar(vec![0.0, f64::INFINITY], &[1.0]).unwrap());
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let s = sample_joint(&det(), &h, &[1.0], &mut r).unwrap();
            let sh = shifted_observations(&s);
            assert!((sh[0][0] - s.w_obs[0][0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_mass_gamma() {
        let m = SubordinatorModel::new(Family::Gamma { shape: 1.0, rate: 1.0 }, 1.0).unwrap();
        let h = Arc::new(ShiftFunction::scalar(vec![0.0, 0.5, 1.5], &[0.8, -0.6]).unwrap());
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..50_000)
            .map(|_| density(&sample_joint(&m, &h, &[0.4, 0.9], &mut r).unwrap()).z)
            .collect();
        let res = MCResult::from_values(&z, Some(1.0));
        assert!(res.pass, "{res:?}");
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let h = Arc::new(ShiftFunction::scalar(vec![0.0, 1.0], &[1.0]).unwrap());
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<_> = (0..3).map(|i| (i, sample_joint(&det(), &h, &[0.5, 1.0], &mut r).unwrap())).collect();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replica,s1,s2,s_star,w1,w2,I,Q,log_z");
        assert_eq!(lines.len(), 4);
    }
}
