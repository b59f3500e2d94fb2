//! Radiometric calibration of gain and added noise.
//!
//! A matched load at temperature `T` feeding a chain of gain `G` and added
//! noise `n_add` produces the noise power
//!
//! ```text
//! N(T) = ħωBR·G·[½·coth(ħω/2k_BT) + n_add]
//! ```
//!
//! which is linear in `β = (G, G·n_add)`, so the fit is a single weighted
//! linear least-squares solve.

use std::io::Read;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::constants::{linear_to_db, BandParams, PHYS};
use crate::error::{Error, Result};

/// One load temperature and the measured noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    #[serde(rename = "T_K")]
    pub temperature: f64,
    #[serde(rename = "noise_density_V2Hz")]
    pub noise_density: f64,
    pub stderr: f64,
}

/// `½·coth(ħω/2k_BT)`, the mean occupation plus one half.
pub fn half_coth(omega: f64, t: f64) -> f64 {
    let x = PHYS.hbar * omega / (2.0 * PHYS.k_b * t);
    0.5 / x.tanh()
}

pub fn noise_density_model(t: f64, gain: f64, n_add: f64, band: &BandParams, omega: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("temperature must be positive, got {t} K")));
    }
    Ok(band.quantum_scale(omega) * gain * (half_coth(omega, t) + n_add))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weights `1/stderr²`.
    InverseVariance,
}

/// Central value with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Standard error; `None` for an exactly determined fit.
    pub stderr: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

impl Estimate {
    pub fn covers(&self, truth: f64) -> bool {
        match self.ci95 {
            Some((lo, hi)) => lo <= truth && truth <= hi,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationFit {
    pub gain: Estimate,
    pub gain_db: f64,
    pub n_add: Estimate,
    /// Weighted residual norm in units of `ħωBR`.
    pub residual_norm: f64,
    pub points: usize,
    pub dof: usize,
    /// The fitted added noise is negative; reported as is.
    pub n_add_negative: bool,
    pub weighting: Weighting,
}

impl CalibrationFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn fit_gain_noise(points: &[CalibrationPoint], band: &BandParams, omega: f64) -> Result<CalibrationFit> {
    fit_gain_noise_weighted(points, band, omega, Weighting::Uniform)
}

pub fn fit_gain_noise_weighted(
    points: &[CalibrationPoint],
    band: &BandParams,
    omega: f64,
    weighting: Weighting,
) -> Result<CalibrationFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "two unknowns need at least 2 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.temperature > 0.0 && p.noise_density > 0.0) {
            return Err(Error::Fit(format!(
                "points need positive temperature and noise power, got T={} N={}",
                p.temperature, p.noise_density
            )));
        }
        if weighting == Weighting::InverseVariance && !(p.stderr > 0.0) {
            return Err(Error::Fit("inverse-variance weighting needs positive stderr on every point".into()));
        }
    }
    let (t_lo, t_hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.temperature), hi.max(p.temperature)));
    if points.len() > 2 && t_hi < 3.0 * t_lo {
        log::warn!("calibration temperatures span only a factor {:.2}", t_hi / t_lo);
    }

    let q = band.quantum_scale(omega);
    let n = points.len();
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for (k, p) in points.iter().enumerate() {
        let w = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseVariance => (q / p.stderr).powi(2),
        };
        let sw = f64::sqrt(w);
        x[(k, 0)] = sw * half_coth(omega, p.temperature);
        x[(k, 1)] = sw;
        y[k] = sw * p.noise_density / q;
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r[(0, 0)].abs().max(r[(1, 1)].abs()).max(r[(0, 1)].abs());
    if !(r[(1, 1)].abs() > 1e-10 * scale) {
        return Err(Error::Fit("design is rank deficient: temperatures must differ".into()));
    }
    let qty = qr.q().transpose() * &y;
    let r2 = Matrix2::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 1)]);
    let beta = r2
        .solve_upper_triangular(&nalgebra::Vector2::new(qty[0], qty[1]))
        .ok_or_else(|| Error::Fit("singular triangular factor".into()))?;
    let (g, gn) = (beta[0], beta[1]);
    if !(g > 0.0) {
        return Err(Error::Fit(format!("fitted gain is not positive ({g})")));
    }
    let resid = &y - &x * DVector::from_vec(vec![g, gn]);
    let residual_norm = resid.norm();
    let dof = n - 2;
    let n_add = gn / g;

    let (gain, n_add_est) = if dof == 0 {
        (
            Estimate {
                value: g,
                stderr: None,
                ci95: None,
            },
            Estimate {
                value: n_add,
                stderr: None,
                ci95: None,
            },
        )
    } else {
        let sigma2 = resid.norm_squared() / dof as f64;
        let r_inv = r2
            .try_inverse()
            .ok_or_else(|| Error::Fit("singular triangular factor".into()))?;
        let cov = r_inv * r_inv.transpose() * sigma2;
        let se_g = cov[(0, 0)].sqrt();
        let var_n = (cov[(1, 1)] - 2.0 * n_add * cov[(0, 1)] + n_add * n_add * cov[(0, 0)]) / (g * g);
        let se_n = var_n.max(0.0).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| Error::Fit(e.to_string()))?
            .inverse_cdf(0.975);
        (
            Estimate {
                value: g,
                stderr: Some(se_g),
                ci95: Some((g - t * se_g, g + t * se_g)),
            },
            Estimate {
                value: n_add,
                stderr: Some(se_n),
                ci95: Some((n_add - t * se_n, n_add + t * se_n)),
            },
        )
    };
    if n_add < 0.0 {
        log::warn!("fitted added noise is negative ({n_add})");
    }
    Ok(CalibrationFit {
        gain,
        gain_db: linear_to_db(g),
        n_add: n_add_est,
        residual_norm,
        points: n,
        dof,
        n_add_negative: n_add < 0.0,
        weighting,
    })
}

/// Result of [`calibrate_idler_number`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedNumber {
    pub value: f64,
    /// Statistical noise pushed the estimate below zero.
    pub negative: bool,
}

/// Source-referred idler occupation from the detected record power,
/// `detected/G_I − (n_add,I + 1)`. Negative values are returned unclamped.
pub fn calibrate_idler_number(detected: f64, g_i: f64, n_add_i: f64) -> CalibratedNumber {
    let value = detected / g_i - (n_add_i + 1.0);
    CalibratedNumber {
        value,
        negative: value < 0.0,
    }
}

/// Reads `T_K,noise_density_V2Hz,stderr` rows.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<CalibrationPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_points_csv<W: std::io::Write>(points: &[CalibrationPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Noiseless points of the model at the given temperatures.
pub fn synthetic_points(temps: &[f64], gain: f64, n_add: f64, band: &BandParams, omega: f64) -> Result<Vec<CalibrationPoint>> {
    temps
        .iter()
        .map(|&t| {
            Ok(CalibrationPoint {
                temperature: t,
                noise_density: noise_density_model(t, gain, n_add, band, omega)?,
                stderr: 0.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::db_to_linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn temps() -> Vec<f64> {
        (0..8).map(|k| 0.05 + k as f64 * (0.95 / 7.0)).collect()
    }

    #[test]
    fn zero_temperature_limit() {
        let band = BandParams::reference();
        let q = band.quantum_scale(band.omega_i);
        let n = noise_density_model(1e-3, 1.0, 14.91, &band, band.omega_i).unwrap();
        assert!((n / q - 15.41).abs() < 1e-6);
        assert!(noise_density_model(0.0, 1.0, 1.0, &band, band.omega_i).is_err());
    }

    #[test]
    fn high_temperature_slope() {
        let band = BandParams::reference();
        let g = 1e9;
        let h = 1e-4;
        let f = |t| noise_density_model(t, g, 9.61, &band, band.omega_i).unwrap();
        let slope = (f(5.0 + h) - f(5.0 - h)) / (2.0 * h);
        let rj = PHYS.k_b * band.bandwidth * band.impedance * g;
        assert!(((slope - rj) / rj).abs() < 5e-3);
        // Rayleigh-Jeans: equal steps in T give equal steps in N.
        let d1 = f(300.0) - f(200.0);
        let d2 = f(400.0) - f(300.0);
        assert!(((d1 - d2) / d1).abs() < 1e-6);
    }

    #[test]
    fn noiseless_round_trip() {
        let band = BandParams::reference();
        let g = db_to_linear(93.98);
        let pts = synthetic_points(&temps(), g, 9.61, &band, band.omega_s).unwrap();
        let fit = fit_gain_noise(&pts, &band, band.omega_s).unwrap();
        assert!(((fit.gain.value - g) / g).abs() < 1e-9);
        assert!(((fit.n_add.value - 9.61) / 9.61).abs() < 1e-9);
        assert!(!fit.n_add_negative);
    }

    #[test]
    fn two_points_solve_exactly() {
        let band = BandParams::reference();
        let pts = synthetic_points(&[0.05, 0.5], 1e9, 14.91, &band, band.omega_i).unwrap();
        let fit = fit_gain_noise(&pts, &band, band.omega_i).unwrap();
        assert_eq!(fit.dof, 0);
        assert!(fit.residual_norm < 1e-12 * 1e9 * 16.0);
        assert!(fit.gain.stderr.is_none());
        assert!(((fit.n_add.value - 14.91) / 14.91).abs() < 1e-9);
    }

    #[test]
    fn degenerate_designs_fail() {
        let band = BandParams::reference();
        let one = synthetic_points(&[0.1], 1e9, 1.0, &band, band.omega_i).unwrap();
        assert!(matches!(fit_gain_noise(&one, &band, band.omega_i), Err(Error::Fit(_))));
        let same = synthetic_points(&[0.1, 0.1, 0.1], 1e9, 1.0, &band, band.omega_i).unwrap();
        assert!(matches!(fit_gain_noise(&same, &band, band.omega_i), Err(Error::Fit(_))));
        // Noise power falling with temperature implies negative gain.
        let mut falling = synthetic_points(&[0.1, 0.5, 1.0], 1e9, 1.0, &band, band.omega_i).unwrap();
        falling.reverse();
        for (p, t) in falling.iter_mut().zip([0.1, 0.5, 1.0]) {
            p.temperature = t;
        }
        assert!(matches!(fit_gain_noise(&falling, &band, band.omega_i), Err(Error::Fit(_))));
    }

    #[test]
    fn negative_added_noise_flagged() {
        let band = BandParams::reference();
        let pts = synthetic_points(&temps(), 1e9, -0.2, &band, band.omega_i).unwrap();
        let fit = fit_gain_noise(&pts, &band, band.omega_i).unwrap();
        assert!(fit.n_add_negative);
        assert!((fit.n_add.value + 0.2).abs() < 1e-9);
    }

    #[test]
    fn errors_shrink_with_replication() {
        let band = BandParams::reference();
        let omega = band.omega_i;
        let g = 1e9;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draw = |reps: usize| {
            let mut pts = Vec::new();
            for _ in 0..reps {
                for &t in &temps() {
                    let n = noise_density_model(t, g, 14.91, &band, omega).unwrap();
                    let noise = Normal::new(0.0, 0.01 * n).unwrap();
                    pts.push(CalibrationPoint {
                        temperature: t,
                        noise_density: n + noise.sample(&mut rng),
                        stderr: 0.01 * n,
                    });
                }
            }
            fit_gain_noise(&pts, &band, omega).unwrap().gain.stderr.unwrap()
        };
        let mut avg = |reps| (0..20).map(|_| draw(reps)).sum::<f64>() / 20.0;
        let ratio = avg(1) / avg(16);
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn idler_calibration_examples() {
        let g = db_to_linear(94.25);
        let n = calibrate_idler_number(g * 15.91, g, 14.91);
        assert!(n.value.abs() < 1e-12);
        let n = calibrate_idler_number(g * (0.5 + 15.91), g, 14.91);
        assert!((n.value - 0.5).abs() < 1e-12);
        let n = calibrate_idler_number(g * 15.0, g, 14.91);
        assert!(n.negative && n.value < 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let band = BandParams::reference();
        let pts = synthetic_points(&[0.1, 0.3], 2.0, 1.0, &band, band.omega_i).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("T_K,noise_density_V2Hz,stderr"));
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);
    }
}
