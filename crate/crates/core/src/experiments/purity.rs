use serde::{Deserialize, Serialize};

use crate::constants::{moments_from_tmsv, SecondMoments};
use crate::error::{Error, Result};

/// Degradation of the entangled source with signal photon number.
///
/// Every variant produces `n_i = n_s` and a real correlation
/// `c = purity·√(n_s(n_s + 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PurityModel {
    Constant {
        purity: f64,
    },
    /// `(n_s, purity)` pairs, linearly interpolated. Queries outside the
    /// table fail.
    Table {
        points: Vec<[f64; 2]>,
    },
    /// `purity = 1/(1 + β·n_s)`. Give `beta` or the photon number
    /// `crossing` at which `Δ = 1`.
    Rational {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        crossing: Option<f64>,
    },
    /// Ideal squeezing `N_sq` plus thermal noise `residual + slope·N_sq` on
    /// both modes, so `n_s = (1 + slope)·N_sq + residual` and
    /// `c = √(N_sq(N_sq + 1))`. Give `slope` or the `crossing` where `Δ = 1`.
    Heating {
        residual: f64,
        #[serde(default)]
        slope: Option<f64>,
        #[serde(default)]
        crossing: Option<f64>,
    },
}

impl Default for PurityModel {
    fn default() -> Self {
        PurityModel::Constant { purity: 1.0 }
    }
}

/// Squeezed photon number whose pure correlation `√(N(N+1))` equals `d`,
/// i.e. the `N_sq` that puts `Δ = 1` at `n_s = d`.
fn squeezing_for_unit_delta(d: f64) -> f64 {
    ((1.0 + 4.0 * d * d).sqrt() - 1.0) / 2.0
}

impl PurityModel {
    /// Replaces `crossing` targets by the parameter they imply and checks
    /// ranges.
    pub fn resolve(&self) -> Result<PurityModel> {
        let crossing_ok = |d: f64| {
            if d > 0.0 && d.is_finite() {
                Ok(d)
            } else {
                Err(Error::config(format!("purity crossing must be positive, got {d}")))
            }
        };
        match self {
            PurityModel::Constant { purity } => {
                if !(0.0..=1.0).contains(purity) {
                    return Err(Error::config(format!("purity must lie in [0, 1], got {purity}")));
                }
                Ok(self.clone())
            }
            PurityModel::Table { points } => {
                if points.is_empty() {
                    return Err(Error::config("purity table is empty"));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::config("purity table must be strictly increasing in n_s"));
                    }
                }
                if points.iter().any(|p| !(0.0..=1.0).contains(&p[1])) {
                    return Err(Error::config("purity table values must lie in [0, 1]"));
                }
                Ok(self.clone())
            }
            PurityModel::Rational { beta, crossing } => {
                let beta = match (beta, crossing) {
                    (Some(b), None) => *b,
                    (None, Some(d)) => {
                        let d = crossing_ok(*d)?;
                        let p = (d / (d + 1.0)).sqrt();
                        (1.0 / p - 1.0) / d
                    }
                    _ => return Err(Error::config("rational purity needs exactly one of `beta`, `crossing`")),
                };
                if !(beta >= 0.0) {
                    return Err(Error::config(format!("rational purity beta must be ≥ 0, got {beta}")));
                }
                Ok(PurityModel::Rational {
                    beta: Some(beta),
                    crossing: None,
                })
            }
            PurityModel::Heating {
                residual,
                slope,
                crossing,
            } => {
                if !(*residual >= 0.0) {
                    return Err(Error::config(format!("heating residual must be ≥ 0, got {residual}")));
                }
                let slope = match (slope, crossing) {
                    (Some(s), None) => *s,
                    (None, Some(d)) => {
                        let d = crossing_ok(*d)?;
                        if d <= *residual {
                            return Err(Error::config("heating crossing must exceed the residual occupation"));
                        }
                        (d - residual) / squeezing_for_unit_delta(d) - 1.0
                    }
                    _ => return Err(Error::config("heating purity needs exactly one of `slope`, `crossing`")),
                };
                if !(slope >= 0.0) {
                    return Err(Error::config(format!("heating slope must be ≥ 0, got {slope}")));
                }
                Ok(PurityModel::Heating {
                    residual: *residual,
                    slope: Some(slope),
                    crossing: None,
                })
            }
        }
    }

    pub fn purity(&self, n_s: f64) -> Result<f64> {
        if !(n_s >= 0.0) {
            return Err(Error::domain(format!("n_s must be ≥ 0, got {n_s}")));
        }
        match self.resolve()? {
            PurityModel::Constant { purity } => Ok(purity),
            PurityModel::Table { points } => interpolate(&points, n_s),
            PurityModel::Rational { beta, .. } => Ok(1.0 / (1.0 + beta.unwrap_or(0.0) * n_s)),
            PurityModel::Heating { residual, slope, .. } => {
                if n_s == 0.0 {
                    return Ok(1.0);
                }
                let n_sq = (n_s - residual).max(0.0) / (1.0 + slope.unwrap_or(0.0));
                Ok(((n_sq * (n_sq + 1.0)) / (n_s * (n_s + 1.0))).sqrt().min(1.0))
            }
        }
    }

    /// Source moments at signal photon number `n_s`.
    pub fn moments(&self, n_s: f64) -> Result<SecondMoments> {
        moments_from_tmsv(n_s, self.purity(n_s)?)
    }
}

fn interpolate(points: &[[f64; 2]], x: f64) -> Result<f64> {
    let first = points[0][0];
    let last = points[points.len() - 1][0];
    if x < first || x > last {
        return Err(Error::Range(format!("n_s = {x} outside purity table [{first}, {last}]")));
    }
    if points.len() == 1 {
        return Ok(points[0][1]);
    }
    let k = points.partition_point(|p| p[0] <= x).clamp(1, points.len() - 1);
    let [x0, y0] = points[k - 1];
    let [x1, y1] = points[k];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}
