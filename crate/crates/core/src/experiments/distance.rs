use serde::{Deserialize, Serialize};

use crate::constants::{db_to_linear, linear_to_db};
use crate::error::{Error, Result};

/// Mapping from object distance to round-trip transmissivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistanceModel {
    /// `η = eta_ref·(d_ref/d)^exponent`, capped at 1.
    PowerLaw {
        eta_ref: f64,
        /// Reference distance, m.
        d_ref: f64,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    /// Tabulated `(d, η)` in metres and dB, interpolated linearly in dB.
    Table { points: Vec<DistancePoint> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistancePoint {
    /// Distance, m.
    pub d: f64,
    /// Transmissivity, dB.
    pub eta_db: f64,
}

fn default_exponent() -> f64 {
    2.0
}

impl Default for DistanceModel {
    fn default() -> Self {
        DistanceModel::PowerLaw {
            eta_ref: 1.0,
            d_ref: 1.0,
            exponent: 2.0,
        }
    }
}

impl DistanceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistanceModel::PowerLaw { eta_ref, d_ref, exponent } => {
                if !(*eta_ref > 0.0 && *eta_ref <= 1.0) {
                    return Err(Error::config(format!("distance_model.eta_ref must lie in (0, 1], got {eta_ref}")));
                }
                if !(*d_ref > 0.0) {
                    return Err(Error::config(format!("distance_model.d_ref must be positive, got {d_ref}")));
                }
                if !exponent.is_finite() {
                    return Err(Error::config("distance_model.exponent must be finite"));
                }
            }
            DistanceModel::Table { points } => {
                if points.is_empty() {
                    return Err(Error::config("distance_model.points is empty"));
                }
                for p in points {
                    if !(p.d > 0.0) || !(p.eta_db <= 0.0) {
                        return Err(Error::config(format!(
                            "distance table entries need d > 0 and η ≤ 0 dB, got ({}, {})",
                            p.d, p.eta_db
                        )));
                    }
                }
                if points.windows(2).any(|w| !(w[1].d > w[0].d)) {
                    return Err(Error::config("distance table must be strictly increasing in d"));
                }
            }
        }
        Ok(())
    }
}

pub fn distance_to_eta(model: &DistanceModel, d: f64) -> Result<f64> {
    model.validate()?;
    match model {
        DistanceModel::PowerLaw { eta_ref, d_ref, exponent } => {
            if !(d > 0.0) {
                return Err(Error::Range(format!("distance must be positive, got {d}")));
            }
            Ok((eta_ref * (d_ref / d).powf(*exponent)).min(1.0))
        }
        DistanceModel::Table { points } => {
            let first = points[0].d;
            let last = points[points.len() - 1].d;
            if !(d >= first && d <= last) {
                return Err(Error::Range(format!("distance {d} m outside table [{first}, {last}] m")));
            }
            if points.len() == 1 {
                return Ok(db_to_linear(points[0].eta_db));
            }
            let k = points.partition_point(|p| p.d <= d).clamp(1, points.len() - 1);
            let (a, b) = (points[k - 1], points[k]);
            let db = a.eta_db + (b.eta_db - a.eta_db) * (d - a.d) / (b.d - a.d);
            Ok(db_to_linear(db))
        }
    }
}

/// `η` in dB for reporting.
pub fn distance_to_eta_db(model: &DistanceModel, d: f64) -> Result<f64> {
    Ok(linear_to_db(distance_to_eta(model, d)?))
}
