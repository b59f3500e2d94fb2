use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::sweep::{PointFailure, SweepResult, SweepRow};
use crate::error::Result;

/// Reference series for advantage figures.
pub const REFERENCE_SERIES: &str = "tmsv/pc_calibrated";

/// Grid value where `a − b` changes sign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub a: String,
    pub b: String,
    pub value: f64,
    /// Sign of `a − b` just above the crossing: `1` when `a` takes the lead.
    pub direction: i8,
}

/// Extremes of `reference − other` in dB over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advantage {
    pub over: String,
    pub peak_db: f64,
    pub peak_at: f64,
    pub min_db: f64,
    pub min_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub name: String,
    pub variable: String,
    pub points: usize,
    pub rows: usize,
    pub series: Vec<String>,
    pub crossings: Vec<Crossing>,
    pub advantages: Vec<Advantage>,
    /// Value where the entangled source's Duan parameter reaches 1.
    pub delta_crossing: Option<f64>,
    pub failure: Option<PointFailure>,
}

/// Per-series `(value, snr_db)` curves in grid order.
pub fn series_curves(result: &SweepResult) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &result.rows {
        out.entry(r.series()).or_default().push((r.value, r.snr_db));
    }
    out
}

fn interpolate_root(x0: f64, y0: f64, x1: f64, y1: f64, log_axis: bool) -> f64 {
    let t = y0 / (y0 - y1);
    if log_axis && x0 > 0.0 && x1 > 0.0 {
        (x0.ln() + t * (x1.ln() - x0.ln())).exp()
    } else {
        x0 + t * (x1 - x0)
    }
}

/// Roots of `f` sampled on a grid, interpolated linearly on a log axis when
/// all grid values are positive.
pub fn find_crossings(xs: &[f64], ys: &[f64]) -> Vec<(f64, i8)> {
    let log_axis = xs.iter().all(|&x| x > 0.0);
    let mut out = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        let (y0, y1) = (ys[i], ys[i + 1]);
        if !(y0.is_finite() && y1.is_finite()) {
            continue;
        }
        if y0 != 0.0 && y1 != 0.0 && y0.signum() != y1.signum() {
            out.push((interpolate_root(xs[i], y0, xs[i + 1], y1, log_axis), y1.signum() as i8));
        } else if y0 != 0.0 && y1 == 0.0 && i + 2 < xs.len() {
            let y2 = ys[i + 2];
            if y2 != 0.0 && y2.signum() != y0.signum() {
                out.push((xs[i + 1], y2.signum() as i8));
            }
        }
    }
    out
}

fn paired(a: &[(f64, f64)], b: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(x, ya) in a {
        if let Some(&(_, yb)) = b.iter().find(|(xb, _)| *xb == x) {
            xs.push(x);
            ys.push(ya - yb);
        }
    }
    (xs, ys)
}

pub fn summarize(name: &str, result: &SweepResult) -> SweepSummary {
    let curves = series_curves(result);
    let names: Vec<String> = curves.keys().cloned().collect();
    let mut crossings = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (xs, ys) = paired(&curves[a], &curves[b]);
            for (value, direction) in find_crossings(&xs, &ys) {
                crossings.push(Crossing {
                    a: a.clone(),
                    b: b.clone(),
                    value,
                    direction,
                });
            }
        }
    }
    let mut advantages = Vec::new();
    if let Some(reference) = curves.get(REFERENCE_SERIES) {
        for other in names.iter().filter(|n| n.as_str() != REFERENCE_SERIES) {
            let (xs, ys) = paired(reference, &curves[other]);
            let finite: Vec<(f64, f64)> = xs.into_iter().zip(ys).filter(|(_, y)| y.is_finite()).collect();
            let Some(&first) = finite.first() else { continue };
            let peak = finite.iter().copied().fold(first, |m, p| if p.1 > m.1 { p } else { m });
            let min = finite.iter().copied().fold(first, |m, p| if p.1 < m.1 { p } else { m });
            advantages.push(Advantage {
                over: other.clone(),
                peak_db: peak.1,
                peak_at: peak.0,
                min_db: min.1,
                min_at: min.0,
            });
        }
    }
    let delta_curve: Vec<&SweepRow> = {
        let mut seen = Vec::new();
        for r in result.rows.iter().filter(|r| r.source == "tmsv" && r.delta.is_some()) {
            if seen.last().is_none_or(|p: &&SweepRow| p.value != r.value) {
                seen.push(r);
            }
        }
        seen
    };
    let xs: Vec<f64> = delta_curve.iter().map(|r| r.value).collect();
    let ys: Vec<f64> = delta_curve.iter().map(|r| r.delta.unwrap_or(f64::NAN) - 1.0).collect();
    let delta_crossing = find_crossings(&xs, &ys).first().map(|c| c.0);
    let points = {
        let mut v: Vec<f64> = result.rows.iter().map(|r| r.value).collect();
        v.dedup();
        v.len()
    };
    SweepSummary {
        name: name.to_string(),
        variable: result.variable.as_str().to_string(),
        points,
        rows: result.rows.len(),
        series: names,
        crossings,
        advantages,
        delta_crossing,
        failure: result.failure.clone(),
    }
}

impl SweepSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Wide table for plotting: one line per grid value with `<series>_db`,
/// `<series>_err_db` and `<series>_analytic_db` columns, then the Duan
/// parameter of each correlated source.
pub fn write_plot_csv<W: Write>(result: &SweepResult, w: W) -> Result<()> {
    let mut series: Vec<String> = Vec::new();
    let mut delta_sources: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for r in &result.rows {
        if !series.contains(&r.series()) {
            series.push(r.series());
        }
        if r.delta.is_some() && !delta_sources.contains(&r.source) {
            delta_sources.push(r.source.clone());
        }
        if values.last() != Some(&r.value) {
            values.push(r.value);
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![result.variable.as_str().to_string()];
    for s in &series {
        for suffix in ["db", "err_db", "analytic_db"] {
            header.push(format!("{s}_{suffix}"));
        }
    }
    for s in &delta_sources {
        header.push(format!("delta_{s}"));
    }
    out.write_record(&header)?;
    for v in values {
        let at: Vec<&SweepRow> = result.rows.iter().filter(|r| r.value == v).collect();
        let mut rec = vec![v.to_string()];
        for s in &series {
            match at.iter().find(|r| &r.series() == s) {
                Some(r) => {
                    rec.push(r.snr_db.to_string());
                    rec.push(r.stderr_db.to_string());
                    rec.push(r.analytic_db.to_string());
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        for s in &delta_sources {
            let d = at.iter().find(|r| &r.source == s).and_then(|r| r.delta);
            rec.push(d.map(|d| d.to_string()).unwrap_or_default());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
