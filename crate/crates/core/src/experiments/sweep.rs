use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SourceKind, SweepConfig, SweepVariable};
use super::distance::distance_to_eta;
use crate::chain::{detect_pair, ChainParams, TargetScenario};
use crate::constants::{db_to_linear, duan_delta, linear_to_db, moments_classical, moments_coherent, thermal_occupation, SecondMoments};
use crate::dsp::{if_round_trip, sample_block_sums_mapped, BlockedSums, ChannelScale, RecordMap};
use crate::error::{Error, Result};
use crate::receivers::{
    error_probability, heterodyne_snr_analytic, heterodyne_snr_sums, homodyne_snr_analytic, homodyne_snr_sums,
    passive_report, pc_calibrated_snr_sums, pc_raw_snr_sums, pc_snr_analytic, ReceiverKind, SnrReport,
};
use crate::stats::{derive_seed, neumaier_sum};

const LOG10_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// Operating point derived from one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpec {
    pub n_s: f64,
    pub eta: f64,
    pub chain: ChainParams,
}

/// One `(point, source, receiver)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: String,
    pub value: f64,
    pub n_s: f64,
    pub eta: f64,
    pub source: String,
    pub receiver: String,
    /// Linear SNR, mean over repetitions.
    pub snr: f64,
    /// Standard error of `snr`.
    pub stderr: f64,
    pub snr_db: f64,
    pub stderr_db: f64,
    /// Sample standard deviation across repetitions, dB.
    pub spread_db: f64,
    pub analytic_snr: f64,
    pub analytic_db: f64,
    /// Half-width of the analytic value under the chain uncertainties, dB.
    pub analytic_band_db: Option<f64>,
    /// Duan parameter of the source.
    pub delta: Option<f64>,
    pub error_probability: f64,
    /// Records per hypothesis and repetition; 0 when closed form only.
    pub m: usize,
    pub status: String,
}

impl SweepRow {
    /// `source/receiver`.
    pub fn series(&self) -> String {
        format!("{}/{}", self.source, self.receiver)
    }
}

/// A grid point that failed, ending the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub value: f64,
    pub message: String,
    pub config_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    /// Rows in grid order, then source order, then receiver order.
    pub rows: Vec<SweepRow>,
    pub failure: Option<PointFailure>,
}

impl SweepResult {
    pub fn rows_for(&self, source: &str, receiver: ReceiverKind) -> impl Iterator<Item = &SweepRow> {
        let source = source.to_string();
        self.rows
            .iter()
            .filter(move |r| r.source == source && r.receiver == receiver.as_str())
    }

    /// Writes the rows and, after a failure, one marker line whose `status`
    /// names the failed point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            out.write_record(CSV_HEADER)?;
        }
        for r in &self.rows {
            out.serialize(r)?;
        }
        if let Some(f) = &self.failure {
            let mut rec = vec![String::new(); CSV_HEADER.len()];
            rec[0] = self.variable.as_str().to_string();
            rec[1] = f.value.to_string();
            rec[CSV_HEADER.len() - 1] = format!("failed: {}", f.message);
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 18] = [
    "variable",
    "value",
    "n_s",
    "eta",
    "source",
    "receiver",
    "snr",
    "stderr",
    "snr_db",
    "stderr_db",
    "spread_db",
    "analytic_snr",
    "analytic_db",
    "analytic_band_db",
    "delta",
    "error_probability",
    "m",
    "status",
];

/// Maps a grid value to photon number, transmissivity and chain.
pub fn resolve_point(cfg: &SweepConfig, value: f64) -> Result<PointSpec> {
    let mut spec = PointSpec {
        n_s: cfg.source.n_s,
        eta: cfg.sweep.eta,
        chain: cfg.chain.clone(),
    };
    match cfg.sweep.variable {
        SweepVariable::NS => spec.n_s = value,
        SweepVariable::Eta => spec.eta = value,
        SweepVariable::Distance => spec.eta = distance_to_eta(&cfg.distance_model, value)?,
        SweepVariable::Temperature => spec.chain.n_env = thermal_occupation(cfg.band.omega_s, value),
    }
    Ok(spec)
}

pub fn source_moments(cfg: &SweepConfig, kind: SourceKind, n_s: f64) -> Result<SecondMoments> {
    match kind {
        SourceKind::Tmsv => cfg.source.purity.moments(n_s),
        SourceKind::Classical => moments_classical(n_s, n_s),
        SourceKind::Coherent => moments_coherent(n_s),
    }
}

fn analytic(kind: ReceiverKind, m: &SecondMoments, n_s: f64, chain: &ChainParams, eta: f64) -> Result<SnrReport> {
    match kind {
        ReceiverKind::PcRaw => pc_snr_analytic(m, chain, eta, false),
        ReceiverKind::PcCalibrated => pc_snr_analytic(m, chain, eta, true),
        ReceiverKind::Homodyne => homodyne_snr_analytic(n_s, chain, eta),
        ReceiverKind::Heterodyne => heterodyne_snr_analytic(n_s, chain, eta),
        ReceiverKind::Passive => passive_report(chain, eta),
    }
}

type ChainShift = fn(&mut ChainParams, f64);

/// Largest analytic excursion, combined in quadrature over the one-sigma
/// shifts of each uncertain chain parameter.
fn analytic_band(kind: ReceiverKind, m: &SecondMoments, spec: &PointSpec, nominal_db: f64) -> Result<Option<f64>> {
    let Some(u) = spec.chain.uncertainty else {
        return Ok(None);
    };
    let shifts: [(f64, ChainShift); 3] = [
        (u.g_s_db, |c, s| c.g_s_det = (c.g_s_det * db_to_linear(s)).max(1.0)),
        (u.g_i_db, |c, s| c.g_i_total = (c.g_i_total * db_to_linear(s)).max(1.0)),
        (u.n_add_i, |c, s| c.n_add_i = (c.n_add_i + s).max(0.0)),
    ];
    let mut var = 0.0;
    for (sigma, apply) in shifts {
        let mut worst: f64 = 0.0;
        for sign in [-1.0, 1.0] {
            let mut chain = spec.chain.clone();
            apply(&mut chain, sign * sigma);
            let db = analytic(kind, m, spec.n_s, &chain, spec.eta)?.snr_db;
            if db.is_finite() && nominal_db.is_finite() {
                worst = worst.max((db - nominal_db).abs());
            }
        }
        var += worst * worst;
    }
    Ok(Some(var.sqrt()))
}

fn channel_scales(cfg: &SweepConfig, chain: &ChainParams) -> [ChannelScale; 2] {
    [
        ChannelScale {
            omega: cfg.band.omega_s,
            gain: chain.total_gain_s(),
        },
        ChannelScale {
            omega: cfg.band.omega_i,
            gain: chain.g_i_total,
        },
    ]
}

fn sample_hypotheses(
    cfg: &SweepConfig,
    spec: &PointSpec,
    m: &SecondMoments,
    count: usize,
    seeds: [u64; 2],
) -> Result<(BlockedSums, BlockedSums)> {
    let absent = detect_pair(m, &spec.chain, &TargetScenario::absent())?.moments;
    let present = detect_pair(m, &spec.chain, &TargetScenario::present(spec.eta)?)?.moments;
    let vacuum = spec.chain.record_vacuum();
    let scales = channel_scales(cfg, &spec.chain);
    let band = cfg.band;
    let round_trip = move |recs: Vec<[Complex64; 2]>| if_round_trip(recs, &band, scales);
    let map: Option<&RecordMap<'_>> =
        if cfg.sweep.via_if { Some(&round_trip) } else { None };
    let h0 = sample_block_sums_mapped(&absent, count, seeds[0], vacuum, map)?;
    let h1 = sample_block_sums_mapped(&present, count, seeds[1], vacuum, map)?;
    Ok((h0, h1))
}

fn monte_carlo(
    kind: ReceiverKind,
    h0: &BlockedSums,
    h1: &BlockedSums,
    chain: &ChainParams,
    homodyne_phase: f64,
) -> Result<SnrReport> {
    match kind {
        ReceiverKind::PcRaw => pc_raw_snr_sums(h0, h1),
        ReceiverKind::PcCalibrated => pc_calibrated_snr_sums(h0, h1, chain, chain.record_vacuum()),
        ReceiverKind::Homodyne => homodyne_snr_sums(h0, h1, homodyne_phase),
        ReceiverKind::Heterodyne => heterodyne_snr_sums(h0, h1),
        ReceiverKind::Passive => Err(Error::Usage("the passive receiver has no record-level estimator".into())),
    }
}

struct Aggregate {
    snr: f64,
    stderr: f64,
    spread_db: f64,
}

fn aggregate(reports: &[SnrReport]) -> Aggregate {
    let r = reports.len() as f64;
    let snr = neumaier_sum(reports.iter().map(|x| x.snr)) / r;
    let stderr = neumaier_sum(reports.iter().map(|x| x.stderr * x.stderr)).sqrt() / r;
    let spread = if reports.len() > 1 {
        (neumaier_sum(reports.iter().map(|x| (x.snr - snr).powi(2))) / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    Aggregate {
        snr,
        stderr,
        spread_db: LOG10_SCALE * spread / snr,
    }
}

/// Seed of one `(point, source, repetition, hypothesis)` batch. The point
/// enters through its value, so a point gets the same records whether it
/// runs alone or inside any grid.
pub fn batch_seed(master: u64, value: f64, source: SourceKind, rep: usize, hypothesis: u64) -> u64 {
    derive_seed(master, &[value.to_bits(), source.code(), rep as u64, hypothesis])
}

fn selected(cfg: &SweepConfig, kind: SourceKind) -> Vec<ReceiverKind> {
    kind.receivers()
        .iter()
        .copied()
        .filter(|r| cfg.sweep.receivers.contains(r))
        .collect()
}

/// All rows of one grid point.
pub fn run_point(cfg: &SweepConfig, value: f64) -> Result<Vec<SweepRow>> {
    run_point_inner(cfg, value).map_err(|e| e.at(format!("{} = {value}", cfg.sweep.variable.as_str())))
}

fn run_point_inner(cfg: &SweepConfig, value: f64) -> Result<Vec<SweepRow>> {
    let spec = resolve_point(cfg, value)?;
    let sw = &cfg.sweep;
    let row = |source: &str, kind: ReceiverKind, agg: &Aggregate, exact: &SnrReport, band, delta, m| -> Result<SweepRow> {
        Ok(SweepRow {
            variable: sw.variable.as_str().to_string(),
            value,
            n_s: spec.n_s,
            eta: spec.eta,
            source: source.to_string(),
            receiver: kind.as_str().to_string(),
            snr: agg.snr,
            stderr: agg.stderr,
            snr_db: linear_to_db(agg.snr),
            stderr_db: LOG10_SCALE * agg.stderr / agg.snr,
            spread_db: agg.spread_db,
            analytic_snr: exact.snr,
            analytic_db: exact.snr_db,
            analytic_band_db: band,
            delta,
            error_probability: error_probability(agg.snr.max(0.0), sw.decision_modes)?,
            m,
            status: "ok".to_string(),
        })
    };
    let mut rows = Vec::new();
    for &kind in &cfg.source.kinds {
        let receivers = selected(cfg, kind);
        if receivers.is_empty() {
            continue;
        }
        let moments = source_moments(cfg, kind, spec.n_s)?;
        let delta = (kind != SourceKind::Coherent).then(|| duan_delta(&moments));
        let count = match kind {
            SourceKind::Coherent => sw.coherent_records,
            _ => sw.records,
        };
        let mut per_receiver: Vec<Vec<SnrReport>> = vec![Vec::new(); receivers.len()];
        if sw.monte_carlo {
            let present = detect_pair(&moments, &spec.chain, &TargetScenario::present(spec.eta)?)?.moments;
            let absent = detect_pair(&moments, &spec.chain, &TargetScenario::absent())?.moments;
            let shift = present.mean_s - absent.mean_s;
            let phase = if shift.norm() > 0.0 { shift.arg() } else { 0.0 };
            for rep in 0..sw.repetitions {
                let seeds = [
                    batch_seed(sw.seed, value, kind, rep, 0),
                    batch_seed(sw.seed, value, kind, rep, 1),
                ];
                let (h0, h1) = sample_hypotheses(cfg, &spec, &moments, count, seeds)?;
                for (slot, &r) in per_receiver.iter_mut().zip(&receivers) {
                    slot.push(monte_carlo(r, &h0, &h1, &spec.chain, phase)?);
                }
            }
        }
        for (reports, &r) in per_receiver.iter().zip(&receivers) {
            let exact = analytic(r, &moments, spec.n_s, &spec.chain, spec.eta)?;
            let band = analytic_band(r, &moments, &spec, exact.snr_db)?;
            let (agg, m) = if sw.monte_carlo {
                (aggregate(reports), count)
            } else {
                (
                    Aggregate {
                        snr: exact.snr,
                        stderr: 0.0,
                        spread_db: 0.0,
                    },
                    0,
                )
            };
            rows.push(row(kind.as_str(), r, &agg, &exact, band, delta, m)?);
        }
    }
    if sw.receivers.contains(&ReceiverKind::Passive) {
        let exact = passive_report(&spec.chain, spec.eta)?;
        let agg = Aggregate {
            snr: exact.snr,
            stderr: 0.0,
            spread_db: 0.0,
        };
        rows.push(row("none", ReceiverKind::Passive, &agg, &exact, None, None, 0)?);
    }
    Ok(rows)
}

/// Runs every grid point, in parallel on `cfg.sweep.workers` threads.
/// Output is identical for any worker count. After the first failing point
/// the rows of all earlier points are kept and the failure is recorded.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.sweep.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start {:?} workers: {e}", cfg.sweep.workers)))?;
    let outcomes: Vec<Result<Vec<SweepRow>>> =
        pool.install(|| cfg.sweep.grid.par_iter().map(|&v| run_point(cfg, v)).collect());
    let mut rows = Vec::new();
    let mut failure = None;
    for (outcome, &value) in outcomes.into_iter().zip(&cfg.sweep.grid) {
        match outcome {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::error!("{e}");
                failure = Some(PointFailure {
                    value,
                    message: e.to_string(),
                    config_error: e.is_config(),
                });
                break;
            }
        }
    }
    Ok(SweepResult {
        variable: cfg.sweep.variable,
        rows,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::purity::PurityModel;

    fn config(grid: &[f64], records: usize) -> SweepConfig {
        let text = format!(
            r#"
[source]
kinds = ["tmsv", "classical", "coherent"]

[sweep]
variable = "n_s"
grid = {grid:?}
records = {records}
coherent_records = {records}
repetitions = 2
seed = 11
"#
        );
        SweepConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn header_matches_row_fields() {
        let cfg = config(&[0.5], 2000);
        let res = run_sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, CSV_HEADER.join(","));
        assert_eq!(res.rows.len(), 7);
    }

    #[test]
    fn single_point_sweep_equals_run_point() {
        let cfg = config(&[0.3], 4000);
        let rows = run_point(&cfg, 0.3).unwrap();
        assert_eq!(run_sweep(&cfg).unwrap().rows, rows);
        let wider = config(&[0.1, 0.3, 1.0], 4000);
        let swept = run_sweep(&wider).unwrap();
        let at: Vec<_> = swept.rows.iter().filter(|r| r.value == 0.3).cloned().collect();
        assert_eq!(at, rows);
    }

    #[test]
    fn zero_transmissivity_gives_no_signal() {
        let mut cfg = config(&[0.5], 20_000);
        cfg.sweep.eta = 0.0;
        for r in run_point(&cfg, 0.5).unwrap() {
            assert!(r.analytic_snr < 1e-12, "{r:?}");
            assert!(r.snr < 4.0 * r.stderr + 1e-4, "{r:?}");
        }
    }

    #[test]
    fn failure_is_marked_with_partial_rows() {
        let mut cfg = config(&[0.5, 1.0, 2.0], 2000);
        cfg.source.purity = PurityModel::Table {
            points: vec![[0.0, 1.0], [1.0, 0.9]],
        };
        let res = run_sweep(&cfg).unwrap();
        let f = res.failure.clone().unwrap();
        assert_eq!(f.value, 2.0);
        assert!(f.message.contains("n_s = 2"), "{}", f.message);
        assert!(res.rows.iter().all(|r| r.value < 2.0));
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().last().unwrap().contains("failed"));
    }

    #[test]
    fn closed_form_only_mode() {
        let mut cfg = config(&[0.5], 2000);
        cfg.sweep.monte_carlo = false;
        for r in run_point(&cfg, 0.5).unwrap() {
            assert_eq!(r.snr, r.analytic_snr);
            assert_eq!(r.m, 0);
        }
    }
}
