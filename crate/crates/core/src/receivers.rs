//! Detection strategies and their signal-to-noise ratios.
//!
//! Every receiver reduces `M` records under each hypothesis to a scalar
//! decision variable with conditional means `μ₀, μ₁` and variances
//! `σ₀², σ₁²`, and scores it as
//!
//! ```text
//! SNR = (μ₁ − μ₀)² / (2·(σ₁ + σ₀)²)
//! ```
//!
//! The phase-conjugate receiver decides on `N = N₊ − N₋`. Its closed form
//! uses operator moments: with `S` the detected signal occupation, `I` the
//! idler occupation and `x = <a_S a_I>` real,
//!
//! ```text
//! <N₊> ± <N₋> = S + 1 + I,  2x
//! ΔN² = 2(S + 1)·I + 2x² + S + 1 + I
//! ```
//!
//! On records the same receiver is `N = 2·Re(a_S·a_I)` per shot; its
//! variance `2·A_S·A_I + 2x²` differs from the closed form by `A_S + A_I`,
//! where `A` are the record powers.

use std::f64::consts::LN_10;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::calibration::calibrate_idler_number;
use crate::chain::{detect_pair, passive_snr, ChainParams, TargetScenario};
use crate::constants::{align_correlation, linear_to_db, SecondMoments};
use crate::dsp::{moments_from_sums, BlockSums, BlockedSums, RecordBatch, VacuumUnits};
use crate::error::{Error, Result};
use crate::stats::jackknife_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    PcRaw,
    PcCalibrated,
    Homodyne,
    Heterodyne,
    Passive,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 5] = [
        ReceiverKind::PcRaw,
        ReceiverKind::PcCalibrated,
        ReceiverKind::Homodyne,
        ReceiverKind::Heterodyne,
        ReceiverKind::Passive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::PcRaw => "pc_raw",
            ReceiverKind::PcCalibrated => "pc_calibrated",
            ReceiverKind::Homodyne => "homodyne",
            ReceiverKind::Heterodyne => "heterodyne",
            ReceiverKind::Passive => "passive",
        }
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conditional moments of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionStats {
    pub mean0: f64,
    pub mean1: f64,
    pub var0: f64,
    pub var1: f64,
    /// Samples per hypothesis; 0 for closed-form statistics.
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrReport {
    pub snr: f64,
    pub snr_db: f64,
    /// Standard error of `snr`.
    pub stderr: f64,
    pub receiver: ReceiverKind,
    pub stats: Option<DecisionStats>,
}

impl SnrReport {
    /// Standard error in dB, to first order.
    pub fn stderr_db(&self) -> f64 {
        10.0 / LN_10 * self.stderr / self.snr
    }

    fn exact(snr: f64, receiver: ReceiverKind, stats: Option<DecisionStats>) -> Self {
        Self {
            snr,
            snr_db: linear_to_db(snr),
            stderr: 0.0,
            receiver,
            stats,
        }
    }
}

fn snr_value(s: &DecisionStats) -> Result<f64> {
    if !(s.var0 > 0.0 && s.var1 > 0.0) {
        return Err(Error::Degenerate(format!(
            "decision variance vanished (var0={}, var1={})",
            s.var0, s.var1
        )));
    }
    let d = s.mean1 - s.mean0;
    Ok(d * d / (2.0 * (s.var1.sqrt() + s.var0.sqrt()).powi(2)))
}

/// SNR of given conditional statistics.
///
/// The standard error assumes a Gaussian decision variable sampled `m`
/// times per hypothesis, and is zero when `m == 0`.
pub fn snr_from_stats(s: &DecisionStats, receiver: ReceiverKind) -> Result<SnrReport> {
    let snr = snr_value(s)?;
    let stderr = if s.m == 0 {
        0.0
    } else {
        let m = s.m as f64;
        let sd_sum = s.var1.sqrt() + s.var0.sqrt();
        let d = s.mean1 - s.mean0;
        let d_mean = d / (sd_sum * sd_sum);
        let d_sd = 2.0 * snr / sd_sum;
        let v = s.var0 + s.var1;
        (d_mean * d_mean * v / m + d_sd * d_sd * v / (2.0 * m)).sqrt()
    };
    Ok(SnrReport {
        stderr,
        ..SnrReport::exact(snr, receiver, Some(*s))
    })
}

/// Per-shot decision values `N_k = 2·Re(a_S,k · a_I,k)` of the
/// phase-conjugate receiver, taking the signal channel of `sig` and the
/// idler channel of `idl`.
pub fn pc_decision_records(sig: &RecordBatch, idl: &RecordBatch) -> Result<Vec<f64>> {
    if sig.len() != idl.len() {
        return Err(Error::Usage(format!(
            "signal and idler batches differ in length ({} vs {})",
            sig.len(),
            idl.len()
        )));
    }
    if sig.hypothesis != idl.hypothesis {
        return Err(Error::Usage("signal and idler batches carry different hypotheses".into()));
    }
    Ok(sig
        .amps
        .iter()
        .zip(&idl.amps)
        .map(|(s, i)| pc_shot(s[0], i[1]))
        .collect())
}

/// `|a₊|² − |a₋|²` with `a± = (ā_S ± a_I)/√2`.
#[inline]
pub fn pc_shot(a_s: Complex64, a_i: Complex64) -> f64 {
    let plus = (a_s.conj() + a_i) * std::f64::consts::FRAC_1_SQRT_2;
    let minus = (a_s.conj() - a_i) * std::f64::consts::FRAC_1_SQRT_2;
    plus.norm_sqr() - minus.norm_sqr()
}

/// Closed-form mean and variance of `N` for signal occupation `s`, idler
/// occupation `i` and real correlation `x`.
pub fn pc_closed_form(s: f64, i: f64, x: f64) -> (f64, f64) {
    (2.0 * x, 2.0 * (s + 1.0) * i + 2.0 * x * x + s + 1.0 + i)
}

/// Closed-form SNR of the phase-conjugate receiver for source `m` behind
/// chain `p` at transmissivity `eta`.
///
/// The correlation is first rotated real and positive. Raw: the idler
/// term is the measured record power `G_I·(n_i + n_add,I + 1)` and
/// `x = √(ηG_S G_I)·c`. Calibrated: the idler term is the calibrated
/// source-referred occupation, clamped at zero, and `x = √(ηG_S)·c`.
pub fn pc_snr_analytic(m: &SecondMoments, p: &ChainParams, eta: f64, calibrated: bool) -> Result<SnrReport> {
    m.check_physical()?;
    let m = align_correlation(m);
    let present = detect_pair(&m, p, &TargetScenario::present(eta)?)?.moments;
    let absent = detect_pair(&m, p, &TargetScenario::absent())?.moments;
    let vac = p.record_vacuum();
    let (idler, x1) = if calibrated {
        let n_i = calibrate_idler_number(present.n_i + vac.idler, p.g_i_total, p.n_add_i).value;
        (n_i.max(0.0), present.c.re / p.g_i_total.sqrt())
    } else {
        (present.n_i + vac.idler, present.c.re)
    };
    let (mean0, var0) = pc_closed_form(absent.n_s, idler, 0.0);
    let (mean1, var1) = pc_closed_form(present.n_s, idler, x1);
    let stats = DecisionStats {
        mean0,
        mean1,
        var0,
        var1,
        m: 0,
    };
    let kind = if calibrated {
        ReceiverKind::PcCalibrated
    } else {
        ReceiverKind::PcRaw
    };
    Ok(SnrReport::exact(snr_value(&stats)?, kind, Some(stats)))
}

/// Closed-form homodyne SNR for a coherent source of `n_s` photons:
/// `<X₁> = √(2ηG_S N_S)`, `ΔX² = S + 1/2`.
pub fn homodyne_snr_analytic(n_s: f64, p: &ChainParams, eta: f64) -> Result<SnrReport> {
    let (d, s0, s1) = coherent_detected(n_s, p, eta)?;
    let stats = DecisionStats {
        mean0: 0.0,
        mean1: d,
        var0: s0 + 0.5,
        var1: s1 + 0.5,
        m: 0,
    };
    Ok(SnrReport::exact(snr_value(&stats)?, ReceiverKind::Homodyne, Some(stats)))
}

/// Closed-form heterodyne SNR: same mean displacement, variance
/// `ΔX² + ΔP² = 2S + 1`.
pub fn heterodyne_snr_analytic(n_s: f64, p: &ChainParams, eta: f64) -> Result<SnrReport> {
    let (d, s0, s1) = coherent_detected(n_s, p, eta)?;
    let stats = DecisionStats {
        mean0: 0.0,
        mean1: d,
        var0: 2.0 * s0 + 1.0,
        var1: 2.0 * s1 + 1.0,
        m: 0,
    };
    Ok(SnrReport::exact(snr_value(&stats)?, ReceiverKind::Heterodyne, Some(stats)))
}

fn coherent_detected(n_s: f64, p: &ChainParams, eta: f64) -> Result<(f64, f64, f64)> {
    let m = crate::constants::moments_coherent(n_s)?;
    let present = detect_pair(&m, p, &TargetScenario::present(eta)?)?.moments;
    let absent = detect_pair(&m, p, &TargetScenario::absent())?.moments;
    let d = 2f64.sqrt() * (present.mean_s - absent.mean_s).norm();
    Ok((d, absent.n_s, present.n_s))
}

/// Passive amplifier-noise detection, reported like the other receivers.
pub fn passive_report(p: &ChainParams, eta: f64) -> Result<SnrReport> {
    Ok(SnrReport::exact(passive_snr(p, eta)?, ReceiverKind::Passive, None))
}

/// Evaluates `stats_of(h0, h1)` on the full sums and jackknifes it over the
/// blocks of each hypothesis independently.
fn jackknife_report(
    h0: &BlockedSums,
    h1: &BlockedSums,
    receiver: ReceiverKind,
    stats_of: impl Fn(&BlockSums, &BlockSums) -> Result<DecisionStats>,
) -> Result<SnrReport> {
    let mut stats = stats_of(&h0.total, &h1.total)?;
    stats.m = h1.records().min(h0.records());
    let snr = snr_value(&stats)?;
    let loo0 = (0..h0.blocks.len())
        .map(|k| stats_of(&h0.leave_out(k), &h1.total).and_then(|s| snr_value(&s)))
        .collect::<Result<Vec<_>>>()?;
    let loo1 = (0..h1.blocks.len())
        .map(|k| stats_of(&h0.total, &h1.leave_out(k)).and_then(|s| snr_value(&s)))
        .collect::<Result<Vec<_>>>()?;
    let mut var = 0.0;
    for loo in [&loo0, &loo1] {
        let se = jackknife_stderr(loo);
        if se.is_finite() {
            var += se * se;
        }
    }
    Ok(SnrReport {
        snr,
        snr_db: linear_to_db(snr),
        stderr: var.sqrt(),
        receiver,
        stats: Some(stats),
    })
}

fn pc_record_stats(sums: &BlockSums, rot: Complex64) -> (f64, f64) {
    let a = sums.averages();
    let mean = 2.0 * (rot * a.z).re;
    let second = 2.0 * (a.z_pow + (rot * rot * a.z_sq).re);
    (mean, second - mean * mean)
}

fn unit_phase(z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z.conj() / z.norm()
    }
}

/// Record-level phase-conjugate SNR. The idler rotation making `<a_S a_I>`
/// real and positive is estimated from the target-present records and
/// applied to both hypotheses.
pub fn pc_raw_snr_sums(h0: &BlockedSums, h1: &BlockedSums) -> Result<SnrReport> {
    jackknife_report(h0, h1, ReceiverKind::PcRaw, |s0, s1| {
        let rot = unit_phase(s1.averages().z);
        let (mean0, var0) = pc_record_stats(s0, rot);
        let (mean1, var1) = pc_record_stats(s1, rot);
        Ok(DecisionStats {
            mean0,
            mean1,
            var0,
            var1,
            m: 0,
        })
    })
}

/// Calibrated phase-conjugate SNR from records: the closed form evaluated
/// on estimated moments, with the idler occupation calibrated through the
/// chain's gain and added noise.
pub fn pc_calibrated_snr_sums(h0: &BlockedSums, h1: &BlockedSums, p: &ChainParams, vacuum: VacuumUnits) -> Result<SnrReport> {
    let root_g = p.g_i_total.sqrt();
    jackknife_report(h0, h1, ReceiverKind::PcCalibrated, |s0, s1| {
        let e0 = moments_from_sums(s0, vacuum)?;
        let e1 = moments_from_sums(s1, vacuum)?;
        let rot = unit_phase(e1.moments.c);
        let calib = |e: &crate::dsp::MomentEstimate| {
            calibrate_idler_number(e.moments.n_i + vacuum.idler, p.g_i_total, p.n_add_i)
                .value
                .max(0.0)
        };
        let x0 = (rot * e0.moments.c).re / root_g;
        let x1 = (rot * e1.moments.c).re / root_g;
        let (mean0, var0) = pc_closed_form(e0.moments.n_s, calib(&e0), x0);
        let (mean1, var1) = pc_closed_form(e1.moments.n_s, calib(&e1), x1);
        Ok(DecisionStats {
            mean0,
            mean1,
            var0,
            var1,
            m: 0,
        })
    })
}

/// Homodyne SNR from records, measuring `X = √2·Re(e^{−iφ}a_S)`.
pub fn homodyne_snr_sums(h0: &BlockedSums, h1: &BlockedSums, phase: f64) -> Result<SnrReport> {
    let rot = Complex64::from_polar(1.0, -phase);
    let quad = |s: &BlockSums| {
        let a = s.averages();
        let mean = 2f64.sqrt() * (rot * a.s).re;
        let second = a.pow_s + (rot * rot * a.sq_s).re;
        (mean, second - mean * mean)
    };
    jackknife_report(h0, h1, ReceiverKind::Homodyne, |s0, s1| {
        let (mean0, var0) = quad(s0);
        let (mean1, var1) = quad(s1);
        Ok(DecisionStats {
            mean0,
            mean1,
            var0,
            var1,
            m: 0,
        })
    })
}

/// Heterodyne SNR from records. The reported means are `0` and the length
/// of the displacement of `(<X>, <P>)`; variances are `ΔX² + ΔP²`.
pub fn heterodyne_snr_sums(h0: &BlockedSums, h1: &BlockedSums) -> Result<SnrReport> {
    jackknife_report(h0, h1, ReceiverKind::Heterodyne, |s0, s1| {
        let a0 = s0.averages();
        let a1 = s1.averages();
        let d = 2f64.sqrt() * (a1.s - a0.s).norm();
        Ok(DecisionStats {
            mean0: 0.0,
            mean1: d,
            var0: 2.0 * (a0.pow_s - a0.s.norm_sqr()),
            var1: 2.0 * (a1.pow_s - a1.s.norm_sqr()),
            m: 0,
        })
    })
}

fn check_pair(b0: &RecordBatch, b1: &RecordBatch) -> Result<()> {
    if b0.len() < 2 || b1.len() < 2 {
        return Err(Error::InsufficientData("each hypothesis needs at least 2 records".into()));
    }
    b0.check_finite()?;
    b1.check_finite()
}

pub fn pc_raw_snr(b0: &RecordBatch, b1: &RecordBatch) -> Result<SnrReport> {
    check_pair(b0, b1)?;
    pc_raw_snr_sums(&BlockedSums::from_batch(b0), &BlockedSums::from_batch(b1))
}

pub fn pc_calibrated_snr(b0: &RecordBatch, b1: &RecordBatch, p: &ChainParams) -> Result<SnrReport> {
    check_pair(b0, b1)?;
    if b0.vacuum != b1.vacuum {
        return Err(Error::Usage("hypotheses carry different vacuum units".into()));
    }
    pc_calibrated_snr_sums(&BlockedSums::from_batch(b0), &BlockedSums::from_batch(b1), p, b1.vacuum)
}

pub fn homodyne_snr(b0: &RecordBatch, b1: &RecordBatch, phase: f64) -> Result<SnrReport> {
    check_pair(b0, b1)?;
    homodyne_snr_sums(&BlockedSums::from_batch(b0), &BlockedSums::from_batch(b1), phase)
}

pub fn heterodyne_snr(b0: &RecordBatch, b1: &RecordBatch) -> Result<SnrReport> {
    check_pair(b0, b1)?;
    heterodyne_snr_sums(&BlockedSums::from_batch(b0), &BlockedSums::from_batch(b1))
}

/// Error probability `½·erfc(√(snr·M))` of `M` independent modes.
pub fn error_probability(snr: f64, modes: f64) -> Result<f64> {
    if !(snr >= 0.0 && modes >= 1.0) {
        return Err(Error::domain(format!(
            "error probability needs snr ≥ 0 and M ≥ 1, got snr={snr}, M={modes}"
        )));
    }
    Ok(0.5 * erfc((snr * modes).sqrt()))
}
