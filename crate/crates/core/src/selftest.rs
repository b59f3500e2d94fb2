//! Fast invariant suite behind `qi selftest`, and the Monte Carlo oracle
//! grid it shares with the acceptance tests.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration::{fit_gain_noise, synthetic_points};
use crate::chain::{detect_pair, passive_snr, ChainParams, TargetScenario};
use crate::constants::{
    db_to_linear, duan_delta, linear_to_db, moments_classical, moments_coherent, moments_from_tmsv, BandParams,
    SecondMoments,
};
use crate::dsp::{demodulate_records, estimate_moments, sample_block_sums, sample_records, synthesize_if, BlockedSums, ChannelScale, RecordBatch, Units, VacuumUnits};
use crate::error::{Error, Result};
use crate::receivers::{
    error_probability, heterodyne_snr_analytic, heterodyne_snr_sums, homodyne_snr_analytic, homodyne_snr_sums,
    pc_calibrated_snr_sums, pc_raw_snr_sums, pc_snr_analytic, ReceiverKind,
};
use crate::stats::derive_seed;

/// Deliberate corruption of one formula, to confirm the matching check
/// notices it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Analytic phase-conjugate SNR inflated tenfold.
    PcAnalytic,
    /// Duan parameter with the correlation sign flipped.
    Duan,
    /// Demodulated amplitudes scaled by `1 + 10⁻⁶`.
    Demod,
    /// One calibration point raised by 1 %.
    Calibration,
    /// Error probability evaluated at `1.01·snr·M`.
    Erfc,
}

impl Fault {
    pub const ALL: [Fault; 5] = [Fault::PcAnalytic, Fault::Duan, Fault::Demod, Fault::Calibration, Fault::Erfc];

    pub fn as_str(self) -> &'static str {
        match self {
            Fault::PcAnalytic => "pc-analytic",
            Fault::Duan => "duan",
            Fault::Demod => "demod",
            Fault::Calibration => "calibration",
            Fault::Erfc => "erfc",
        }
    }

    /// Name of the check expected to fail under this fault.
    pub fn target_check(self) -> &'static str {
        match self {
            Fault::PcAnalytic => "oracle_grid",
            Fault::Duan => "duan_criterion",
            Fault::Demod => "if_round_trip",
            Fault::Calibration => "calibration_round_trip",
            Fault::Erfc => "error_probability",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fault::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Fault::ALL.iter().map(|f| f.as_str()).collect();
            Error::Usage(format!("unknown fault `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// One receiver at one oracle grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OraclePoint {
    pub source: &'static str,
    pub n_s: f64,
    pub eta: f64,
    pub purity: Option<f64>,
    pub receiver: ReceiverKind,
    pub mc: f64,
    pub stderr: f64,
    pub analytic: f64,
}

impl OraclePoint {
    /// `|mc − analytic|` in units of the Monte Carlo standard error.
    pub fn z(&self) -> f64 {
        (self.mc - self.analytic).abs() / self.stderr
    }
}

impl fmt::Display for OraclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let purity = self.purity.map(|p| format!(" purity={p}")).unwrap_or_default();
        write!(
            f,
            "{}/{} N_S={} eta={}{}: mc={:.3} dB analytic={:.3} dB z={:.2}",
            self.source,
            self.receiver,
            self.n_s,
            self.eta,
            purity,
            linear_to_db(self.mc),
            linear_to_db(self.analytic),
            self.z()
        )
    }
}

pub const ORACLE_N_S: [f64; 3] = [0.1, 0.5, 2.0];
pub const ORACLE_ETA: [f64; 3] = [1.0, 0.1, 0.01];
pub const ORACLE_PURITY: [f64; 3] = [1.0, 0.9, 0.7];

fn sample_pair(m: &SecondMoments, chain: &ChainParams, eta: f64, count: usize, seed: u64) -> Result<(BlockedSums, BlockedSums)> {
    let absent = detect_pair(m, chain, &TargetScenario::absent())?.moments;
    let present = detect_pair(m, chain, &TargetScenario::present(eta)?)?.moments;
    let vac = chain.record_vacuum();
    Ok((
        sample_block_sums(&absent, count, derive_seed(seed, &[0]), vac)?,
        sample_block_sums(&present, count, derive_seed(seed, &[1]), vac)?,
    ))
}

/// Monte Carlo against closed form for the phase-conjugate receivers on
/// the `N_S × η × purity` grid and for homodyne and heterodyne on the
/// `N_S × η` grid, with the calibrated chain and `count` records per
/// hypothesis.
pub fn oracle_grid(count: usize, seed: u64) -> Result<Vec<OraclePoint>> {
    let chain = ChainParams::reference();
    let mut out = Vec::new();
    for (i, &n_s) in ORACLE_N_S.iter().enumerate() {
        for (j, &eta) in ORACLE_ETA.iter().enumerate() {
            for (k, &purity) in ORACLE_PURITY.iter().enumerate() {
                let m = moments_from_tmsv(n_s, purity)?;
                let (h0, h1) = sample_pair(&m, &chain, eta, count, derive_seed(seed, &[1, i as u64, j as u64, k as u64]))?;
                for (kind, mc) in [
                    (ReceiverKind::PcRaw, pc_raw_snr_sums(&h0, &h1)?),
                    (ReceiverKind::PcCalibrated, pc_calibrated_snr_sums(&h0, &h1, &chain, chain.record_vacuum())?),
                ] {
                    let analytic = pc_snr_analytic(&m, &chain, eta, kind == ReceiverKind::PcCalibrated)?;
                    out.push(OraclePoint {
                        source: "tmsv",
                        n_s,
                        eta,
                        purity: Some(purity),
                        receiver: kind,
                        mc: mc.snr,
                        stderr: mc.stderr,
                        analytic: analytic.snr,
                    });
                }
            }
            let m = moments_coherent(n_s)?;
            let (h0, h1) = sample_pair(&m, &chain, eta, count, derive_seed(seed, &[3, i as u64, j as u64]))?;
            for (mc, analytic) in [
                (homodyne_snr_sums(&h0, &h1, 0.0)?, homodyne_snr_analytic(n_s, &chain, eta)?),
                (heterodyne_snr_sums(&h0, &h1)?, heterodyne_snr_analytic(n_s, &chain, eta)?),
            ] {
                out.push(OraclePoint {
                    source: "coherent",
                    n_s,
                    eta,
                    purity: None,
                    receiver: mc.receiver,
                    mc: mc.snr,
                    stderr: mc.stderr,
                    analytic: analytic.snr,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn physicality() -> Result<(bool, String)> {
    let chain = ChainParams::reference();
    let mut tested = 0;
    for &n_s in &[0.0, 0.01, 0.1, 1.0, 10.0] {
        let mut sources = vec![moments_classical(n_s, n_s)?, moments_coherent(n_s)?];
        for &p in &ORACLE_PURITY {
            sources.push(moments_from_tmsv(n_s, p)?);
        }
        for m in sources {
            for t in [TargetScenario::absent(), TargetScenario::present(1.0)?, TargetScenario::present(0.01)?] {
                let d = detect_pair(&m, &chain, &t)?.moments;
                if !m.is_physical() || !d.is_physical() {
                    return Ok((false, format!("unphysical state from {m:?}")));
                }
                tested += 1;
            }
        }
    }
    Ok((true, format!("{tested} source and detected states physical")))
}

fn duan_criterion(fault: Option<Fault>) -> Result<(bool, String)> {
    let delta = |m: &SecondMoments| {
        if fault == Some(Fault::Duan) {
            duan_delta(m) + 4.0 * m.c.re
        } else {
            duan_delta(m)
        }
    };
    for &n_s in &[0.01, 0.1, 0.5, 1.0, 4.5, 10.0] {
        let q = delta(&moments_from_tmsv(n_s, 1.0)?);
        if !(q < 1.0) {
            return Ok((false, format!("pure TMSV at N_S={n_s} has Δ={q}")));
        }
        let c = delta(&moments_classical(n_s, n_s)?);
        if c < 1.0 - 1e-9 {
            return Ok((false, format!("classical pair at N_S={n_s} has Δ={c}")));
        }
    }
    Ok((true, "pure TMSV Δ < 1, classical Δ ≥ 1".into()))
}

fn if_round_trip_check(seed: u64, fault: Option<Fault>) -> Result<(bool, String)> {
    let band = BandParams::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[7]));
    let amps: Vec<[Complex64; 2]> = (0..2000)
        .map(|_| {
            let mut c = || Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            [c(), c()]
        })
        .collect();
    let batch = RecordBatch {
        amps,
        units: Units::SourceReferred,
        hypothesis: None,
        seed: None,
        vacuum: VacuumUnits::default(),
    };
    let scales = [
        ChannelScale {
            omega: band.omega_s,
            gain: db_to_linear(94.0),
        },
        ChannelScale {
            omega: band.omega_i,
            gain: db_to_linear(94.25),
        },
    ];
    let mut back = demodulate_records(&synthesize_if(&batch, &band, scales)?, scales)?;
    if fault == Some(Fault::Demod) {
        back = back.scaled(1.0 + 1e-6);
    }
    let worst = batch
        .amps
        .iter()
        .zip(&back.amps)
        .flat_map(|(a, b)| (0..2).map(move |c| (a[c] - b[c]).norm() / a[c].norm().max(1e-300)))
        .fold(0.0, f64::max);
    Ok((worst < 1e-9, format!("max relative error {worst:.2e} over 2000 records")))
}

fn calibration_round_trip(fault: Option<Fault>) -> Result<(bool, String)> {
    let band = BandParams::reference();
    let (g, n_add) = (db_to_linear(94.25), 14.91);
    let temps = [0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
    let mut points = synthetic_points(&temps, g, n_add, &band, band.omega_i)?;
    if fault == Some(Fault::Calibration) {
        points[3].noise_density *= 1.01;
    }
    let fit = fit_gain_noise(&points, &band, band.omega_i)?;
    let eg = (fit.gain.value / g - 1.0).abs();
    let en = (fit.n_add.value / n_add - 1.0).abs();
    Ok((
        eg < 1e-9 && en < 1e-9,
        format!("G={:.4} dB n_add={:.4}; relative errors {eg:.1e}, {en:.1e}", fit.gain_db, fit.n_add.value),
    ))
}

fn passive() -> Result<(bool, String)> {
    let db = linear_to_db(passive_snr(&ChainParams::reference(), 1.0)?);
    Ok(((db - 31.4).abs() <= 1.5, format!("{db:.2} dB")))
}

fn error_probability_check(fault: Option<Fault>) -> Result<(bool, String)> {
    let factor = if fault == Some(Fault::Erfc) { 1.01 } else { 1.0 };
    let p = |snr: f64, m: f64| error_probability(snr * factor, m);
    let one = p(1.0, 1.0)?;
    let zero = p(0.0, 1.0)?;
    let mut decreasing = true;
    let mut prev = p(0.01, 1.0)?;
    for m in 2..200 {
        let next = p(0.01, m as f64)?;
        decreasing &= next < prev;
        prev = next;
    }
    Ok((
        (one - 0.0786496).abs() <= 1e-6 && zero == 0.5 && decreasing,
        format!("P(1,1)={one:.7} P(0,1)={zero} decreasing={decreasing}"),
    ))
}

fn moment_estimator(seed: u64) -> Result<(bool, String)> {
    let m = moments_from_tmsv(0.5, 0.9)?;
    let e = estimate_moments(&sample_records(&m, 20_000, derive_seed(seed, &[9]))?)?;
    let z = [
        (e.moments.n_s - m.n_s).abs() / e.se_n_s,
        (e.moments.n_i - m.n_i).abs() / e.se_n_i,
        ((e.moments.c - m.c).re / e.se_c.re).abs(),
        ((e.moments.c - m.c).im / e.se_c.im).abs(),
    ];
    let worst = z.iter().copied().fold(0.0, f64::max);
    Ok((worst < 5.0, format!("worst deviation {worst:.2} s.e. at M=20000")))
}

fn oracle(seed: u64, fault: Option<Fault>) -> Result<(bool, String)> {
    let mut grid = oracle_grid(10_000, derive_seed(seed, &[11]))?;
    if fault == Some(Fault::PcAnalytic) {
        for p in grid.iter_mut().filter(|p| p.source == "tmsv") {
            p.analytic *= 10.0;
        }
    }
    let bad: Vec<_> = grid.iter().filter(|p| !(p.z() <= 3.0)).collect();
    let worst = grid.iter().map(|p| p.z()).fold(0.0, f64::max);
    let detail = match bad.first() {
        None => format!("{} receiver points within 3 s.e. at M=10000 (worst {worst:.2})", grid.len()),
        Some(p) => format!("{} of {} outside 3 s.e., first: {p}", bad.len(), grid.len()),
    };
    Ok((bad.is_empty(), detail))
}

/// Runs every check. The report depends only on `seed` and `fault`.
pub fn run_selftest(seed: u64, fault: Option<Fault>) -> SelftestReport {
    let checks = vec![
        check("physicality", physicality()),
        check("duan_criterion", duan_criterion(fault)),
        check("if_round_trip", if_round_trip_check(seed, fault)),
        check("calibration_round_trip", calibration_round_trip(fault)),
        check("passive_snr", passive()),
        check("error_probability", error_probability_check(fault)),
        check("moment_estimator", moment_estimator(seed)),
        check("oracle_grid", oracle(seed, fault)),
    ];
    SelftestReport { seed, fault, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes_and_is_repeatable() {
        let a = run_selftest(1, None);
        assert!(a.all_passed(), "{a}");
        assert_eq!(a, run_selftest(1, None));
    }

    #[test]
    fn each_fault_trips_its_check() {
        for fault in Fault::ALL {
            let r = run_selftest(1, Some(fault));
            let target = r.check(fault.target_check()).unwrap();
            assert!(!target.passed, "{fault}: {r}");
            let others = r.checks.iter().filter(|c| c.name != fault.target_check());
            assert!(others.into_iter().all(|c| c.passed), "{fault}: {r}");
        }
    }

    #[test]
    fn fault_names_parse() {
        for f in Fault::ALL {
            assert_eq!(f.as_str().parse::<Fault>().unwrap(), f);
        }
        assert!("nope".parse::<Fault>().is_err());
    }
}
