//! Amplifier, loss and down-conversion stages between the source and the
//! digitizer.
//!
//! The signal is amplified (`g_s_amp`, effective noise quanta `n_amp_s`),
//! sent through a round trip of transmissivity `η` that mixes in
//! environmental noise `n_env`, then amplified again by the receiver
//! (`g_s_det`, `n_det_s`). The idler sees a single phase-insensitive chain of
//! gain `g_i_total` whose noise is referred to the source plane as
//! `n_add_i`.
//!
//! Noise quanta of the signal amplifiers follow the `<b†b> + 1` convention:
//! a quantum-limited amplifier has `n = 1`. With that convention the detected
//! occupations are
//!
//! ```text
//! n₀ = G_det·n_env + (G_det − 1)·n_det
//! n₁ = η·G_det·(G_amp − 1)·n_amp + (1 − η)·G_det·n_env + (G_det − 1)·n_det
//! ```
//!
//! for target absent and present. The `η ≪ 1` simplification
//! `n₁ ≈ η·G_det·(G_amp − 1)·n_amp + n₀` is never used.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{db_to_linear, SecondMoments};
use crate::dsp::VacuumUnits;
use crate::error::{Error, Result};

/// Gains and noise of the signal and idler measurement chains.
///
/// Gains are linear power gains. In config files they may be written as
/// `"77.16 dB"` or `"5.2e7 lin"`; a bare number is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    /// Signal gain before the target.
    #[serde(with = "gain_repr")]
    pub g_s_amp: f64,
    /// Signal gain after the target (receiver).
    #[serde(with = "gain_repr")]
    pub g_s_det: f64,
    /// Total idler gain.
    #[serde(with = "gain_repr")]
    pub g_i_total: f64,
    /// Effective noise quanta of the pre-target amplifier.
    pub n_amp_s: f64,
    /// Effective noise quanta of the receiver amplifier.
    pub n_det_s: f64,
    /// Idler added noise referred to the source output.
    pub n_add_i: f64,
    /// Thermal occupation of the environment mode.
    pub n_env: f64,
    /// One-sigma uncertainties, used only for analytic error bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<ChainUncertainty>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainUncertainty {
    /// Uncertainty of the total signal gain, dB.
    pub g_s_db: f64,
    /// Uncertainty of the total idler gain, dB.
    pub g_i_db: f64,
    pub n_add_i: f64,
}

impl ChainParams {
    /// Calibrated setup: G_S^amp = 77.16 dB, G_S^det = 16.82 dB,
    /// G_I = 94.25 dB, n_add,I = 14.91, n_env = 672, n_det,S = 3×10⁵ and
    /// (G_S^amp − 1)·n_amp,S = 5×10⁸.
    ///
    /// Only the product `(G_S^amp − 1)·n_amp,S` is known, so `n_amp_s` is
    /// derived from it; the resulting `n_add_s()` is 9.62 against the
    /// calibrated 9.61(4).
    pub fn reference() -> Self {
        let g_s_amp = db_to_linear(77.16);
        Self {
            g_s_amp,
            g_s_det: db_to_linear(16.82),
            g_i_total: db_to_linear(94.25),
            n_amp_s: 5e8 / (g_s_amp - 1.0),
            n_det_s: 3e5,
            n_add_i: 14.91,
            n_env: 672.0,
            uncertainty: Some(ChainUncertainty {
                g_s_db: 0.01,
                g_i_db: 0.02,
                n_add_i: 0.01,
            }),
        }
    }

    /// Unit gains and no noise: both detection maps are identities at η = 1.
    pub fn identity() -> Self {
        Self {
            g_s_amp: 1.0,
            g_s_det: 1.0,
            g_i_total: 1.0,
            n_amp_s: 0.0,
            n_det_s: 0.0,
            n_add_i: 0.0,
            n_env: 0.0,
            uncertainty: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("g_s_amp", self.g_s_amp),
            ("g_s_det", self.g_s_det),
            ("g_i_total", self.g_i_total),
        ] {
            if !(g >= 1.0 && g.is_finite()) {
                return Err(Error::config(format!("chain.{name} must be a finite gain ≥ 1, got {g}")));
            }
        }
        for (name, n) in [
            ("n_amp_s", self.n_amp_s),
            ("n_det_s", self.n_det_s),
            ("n_add_i", self.n_add_i),
            ("n_env", self.n_env),
        ] {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::config(format!("chain.{name} must be finite and ≥ 0, got {n}")));
            }
        }
        Ok(())
    }

    /// `G_S = G_S^amp · G_S^det`.
    pub fn total_gain_s(&self) -> f64 {
        self.g_s_amp * self.g_s_det
    }

    /// Signal added noise referred to the source output,
    /// `(G_amp − 1)/G_amp · n_amp + (G_det − 1)/(G_amp·G_det) · n_det`.
    pub fn n_add_s(&self) -> f64 {
        (self.g_s_amp - 1.0) / self.g_s_amp * self.n_amp_s
            + (self.g_s_det - 1.0) / self.total_gain_s() * self.n_det_s
    }

    /// True when some amplifier adds less noise than a phase-insensitive
    /// amplifier of that gain must. Detection still evaluates the formulas
    /// but the output may be unphysical.
    pub fn is_sub_quantum_limited(&self) -> bool {
        let tol = 1e-12;
        (self.g_s_amp > 1.0 && self.n_amp_s < 1.0 - tol)
            || (self.g_s_det > 1.0 && self.n_det_s < 1.0 - tol)
            || self.n_add_i < (1.0 - 1.0 / self.g_i_total) - tol
    }

    /// Vacuum units carried by heterodyne records of the detected modes.
    ///
    /// The idler unit is referred to the source plane, so detected idler
    /// records have power `G_I·(n_i + n_add,I + 1)`, the quantity inverted by
    /// [`crate::calibration::calibrate_idler_number`]. The signal unit sits at
    /// the digitizer and is negligible beside the receiver noise.
    pub fn record_vacuum(&self) -> VacuumUnits {
        VacuumUnits {
            signal: 1.0,
            idler: self.g_i_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Absent,
    Present,
}

impl Hypothesis {
    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::Absent => "absent",
            Hypothesis::Present => "present",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScenario {
    /// Round-trip signal transmissivity.
    pub eta: f64,
    pub hypothesis: Hypothesis,
}

impl TargetScenario {
    pub fn new(eta: f64, hypothesis: Hypothesis) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta, hypothesis })
    }

    pub fn present(eta: f64) -> Result<Self> {
        Self::new(eta, Hypothesis::Present)
    }

    pub fn absent() -> Self {
        Self {
            eta: 0.0,
            hypothesis: Hypothesis::Absent,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::domain(format!("transmissivity must lie in [0, 1], got {eta}")))
    }
}

/// Detected noise occupations without (`n0`) and with (`n1`) the target.
///
/// `n1 ≥ n0` whenever the amplified pre-target noise `(G_amp − 1)·n_amp`
/// exceeds `n_env`, which holds for any practical chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseTotals {
    pub n0: f64,
    pub n1: f64,
}

pub fn noise_totals(p: &ChainParams, eta: f64) -> Result<NoiseTotals> {
    check_eta(eta)?;
    let receiver = (p.g_s_det - 1.0) * p.n_det_s;
    let n0 = p.g_s_det * p.n_env + receiver;
    let n1 = eta * p.g_s_det * (p.g_s_amp - 1.0) * p.n_amp_s + (1.0 - eta) * p.g_s_det * p.n_env + receiver;
    Ok(NoiseTotals { n0, n1 })
}

/// SNR of detecting the amplified transmitter noise itself,
/// `|n₁ − n₀| / (n₀ + 1)`.
pub fn passive_snr(p: &ChainParams, eta: f64) -> Result<f64> {
    let NoiseTotals { n0, n1 } = noise_totals(p, eta)?;
    Ok((n1 - n0).abs() / (n0 + 1.0))
}

/// Output of a detection stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub moments: SecondMoments,
    /// Set when the chain violates the amplifier quantum limit.
    pub sub_quantum_limited: bool,
}

/// Maps the signal mode through the pre-target amplifier, the target round
/// trip and the receiver. The idler fields are untouched.
pub fn detect_signal(m: &SecondMoments, p: &ChainParams, t: &TargetScenario) -> Result<Detection> {
    p.validate()?;
    check_eta(t.eta)?;
    let totals = noise_totals(p, t.eta)?;
    let moments = match t.hypothesis {
        Hypothesis::Absent => SecondMoments {
            n_s: totals.n0,
            c: Complex64::new(0.0, 0.0),
            mean_s: Complex64::new(0.0, 0.0),
            ..*m
        },
        Hypothesis::Present => {
            let field_gain = (t.eta * p.total_gain_s()).sqrt();
            SecondMoments {
                n_s: t.eta * p.total_gain_s() * m.n_s + totals.n1,
                c: m.c * field_gain,
                mean_s: m.mean_s * field_gain,
                ..*m
            }
        }
    };
    Ok(Detection {
        moments,
        sub_quantum_limited: p.is_sub_quantum_limited(),
    })
}

/// Maps the idler through its amplification and down-conversion chain.
pub fn detect_idler(m: &SecondMoments, p: &ChainParams) -> Result<Detection> {
    p.validate()?;
    let g = p.g_i_total;
    let moments = SecondMoments {
        n_i: g * (m.n_i + p.n_add_i),
        c: m.c * g.sqrt(),
        mean_i: m.mean_i * g.sqrt(),
        ..*m
    };
    Ok(Detection {
        moments,
        sub_quantum_limited: p.is_sub_quantum_limited(),
    })
}

/// Both chains: the detected signal-idler state under `t`.
pub fn detect_pair(m: &SecondMoments, p: &ChainParams, t: &TargetScenario) -> Result<Detection> {
    let s = detect_signal(m, p, t)?;
    detect_idler(&s.moments, p)
}

mod gain_repr {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    use crate::constants::linear_to_db;

    pub fn serialize<S: Serializer>(g: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{} dB", linear_to_db(*g)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct GainVisitor;

        impl Visitor<'_> for GainVisitor {
            type Value = f64;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a linear gain or a string like \"77.16 dB\" / \"5.2e7 lin\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                super::parse_gain(v).map_err(E::custom)
            }
        }

        d.deserialize_any(GainVisitor)
    }
}

/// Parses `"<value> dB"`, `"<value> lin"` or a bare linear number.
pub fn parse_gain(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (num, is_db) = if let Some(v) = lower.strip_suffix("db") {
        (v.trim().to_string(), true)
    } else if let Some(v) = lower.strip_suffix("lin") {
        (v.trim().to_string(), false)
    } else {
        (lower.clone(), false)
    };
    let v: f64 = num
        .parse()
        .map_err(|_| format!("cannot parse gain {s:?}; expected e.g. \"77.16 dB\" or \"5.2e7 lin\""))?;
    Ok(if is_db { db_to_linear(v) } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{moments_from_tmsv, SecondMoments};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reference_chain_derived_totals() {
        let p = ChainParams::reference();
        p.validate().unwrap();
        assert!(rel(p.total_gain_s(), db_to_linear(93.98)) < 1e-12);
        let hand = (p.g_s_amp - 1.0) / p.g_s_amp * p.n_amp_s
            + (p.g_s_det - 1.0) / (p.g_s_amp * p.g_s_det) * p.n_det_s;
        assert!(rel(p.n_add_s(), hand) < 1e-12);
        assert!((p.n_add_s() - 9.61).abs() < 0.05, "{}", p.n_add_s());
        assert!(!p.is_sub_quantum_limited());
    }

    #[test]
    fn absent_vacuum_gives_n0() {
        let p = ChainParams::reference();
        let d = detect_signal(&SecondMoments::vacuum(), &p, &TargetScenario::absent()).unwrap();
        let oracle = p.g_s_det * 672.0 + (p.g_s_det - 1.0) * 3e5;
        assert!(rel(d.moments.n_s, oracle) < 1e-14);
        assert!(rel(d.moments.n_s, 1.42e7) < 0.01);
    }

    #[test]
    fn present_tmsv_scales_correlation() {
        let p = ChainParams::reference();
        let m = moments_from_tmsv(0.5, 1.0).unwrap();
        let d = detect_signal(&m, &p, &TargetScenario::present(1.0).unwrap()).unwrap();
        let expected = db_to_linear(93.98).sqrt() * 0.75f64.sqrt();
        assert!(rel(d.moments.c.re, expected) < 1e-12);
        assert_eq!(d.moments.n_i, m.n_i);
    }

    #[test]
    fn zero_transmissivity_equals_absent() {
        let p = ChainParams::reference();
        let m = moments_from_tmsv(2.0, 0.8).unwrap();
        let present = detect_signal(&m, &p, &TargetScenario::present(0.0).unwrap()).unwrap();
        let absent = detect_signal(&m, &p, &TargetScenario::absent()).unwrap();
        assert_eq!(present.moments.n_s, absent.moments.n_s);
        assert_eq!(present.moments.c, absent.moments.c);
        assert_eq!(present.moments.mean_s, absent.moments.mean_s);
    }

    #[test]
    fn idler_examples() {
        let p = ChainParams::reference();
        let d = detect_idler(&SecondMoments::vacuum(), &p).unwrap();
        assert!(rel(d.moments.n_i, db_to_linear(94.25) * 14.91) < 1e-12);

        let unit = ChainParams {
            g_i_total: 1.0,
            n_add_i: 0.0,
            ..ChainParams::reference()
        };
        let m = moments_from_tmsv(1.0, 0.9).unwrap();
        let d = detect_idler(&m, &unit).unwrap();
        assert_eq!(d.moments.n_i, m.n_i);
        assert_eq!(d.moments.c, m.c);

        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        let both = detect_pair(&m, &p, &TargetScenario::present(1.0).unwrap()).unwrap();
        let ratio = both.moments.c.re / (p.total_gain_s() * p.g_i_total).sqrt();
        assert!(rel(ratio, 2f64.sqrt()) < 1e-12);
    }

    #[test]
    fn noise_totals_examples() {
        let p = ChainParams::reference();
        let t1 = noise_totals(&p, 1.0).unwrap();
        let amp = p.g_s_det * (p.g_s_amp - 1.0) * p.n_amp_s;
        assert!(rel(amp, 48.08 * 5e8) < 1e-3);
        assert!(rel(t1.n1 - t1.n0, amp - p.g_s_det * p.n_env) < 1e-12);
        assert!(rel(t1.n1 - t1.n0, 2.4e10) < 0.01);

        let t0 = noise_totals(&p, 0.0).unwrap();
        assert_eq!(t0.n0, t0.n1);

        let th = noise_totals(&p, 0.5).unwrap();
        let expected = 0.5 * amp - 0.5 * p.g_s_det * p.n_env;
        assert!(rel(th.n1 - th.n0, expected) < 1e-9);
        assert!(noise_totals(&p, 1.5).is_err());
    }

    #[test]
    fn passive_snr_examples() {
        let p = ChainParams::reference();
        let db = crate::constants::linear_to_db(passive_snr(&p, 1.0).unwrap());
        assert!((db - 31.4).abs() <= 1.5, "{db}");
        assert_eq!(passive_snr(&p, 0.0).unwrap(), 0.0);

        let quiet = ChainParams {
            n_amp_s: 0.0,
            n_env: 0.0,
            ..ChainParams::reference()
        };
        assert_eq!(passive_snr(&quiet, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_chain_is_identity() {
        let p = ChainParams::identity();
        let m = moments_from_tmsv(0.7, 0.95).unwrap();
        let d = detect_pair(&m, &p, &TargetScenario::present(1.0).unwrap()).unwrap();
        assert!((d.moments.n_s - m.n_s).abs() < 1e-15);
        assert!((d.moments.n_i - m.n_i).abs() < 1e-15);
        assert!((d.moments.c - m.c).norm() < 1e-15);
        assert!(!p.is_sub_quantum_limited());
    }

    #[test]
    fn sub_quantum_limited_flag() {
        let p = ChainParams {
            n_amp_s: 0.5,
            ..ChainParams::reference()
        };
        let m = moments_from_tmsv(0.5, 1.0).unwrap();
        let d = detect_signal(&m, &p, &TargetScenario::present(1.0).unwrap()).unwrap();
        assert!(d.sub_quantum_limited);
        // The formula result is still returned.
        let n1 = noise_totals(&p, 1.0).unwrap().n1;
        assert!(rel(d.moments.n_s, p.total_gain_s() * 0.5 + n1) < 1e-12);

        let idler = ChainParams {
            n_add_i: 0.2,
            ..ChainParams::reference()
        };
        assert!(idler.is_sub_quantum_limited());
    }

    #[test]
    fn gain_strings() {
        assert!(rel(parse_gain("77.16 dB").unwrap(), db_to_linear(77.16)) < 1e-15);
        assert_eq!(parse_gain("5.2e7 lin").unwrap(), 5.2e7);
        assert_eq!(parse_gain("12").unwrap(), 12.0);
        assert!(parse_gain("twelve dB").is_err());

        let p = ChainParams::reference();
        let text = toml::to_string(&p).unwrap();
        assert!(text.contains("dB"));
        let back: ChainParams = toml::from_str(&text).unwrap();
        assert!(rel(back.g_s_amp, p.g_s_amp) < 1e-12);
        assert!(rel(back.g_i_total, p.g_i_total) < 1e-12);
        assert_eq!(back.n_env, p.n_env);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = ChainParams {
            g_s_det: 0.5,
            ..ChainParams::reference()
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let p = ChainParams {
            n_env: -1.0,
            ..ChainParams::reference()
        };
        assert!(p.validate().is_err());
    }
}
