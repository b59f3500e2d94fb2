//! Physical constants, measurement-band parameters and the second-moment
//! algebra of zero- or nonzero-mean two-mode Gaussian states.
//!
//! Every state in this crate is described by [`SecondMoments`]: the excess
//! occupations of the signal and idler modes, the phase-sensitive
//! cross-correlation `<a_S a_I>` and the coherent amplitudes. Single-mode
//! squeezing terms `<a_S a_S>` and `<a_I a_I>` are identically zero for every
//! source modelled here and are not represented.
//!
//! Quadratures use `x = (a + a†)/√2`, so the vacuum variance is `1/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 exact values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
}

pub const PHYS: PhysConstants = PhysConstants {
    hbar: 1.054_571_817e-34,
    k_b: 1.380_649e-23,
};

/// Relative tolerance of the physicality test on symplectic eigenvalues.
pub const PHYSICALITY_RTOL: f64 = 1e-9;

/// Converts a power ratio in dB to a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to dB. Zero maps to `-inf`.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Angular frequency for a carrier quoted in GHz.
pub fn omega_from_ghz(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz * 1e9
}

/// Bose-Einstein occupation of a mode at angular frequency `omega` and
/// temperature `t_kelvin`.
pub fn thermal_occupation(omega: f64, t_kelvin: f64) -> f64 {
    let x = PHYS.hbar * omega / (PHYS.k_b * t_kelvin);
    1.0 / x.exp_m1()
}

/// Carrier, bandwidth and digitizer parameters shared by both channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    /// Signal angular frequency, rad/s.
    pub omega_s: f64,
    /// Idler angular frequency, rad/s.
    pub omega_i: f64,
    /// Measurement bandwidth, Hz. Equals `sample_rate / record_len`.
    pub bandwidth: f64,
    /// Reference impedance, Ω.
    pub impedance: f64,
    /// Digitizer sample rate, Hz.
    pub sample_rate: f64,
    /// Intermediate frequency after down-conversion, Hz.
    pub if_freq: f64,
    /// Samples per record.
    pub record_len: usize,
}

impl BandParams {
    /// 10.09 GHz / 6.8 GHz carriers, 20 MHz IF sampled at 100 MS/s in
    /// 500-sample records (200 kHz bandwidth), 50 Ω.
    pub fn reference() -> Self {
        Self {
            omega_s: omega_from_ghz(10.09),
            omega_i: omega_from_ghz(6.8),
            bandwidth: 200e3,
            impedance: 50.0,
            sample_rate: 100e6,
            if_freq: 20e6,
            record_len: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_s", self.omega_s),
            ("omega_i", self.omega_i),
            ("bandwidth", self.bandwidth),
            ("impedance", self.impedance),
            ("sample_rate", self.sample_rate),
            ("if_freq", self.if_freq),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("band.{name} must be positive, got {v}")));
            }
        }
        if self.record_len == 0 {
            return Err(Error::config("band.record_len must be positive"));
        }
        if self.if_freq >= self.sample_rate / 2.0 {
            return Err(Error::config(format!(
                "band.if_freq {} Hz is not below Nyquist ({} Hz)",
                self.if_freq,
                self.sample_rate / 2.0
            )));
        }
        let expected = self.sample_rate / self.record_len as f64;
        if ((self.bandwidth - expected) / expected).abs() > 1e-9 {
            return Err(Error::config(format!(
                "band.bandwidth {} Hz differs from sample_rate/record_len = {} Hz",
                self.bandwidth, expected
            )));
        }
        Ok(())
    }

    /// FFT bin holding the IF component. Fails unless the IF sits exactly on
    /// a bin below Nyquist.
    pub fn if_bin(&self) -> Result<usize> {
        self.validate()?;
        let bin = self.if_freq / self.bandwidth;
        let rounded = bin.round();
        if (bin - rounded).abs() > 1e-6 {
            return Err(Error::config(format!(
                "IF {} Hz is not an integer multiple of the {} Hz bin spacing",
                self.if_freq, self.bandwidth
            )));
        }
        let bin = rounded as usize;
        if bin == 0 || 2 * bin >= self.record_len {
            return Err(Error::config(format!(
                "IF bin {bin} lies outside (0, {})",
                self.record_len / 2
            )));
        }
        Ok(bin)
    }

    /// `ħωBR`, the voltage-squared scale of one quantum in this band.
    pub fn quantum_scale(&self, omega: f64) -> f64 {
        PHYS.hbar * omega * self.bandwidth * self.impedance
    }
}

/// Second moments of a two-mode Gaussian state.
///
/// `n_s` and `n_i` are excess (thermal) occupations, so the total photon
/// number of a mode is `n + |mean|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    pub n_s: f64,
    pub n_i: f64,
    /// Phase-sensitive cross-correlation `<a_S a_I>`.
    pub c: Complex64,
    pub mean_s: Complex64,
    pub mean_i: Complex64,
}

impl SecondMoments {
    pub fn vacuum() -> Self {
        Self {
            n_s: 0.0,
            n_i: 0.0,
            c: Complex64::new(0.0, 0.0),
            mean_s: Complex64::new(0.0, 0.0),
            mean_i: Complex64::new(0.0, 0.0),
        }
    }

    /// Symplectic eigenvalues `(ν₋, ν₊)` of the quadrature covariance, in
    /// units where the vacuum value is `1/2`.
    ///
    /// With `a = n_s + 1/2`, `b = n_i + 1/2` the covariance is
    /// `[[a·I, C], [Cᵀ, b·I]]` with `CᵀC = |c|²·I`, which gives
    /// `ν± = (√((a+b)² − 4|c|²) ± |a − b|) / 2`.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let a = self.n_s + 0.5;
        let b = self.n_i + 0.5;
        let disc = ((a + b).powi(2) - 4.0 * self.c.norm_sqr()).max(0.0).sqrt();
        let diff = (a - b).abs();
        ((disc - diff) / 2.0, (disc + diff) / 2.0)
    }

    pub fn is_physical(&self) -> bool {
        let finite = self.n_s.is_finite()
            && self.n_i.is_finite()
            && self.c.re.is_finite()
            && self.c.im.is_finite()
            && self.mean_s.re.is_finite()
            && self.mean_s.im.is_finite()
            && self.mean_i.re.is_finite()
            && self.mean_i.im.is_finite();
        if !finite || self.n_s < 0.0 || self.n_i < 0.0 {
            return false;
        }
        let (nu_minus, _) = self.symplectic_eigenvalues();
        nu_minus >= 0.5 * (1.0 - PHYSICALITY_RTOL)
    }

    pub fn check_physical(&self) -> Result<()> {
        if self.is_physical() {
            Ok(())
        } else {
            let (nu, _) = self.symplectic_eigenvalues();
            Err(Error::domain(format!(
                "unphysical moments (n_s={}, n_i={}, |c|={}, ν₋={nu})",
                self.n_s,
                self.n_i,
                self.c.norm()
            )))
        }
    }

    /// Inside the classical set `|c|² ≤ n_s·n_i` (relative tolerance 1e-9).
    pub fn is_classical(&self) -> bool {
        self.c.norm_sqr() <= self.n_s * self.n_i * (1.0 + 1e-9) + f64::MIN_POSITIVE
    }

    /// Pure when both symplectic eigenvalues sit at the vacuum value.
    pub fn is_pure(&self) -> bool {
        let (lo, hi) = self.symplectic_eigenvalues();
        (lo - 0.5).abs() <= 1e-9 && (hi - 0.5).abs() <= 1e-9
    }
}

fn check_photon_number(name: &str, n: f64) -> Result<()> {
    if n >= 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be a finite non-negative photon number, got {n}")))
    }
}

/// Two-mode squeezed vacuum with `n_s` photons per mode, its correlation
/// scaled by `purity` to model source degradation.
pub fn moments_from_tmsv(n_s: f64, purity: f64) -> Result<SecondMoments> {
    check_photon_number("n_s", n_s)?;
    if !(0.0..=1.0).contains(&purity) {
        return Err(Error::domain(format!("purity must lie in [0, 1], got {purity}")));
    }
    let m = SecondMoments {
        n_s,
        n_i: n_s,
        c: Complex64::new(purity * (n_s * (n_s + 1.0)).sqrt(), 0.0),
        ..SecondMoments::vacuum()
    };
    debug_assert!(m.is_physical());
    Ok(m)
}

/// Maximally correlated classical thermal pair, `c = √(n_s·n_i)`.
pub fn moments_classical(n_s: f64, n_i: f64) -> Result<SecondMoments> {
    check_photon_number("n_s", n_s)?;
    check_photon_number("n_i", n_i)?;
    Ok(SecondMoments {
        n_s,
        n_i,
        c: Complex64::new((n_s * n_i).sqrt(), 0.0),
        ..SecondMoments::vacuum()
    })
}

/// Coherent tone of `n_s` photons on the signal mode; the idler is vacuum.
pub fn moments_coherent(n_s: f64) -> Result<SecondMoments> {
    check_photon_number("n_s", n_s)?;
    Ok(SecondMoments {
        mean_s: Complex64::new(n_s.sqrt(), 0.0),
        ..SecondMoments::vacuum()
    })
}

/// Duan non-separability parameter `Δ = <X₋²> + <P₊²>` for
/// `X₋ = (x_S − x_I)/√2`, `P₊ = (p_S + p_I)/√2`. Vacuum gives 1; `Δ < 1`
/// certifies entanglement.
pub fn duan_delta(m: &SecondMoments) -> f64 {
    m.n_s + m.n_i + 1.0 - 2.0 * m.c.re
}

/// Rotates the idler phase by `theta`: `c → c·e^{iθ}`, `mean_i → mean_i·e^{iθ}`.
pub fn apply_phase_rotation(m: &SecondMoments, theta: f64) -> SecondMoments {
    let phase = Complex64::from_polar(1.0, theta);
    SecondMoments {
        c: m.c * phase,
        mean_i: m.mean_i * phase,
        ..*m
    }
}

/// Result of [`optimal_rotation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    /// Angle in `(−π, π]`.
    pub angle: f64,
    /// `c` vanished, so every angle is optimal and `angle` is 0.
    pub degenerate: bool,
}

/// Idler rotation that makes the cross-correlation real and positive.
pub fn optimal_rotation(m: &SecondMoments) -> Rotation {
    if m.c.norm() == 0.0 {
        return Rotation { angle: 0.0, degenerate: true };
    }
    let mut angle = -m.c.arg();
    if angle <= -PI {
        angle += 2.0 * PI;
    }
    Rotation { angle, degenerate: false }
}

/// Applies [`optimal_rotation`].
pub fn align_correlation(m: &SecondMoments) -> SecondMoments {
    apply_phase_rotation(m, optimal_rotation(m).angle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn tmsv_examples() {
        let v = moments_from_tmsv(0.0, 1.0).unwrap();
        assert_eq!(v.n_s, 0.0);
        assert_eq!(v.c.norm(), 0.0);

        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        assert!(close(m.c.re, 2f64.sqrt(), 1e-15));
        assert!(m.is_pure());

        let m = moments_from_tmsv(1.0, 0.9).unwrap();
        assert!(close(m.c.re, 1.272_792_206_135_785_6, 1e-12));
        assert!(m.is_physical());
        assert!(!m.is_pure());
    }

    #[test]
    fn tmsv_rejects_bad_inputs() {
        assert!(matches!(moments_from_tmsv(-0.1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(moments_from_tmsv(1.0, 1.1), Err(Error::Domain(_))));
        assert!(matches!(moments_from_tmsv(1.0, -0.1), Err(Error::Domain(_))));
        assert!(moments_from_tmsv(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn classical_examples() {
        assert_eq!(moments_classical(0.0, 0.0).unwrap().c.re, 0.0);
        assert_eq!(moments_classical(1.0, 1.0).unwrap().c.re, 1.0);
        let m = moments_classical(0.5, 2.0).unwrap();
        assert!(close(m.c.re, 1.0, 1e-15));
        assert!(duan_delta(&m) >= 1.0);
        assert!(m.is_classical());
        assert!(moments_classical(-1.0, 1.0).is_err());
    }

    #[test]
    fn coherent_examples() {
        assert_eq!(moments_coherent(0.0).unwrap(), SecondMoments::vacuum());
        assert!(close(moments_coherent(0.5).unwrap().mean_s.re, 0.707_106_781_186_547_5, 1e-15));
        let m = moments_coherent(4.0).unwrap();
        assert_eq!(m.mean_s.re, 2.0);
        assert_eq!(m.n_s, 0.0);
        assert_eq!(m.n_i, 0.0);
        assert!(moments_coherent(-4.0).is_err());
    }

    #[test]
    fn duan_examples() {
        assert_eq!(duan_delta(&SecondMoments::vacuum()), 1.0);
        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        assert!(close(duan_delta(&m), 3.0 - 2.0 * 2f64.sqrt(), 1e-14));
        assert!(close(duan_delta(&m), 0.171_572_875_253_809_9, 1e-12));
        assert_eq!(duan_delta(&moments_classical(1.0, 1.0).unwrap()), 1.0);
    }

    #[test]
    fn rotation_examples() {
        let mut m = SecondMoments::vacuum();
        m.c = Complex64::new(0.0, 1.0);
        let r = apply_phase_rotation(&m, -PI / 2.0);
        assert!(close(r.c.re, 1.0, 1e-15) && r.c.im.abs() < 1e-15);

        m.c = Complex64::new(1.0, 0.0);
        assert_eq!(apply_phase_rotation(&m, 0.0), m);

        m.c = Complex64::new(0.3, 0.4);
        let r = apply_phase_rotation(&m, -m.c.arg());
        assert!(close(r.c.re, 0.5, 1e-15) && r.c.im.abs() < 1e-15);
    }

    #[test]
    fn optimal_rotation_examples() {
        let mut m = SecondMoments::vacuum();
        m.c = Complex64::new(1.0, 0.0);
        assert_eq!(optimal_rotation(&m).angle, 0.0);
        m.c = Complex64::new(0.0, 1.0);
        assert!(close(optimal_rotation(&m).angle, -PI / 2.0, 1e-15));

        // Grid search oracle for c = -0.2: argmax over θ of Re(c·e^{iθ}).
        m.c = Complex64::new(-0.2, 0.0);
        let best = (0..=3600)
            .map(|k| -PI + 2.0 * PI * k as f64 / 3600.0)
            .max_by(|a, b| {
                let fa = (m.c * Complex64::from_polar(1.0, *a)).re;
                let fb = (m.c * Complex64::from_polar(1.0, *b)).re;
                fa.total_cmp(&fb)
            })
            .unwrap();
        let rot = optimal_rotation(&m);
        assert!(close(rot.angle, PI, 1e-15));
        assert!((best.abs() - PI).abs() < 1e-9);
        assert!(close(align_correlation(&m).c.re, 0.2, 1e-15));

        let degenerate = optimal_rotation(&SecondMoments::vacuum());
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.angle, 0.0);
    }

    #[test]
    fn band_reference_values() {
        let band = BandParams::reference();
        band.validate().unwrap();
        assert_eq!(band.if_bin().unwrap(), 100);

        let bad = BandParams { if_freq: 20.1e6, ..band };
        assert!(matches!(bad.if_bin(), Err(Error::Config(_))));
        let nyquist = BandParams { if_freq: 60e6, ..band };
        assert!(nyquist.validate().is_err());
        let inconsistent = BandParams { bandwidth: 100e3, ..band };
        assert!(inconsistent.validate().is_err());
    }

    #[test]
    fn room_temperature_occupation() {
        // kT/ħω ≈ 620 at 300 K and 10.09 GHz
        let n = thermal_occupation(omega_from_ghz(10.09), 300.0);
        assert!(n > 619.0 && n < 620.5, "{n}");
    }
}
