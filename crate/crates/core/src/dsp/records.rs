use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Hypothesis;
use crate::constants::SecondMoments;
use crate::error::{Error, Result};

/// Vacuum variance carried by each channel of a heterodyne record, in the
/// units of the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumUnits {
    pub signal: f64,
    pub idler: f64,
}

impl Default for VacuumUnits {
    fn default() -> Self {
        Self { signal: 1.0, idler: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Gain-referred amplitudes at the digitizer.
    Detected,
    /// Amplitudes divided by the square root of the chain gain.
    SourceReferred,
}

/// `M` simultaneous signal/idler amplitudes, photon-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBatch {
    /// `[a_S, a_I]` per record.
    pub amps: Vec<[Complex64; 2]>,
    pub units: Units,
    pub hypothesis: Option<Hypothesis>,
    /// Seed that produced the batch, if it was sampled.
    pub seed: Option<u64>,
    pub vacuum: VacuumUnits,
}

impl RecordBatch {
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn signal(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.amps.iter().map(|r| r[0])
    }

    pub fn idler(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.amps.iter().map(|r| r[1])
    }

    pub fn check_finite(&self) -> Result<()> {
        let bad = self
            .amps
            .iter()
            .position(|r| !(r[0].re.is_finite() && r[0].im.is_finite() && r[1].re.is_finite() && r[1].im.is_finite()));
        match bad {
            Some(k) => Err(Error::domain(format!("record {k} is not finite"))),
            None => Ok(()),
        }
    }

    /// Appends `other`, which must carry the same units, vacuum units and
    /// hypothesis tag.
    pub fn concat(&self, other: &RecordBatch) -> Result<RecordBatch> {
        if self.units != other.units || self.vacuum != other.vacuum || self.hypothesis != other.hypothesis {
            return Err(Error::Usage("cannot concatenate batches with different units or tags".into()));
        }
        let mut amps = self.amps.clone();
        amps.extend_from_slice(&other.amps);
        Ok(RecordBatch {
            amps,
            seed: if self.seed == other.seed { self.seed } else { None },
            ..self.clone()
        })
    }

    /// Multiplies every amplitude by `factor`; vacuum units scale with
    /// `factor²`.
    pub fn scaled(&self, factor: f64) -> RecordBatch {
        RecordBatch {
            amps: self.amps.iter().map(|r| [r[0] * factor, r[1] * factor]).collect(),
            vacuum: VacuumUnits {
                signal: self.vacuum.signal * factor * factor,
                idler: self.vacuum.idler * factor * factor,
            },
            ..self.clone()
        }
    }

    /// Writes `idx,re_aS,im_aS,re_aI,im_aI` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["idx", "re_aS", "im_aS", "re_aI", "im_aI"])?;
        for (k, r) in self.amps.iter().enumerate() {
            out.write_record([
                k.to_string(),
                r[0].re.to_string(),
                r[0].im.to_string(),
                r[1].re.to_string(),
                r[1].im.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Labels attached to a sampled batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub vacuum: VacuumUnits,
    pub units: Units,
    pub hypothesis: Option<Hypothesis>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            vacuum: VacuumUnits::default(),
            units: Units::Detected,
            hypothesis: None,
        }
    }
}

/// Precomputed factorization of the Husimi covariance of a state.
///
/// With complex standard normals `z₁, z₂` (`E|z|² = 1`) the pair
/// `a_S = μ_S + √A_S·z₁`, `a_I = μ_I + (c/√A_S)·z̄₁ + √(A_I − |c|²/A_S)·z₂`
/// has `E|a_S − μ_S|² = A_S`, `E|a_I − μ_I|² = A_I` and
/// `E[(a_S − μ_S)(a_I − μ_I)] = c`, where `A = n + vacuum`.
#[derive(Debug, Clone)]
pub struct HusimiSampler {
    base: ChaCha8Rng,
    mean_s: Complex64,
    mean_i: Complex64,
    scale_s: f64,
    cross: Complex64,
    scale_i: f64,
}

impl HusimiSampler {
    pub fn new(m: &SecondMoments, vacuum: VacuumUnits, seed: u64) -> Result<Self> {
        m.check_physical()?;
        if !(vacuum.signal >= 0.0 && vacuum.idler >= 0.0) {
            return Err(Error::domain("vacuum units must be non-negative"));
        }
        let a_s = m.n_s + vacuum.signal;
        let a_i = m.n_i + vacuum.idler;
        let c2 = m.c.norm_sqr();
        let (scale_s, cross, rest) = if a_s > 0.0 {
            (a_s.sqrt(), m.c / a_s.sqrt(), a_i - c2 / a_s)
        } else {
            (0.0, Complex64::new(0.0, 0.0), a_i)
        };
        if rest < -1e-9 * a_i.max(1.0) || (a_s == 0.0 && c2 > 0.0) {
            return Err(Error::domain(format!(
                "record covariance is not positive semidefinite (|c|²={c2}, A_S={a_s}, A_I={a_i})"
            )));
        }
        Ok(Self {
            base: ChaCha8Rng::seed_from_u64(seed),
            mean_s: m.mean_s,
            mean_i: m.mean_i,
            scale_s,
            cross,
            scale_i: rest.max(0.0).sqrt(),
        })
    }

    /// Record `idx`, drawn from its own counter-addressed stream.
    #[inline]
    pub fn record(&self, idx: u64) -> [Complex64; 2] {
        let mut rng = self.base.clone();
        rng.set_stream(idx);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let z1 = Complex64::new(draw() * h, draw() * h);
        let z2 = Complex64::new(draw() * h, draw() * h);
        let a_s = self.mean_s + z1 * self.scale_s;
        let a_i = self.mean_i + self.cross * z1.conj() + z2 * self.scale_i;
        [a_s, a_i]
    }
}

/// Draws `count` heterodyne records of `m` with one vacuum unit per mode.
pub fn sample_records(m: &SecondMoments, count: usize, seed: u64) -> Result<RecordBatch> {
    sample_records_with(m, count, seed, SampleSpec::default())
}

pub fn sample_records_with(m: &SecondMoments, count: usize, seed: u64, spec: SampleSpec) -> Result<RecordBatch> {
    if count == 0 {
        return Err(Error::InsufficientData("at least one record is required".into()));
    }
    let sampler = HusimiSampler::new(m, spec.vacuum, seed)?;
    let amps = (0..count as u64).into_par_iter().map(|k| sampler.record(k)).collect();
    Ok(RecordBatch {
        amps,
        units: spec.units,
        hypothesis: spec.hypothesis,
        seed: Some(seed),
        vacuum: spec.vacuum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::moments_from_tmsv;

    #[test]
    fn same_seed_same_batch() {
        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        let a = sample_records(&m, 1000, 7).unwrap();
        let b = sample_records(&m, 1000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_records(&m, 1000, 8).unwrap();
        assert_ne!(a.amps, c.amps);
    }

    #[test]
    fn records_do_not_depend_on_batch_length() {
        let m = moments_from_tmsv(0.3, 0.9).unwrap();
        let short = sample_records(&m, 10, 3).unwrap();
        let long = sample_records(&m, 100, 3).unwrap();
        assert_eq!(short.amps[..], long.amps[..10]);
    }

    #[test]
    fn rejects_unphysical_and_empty() {
        let mut m = moments_from_tmsv(1.0, 1.0).unwrap();
        m.c *= 1.1;
        assert!(matches!(sample_records(&m, 10, 0), Err(Error::Domain(_))));
        let v = SecondMoments::vacuum();
        assert!(sample_records(&v, 0, 0).is_err());
    }

    #[test]
    fn zero_vacuum_rejects_entangled_state() {
        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        let spec = SampleSpec {
            vacuum: VacuumUnits { signal: 0.0, idler: 0.0 },
            ..SampleSpec::default()
        };
        assert!(sample_records_with(&m, 10, 0, spec).is_err());
    }

    #[test]
    fn csv_layout() {
        let v = SecondMoments::vacuum();
        let b = sample_records(&v, 3, 1).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "idx,re_aS,im_aS,re_aI,im_aI");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn concat_checks_tags() {
        let v = SecondMoments::vacuum();
        let a = sample_records(&v, 3, 1).unwrap();
        let mut b = a.clone();
        b.units = Units::SourceReferred;
        assert!(matches!(a.concat(&b), Err(Error::Usage(_))));
        assert_eq!(a.concat(&a).unwrap().len(), 6);
    }
}
