//! IF time series: synthesis, FFT demodulation, quantization and the raw
//! record file format.
//!
//! A record of channel amplitude `a` is the real voltage
//!
//! ```text
//! r[n] = √(2ħωBR·G) · Re(a · e^{i2πkn/L}),   n = 0..L
//! ```
//!
//! with `k = f_IF/B` the IF bin of an `L`-point record. The forward FFT puts
//! `√(2ħωBR·G)·a·L/2` into bin `k`, so demodulation reads the phasor
//! `2·X[k]/L` and divides by the same scale.
//!
//! # Raw file layout
//!
//! All fields little-endian.
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 8 | magic `QIRAWF32` |
//! | 8 | 4 | `u32` format version, currently 1 |
//! | 12 | 4 | `u32` channel count |
//! | 16 | 4 | `u32` samples per record |
//! | 20 | 4 | `u32` hypothesis: 0 unknown, 1 absent, 2 present |
//! | 24 | 8 | `u64` record count M |
//! | 32 | 8 | `f64` sample rate, Hz |
//! | 40 | 8 | `f64` IF, Hz |
//! | 48 | 8 | `f64` impedance, Ω |
//! | 56 | 8 | `f64` signal ω, rad/s |
//! | 64 | 8 | `f64` idler ω, rad/s |
//! | 72 | … | `f32` samples in volts: record-major, then channel, then time |

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::records::{RecordBatch, Units, VacuumUnits};
use crate::chain::Hypothesis;
use crate::constants::BandParams;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"QIRAWF32";
pub const RAW_VERSION: u32 = 1;
const HEADER_LEN: usize = 72;

/// Carrier and gain used to convert between amplitudes and volts for one
/// channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScale {
    /// Carrier angular frequency, rad/s.
    pub omega: f64,
    /// Linear power gain divided out on demodulation.
    pub gain: f64,
}

impl ChannelScale {
    /// Volts per unit amplitude, `√(2ħωBR·G)`.
    pub fn volts_per_unit(&self, band: &BandParams) -> f64 {
        (2.0 * band.quantum_scale(self.omega) * self.gain).sqrt()
    }

    fn check(&self) -> Result<()> {
        if self.omega > 0.0 && self.gain > 0.0 && self.omega.is_finite() && self.gain.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "channel scale needs positive ω and gain, got ω={} G={}",
                self.omega, self.gain
            )))
        }
    }
}

/// `M` records of `record_len` real samples per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecordStream {
    pub band: BandParams,
    pub hypothesis: Option<Hypothesis>,
    pub channels: usize,
    /// Volts, laid out record-major, then channel, then time.
    pub samples: Vec<f64>,
}

impl RawRecordStream {
    pub fn records(&self) -> usize {
        self.samples.len() / (self.channels * self.band.record_len)
    }

    pub fn record(&self, k: usize, channel: usize) -> &[f64] {
        let l = self.band.record_len;
        let start = (k * self.channels + channel) * l;
        &self.samples[start..start + l]
    }

    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        let stride = self.channels * self.band.record_len;
        if self.channels == 0 || self.samples.is_empty() || !self.samples.len().is_multiple_of(stride) {
            return Err(Error::config(format!(
                "raw stream holds {} samples, not a positive multiple of {} channels × {} samples",
                self.samples.len(),
                self.channels,
                self.band.record_len
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(RAW_MAGIC);
        header.extend_from_slice(&RAW_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.channels as u32).to_le_bytes());
        header.extend_from_slice(&(self.band.record_len as u32).to_le_bytes());
        header.extend_from_slice(&hypothesis_code(self.hypothesis).to_le_bytes());
        header.extend_from_slice(&(self.records() as u64).to_le_bytes());
        for v in [
            self.band.sample_rate,
            self.band.if_freq,
            self.band.impedance,
            self.band.omega_s,
            self.band.omega_i,
        ] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.samples.len() * 4);
        for &s in &self.samples {
            buf.extend_from_slice(&(s as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::config(format!("raw file header unreadable: {e}")))?;
        if &header[0..8] != RAW_MAGIC {
            return Err(Error::config("not a raw record file (bad magic)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != RAW_VERSION {
            return Err(Error::config(format!("unsupported raw format version {version}")));
        }
        let channels = u32_at(12) as usize;
        let record_len = u32_at(16) as usize;
        let hypothesis = match u32_at(20) {
            0 => None,
            1 => Some(Hypothesis::Absent),
            2 => Some(Hypothesis::Present),
            other => return Err(Error::config(format!("bad hypothesis code {other}"))),
        };
        let m = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
        let sample_rate = f64_at(32);
        let band = BandParams {
            sample_rate,
            if_freq: f64_at(40),
            impedance: f64_at(48),
            omega_s: f64_at(56),
            omega_i: f64_at(64),
            record_len,
            bandwidth: sample_rate / record_len.max(1) as f64,
        };
        let count = m
            .checked_mul(channels)
            .and_then(|x| x.checked_mul(record_len))
            .ok_or_else(|| Error::config("raw header sizes overflow"))?;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::config(format!("raw file truncated: expected {m} records ({e})")))?;
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let stream = Self {
            band,
            hypothesis,
            channels,
            samples,
        };
        stream.validate()?;
        Ok(stream)
    }
}

fn hypothesis_code(h: Option<Hypothesis>) -> u32 {
    match h {
        None => 0,
        Some(Hypothesis::Absent) => 1,
        Some(Hypothesis::Present) => 2,
    }
}

/// Writes the IF time series of every record. Synthesis adds no noise.
pub fn synthesize_if(batch: &RecordBatch, band: &BandParams, scales: [ChannelScale; 2]) -> Result<RawRecordStream> {
    let bin = band.if_bin()?;
    for s in &scales {
        s.check()?;
    }
    let l = band.record_len;
    let carrier: Vec<Complex64> = (0..l)
        .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ((bin * n) % l) as f64 / l as f64))
        .collect();
    let volts = [scales[0].volts_per_unit(band), scales[1].volts_per_unit(band)];
    let mut samples = vec![0.0; batch.len() * 2 * l];
    samples
        .par_chunks_mut(2 * l)
        .zip(batch.amps.par_iter())
        .for_each(|(out, rec)| {
            for ch in 0..2 {
                let a = rec[ch] * volts[ch];
                for (o, e) in out[ch * l..(ch + 1) * l].iter_mut().zip(&carrier) {
                    *o = (a * e).re;
                }
            }
        });
    Ok(RawRecordStream {
        band: *band,
        hypothesis: batch.hypothesis,
        channels: 2,
        samples,
    })
}

/// FFT-demodulates the IF bin of every record into photon-normalized
/// amplitudes `a = (2·X[k]/L) / √(2ħωBR·G)`.
///
/// The output is labelled [`Units::Detected`] when both gains are 1 and
/// [`Units::SourceReferred`] otherwise. It carries one vacuum unit per
/// channel; use [`RecordBatch::vacuum`] to change that.
pub fn demodulate_records(raw: &RawRecordStream, scales: [ChannelScale; 2]) -> Result<RecordBatch> {
    raw.validate()?;
    if raw.channels != 2 {
        return Err(Error::config(format!("expected 2 channels, found {}", raw.channels)));
    }
    let bin = raw.band.if_bin()?;
    for s in &scales {
        s.check()?;
    }
    let l = raw.band.record_len;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(l);
    let inv = [
        2.0 / (l as f64 * scales[0].volts_per_unit(&raw.band)),
        2.0 / (l as f64 * scales[1].volts_per_unit(&raw.band)),
    ];
    let amps = raw
        .samples
        .par_chunks(2 * l)
        .map_init(
            || {
                (
                    vec![Complex64::new(0.0, 0.0); l],
                    vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), rec| {
                let mut out = [Complex64::new(0.0, 0.0); 2];
                for ch in 0..2 {
                    for (b, &s) in buf.iter_mut().zip(&rec[ch * l..(ch + 1) * l]) {
                        *b = Complex64::new(s, 0.0);
                    }
                    fft.process_with_scratch(buf, scratch);
                    out[ch] = buf[bin] * inv[ch];
                }
                out
            },
        )
        .collect();
    let units = if scales[0].gain == 1.0 && scales[1].gain == 1.0 {
        Units::Detected
    } else {
        Units::SourceReferred
    };
    Ok(RecordBatch {
        amps,
        units,
        hypothesis: raw.hypothesis,
        seed: None,
        vacuum: VacuumUnits::default(),
    })
}

/// Synthesizes and demodulates a block of records in memory.
pub fn if_round_trip(records: Vec<[Complex64; 2]>, band: &BandParams, scales: [ChannelScale; 2]) -> Result<Vec<[Complex64; 2]>> {
    let batch = RecordBatch {
        amps: records,
        units: Units::Detected,
        hypothesis: None,
        seed: None,
        vacuum: VacuumUnits::default(),
    };
    let raw = synthesize_if(&batch, band, scales)?;
    Ok(demodulate_records(&raw, scales)?.amps)
}

/// Uniform mid-tread quantizer with symmetric full scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub bits: u32,
    /// Largest representable magnitude, V. Larger samples clip.
    pub full_scale: f64,
}

impl Quantizer {
    pub fn new(bits: u32, full_scale: f64) -> Result<Self> {
        if !(1..=24).contains(&bits) || !(full_scale > 0.0) {
            return Err(Error::config(format!(
                "quantizer needs 1..=24 bits and positive full scale, got {bits} bits, {full_scale} V"
            )));
        }
        Ok(Self { bits, full_scale })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / ((1u64 << self.bits) - 1) as f64
    }

    pub fn quantize(&self, v: f64) -> f64 {
        let step = self.step();
        (v.clamp(-self.full_scale, self.full_scale) / step).round() * step
    }

    pub fn apply(&self, raw: &mut RawRecordStream) {
        raw.samples.par_iter_mut().for_each(|s| *s = self.quantize(*s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{moments_from_tmsv, PHYS};
    use crate::dsp::{estimate_moments, sample_records};

    fn unit_scale(band: &BandParams) -> ChannelScale {
        // ħωBR·G = 1.
        let omega = band.omega_s;
        ChannelScale {
            omega,
            gain: 1.0 / band.quantum_scale(omega),
        }
    }

    fn batch_of(amps: Vec<[Complex64; 2]>) -> RecordBatch {
        RecordBatch {
            amps,
            units: Units::Detected,
            hypothesis: None,
            seed: None,
            vacuum: VacuumUnits::default(),
        }
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let band = BandParams::reference();
        let s = unit_scale(&band);
        let raw = synthesize_if(&batch_of(vec![[Complex64::new(0.0, 0.0); 2]]), &band, [s, s]).unwrap();
        assert!(raw.samples.iter().all(|&x| x == 0.0));
        let back = demodulate_records(&raw, [s, s]).unwrap();
        assert_eq!(back.amps[0][0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn unit_tone_sits_in_bin_100() {
        let band = BandParams::reference();
        assert_eq!(band.if_bin().unwrap(), 100);
        let s = unit_scale(&band);
        let one = Complex64::new(1.0, 0.0);
        let raw = synthesize_if(&batch_of(vec![[one, one]]), &band, [s, s]).unwrap();
        let rec = raw.record(0, 0);
        let peak = rec.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 2f64.sqrt()).abs() < 1e-12);
        let mut buf: Vec<Complex64> = rec.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(500).process(&mut buf);
        let (argmax, _) = buf[..250]
            .iter()
            .enumerate()
            .fold((0, 0.0), |(k, m), (i, z)| if z.norm() > m { (i, z.norm()) } else { (k, m) });
        assert_eq!(argmax, 100);
    }

    #[test]
    fn pure_tone_voltage_to_amplitude() {
        let band = BandParams::reference();
        let scale = ChannelScale {
            omega: band.omega_i,
            gain: 1e9,
        };
        let v = 0.37;
        let l = band.record_len;
        let mut samples = Vec::new();
        for ch in 0..2 {
            let _ = ch;
            samples.extend((0..l).map(|n| v * (2.0 * std::f64::consts::PI * 100.0 * n as f64 / l as f64).cos()));
        }
        let raw = RawRecordStream {
            band,
            hypothesis: None,
            channels: 2,
            samples,
        };
        let b = demodulate_records(&raw, [scale, scale]).unwrap();
        let expected = v / (2.0 * PHYS.hbar * band.omega_i * band.bandwidth * band.impedance * 1e9).sqrt();
        assert!((b.amps[0][1].norm() - expected).abs() < 1e-12 * expected);
        assert_eq!(b.units, Units::SourceReferred);
    }

    #[test]
    fn round_trip_exact() {
        let band = BandParams::reference();
        let m = moments_from_tmsv(2.0, 0.9).unwrap();
        let batch = sample_records(&m, 500, 1).unwrap();
        let scales = [
            ChannelScale { omega: band.omega_s, gain: 1.0 },
            ChannelScale { omega: band.omega_i, gain: 1.0 },
        ];
        let raw = synthesize_if(&batch, &band, scales).unwrap();
        let back = demodulate_records(&raw, scales).unwrap();
        for (a, b) in batch.amps.iter().zip(&back.amps) {
            for ch in 0..2 {
                assert!((a[ch] - b[ch]).norm() <= 1e-9 * a[ch].norm().max(1e-300));
            }
        }
        let e = estimate_moments(&back).unwrap();
        assert!((e.moments.c.re - estimate_moments(&batch).unwrap().moments.c.re).abs() < 1e-9);
    }

    #[test]
    fn non_integer_bin_rejected() {
        let band = BandParams {
            if_freq: 20.1e6,
            ..BandParams::reference()
        };
        let s = unit_scale(&BandParams::reference());
        let err = synthesize_if(&batch_of(vec![[Complex64::new(1.0, 0.0); 2]]), &band, [s, s]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn file_round_trip_is_f32_exact() {
        let band = BandParams::reference();
        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        let batch = sample_records(&m, 4, 3).unwrap();
        let s = unit_scale(&band);
        let mut raw = synthesize_if(&batch, &band, [s, s]).unwrap();
        raw.hypothesis = Some(Hypothesis::Present);
        let mut bytes = Vec::new();
        raw.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 72 + 4 * 2 * 500 * 4);
        let back = RawRecordStream::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.records(), 4);
        assert_eq!(back.hypothesis, Some(Hypothesis::Present));
        assert_eq!(back.band.record_len, 500);
        for (a, b) in raw.samples.iter().zip(&back.samples) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert!(RawRecordStream::read_from(&bytes[..100]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(RawRecordStream::read_from(bad.as_slice()).is_err());
    }

    #[test]
    fn quantizer_levels() {
        let q = Quantizer::new(8, 1.0).unwrap();
        assert!((q.step() - 2.0 / 255.0).abs() < 1e-15);
        assert_eq!(q.quantize(5.0), q.quantize(1.0));
        assert!((q.quantize(0.3) - 0.3).abs() <= q.step() / 2.0);
        assert!(Quantizer::new(0, 1.0).is_err());
    }
}
