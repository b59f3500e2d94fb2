use std::ops::{Add, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::records::{HusimiSampler, RecordBatch, VacuumUnits};
use crate::constants::SecondMoments;
use crate::error::{Error, Result};
use crate::stats::{block_count, block_range, ComplexSum, NeumaierSum};

/// Power sums of one contiguous block of records, with `z = a_S·a_I`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockSums {
    pub n: f64,
    pub sum_s: Complex64,
    pub sum_i: Complex64,
    pub pow_s: f64,
    pub pow_i: f64,
    pub sq_s: Complex64,
    pub sq_i: Complex64,
    pub pow2_s: f64,
    pub pow2_i: f64,
    pub z: Complex64,
    pub z_sq: Complex64,
    pub z_pow: f64,
}

#[derive(Default)]
struct BlockAccumulator {
    n: usize,
    sum_s: ComplexSum,
    sum_i: ComplexSum,
    pow_s: NeumaierSum,
    pow_i: NeumaierSum,
    sq_s: ComplexSum,
    sq_i: ComplexSum,
    pow2_s: NeumaierSum,
    pow2_i: NeumaierSum,
    z: ComplexSum,
    z_sq: ComplexSum,
    z_pow: NeumaierSum,
}

impl BlockAccumulator {
    #[inline]
    fn push(&mut self, r: [Complex64; 2]) {
        let [s, i] = r;
        let ps = s.norm_sqr();
        let pi = i.norm_sqr();
        let z = s * i;
        self.n += 1;
        self.sum_s.add(s);
        self.sum_i.add(i);
        self.pow_s.add(ps);
        self.pow_i.add(pi);
        self.sq_s.add(s * s);
        self.sq_i.add(i * i);
        self.pow2_s.add(ps * ps);
        self.pow2_i.add(pi * pi);
        self.z.add(z);
        self.z_sq.add(z * z);
        self.z_pow.add(ps * pi);
    }

    fn finish(&self) -> BlockSums {
        BlockSums {
            n: self.n as f64,
            sum_s: self.sum_s.value(),
            sum_i: self.sum_i.value(),
            pow_s: self.pow_s.value(),
            pow_i: self.pow_i.value(),
            sq_s: self.sq_s.value(),
            sq_i: self.sq_i.value(),
            pow2_s: self.pow2_s.value(),
            pow2_i: self.pow2_i.value(),
            z: self.z.value(),
            z_sq: self.z_sq.value(),
            z_pow: self.z_pow.value(),
        }
    }
}

impl BlockSums {
    pub fn from_records(records: impl IntoIterator<Item = [Complex64; 2]>) -> Self {
        let mut acc = BlockAccumulator::default();
        for r in records {
            acc.push(r);
        }
        acc.finish()
    }

    /// Sample averages of the summed quantities.
    pub fn averages(&self) -> Averages {
        let n = self.n;
        Averages {
            s: self.sum_s / n,
            i: self.sum_i / n,
            pow_s: self.pow_s / n,
            pow_i: self.pow_i / n,
            sq_s: self.sq_s / n,
            sq_i: self.sq_i / n,
            pow2_s: self.pow2_s / n,
            pow2_i: self.pow2_i / n,
            z: self.z / n,
            z_sq: self.z_sq / n,
            z_pow: self.z_pow / n,
        }
    }
}

macro_rules! fieldwise {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for BlockSums {
            type Output = BlockSums;

            fn $method(self, o: BlockSums) -> BlockSums {
                BlockSums {
                    n: self.n $op o.n,
                    sum_s: self.sum_s $op o.sum_s,
                    sum_i: self.sum_i $op o.sum_i,
                    pow_s: self.pow_s $op o.pow_s,
                    pow_i: self.pow_i $op o.pow_i,
                    sq_s: self.sq_s $op o.sq_s,
                    sq_i: self.sq_i $op o.sq_i,
                    pow2_s: self.pow2_s $op o.pow2_s,
                    pow2_i: self.pow2_i $op o.pow2_i,
                    z: self.z $op o.z,
                    z_sq: self.z_sq $op o.z_sq,
                    z_pow: self.z_pow $op o.z_pow,
                }
            }
        }
    };
}

fieldwise!(Add, add, +);
fieldwise!(Sub, sub, -);

/// Sample averages `E[·]` over a set of records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averages {
    pub s: Complex64,
    pub i: Complex64,
    pub pow_s: f64,
    pub pow_i: f64,
    pub sq_s: Complex64,
    pub sq_i: Complex64,
    pub pow2_s: f64,
    pub pow2_i: f64,
    pub z: Complex64,
    pub z_sq: Complex64,
    pub z_pow: f64,
}

/// Per-block sums of a batch, the basis for jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedSums {
    pub blocks: Vec<BlockSums>,
    pub total: BlockSums,
}

impl BlockedSums {
    fn from_blocks(blocks: Vec<BlockSums>) -> Self {
        let mut total = BlockSums::default();
        let mut comp = BlockSums::default();
        // Compensated fieldwise summation in block order.
        for b in &blocks {
            let y = *b - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        }
        Self { blocks, total }
    }

    pub fn from_batch(batch: &RecordBatch) -> Self {
        let m = batch.len();
        let k = block_count(m);
        let blocks = (0..k)
            .into_par_iter()
            .map(|b| BlockSums::from_records(batch.amps[block_range(m, k, b)].iter().copied()))
            .collect();
        Self::from_blocks(blocks)
    }

    /// Sums with block `k` removed.
    pub fn leave_out(&self, k: usize) -> BlockSums {
        self.total - self.blocks[k]
    }

    pub fn records(&self) -> usize {
        self.total.n as usize
    }
}

/// Records are generated straight into block sums without materializing
/// the batch. Agrees bit for bit with
/// `BlockedSums::from_batch(&sample_records_with(..))`.
pub fn sample_block_sums(m: &SecondMoments, count: usize, seed: u64, vacuum: VacuumUnits) -> Result<BlockedSums> {
    sample_block_sums_mapped(m, count, seed, vacuum, None)
}

/// Transformation applied to each block of records before accumulation.
pub type RecordMap<'a> = dyn Fn(Vec<[Complex64; 2]>) -> Result<Vec<[Complex64; 2]>> + Sync + 'a;

/// Like [`sample_block_sums`], passing each block of records through `map`
/// before accumulation.
pub fn sample_block_sums_mapped(
    m: &SecondMoments,
    count: usize,
    seed: u64,
    vacuum: VacuumUnits,
    map: Option<&RecordMap<'_>>,
) -> Result<BlockedSums> {
    if count == 0 {
        return Err(Error::InsufficientData("at least one record is required".into()));
    }
    let sampler = HusimiSampler::new(m, vacuum, seed)?;
    let k = block_count(count);
    let blocks = (0..k)
        .into_par_iter()
        .map(|b| {
            let range = block_range(count, k, b);
            match map {
                None => Ok(BlockSums::from_records(range.map(|i| sampler.record(i as u64)))),
                Some(f) => {
                    let recs: Vec<_> = range.map(|i| sampler.record(i as u64)).collect();
                    Ok(BlockSums::from_records(f(recs)?))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockedSums::from_blocks(blocks))
}

/// Estimated second moments with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub moments: SecondMoments,
    pub se_n_s: f64,
    pub se_n_i: f64,
    /// Standard errors of the real and imaginary parts of `c`.
    pub se_c: Complex64,
    pub se_mean_s: Complex64,
    pub se_mean_i: Complex64,
    /// Raw record power `E|a|²` of each channel.
    pub power_s: f64,
    pub power_i: f64,
    pub records: usize,
}

fn component_vars(pow: f64, sq: Complex64, mean: Complex64) -> (f64, f64) {
    (
        ((pow + sq.re) / 2.0 - mean.re * mean.re).max(0.0),
        ((pow - sq.re) / 2.0 - mean.im * mean.im).max(0.0),
    )
}

/// Sample moments of `sums`, subtracting `vacuum` from the occupations.
///
/// Errors use the population variance divided by `M`, so duplicating every
/// record leaves the estimate unchanged and divides the errors by `√2`.
pub fn moments_from_sums(sums: &BlockSums, vacuum: VacuumUnits) -> Result<MomentEstimate> {
    if sums.n < 2.0 {
        return Err(Error::InsufficientData(format!(
            "moment estimation needs at least 2 records, got {}",
            sums.n
        )));
    }
    let a = sums.averages();
    let root_m = sums.n.sqrt();
    let n_s = a.pow_s - a.s.norm_sqr() - vacuum.signal;
    let n_i = a.pow_i - a.i.norm_sqr() - vacuum.idler;
    let c = a.z - a.s * a.i;
    let (vs_re, vs_im) = component_vars(a.pow_s, a.sq_s, a.s);
    let (vi_re, vi_im) = component_vars(a.pow_i, a.sq_i, a.i);
    let (vz_re, vz_im) = component_vars(a.z_pow, a.z_sq, a.z);
    let var_ps = (a.pow2_s - a.pow_s * a.pow_s).max(0.0);
    let var_pi = (a.pow2_i - a.pow_i * a.pow_i).max(0.0);
    Ok(MomentEstimate {
        moments: SecondMoments {
            n_s,
            n_i,
            c,
            mean_s: a.s,
            mean_i: a.i,
        },
        se_n_s: var_ps.sqrt() / root_m,
        se_n_i: var_pi.sqrt() / root_m,
        se_c: Complex64::new(vz_re.sqrt(), vz_im.sqrt()) / root_m,
        se_mean_s: Complex64::new(vs_re.sqrt(), vs_im.sqrt()) / root_m,
        se_mean_i: Complex64::new(vi_re.sqrt(), vi_im.sqrt()) / root_m,
        power_s: a.pow_s,
        power_i: a.pow_i,
        records: sums.n as usize,
    })
}

/// Estimates the state behind a batch. Occupations are operator-ordered:
/// the batch's vacuum units are removed.
pub fn estimate_moments(batch: &RecordBatch) -> Result<MomentEstimate> {
    if batch.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "moment estimation needs at least 2 records, got {}",
            batch.len()
        )));
    }
    batch.check_finite()?;
    let sums = BlockedSums::from_batch(batch);
    moments_from_sums(&sums.total, batch.vacuum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{moments_coherent, moments_from_tmsv};
    use crate::dsp::records::{sample_records, sample_records_with, SampleSpec};

    fn within(est: f64, truth: f64, se: f64, k: f64) -> bool {
        (est - truth).abs() <= k * se
    }

    #[test]
    fn vacuum_unit_and_occupation() {
        let b = sample_records(&SecondMoments::vacuum(), 50_000, 11).unwrap();
        let e = estimate_moments(&b).unwrap();
        assert!(within(e.power_s, 1.0, e.se_n_s, 5.0));
        assert!(within(e.moments.n_s, 0.0, e.se_n_s, 5.0));
        assert!(within(e.moments.n_i, 0.0, e.se_n_i, 5.0));
    }

    #[test]
    fn tmsv_correlation_recovered() {
        let m = moments_from_tmsv(1.0, 1.0).unwrap();
        let b = sample_records(&m, 380_000, 5).unwrap();
        let e = estimate_moments(&b).unwrap();
        assert!(within(e.moments.c.re, 2f64.sqrt(), e.se_c.re, 5.0), "{:?}", e);
        assert!(within(e.moments.c.im, 0.0, e.se_c.im, 5.0));
        assert!(within(e.moments.n_s, 1.0, e.se_n_s, 5.0));
    }

    #[test]
    fn coherent_mean_recovered() {
        let m = moments_coherent(4.0).unwrap();
        let b = sample_records(&m, 20_000, 2).unwrap();
        let e = estimate_moments(&b).unwrap();
        assert!(within(e.moments.mean_s.re, 2.0, e.se_mean_s.re, 5.0));
        assert!(within(e.moments.n_s, 0.0, e.se_n_s, 5.0));
    }

    #[test]
    fn duplicated_batch_halves_variance() {
        let m = moments_from_tmsv(0.5, 0.8).unwrap();
        let b = sample_records(&m, 4096, 9).unwrap();
        let one = estimate_moments(&b).unwrap();
        let two = estimate_moments(&b.concat(&b).unwrap()).unwrap();
        assert!((one.moments.c - two.moments.c).norm() < 1e-12);
        assert!((one.moments.n_s - two.moments.n_s).abs() < 1e-12);
        assert!((one.se_n_s / two.se_n_s - 2f64.sqrt()).abs() < 1e-9);
        assert!((one.se_c.re / two.se_c.re - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn streamed_sums_match_materialized_batch() {
        let m = moments_from_tmsv(0.7, 0.9).unwrap();
        let vac = VacuumUnits { signal: 1.0, idler: 3.0 };
        let spec = SampleSpec {
            vacuum: vac,
            ..SampleSpec::default()
        };
        let batch = sample_records_with(&m, 5000, 4, spec).unwrap();
        let a = BlockedSums::from_batch(&batch);
        let b = sample_block_sums(&m, 5000, 4, vac).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sums_are_independent_of_thread_count() {
        let m = moments_from_tmsv(0.7, 0.9).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_block_sums(&m, 20_000, 4, VacuumUnits::default()).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn too_few_records() {
        let b = sample_records(&SecondMoments::vacuum(), 1, 0).unwrap();
        assert!(matches!(estimate_moments(&b), Err(Error::InsufficientData(_))));
    }
}
