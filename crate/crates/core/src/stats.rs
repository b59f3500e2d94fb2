//! Compensated summation, block jackknife and seed derivation.

use num_complex::Complex64;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice in index order.
pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Complex version of [`NeumaierSum`], compensating each component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Leave-one-block-out jackknife.
///
/// `full` is the statistic on all data and `leave_out[k]` the statistic with
/// block `k` removed. Returns the standard error of `full`.
pub fn jackknife_stderr(leave_out: &[f64]) -> f64 {
    let k = leave_out.len();
    if k < 2 {
        return f64::NAN;
    }
    let mean = neumaier_sum(leave_out.iter().copied()) / k as f64;
    let ss = neumaier_sum(leave_out.iter().map(|x| (x - mean).powi(2)));
    ((k as f64 - 1.0) / k as f64 * ss).sqrt()
}

/// Number of jackknife blocks used for `m` records.
pub fn block_count(m: usize) -> usize {
    (m / 16).clamp(1, 128)
}

/// Half-open record range of block `b` out of `k` blocks over `m` records.
pub fn block_range(m: usize, k: usize, b: usize) -> std::ops::Range<usize> {
    let lo = (b as u128 * m as u128 / k as u128) as usize;
    let hi = ((b as u128 + 1) * m as u128 / k as u128) as usize;
    lo..hi
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a path of labels
/// (point index, source, repetition, hypothesis, ...).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(neumaier_sum(xs), 1.0);
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn jackknife_of_mean_matches_textbook() {
        // Blocks of size one: jackknife of the mean reproduces s/√n.
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let mean = total / n;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((jackknife_stderr(&loo) - (s2 / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn blocks_partition_records() {
        for m in [1usize, 15, 16, 1000, 380_000, 380_001] {
            let k = block_count(m);
            let mut next = 0;
            for b in 0..k {
                let r = block_range(m, k, b);
                assert_eq!(r.start, next);
                next = r.end;
            }
            assert_eq!(next, m);
        }
        assert_eq!(block_count(380_000), 128);
        assert_eq!(block_count(1000), 62);
    }

    #[test]
    fn seeds_depend_on_every_label() {
        let a = derive_seed(1, &[0, 1, 2]);
        assert_ne!(a, derive_seed(1, &[0, 1, 3]));
        assert_ne!(a, derive_seed(2, &[0, 1, 2]));
        assert_ne!(a, derive_seed(1, &[1, 0, 2]));
        assert_eq!(a, derive_seed(1, &[0, 1, 2]));
    }

    proptest! {
        #[test]
        fn neumaier_is_order_insensitive_for_integers(mut xs in prop::collection::vec(-1_000_000i64..1_000_000, 0..200)) {
            let a = neumaier_sum(xs.iter().map(|&x| x as f64));
            xs.reverse();
            let b = neumaier_sum(xs.iter().map(|&x| x as f64));
            prop_assert_eq!(a, b);
        }
    }
}
