//! Deterministic pairwise summation.
//!
//! Every accumulation in the crate goes through [`pairwise_sum`] so that the
//! result depends only on the order of the input, never on how work was split
//! across threads.

const BLOCK: usize = 16;

/// Sums `values` by recursive halving, falling back to a plain loop on
/// blocks of at most 16 elements.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..len`, without materialising the terms
/// when `len` is small.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, len, &f)
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(len)`).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = pairwise_sum_by(n, |i| {
        let d = values[i] - mean;
        d * d
    });
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
