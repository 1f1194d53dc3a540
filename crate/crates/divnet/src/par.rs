//! Order-deterministic parallel reductions.
//!
//! Likelihood sums are evaluated term-by-term into index order and folded
//! left to right, so the result is bit-identical for any worker count.

use rayon::prelude::*;

const PAR_THRESHOLD: usize = 64;

pub(crate) fn sum_ordered<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if n < PAR_THRESHOLD || rayon::current_num_threads() == 1 {
        (0..n).map(f).fold(0.0, |acc, x| acc + x)
    } else {
        let terms: Vec<f64> = (0..n).into_par_iter().map(f).collect();
        terms.into_iter().fold(0.0, |acc, x| acc + x)
    }
}
