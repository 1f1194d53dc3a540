//! Chain and distribution diagnostics: Kolmogorov-Smirnov distances,
//! split-chain mixing statistic, autocorrelation-based effective sample
//! size, and the shared quantile rule.

/// Type-7 quantile (linear interpolation between order statistics) of an
/// ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the CDF
/// `cdf`. Sorts a copy of the input.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i as f64 + 1.0) / n - f).abs());
        d = d.max((i as f64 / n - f).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ((-(alpha / 2.0).ln()) / 2.0).sqrt() / (n as f64).sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Split-chain potential-scale-reduction statistic. Every chain is halved,
/// then the usual between/within variance ratio is taken over the halves.
/// Values near 1 indicate the segments sample the same distribution.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let mid = c.len() / 2;
        if mid == 0 {
            return f64::NAN;
        }
        halves.push(&c[..mid]);
        halves.push(&c[mid..]);
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap() as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| sample_var(h)).collect();
    let w = mean(&vars);
    let b = n * sample_var(&means);
    let _ = m;
    if w <= 0.0 {
        // Degenerate chains: identical constants mix trivially.
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Effective sample size from the initial run of positive autocorrelations
/// (cut once the estimate drops below 0.05).
pub fn ess(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 2 {
        return n as f64;
    }
    let m = mean(chain);
    let var = chain.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if var < 1e-300 {
        return n as f64;
    }
    let mut sum_rho = 0.0;
    let max_lag = (n / 2).min(1000);
    for k in 1..=max_lag {
        let cov = (0..n - k)
            .map(|i| (chain[i] - m) * (chain[i + k] - m))
            .sum::<f64>()
            / (n - k) as f64;
        let rho = cov / var;
        if rho < 0.05 {
            break;
        }
        sum_rho += rho;
    }
    n as f64 / (1.0 + 2.0 * sum_rho)
}
