//! Posterior summaries: moments and equal-tailed credible intervals per
//! scalar parameter, drift trajectory tables, precision summaries on the
//! variance scale, association records against node relevance, and rank
//! correlations.

use serde::Serialize;

use crate::diagnostics::{ess, quantile_sorted, split_rhat};
use crate::error::{Error, Result};
use crate::sampler::{AcceptanceReport, PosteriorSample};
use crate::transform::RelevanceTable;

/// Minimum retained draws before equal-tailed quantiles are reported.
pub const MIN_DRAWS_FOR_QUANTILES: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    /// Equal-tailed 2.5% quantile; absent when too few draws.
    pub lower: Option<f64>,
    /// Equal-tailed 97.5% quantile; absent when too few draws.
    pub upper: Option<f64>,
    pub ess: f64,
    pub split_rhat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftRow {
    pub t: usize,
    pub label: String,
    pub mean: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// One row of the node association table.
#[derive(Debug, Clone, Serialize)]
pub struct NodeRecord {
    pub node: u64,
    pub theta_mean: f64,
    pub theta_var: f64,
    pub gamma_mean: f64,
    pub gamma_var: f64,
    /// Aggregated relevance, when a table was joined.
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub n_draws: usize,
    /// False when fewer than [`MIN_DRAWS_FOR_QUANTILES`] draws were
    /// available; moments are still reported.
    pub quantiles_available: bool,
    /// Quantile convention, recorded for plot consumers.
    pub quantile_rule: &'static str,
    pub mu: Vec<ScalarSummary>,
    pub theta: Vec<ScalarSummary>,
    pub gamma: Vec<ScalarSummary>,
    /// Precisions summarized on the variance scale (draws of 1/tau).
    pub variances: Vec<ScalarSummary>,
    pub drift: Vec<DriftRow>,
    pub nodes: Vec<NodeRecord>,
    /// Spearman rank correlation between posterior-mean diversification and
    /// aggregated relevance, when relevance was joined.
    pub spearman_theta_relevance: Option<f64>,
    /// Spearman rank correlation between posterior-mean diversification and
    /// attractiveness.
    pub spearman_theta_gamma: Option<f64>,
    pub acceptance: AcceptanceReport,
}

fn summarize_scalar(name: String, draws: &[f64], with_quantiles: bool) -> ScalarSummary {
    let n = draws.len();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let variance = if n < 2 {
        0.0
    } else {
        draws.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    };
    let (lower, upper) = if with_quantiles {
        let mut sorted = draws.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (Some(quantile_sorted(&sorted, 0.025)), Some(quantile_sorted(&sorted, 0.975)))
    } else {
        (None, None)
    };
    ScalarSummary {
        name,
        mean,
        variance,
        lower,
        upper,
        ess: ess(draws),
        split_rhat: split_rhat(&[draws.to_vec()]),
    }
}

fn column(draws: &[Vec<f64>], j: usize) -> Vec<f64> {
    draws.iter().map(|d| d[j]).collect()
}

/// Summarizes a chain. When a relevance table is supplied, its aggregated
/// totals are joined onto the node records by original node id; every
/// sampled node must be present in the table.
pub fn summarize(sample: &PosteriorSample, relevance: Option<&RelevanceTable>) -> Result<Summary> {
    let n_draws = sample.n_draws();
    if n_draws == 0 {
        return Err(Error::EmptyChain);
    }
    let with_quantiles = n_draws >= MIN_DRAWS_FOR_QUANTILES;
    if !with_quantiles {
        eprintln!(
            "warning: only {n_draws} draws (< {MIN_DRAWS_FOR_QUANTILES}); quantiles withheld"
        );
    }
    let t_count = sample.mu.first().map(|d| d.len()).unwrap_or(0);
    let n = sample.theta.first().map(|d| d.len()).unwrap_or(0);

    let mu: Vec<ScalarSummary> = (0..t_count)
        .map(|t| summarize_scalar(format!("mu[{t}]"), &column(&sample.mu, t), with_quantiles))
        .collect();
    let theta: Vec<ScalarSummary> = (0..n)
        .map(|i| summarize_scalar(format!("theta[{i}]"), &column(&sample.theta, i), with_quantiles))
        .collect();
    let gamma: Vec<ScalarSummary> = (0..n)
        .map(|j| summarize_scalar(format!("gamma[{j}]"), &column(&sample.gamma, j), with_quantiles))
        .collect();

    let variances: Vec<ScalarSummary> = ["var_eta", "var_theta", "var_gamma"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let draws: Vec<f64> = sample.tau.iter().map(|t| 1.0 / t[k]).collect();
            summarize_scalar((*name).to_string(), &draws, with_quantiles)
        })
        .collect();

    let drift: Vec<DriftRow> = mu
        .iter()
        .enumerate()
        .map(|(t, s)| DriftRow {
            t,
            label: sample
                .period_labels
                .get(t)
                .cloned()
                .unwrap_or_else(|| t.to_string()),
            mean: s.mean,
            lower: s.lower,
            upper: s.upper,
        })
        .collect();

    let joined_relevance: Option<Vec<f64>> = match relevance {
        None => None,
        Some(table) => {
            let mut totals = Vec::with_capacity(n);
            let mut missing = Vec::new();
            for &id in &sample.node_labels {
                match table.node_labels.iter().position(|&x| x == id) {
                    Some(pos) => totals.push(table.total[pos]),
                    None => missing.push(id),
                }
            }
            if !missing.is_empty() {
                return Err(Error::RelevanceJoin(missing.len(), missing));
            }
            Some(totals)
        }
    };

    let nodes: Vec<NodeRecord> = (0..n)
        .map(|i| NodeRecord {
            node: sample.node_labels.get(i).copied().unwrap_or(i as u64),
            theta_mean: theta[i].mean,
            theta_var: theta[i].variance,
            gamma_mean: gamma[i].mean,
            gamma_var: gamma[i].variance,
            relevance: joined_relevance.as_ref().map(|r| r[i]),
        })
        .collect();

    let theta_means: Vec<f64> = theta.iter().map(|s| s.mean).collect();
    let gamma_means: Vec<f64> = gamma.iter().map(|s| s.mean).collect();
    let spearman_theta_relevance = joined_relevance
        .as_ref()
        .and_then(|r| rank_correlation(&theta_means, r).ok());
    let spearman_theta_gamma = rank_correlation(&theta_means, &gamma_means).ok();

    Ok(Summary {
        n_draws,
        quantiles_available: with_quantiles,
        quantile_rule: "type-7 linear interpolation, equal-tailed 2.5%/97.5%",
        mu,
        theta,
        gamma,
        variances,
        drift,
        nodes,
        spearman_theta_relevance,
        spearman_theta_gamma,
        acceptance: sample.acceptance.clone(),
    })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::DimensionMismatch(format!(
            "rank correlation needs two equal-length vectors of at least 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::ConstantVector);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mx = rx.iter().sum::<f64>() / rx.len() as f64;
    let my = ry.iter().sum::<f64>() / ry.len() as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;
    use crate::sampler::ChainConfig;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn sample_from(
        mu: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        gamma: Vec<Vec<f64>>,
        tau: Vec<[f64; 3]>,
        labels: Vec<u64>,
    ) -> PosteriorSample {
        let t_count = mu.first().map(|d| d.len()).unwrap_or(0);
        let n = theta.first().map(|d| d.len()).unwrap_or(1);
        let n_blocks = t_count + 2 * n - 1;
        PosteriorSample {
            config: ChainConfig::default(),
            hyper: Hyperparams::default(),
            node_labels: labels,
            period_labels: (0..t_count).map(|t| t.to_string()).collect(),
            saved_iterations: (0..mu.len() as u64).collect(),
            mu,
            theta,
            gamma,
            tau,
            acceptance: AcceptanceReport {
                labels: (0..n_blocks).map(|i| format!("b{i}")).collect(),
                overall: vec![0.25; n_blocks],
                post_adaptation: vec![0.25; n_blocks],
                final_proposal_sd: vec![0.1; n_blocks],
            },
            elapsed_secs: 0.0,
        }
    }

    fn constant_sample(n_draws: usize) -> PosteriorSample {
        sample_from(
            vec![vec![0.7, 0.9]; n_draws],
            vec![vec![1.0, 2.0, 3.0]; n_draws],
            vec![vec![-0.5, 0.2, 0.3]; n_draws],
            vec![[4.0, 4.0, 4.0]; n_draws],
            vec![10, 20, 30],
        )
    }

    #[test]
    fn constant_draws_have_zero_variance_and_point_interval() {
        let s = summarize(&constant_sample(200), None).unwrap();
        assert_relative_eq!(s.mu[0].mean, 0.7, epsilon = 1e-12);
        assert!(s.mu[0].variance.abs() < 1e-28);
        assert_eq!(s.mu[0].lower, Some(0.7));
        assert_eq!(s.mu[0].upper, Some(0.7));
        // tau = 4 summarized on the variance scale.
        assert_eq!(s.variances[0].mean, 0.25);
        assert_eq!(s.variances[0].lower, Some(0.25));
    }

    #[test]
    fn quantile_rule_matches_order_statistics() {
        let draws: Vec<Vec<f64>> = (1..=100).map(|x| vec![x as f64]).collect();
        let n = draws.len();
        let s = sample_from(
            draws,
            vec![vec![0.0, 0.0, 1.0]; n],
            vec![vec![0.0; 3]; n],
            vec![[1.0, 1.0, 1.0]; n],
            vec![0, 1, 2],
        );
        let out = summarize(&s, None).unwrap();
        assert_relative_eq!(out.mu[0].lower.unwrap(), 3.475, epsilon = 1e-12);
        assert_relative_eq!(out.mu[0].upper.unwrap(), 97.525, epsilon = 1e-12);
    }

    #[test]
    fn few_draws_withhold_quantiles_but_keep_moments() {
        let s = summarize(&constant_sample(50), None).unwrap();
        assert!(!s.quantiles_available);
        assert_eq!(s.mu[0].lower, None);
        assert_relative_eq!(s.mu[0].mean, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn empty_chain_is_an_error() {
        let s = sample_from(vec![], vec![], vec![], vec![], vec![]);
        assert!(matches!(summarize(&s, None), Err(Error::EmptyChain)));
    }

    #[test]
    fn variance_scale_summaries_transform_draws_not_summaries() {
        // Jensen gap: for nonconstant draws, mean(1/tau) != 1/mean(tau).
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 500;
        let tau: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let t = 1.0 + 4.0 * rng.random::<f64>();
                [t, t, t]
            })
            .collect();
        let mean_tau: f64 = tau.iter().map(|t| t[0]).sum::<f64>() / n as f64;
        let s = sample_from(
            vec![vec![0.0]; n],
            vec![vec![0.0, 0.0, 1.0]; n],
            vec![vec![0.0; 3]; n],
            tau,
            vec![0, 1, 2],
        );
        let out = summarize(&s, None).unwrap();
        assert!((out.variances[0].mean - 1.0 / mean_tau).abs() > 1e-3);
    }

    #[test]
    fn moment_and_quantile_summaries_are_permutation_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let n = 300;
        let mut draws: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let make = |d: Vec<Vec<f64>>| {
            sample_from(
                d,
                vec![vec![0.0, 0.0, 1.0]; n],
                vec![vec![0.0; 3]; n],
                vec![[1.0, 1.0, 1.0]; n],
                vec![0, 1, 2],
            )
        };
        let a = summarize(&make(draws.clone()), None).unwrap();
        draws.shuffle(&mut rng);
        let b = summarize(&make(draws), None).unwrap();
        assert_relative_eq!(a.mu[0].mean, b.mu[0].mean, epsilon = 1e-12);
        assert_relative_eq!(a.mu[0].variance, b.mu[0].variance, epsilon = 1e-12);
        assert_eq!(a.mu[0].lower, b.mu[0].lower);
        assert_eq!(a.mu[0].upper, b.mu[0].upper);
    }

    #[test]
    fn interval_contains_mean_for_symmetric_draws() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for trial in 0..100 {
            let n = 400;
            let center = trial as f64;
            let draws: Vec<Vec<f64>> = (0..n / 2)
                .flat_map(|_| {
                    let d = rng.random::<f64>();
                    vec![vec![center + d], vec![center - d]]
                })
                .collect();
            let s = sample_from(
                draws,
                vec![vec![0.0, 0.0, 1.0]; n],
                vec![vec![0.0; 3]; n],
                vec![[1.0, 1.0, 1.0]; n],
                vec![0, 1, 2],
            );
            let out = summarize(&s, None).unwrap();
            let m = out.mu[0].mean;
            assert!(out.mu[0].lower.unwrap() <= m && m <= out.mu[0].upper.unwrap());
        }
    }

    #[test]
    fn relevance_join_and_mismatch() {
        let table = RelevanceTable {
            per_period: vec![vec![5.0, 3.0, 1.0]],
            total: vec![5.0, 3.0, 1.0],
            node_labels: vec![10, 20, 30],
        };
        let s = constant_sample(150);
        let out = summarize(&s, Some(&table)).unwrap();
        assert_eq!(out.nodes[0].relevance, Some(5.0));
        assert_eq!(out.nodes[2].relevance, Some(1.0));

        let bad = RelevanceTable {
            per_period: vec![vec![5.0, 3.0]],
            total: vec![5.0, 3.0],
            node_labels: vec![10, 99],
        };
        match summarize(&s, Some(&bad)) {
            Err(Error::RelevanceJoin(k, ids)) => {
                assert_eq!(k, 2);
                assert_eq!(ids, vec![20, 30]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spearman_basic_cases() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
        assert_relative_eq!(rank_correlation(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(rank_correlation(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            rank_correlation(&x, &[1.0, 1.0, 1.0, 1.0]),
            Err(Error::ConstantVector)
        ));
        assert!(rank_correlation(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn spearman_ties_match_rank_then_pearson_oracle() {
        let x = vec![1.0, 2.0, 2.0, 3.0, 5.0];
        let y = vec![2.0, 1.0, 4.0, 4.0, 6.0];
        // Brute-force oracle: assign average ranks by enumeration, then
        // Pearson on the ranks.
        let brute_ranks = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|&a| {
                    let below = v.iter().filter(|&&b| b < a).count() as f64;
                    let equal = v.iter().filter(|&&b| b == a).count() as f64;
                    below + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let rx = brute_ranks(&x);
        let ry = brute_ranks(&y);
        let mx = rx.iter().sum::<f64>() / 5.0;
        let my = ry.iter().sum::<f64>() / 5.0;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        let expect = cov / (vx.sqrt() * vy.sqrt());
        assert_relative_eq!(rank_correlation(&x, &y).unwrap(), expect, epsilon = 1e-12);
    }
}
