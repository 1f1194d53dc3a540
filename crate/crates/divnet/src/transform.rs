//! Weight-matrix transforms: per-period max normalization, modal-ratio
//! rescaling onto a common absolute scale, relevance scores, top-k core
//! extraction, row normalization onto the simplex, and the entropy /
//! concentration diagnostics computed from relative rows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::network::{DynamicNetwork, RowMask, Stage};

/// Evidence for one inter-period rescaling step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaleTransition {
    /// Source period t of the ratio w(t)/w(t+1).
    pub from: usize,
    pub to: usize,
    /// Estimated most-likely ratio; period `to` is multiplied by this.
    pub modal_ratio: f64,
    pub sample_size: usize,
    /// Histogram bin width on the log-ratio axis (0 when the median
    /// fallback was taken).
    pub log_bin_width: f64,
    pub used_median_fallback: bool,
    /// Set when the runner-up bin count is within 10% of the modal bin.
    pub multimodal_warning: bool,
    pub runner_up_ratio: Option<f64>,
}

/// Modal-ratio rescaling evidence plus the cumulative per-period scale
/// factors applied to reach the absolute stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaleReport {
    pub transitions: Vec<RescaleTransition>,
    /// `cumulative[t]` multiplies period t; `cumulative[0] == 1`.
    pub cumulative: Vec<f64>,
}

/// Per-node activity totals (row plus column sums) per period and
/// aggregated over periods.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceTable {
    /// `per_period[t][i]`, dense node indices.
    pub per_period: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub node_labels: Vec<u64>,
}

/// Divides every period by its own maximum entry, so each period's largest
/// weight becomes exactly 1. Idempotent and scale-invariant per period.
pub fn to_observable(net: &DynamicNetwork) -> Result<DynamicNetwork> {
    for (t, m) in net.matrices().iter().enumerate() {
        if !m.iter().any(|&w| w > 0.0) {
            return Err(Error::AllZeroPeriod { period: t });
        }
    }
    Ok(net.map_matrices(Stage::Observable, |_, m| {
        let max = m.iter().cloned().fold(0.0f64, f64::max);
        m.mapv(|w| w / max)
    }))
}

fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

struct ModeEstimate {
    log_mode: f64,
    log_bin_width: f64,
    used_median_fallback: bool,
    multimodal_warning: bool,
    runner_up_log: Option<f64>,
}

/// Estimates the most likely log-ratio: Freedman-Diaconis histogram, modal
/// bin, then the median of the ratios inside that bin. Falls back to the
/// plain median when the sample is too small and fully distinct, or when
/// the bin width degenerates (which happens exactly when at least half the
/// sample shares one value — the median then is that modal value).
fn modal_log_ratio(log_ratios: &[f64]) -> ModeEstimate {
    let mut sorted = log_ratios.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();

    let all_distinct = sorted.windows(2).all(|w| w[0] != w[1]);
    if n < 10 && all_distinct {
        return ModeEstimate {
            log_mode: median_sorted(&sorted),
            log_bin_width: 0.0,
            used_median_fallback: true,
            multimodal_warning: false,
            runner_up_log: None,
        };
    }

    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    let span = sorted[n - 1] - sorted[0];
    if width <= 0.0 || span == 0.0 {
        return ModeEstimate {
            log_mode: median_sorted(&sorted),
            log_bin_width: width.max(0.0),
            used_median_fallback: true,
            multimodal_warning: false,
            runner_up_log: None,
        };
    }

    let n_bins = ((span / width).ceil() as usize).clamp(1, 100_000);
    let mut counts = vec![0usize; n_bins];
    for &x in &sorted {
        let mut b = ((x - sorted[0]) / width) as usize;
        if b >= n_bins {
            b = n_bins - 1;
        }
        counts[b] += 1;
    }
    let modal_bin = counts
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    let runner_up_bin = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != modal_bin)
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i);

    let in_bin: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&x| {
            let mut b = ((x - sorted[0]) / width) as usize;
            if b >= n_bins {
                b = n_bins - 1;
            }
            b == modal_bin
        })
        .collect();
    let log_mode = median_sorted(&in_bin);

    let multimodal_warning = runner_up_bin
        .map(|b| {
            let top = counts[modal_bin] as f64;
            let second = counts[b] as f64;
            top - second <= 0.1 * top && second > 0.0
        })
        .unwrap_or(false);
    let runner_up_log = runner_up_bin
        .filter(|&b| counts[b] > 0)
        .map(|b| sorted[0] + (b as f64 + 0.5) * width);

    ModeEstimate {
        log_mode,
        log_bin_width: width,
        used_median_fallback: false,
        multimodal_warning,
        runner_up_log,
    }
}

/// Rescales observable weights onto a common absolute scale.
///
/// For every transition t -> t+1 the ratios w_ij(t)/w_ij(t+1) over edges
/// positive in both periods are collected in log space and their most
/// likely value m_t is estimated; multiplying period t+1 by m_t leaves
/// those modal edges unchanged in absolute terms. Factors accumulate
/// across transitions with period 0 as the anchor.
pub fn rescale_to_absolute(net: &DynamicNetwork) -> Result<(DynamicNetwork, RescaleReport)> {
    if net.stage() != Stage::Observable {
        return Err(Error::WrongStage { expected: Stage::Observable, got: net.stage() });
    }
    let t_count = net.n_periods();
    let n = net.n_nodes();

    let mut transitions = Vec::new();
    let mut cumulative = vec![1.0f64; t_count];
    for t in 0..t_count.saturating_sub(1) {
        let a = net.matrix(t);
        let b = net.matrix(t + 1);
        let mut log_ratios = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[[i, j]] > 0.0 && b[[i, j]] > 0.0 {
                    log_ratios.push((a[[i, j]] / b[[i, j]]).ln());
                }
            }
        }
        if log_ratios.is_empty() {
            return Err(Error::NoCommonEdges { from: t, to: t + 1 });
        }
        let est = modal_log_ratio(&log_ratios);
        let modal_ratio = est.log_mode.exp();
        transitions.push(RescaleTransition {
            from: t,
            to: t + 1,
            modal_ratio,
            sample_size: log_ratios.len(),
            log_bin_width: est.log_bin_width,
            used_median_fallback: est.used_median_fallback,
            multimodal_warning: est.multimodal_warning,
            runner_up_ratio: est.runner_up_log.map(f64::exp),
        });
        cumulative[t + 1] = cumulative[t] * modal_ratio;
    }

    let factors = cumulative.clone();
    let rescaled = net.map_matrices(Stage::Absolute, |t, m| m.mapv(|w| w * factors[t]));
    Ok((rescaled, RescaleReport { transitions, cumulative }))
}

/// Row-sum plus column-sum of every node, per period and aggregated.
pub fn relevance(net: &DynamicNetwork) -> RelevanceTable {
    let n = net.n_nodes();
    let per_period: Vec<Vec<f64>> = net
        .matrices()
        .iter()
        .map(|m| {
            (0..n)
                .map(|i| m.row(i).sum() + m.column(i).sum())
                .collect()
        })
        .collect();
    let mut total = vec![0.0; n];
    for period in &per_period {
        for (i, r) in period.iter().enumerate() {
            total[i] += r;
        }
    }
    RelevanceTable { per_period, total, node_labels: net.node_labels().to_vec() }
}

/// Keeps the k nodes with largest aggregated relevance (ties broken by
/// smaller original node id) and the induced subgraph in every period.
pub fn top_k_subnetwork(
    net: &DynamicNetwork,
    table: &RelevanceTable,
    k: usize,
) -> Result<DynamicNetwork> {
    let n = net.n_nodes();
    if k < 1 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    if table.total.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "relevance table covers {} nodes, network has {n}",
            table.total.len()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        table.total[b]
            .partial_cmp(&table.total[a])
            .unwrap()
            .then(net.node_labels()[a].cmp(&net.node_labels()[b]))
    });
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    // Dense reindexing stays in ascending original-id order.
    keep.sort_by_key(|&i| net.node_labels()[i]);

    let labels: Vec<u64> = keep.iter().map(|&i| net.node_labels()[i]).collect();
    let matrices: Vec<Array2<f64>> = net
        .matrices()
        .iter()
        .map(|m| {
            let mut sub = Array2::<f64>::zeros((k, k));
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    sub[[a, b]] = m[[i, j]];
                }
            }
            sub
        })
        .collect();
    DynamicNetwork::new(matrices, labels, net.period_labels().to_vec(), net.stage())
}

/// Normalizes every active row onto the simplex.
///
/// Zero off-diagonal entries of rows that have at least one positive entry
/// are floored at `epsilon` before normalizing, so downstream log-densities
/// stay finite. Entirely zero rows are left as zeros and flagged inactive
/// in the returned mask.
pub fn to_relative(net: &DynamicNetwork, epsilon: f64) -> Result<(DynamicNetwork, RowMask)> {
    if epsilon < 0.0 {
        return Err(Error::NegativeEpsilon(epsilon));
    }
    let n = net.n_nodes();
    let mut active = Vec::with_capacity(net.n_periods());
    let out = net.map_matrices(Stage::Relative, |_, m| {
        let mut y = m.clone();
        for i in 0..n {
            let has_edge = (0..n).any(|j| j != i && y[[i, j]] > 0.0);
            if !has_edge {
                continue;
            }
            for j in 0..n {
                if j != i && y[[i, j]] == 0.0 {
                    y[[i, j]] = epsilon;
                }
            }
            let sum: f64 = (0..n).filter(|&j| j != i).map(|j| y[[i, j]]).sum();
            for j in 0..n {
                if j != i {
                    y[[i, j]] /= sum;
                }
            }
        }
        y
    });
    for m in out.matrices() {
        active.push((0..n).map(|i| m.row(i).iter().any(|&w| w > 0.0)).collect());
    }
    Ok((out, RowMask::new(active)))
}

/// Shannon entropy of a probability row in nats, with 0 log 0 taken as 0.
pub fn node_entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&y| y > 0.0).map(|&y| -y * y.ln()).sum()
}

/// Sum of squared shares; 1 for a single counterparty, 1/k for k equal ones.
pub fn herfindahl(row: &[f64]) -> f64 {
    row.iter().map(|&y| y * y).sum()
}

/// Per-transition entropy deltas `S_i(t+1) - S_i(t)` for every node active
/// in both periods. Returned as `(dense node index, delta)` pairs per
/// transition.
pub fn entropy_change_distribution(
    net: &DynamicNetwork,
    mask: &RowMask,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let t_count = net.n_periods();
    if t_count < 2 {
        return Err(Error::TooFewPeriods(t_count));
    }
    let n = net.n_nodes();
    let mut out = Vec::with_capacity(t_count - 1);
    for t in 0..t_count - 1 {
        let mut deltas = Vec::new();
        for i in 0..n {
            if mask.is_active(t, i) && mask.is_active(t + 1, i) {
                let before = node_entropy(net.matrix(t).row(i).as_slice().unwrap());
                let after = node_entropy(net.matrix(t + 1).row(i).as_slice().unwrap());
                deltas.push((i, after - before));
            }
        }
        out.push(deltas);
    }
    Ok(out)
}
