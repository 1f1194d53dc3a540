//! Temporal weighted-network data model: edge-list parsing into dense
//! adjacency matrices, per-period summary statistics, and directory
//! (de)serialization.
//!
//! Node ids from the input are remapped onto dense indices `0..N` in
//! ascending id order; the mapping is kept on the network so downstream
//! outputs can report original ids. Period indices must already be
//! contiguous `0..T` in the input — gaps are rejected rather than
//! compacted, because the drift prior assumes equally spaced periods.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline stage of the stored weights.
///
/// `Raw` is whatever arrived on disk; `Observable` is per-period
/// max-normalized; `Absolute` is inter-temporally rescaled; `Relative`
/// rows sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Observable,
    Absolute,
    Relative,
}

impl Stage {
    pub fn code(self) -> &'static str {
        match self {
            Stage::Raw => "E",
            Stage::Observable => "D",
            Stage::Absolute => "X",
            Stage::Relative => "Y",
        }
    }
}

/// One parsed edge-list row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRecord {
    pub period: usize,
    pub lender: u64,
    pub borrower: u64,
    pub weight: f64,
}

/// A sequence of dense N×N nonnegative weight matrices over a fixed node
/// set. Diagonals are identically zero. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    matrices: Vec<Array2<f64>>,
    node_labels: Vec<u64>,
    period_labels: Vec<String>,
    stage: Stage,
}

impl DynamicNetwork {
    /// Builds a network from preassembled matrices, validating the shared
    /// invariants (square, equal sizes, nonnegative, zero diagonal).
    pub fn new(
        matrices: Vec<Array2<f64>>,
        node_labels: Vec<u64>,
        period_labels: Vec<String>,
        stage: Stage,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::NoRecords);
        }
        let n = node_labels.len();
        if period_labels.len() != matrices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices but {} period labels",
                matrices.len(),
                period_labels.len()
            )));
        }
        for (t, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "period {t} matrix is {}x{}, node set has {n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for i in 0..n {
                if m[[i, i]] != 0.0 {
                    return Err(Error::DimensionMismatch(format!(
                        "period {t} has nonzero diagonal at node {i}"
                    )));
                }
                for j in 0..n {
                    let w = m[[i, j]];
                    if !w.is_finite() || w < 0.0 {
                        return Err(Error::DimensionMismatch(format!(
                            "period {t} entry ({i},{j}) = {w} is negative or non-finite"
                        )));
                    }
                }
            }
        }
        Ok(Self { matrices, node_labels, period_labels, stage })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn n_periods(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, t: usize) -> &Array2<f64> {
        &self.matrices[t]
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    pub fn node_labels(&self) -> &[u64] {
        &self.node_labels
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub(crate) fn map_matrices<F>(&self, stage: Stage, f: F) -> Self
    where
        F: Fn(usize, &Array2<f64>) -> Array2<f64>,
    {
        Self {
            matrices: self.matrices.iter().enumerate().map(|(t, m)| f(t, m)).collect(),
            node_labels: self.node_labels.clone(),
            period_labels: self.period_labels.clone(),
            stage,
        }
    }
}

/// Per-period row activity flags: `true` when row i of period t carries at
/// least one positive entry and so enters the likelihood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMask {
    active: Vec<Vec<bool>>,
}

impl RowMask {
    pub fn new(active: Vec<Vec<bool>>) -> Self {
        Self { active }
    }

    /// Derives the mask from a network: a row is inactive when every
    /// off-diagonal entry is zero.
    pub fn from_network(net: &DynamicNetwork) -> Self {
        let active = net
            .matrices()
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| m.row(i).iter().any(|&w| w > 0.0))
                    .collect()
            })
            .collect();
        Self { active }
    }

    pub fn is_active(&self, t: usize, i: usize) -> bool {
        self.active[t][i]
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().map(|p| p.iter().filter(|&&a| a).count()).sum()
    }

    /// (t, i) pairs of inactive rows, in period-major order.
    pub fn inactive_rows(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, period) in self.active.iter().enumerate() {
            for (i, &a) in period.iter().enumerate() {
                if !a {
                    out.push((t, i));
                }
            }
        }
        out
    }
}

/// Parses a `period,lender,borrower,weight` CSV stream into a dense
/// dynamic network tagged [`Stage::Raw`].
///
/// Duplicate (period, lender, borrower) rows, self-loops, nonpositive or
/// non-finite weights, and period gaps are all hard errors, reported with
/// the offending line number.
pub fn parse_edge_list<R: Read>(source: R) -> Result<DynamicNetwork> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);

    {
        let headers = reader.headers()?;
        let expect = ["period", "lender", "borrower", "weight"];
        let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
        if got != expect {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header period,lender,borrower,weight, got {}", got.join(",")),
            });
        }
    }

    let mut records: Vec<ExposureRecord> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| -> Result<&str> {
            row.get(idx).map(str::trim).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing field {name}"),
            })
        };
        let period: usize = field(0, "period")?.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad period: {e}"),
        })?;
        let lender: u64 = field(1, "lender")?.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad lender id: {e}"),
        })?;
        let borrower: u64 = field(2, "borrower")?.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad borrower id: {e}"),
        })?;
        let weight: f64 = field(3, "weight")?.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad weight: {e}"),
        })?;
        if !weight.is_finite() {
            return Err(Error::Parse { line, msg: format!("non-finite weight {weight}") });
        }
        if weight <= 0.0 {
            return Err(Error::Parse { line, msg: format!("nonpositive weight {weight}") });
        }
        if lender == borrower {
            return Err(Error::Parse { line, msg: format!("self-loop on node {lender}") });
        }
        records.push(ExposureRecord { period, lender, borrower, weight });
    }

    if records.is_empty() {
        return Err(Error::NoRecords);
    }

    // Dense node indices in ascending original-id order.
    let mut ids = BTreeMap::new();
    let mut max_period = 0usize;
    for r in &records {
        ids.entry(r.lender).or_insert(0usize);
        ids.entry(r.borrower).or_insert(0usize);
        max_period = max_period.max(r.period);
    }
    for (rank, (_, slot)) in ids.iter_mut().enumerate() {
        *slot = rank;
    }
    let node_labels: Vec<u64> = ids.keys().copied().collect();
    let n = node_labels.len();
    let t_count = max_period + 1;

    let mut matrices = vec![Array2::<f64>::zeros((n, n)); t_count];
    let mut seen = std::collections::HashSet::new();
    // csv line numbers: header is line 1, first record line 2.
    for (k, r) in records.iter().enumerate() {
        if !seen.insert((r.period, r.lender, r.borrower)) {
            return Err(Error::Parse {
                line: (k + 2) as u64,
                msg: format!("duplicate edge ({}, {}, {})", r.period, r.lender, r.borrower),
            });
        }
        let i = ids[&r.lender];
        let j = ids[&r.borrower];
        matrices[r.period][[i, j]] = r.weight;
    }

    for (t, m) in matrices.iter().enumerate() {
        if m.iter().all(|&w| w == 0.0) {
            return Err(Error::PeriodGap { missing: t, max: max_period });
        }
    }

    let period_labels = (0..t_count).map(|t| t.to_string()).collect();
    DynamicNetwork::new(matrices, node_labels, period_labels, Stage::Raw)
}

pub fn parse_edge_list_path(path: &Path) -> Result<DynamicNetwork> {
    parse_edge_list(fs::File::open(path)?)
}

/// Per-period connection counts and weights, with totals rescaled to the
/// first period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodStats {
    pub period: usize,
    pub edge_count: usize,
    pub total_weight: f64,
    pub relative_total: f64,
}

pub fn network_stats(net: &DynamicNetwork) -> Vec<PeriodStats> {
    let totals: Vec<(usize, f64)> = net
        .matrices()
        .iter()
        .map(|m| {
            let edges = m.iter().filter(|&&w| w > 0.0).count();
            let weight = m.iter().sum::<f64>();
            (edges, weight)
        })
        .collect();
    let anchor = totals[0].1;
    totals
        .into_iter()
        .enumerate()
        .map(|(period, (edge_count, total_weight))| PeriodStats {
            period,
            edge_count,
            total_weight,
            relative_total: if anchor > 0.0 { total_weight / anchor } else { 0.0 },
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct DirManifest {
    n_nodes: usize,
    n_periods: usize,
    node_labels: Vec<u64>,
    period_labels: Vec<String>,
    stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masked_rows: Option<Vec<(usize, usize)>>,
}

/// Writes the network as `manifest.json` plus one dense CSV matrix per
/// period. Floats use the shortest round-trip representation, so a
/// write/read cycle is bit-exact.
pub fn write_network_dir(net: &DynamicNetwork, mask: Option<&RowMask>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = DirManifest {
        n_nodes: net.n_nodes(),
        n_periods: net.n_periods(),
        node_labels: net.node_labels().to_vec(),
        period_labels: net.period_labels().to_vec(),
        stage: net.stage(),
        masked_rows: mask.map(|m| m.inactive_rows()),
    };
    let mut f = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;

    for (t, m) in net.matrices().iter().enumerate() {
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("period_{t:04}.csv")))?);
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[[i, j]])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_network_dir(dir: &Path) -> Result<(DynamicNetwork, Option<RowMask>)> {
    let manifest: DirManifest =
        serde_json::from_reader(fs::File::open(dir.join("manifest.json"))?)?;
    let n = manifest.n_nodes;
    let mut matrices = Vec::with_capacity(manifest.n_periods);
    for t in 0..manifest.n_periods {
        let text = fs::read_to_string(dir.join(format!("period_{t:04}.csv")))?;
        let mut m = Array2::<f64>::zeros((n, n));
        let mut rows = 0usize;
        for (i, line) in text.lines().enumerate() {
            if i >= n {
                return Err(Error::Manifest(format!("period {t}: more than {n} rows")));
            }
            for (j, cell) in line.split(',').enumerate() {
                if j >= n {
                    return Err(Error::Manifest(format!("period {t} row {i}: more than {n} columns")));
                }
                m[[i, j]] = cell.trim().parse().map_err(|e| {
                    Error::Manifest(format!("period {t} row {i} col {j}: {e}"))
                })?;
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Manifest(format!("period {t}: expected {n} rows, got {rows}")));
        }
        matrices.push(m);
    }
    let mask = manifest.masked_rows.map(|inactive| {
        let mut active = vec![vec![true; n]; manifest.n_periods];
        for (t, i) in inactive {
            active[t][i] = false;
        }
        RowMask::new(active)
    });
    let net = DynamicNetwork::new(matrices, manifest.node_labels, manifest.period_labels, manifest.stage)?;
    Ok((net, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse_str(s: &str) -> Result<DynamicNetwork> {
        parse_edge_list(s.as_bytes())
    }

    #[test]
    fn single_row_builds_two_node_network() {
        let net = parse_str("period,lender,borrower,weight\n0,1,2,0.5\n").unwrap();
        assert_eq!(net.n_nodes(), 2);
        assert_eq!(net.n_periods(), 1);
        assert_eq!(net.matrix(0), &array![[0.0, 0.5], [0.0, 0.0]]);
        assert_eq!(net.node_labels(), &[1, 2]);
        assert_eq!(net.stage(), Stage::Raw);
    }

    #[test]
    fn header_only_is_no_records() {
        let err = parse_str("period,lender,borrower,weight\n").unwrap_err();
        assert!(matches!(err, Error::NoRecords));
    }

    #[test]
    fn self_loop_is_rejected_with_line() {
        let err = parse_str("period,lender,borrower,weight\n0,1,1,0.3\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("self-loop"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_edge_is_rejected() {
        let err =
            parse_str("period,lender,borrower,weight\n0,1,2,0.5\n0,1,2,0.7\n").unwrap_err();
        assert!(format!("{err}").contains("duplicate edge"));
    }

    #[test]
    fn negative_and_non_finite_weights_are_rejected() {
        for bad in ["-1.0", "nan", "inf", "0"] {
            let err =
                parse_str(&format!("period,lender,borrower,weight\n0,1,2,{bad}\n")).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "weight {bad}: {err}");
        }
    }

    #[test]
    fn period_gap_is_an_error() {
        let err =
            parse_str("period,lender,borrower,weight\n0,1,2,0.5\n2,1,2,0.5\n").unwrap_err();
        assert!(matches!(err, Error::PeriodGap { missing: 1, max: 2 }));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let err =
            parse_str("period,lender,borrower,weight\n0,1,2,0.5\n0,x,3,0.5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stats_single_edge_relative_totals() {
        let net = parse_str("period,lender,borrower,weight\n0,1,2,0.5\n1,1,2,0.25\n").unwrap();
        let stats = network_stats(&net);
        assert_eq!(stats[0].edge_count, 1);
        assert_eq!(stats[0].relative_total, 1.0);
        assert_eq!(stats[1].relative_total, 0.5);
    }

    #[test]
    fn stats_zero_period_in_constructed_network() {
        let net = DynamicNetwork::new(
            vec![array![[0.0, 1.0], [0.0, 0.0]], Array2::zeros((2, 2))],
            vec![1, 2],
            vec!["a".into(), "b".into()],
            Stage::Raw,
        )
        .unwrap();
        let stats = network_stats(&net);
        assert_eq!(stats[1].edge_count, 0);
        assert_eq!(stats[1].total_weight, 0.0);
        assert_eq!(stats[1].relative_total, 0.0);
    }

    #[test]
    fn stats_match_brute_force_recount() {
        let net = parse_str(
            "period,lender,borrower,weight\n0,5,9,0.25\n0,9,5,1.5\n1,5,7,0.125\n1,7,9,2.0\n",
        )
        .unwrap();
        for (t, s) in network_stats(&net).iter().enumerate() {
            let m = net.matrix(t);
            let mut edges = 0;
            let mut total = 0.0;
            for i in 0..net.n_nodes() {
                for j in 0..net.n_nodes() {
                    if m[[i, j]] > 0.0 {
                        edges += 1;
                    }
                    total += m[[i, j]];
                }
            }
            assert_eq!(s.edge_count, edges);
            assert_eq!(s.total_weight, total);
        }
    }

    #[test]
    fn directory_round_trip_is_bit_exact() {
        let net = parse_str(
            "period,lender,borrower,weight\n0,1,2,0.1\n0,2,3,0.3000000000000004\n1,3,1,7e-23\n",
        )
        .unwrap();
        let mask = RowMask::from_network(&net);
        let dir = tempfile::tempdir().unwrap();
        write_network_dir(&net, Some(&mask), dir.path()).unwrap();
        let (back, back_mask) = read_network_dir(dir.path()).unwrap();
        assert_eq!(net, back);
        assert_eq!(Some(mask), back_mask);
    }

    #[test]
    fn mask_marks_zero_rows_inactive() {
        let net = parse_str("period,lender,borrower,weight\n0,1,2,0.5\n").unwrap();
        let mask = RowMask::from_network(&net);
        assert!(mask.is_active(0, 0));
        assert!(!mask.is_active(0, 1));
        assert_eq!(mask.n_active(), 1);
        assert_eq!(mask.inactive_rows(), vec![(0, 1)]);
    }
}
