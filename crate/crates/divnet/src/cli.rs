//! Batch command-line front end: `transform`, `simulate`, `fit`,
//! `summarize`. Options may come from a TOML config file; explicit flags
//! win. Exit codes: 0 ok, 1 usage, 2 data validation, 3 numerical abort.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams};
use crate::network::{
    network_stats, parse_edge_list_path, read_network_dir, write_network_dir, DynamicNetwork,
    RowMask, Stage,
};
use crate::posterior::{summarize, Summary};
use crate::sampler::{run_chain, AcceptanceReport, ChainConfig, DrawSink, PosteriorSample};
use crate::synthetic::{generate, EffectSpec, MuSpec, SynthSpec};
use crate::transform::{
    entropy_change_distribution, relevance, rescale_to_absolute, to_observable, to_relative,
    top_k_subnetwork, RelevanceTable, RescaleReport,
};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "divnet",
    version,
    about = "Relative-exposure transforms and Bayesian drift/diversification fits for temporal weighted networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn an edge-list CSV into relative exposures plus diagnostics.
    Transform(TransformArgs),
    /// Draw a synthetic relative-exposure network from the model.
    Simulate(SimulateArgs),
    /// Run the Metropolis-within-Gibbs sampler on relative exposures.
    Fit(FitArgs),
    /// Summarize a finished chain directory.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Edge-list CSV with header period,lender,borrower,weight.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Floor for zero entries of active rows before normalization
    /// [default: 1e-8].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Keep only the k most relevant nodes before normalizing.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: Option<u64>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub periods: usize,
    /// RNG seed; drawn from entropy (and echoed) when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Drift value at the first period [default: 0].
    #[arg(long, default_value_t = 0.0)]
    pub mu_start: f64,
    /// Linear drift increment per period [default: 0].
    #[arg(long, default_value_t = 0.0)]
    pub mu_slope: f64,
    /// Draw the drift as a random walk instead of the linear ramp.
    #[arg(long, default_value_t = false)]
    pub random_walk_mu: bool,
    /// Innovation precision of the random-walk drift [default: 1].
    #[arg(long, default_value_t = 1.0)]
    pub tau_eta: f64,
    /// Precision of the i.i.d. sender effects [default: 1].
    #[arg(long, default_value_t = 1.0)]
    pub tau_theta: f64,
    /// Precision of the i.i.d. receiver effects [default: 1].
    #[arg(long, default_value_t = 1.0)]
    pub tau_gamma: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Relative-exposure network directory, or an edge-list CSV (which is
    /// row-normalized with the epsilon floor first).
    #[arg(long)]
    pub input: PathBuf,
    /// Output chain directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total sweeps [default: 400000].
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Discarded initial sweeps [default: 200000].
    #[arg(long)]
    pub burnin: Option<u64>,
    /// Keep every thin-th post-burn-in draw [default: 20].
    #[arg(long)]
    pub thin: Option<u64>,
    /// Sweeps used for proposal tuning [default: half of burn-in].
    #[arg(long)]
    pub adapt_window: Option<u64>,
    /// Sweeps per tuning batch [default: 100].
    #[arg(long)]
    pub adapt_batch: Option<u64>,
    /// Lower edge of the target acceptance band [default: 0.22].
    #[arg(long)]
    pub target_low: Option<f64>,
    /// Upper edge of the target acceptance band [default: 0.30].
    #[arg(long)]
    pub target_high: Option<f64>,
    /// Initial Gaussian proposal sd for every block [default: 0.1].
    #[arg(long)]
    pub proposal_sd: Option<f64>,
    /// RNG seed; drawn from entropy (and echoed) when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Likelihood worker threads; results are thread-count invariant
    /// [default: 1].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Epsilon floor applied when the input is an edge-list CSV
    /// [default: 1e-8].
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Chain directory produced by fit.
    #[arg(long)]
    pub chain: PathBuf,
    /// Relevance CSV produced by transform, for the association table.
    #[arg(long)]
    pub relevance: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Optional values loaded from a TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    hyper: FileHyper,
    chain: FileChain,
    transform: FileTransform,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileHyper {
    tau_mu: Option<f64>,
    a_eta: Option<f64>,
    b_eta: Option<f64>,
    a_theta: Option<f64>,
    b_theta: Option<f64>,
    a_gamma: Option<f64>,
    b_gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileChain {
    iterations: Option<u64>,
    burnin: Option<u64>,
    thin: Option<u64>,
    adapt_window: Option<u64>,
    adapt_batch: Option<u64>,
    target_low: Option<f64>,
    target_high: Option<f64>,
    proposal_sd: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileTransform {
    epsilon: Option<f64>,
    top_k: Option<u64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let parsed: FileConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok(parsed)
        }
    }
}

fn merge_hyper(file: &FileHyper) -> Hyperparams {
    let d = Hyperparams::default();
    Hyperparams {
        tau_mu: file.tau_mu.unwrap_or(d.tau_mu),
        a_eta: file.a_eta.unwrap_or(d.a_eta),
        b_eta: file.b_eta.unwrap_or(d.b_eta),
        a_theta: file.a_theta.unwrap_or(d.a_theta),
        b_theta: file.b_theta.unwrap_or(d.b_theta),
        a_gamma: file.a_gamma.unwrap_or(d.a_gamma),
        b_gamma: file.b_gamma.unwrap_or(d.b_gamma),
    }
}

fn merge_chain(args: &FitArgs, file: &FileChain) -> ChainConfig {
    let d = ChainConfig::default();
    let n_iterations = args.iterations.or(file.iterations).unwrap_or(d.n_iterations);
    let n_burnin = args.burnin.or(file.burnin).unwrap_or(d.n_burnin);
    let adapt_window = args.adapt_window.or(file.adapt_window).unwrap_or(n_burnin / 2);
    let seed = args.seed.or(file.seed).unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("no seed given; drawn from entropy: {s}");
        s
    });
    ChainConfig {
        n_iterations,
        n_burnin,
        thin: args.thin.or(file.thin).unwrap_or(d.thin),
        adapt_window,
        adapt_batch: args.adapt_batch.or(file.adapt_batch).unwrap_or(d.adapt_batch),
        target_low: args.target_low.or(file.target_low).unwrap_or(d.target_low),
        target_high: args.target_high.or(file.target_high).unwrap_or(d.target_high),
        seed,
        initial_proposal_sd: args.proposal_sd.or(file.proposal_sd).unwrap_or(d.initial_proposal_sd),
        threads: args.threads.or(file.threads).unwrap_or(d.threads),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform(args) => cmd_transform(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Summarize(args) => cmd_summarize(&args),
    }
}

fn write_relevance_csv(table: &RelevanceTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let t_count = table.per_period.len();
    let header: Vec<String> = ["node".to_string(), "total".to_string()]
        .into_iter()
        .chain((0..t_count).map(|t| format!("r{t}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, &node) in table.node_labels.iter().enumerate() {
        let mut row = vec![node.to_string(), format!("{}", table.total[i])];
        for t in 0..t_count {
            row.push(format!("{}", table.per_period[t][i]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn read_relevance_csv(path: &Path) -> Result<RelevanceTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::NoRecords)?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "node" || cols[1] != "total" {
        return Err(Error::Manifest(format!(
            "{}: expected header node,total,r0,..., got {header}",
            path.display()
        )));
    }
    let t_count = cols.len() - 2;
    let mut node_labels = Vec::new();
    let mut total = Vec::new();
    let mut per_node: Vec<Vec<f64>> = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() {
            return Err(Error::Parse {
                line: (k + 2) as u64,
                msg: format!("expected {} fields, got {}", cols.len(), parts.len()),
            });
        }
        let bad = |e: &dyn std::fmt::Display| Error::Parse { line: (k + 2) as u64, msg: e.to_string() };
        node_labels.push(parts[0].trim().parse::<u64>().map_err(|e| bad(&e))?);
        total.push(parts[1].trim().parse::<f64>().map_err(|e| bad(&e))?);
        let mut per = Vec::with_capacity(t_count);
        for p in &parts[2..] {
            per.push(p.trim().parse::<f64>().map_err(|e| bad(&e))?);
        }
        per_node.push(per);
    }
    if node_labels.is_empty() {
        return Err(Error::NoRecords);
    }
    let per_period = (0..t_count)
        .map(|t| per_node.iter().map(|row| row[t]).collect())
        .collect();
    Ok(RelevanceTable { per_period, total, node_labels })
}

fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    let epsilon = args.epsilon.or(file.transform.epsilon).unwrap_or(DEFAULT_EPSILON);
    let top_k = args.top_k.or(file.transform.top_k);

    let raw = parse_edge_list_path(&args.input)?;
    let stats = network_stats(&raw);
    let observable = to_observable(&raw)?;
    let (absolute, rescale_report): (DynamicNetwork, RescaleReport) =
        rescale_to_absolute(&observable)?;
    let table = relevance(&absolute);
    let core = match top_k {
        Some(k) => top_k_subnetwork(&absolute, &table, k as usize)?,
        None => absolute,
    };
    let (relative, mask) = to_relative(&core, epsilon)?;

    fs::create_dir_all(&args.out)?;
    write_network_dir(&relative, Some(&mask), &args.out.join("y"))?;

    let mut f = BufWriter::new(fs::File::create(args.out.join("rescale_report.json"))?);
    serde_json::to_writer_pretty(&mut f, &rescale_report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    for tr in &rescale_report.transitions {
        if tr.multimodal_warning {
            eprintln!(
                "warning: transition {}->{} ratio histogram is near-multimodal (mode {}, runner-up {:?})",
                tr.from, tr.to, tr.modal_ratio, tr.runner_up_ratio
            );
        }
        if tr.used_median_fallback {
            eprintln!(
                "note: transition {}->{} used the median fallback over {} ratios",
                tr.from, tr.to, tr.sample_size
            );
        }
    }

    write_relevance_csv(&table, &args.out.join("relevance.csv"))?;

    let mut w = BufWriter::new(fs::File::create(args.out.join("stats.csv"))?);
    writeln!(w, "period,label,edge_count,total_weight,relative_total")?;
    for s in &stats {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.period,
            raw.period_labels()[s.period],
            s.edge_count,
            s.total_weight,
            s.relative_total
        )?;
    }
    w.flush()?;

    if relative.n_periods() >= 2 {
        let deltas = entropy_change_distribution(&relative, &mask)?;
        let mut w = BufWriter::new(fs::File::create(args.out.join("entropy_change.csv"))?);
        writeln!(w, "period,node,delta_entropy")?;
        for (t, period) in deltas.iter().enumerate() {
            for &(i, d) in period {
                writeln!(w, "{},{},{}", t, relative.node_labels()[i], d)?;
            }
        }
        w.flush()?;
    }

    eprintln!(
        "transform: {} nodes, {} periods, {} active rows -> {}",
        relative.n_nodes(),
        relative.n_periods(),
        mask.n_active(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    n_nodes: usize,
    n_periods: usize,
    seed: u64,
    mu: Vec<f64>,
    theta: Vec<f64>,
    gamma: Vec<f64>,
    tau_eta: f64,
    tau_theta: f64,
    tau_gamma: f64,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let seed = args.seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("no seed given; drawn from entropy: {s}");
        s
    });
    let mu = if args.random_walk_mu {
        MuSpec::RandomWalk { tau_eta: args.tau_eta }
    } else {
        MuSpec::Explicit(
            (0..args.periods).map(|t| args.mu_start + args.mu_slope * t as f64).collect(),
        )
    };
    let spec = SynthSpec {
        n_nodes: args.nodes,
        n_periods: args.periods,
        mu,
        theta: EffectSpec::Iid { tau: args.tau_theta },
        gamma: EffectSpec::Iid { tau: args.tau_gamma },
        seed,
    };
    let (net, _mask, truth) = generate(&spec)?;

    fs::create_dir_all(&args.out)?;
    let mut w = BufWriter::new(fs::File::create(args.out.join("edgelist.csv"))?);
    writeln!(w, "period,lender,borrower,weight")?;
    for t in 0..net.n_periods() {
        let m = net.matrix(t);
        for i in 0..net.n_nodes() {
            for j in 0..net.n_nodes() {
                if m[[i, j]] > 0.0 {
                    writeln!(w, "{t},{},{},{}", net.node_labels()[i], net.node_labels()[j], m[[i, j]])?;
                }
            }
        }
    }
    w.flush()?;

    let truth_file = TruthFile {
        n_nodes: args.nodes,
        n_periods: args.periods,
        seed,
        mu: truth.mu.clone(),
        theta: truth.theta.clone(),
        gamma: truth.gamma().to_vec(),
        tau_eta: truth.tau_eta,
        tau_theta: truth.tau_theta,
        tau_gamma: truth.tau_gamma,
    };
    let mut f = BufWriter::new(fs::File::create(args.out.join("truth.json"))?);
    serde_json::to_writer_pretty(&mut f, &truth_file)?;
    f.write_all(b"\n")?;
    f.flush()?;
    eprintln!("simulate: seed {seed} -> {}", args.out.display());
    Ok(())
}

/// Streams every retained draw to four append-only CSV files
/// (`iteration,index,value`), flushed per record so interrupted runs keep
/// their partial output.
pub struct CsvDrawSink {
    mu: BufWriter<fs::File>,
    theta: BufWriter<fs::File>,
    gamma: BufWriter<fs::File>,
    tau: BufWriter<fs::File>,
}

impl CsvDrawSink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<fs::File>> {
            let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
            writeln!(w, "iteration,index,value")?;
            Ok(w)
        };
        Ok(Self {
            mu: open("mu.csv")?,
            theta: open("theta.csv")?,
            gamma: open("gamma.csv")?,
            tau: open("tau.csv")?,
        })
    }
}

impl DrawSink for CsvDrawSink {
    fn record(&mut self, iteration: u64, params: &ModelParams) -> Result<()> {
        for (t, v) in params.mu.iter().enumerate() {
            writeln!(self.mu, "{iteration},{t},{v}")?;
        }
        for (i, v) in params.theta.iter().enumerate() {
            writeln!(self.theta, "{iteration},{i},{v}")?;
        }
        for (j, v) in params.gamma().iter().enumerate() {
            writeln!(self.gamma, "{iteration},{j},{v}")?;
        }
        for (k, v) in [params.tau_eta, params.tau_theta, params.tau_gamma].iter().enumerate() {
            writeln!(self.tau, "{iteration},{k},{v}")?;
        }
        self.mu.flush()?;
        self.theta.flush()?;
        self.gamma.flush()?;
        self.tau.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    /// Build commit when provided at compile time, else the crate version.
    code_id: String,
    created_unix: u64,
    input: String,
    seed: u64,
    chain: ChainConfig,
    hyper: Hyperparams,
    epsilon: f64,
    n_nodes: usize,
    n_periods: usize,
    node_labels: Vec<u64>,
    period_labels: Vec<String>,
    n_draws: usize,
    elapsed_secs: f64,
    acceptance: AcceptanceReport,
}

fn load_fit_input(input: &Path, epsilon: f64) -> Result<(DynamicNetwork, RowMask)> {
    if input.is_dir() {
        let (net, mask) = read_network_dir(input)?;
        if net.stage() != Stage::Relative {
            return Err(Error::WrongStage { expected: Stage::Relative, got: net.stage() });
        }
        let mask = mask.unwrap_or_else(|| RowMask::from_network(&net));
        Ok((net, mask))
    } else {
        let raw = parse_edge_list_path(input)?;
        to_relative(&raw, epsilon)
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    let hyper = merge_hyper(&file.hyper);
    let chain = merge_chain(args, &file.chain);
    let epsilon = args.epsilon.or(file.transform.epsilon).unwrap_or(DEFAULT_EPSILON);
    chain.validate()?;
    hyper.validate()?;

    let (net, mask) = load_fit_input(&args.input, epsilon)?;
    fs::create_dir_all(&args.out)?;
    let mut sink = CsvDrawSink::create(&args.out)?;
    let sample = run_chain(&net, &mask, &hyper, &chain, &mut sink)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        code_id: option_env!("DIVNET_COMMIT")
            .unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
            .to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        input: args.input.display().to_string(),
        seed: chain.seed,
        chain: chain.clone(),
        hyper,
        epsilon,
        n_nodes: net.n_nodes(),
        n_periods: net.n_periods(),
        node_labels: net.node_labels().to_vec(),
        period_labels: net.period_labels().to_vec(),
        n_draws: sample.n_draws(),
        elapsed_secs: sample.elapsed_secs,
        acceptance: sample.acceptance.clone(),
    };
    let mut f = BufWriter::new(fs::File::create(args.out.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;

    eprintln!(
        "fit: {} draws in {:.1}s (seed {}) -> {}",
        sample.n_draws(),
        sample.elapsed_secs,
        chain.seed,
        args.out.display()
    );
    Ok(())
}

fn read_draw_csv(path: &Path) -> Result<(Vec<u64>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut iterations: Vec<u64> = Vec::new();
    let mut draws: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 {
            if line != "iteration,index,value" {
                return Err(Error::Manifest(format!(
                    "{}: unexpected header {line}",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = |what: &str| Error::Parse { line: (k + 1) as u64, msg: format!("bad {what}") };
        let iter: u64 = parts.next().ok_or_else(|| bad("iteration"))?.parse().map_err(|_| bad("iteration"))?;
        let index: usize = parts.next().ok_or_else(|| bad("index"))?.parse().map_err(|_| bad("index"))?;
        let value: f64 = parts.next().ok_or_else(|| bad("value"))?.parse().map_err(|_| bad("value"))?;
        if iterations.last() != Some(&iter) {
            iterations.push(iter);
            draws.push(Vec::new());
        }
        let row = draws.last_mut().unwrap();
        if index != row.len() {
            return Err(Error::Manifest(format!(
                "{}: index {index} out of order at line {}",
                path.display(),
                k + 1
            )));
        }
        row.push(value);
    }
    Ok((iterations, draws))
}

/// Reassembles a [`PosteriorSample`] from a chain directory.
pub fn load_chain_dir(dir: &Path) -> Result<PosteriorSample> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::EmptyChain);
    }
    let manifest: RunManifest = serde_json::from_reader(fs::File::open(manifest_path)?)?;
    let (saved_iterations, mu) = read_draw_csv(&dir.join("mu.csv"))?;
    let (_, theta) = read_draw_csv(&dir.join("theta.csv"))?;
    let (_, gamma) = read_draw_csv(&dir.join("gamma.csv"))?;
    let (_, tau_rows) = read_draw_csv(&dir.join("tau.csv"))?;
    if mu.is_empty() {
        return Err(Error::EmptyChain);
    }
    if mu.len() != theta.len() || mu.len() != gamma.len() || mu.len() != tau_rows.len() {
        return Err(Error::Manifest(format!(
            "draw files disagree on draw count: mu {}, theta {}, gamma {}, tau {}",
            mu.len(),
            theta.len(),
            gamma.len(),
            tau_rows.len()
        )));
    }
    let tau = tau_rows
        .into_iter()
        .map(|row| {
            if row.len() != 3 {
                return Err(Error::Manifest("tau.csv rows must hold 3 values".into()));
            }
            Ok([row[0], row[1], row[2]])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSample {
        config: manifest.chain,
        hyper: manifest.hyper,
        node_labels: manifest.node_labels,
        period_labels: manifest.period_labels,
        saved_iterations,
        mu,
        theta,
        gamma,
        tau,
        acceptance: manifest.acceptance,
        elapsed_secs: manifest.elapsed_secs,
    })
}

fn write_summary_outputs(summary: &Summary, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut f = BufWriter::new(fs::File::create(out.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut f, summary)?;
    f.write_all(b"\n")?;
    f.flush()?;

    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut w = BufWriter::new(fs::File::create(out.join("drift.csv"))?);
    writeln!(w, "t,label,mean,lo,hi")?;
    for row in &summary.drift {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.t,
            row.label,
            row.mean,
            fmt_opt(row.lower),
            fmt_opt(row.upper)
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(out.join("nodes.csv"))?);
    writeln!(w, "node,theta_mean,theta_var,gamma_mean,gamma_var,relevance")?;
    for n in &summary.nodes {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            n.node,
            n.theta_mean,
            n.theta_var,
            n.gamma_mean,
            n.gamma_var,
            fmt_opt(n.relevance)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let sample = load_chain_dir(&args.chain)?;
    let relevance_table = match &args.relevance {
        Some(path) => Some(read_relevance_csv(path)?),
        None => None,
    };
    let summary = summarize(&sample, relevance_table.as_ref())?;
    write_summary_outputs(&summary, &args.out)?;
    eprintln!(
        "summarize: {} draws, {} nodes -> {}",
        summary.n_draws,
        summary.nodes.len(),
        args.out.display()
    );
    Ok(())
}
