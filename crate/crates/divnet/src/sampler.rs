//! Metropolis-within-Gibbs engine: fixed sweep order (drift blocks, then
//! sender effects, then free receiver effects, then the three conjugate
//! precision draws), Gaussian proposals with per-parameter adaptive step
//! sizes during the first part of burn-in, thinned draw collection, and a
//! single seeded RNG stream consumed in sweep order so runs are exactly
//! reproducible. Worker threads only parallelize likelihood sums, which
//! reduce in a fixed order, so results are thread-count invariant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    logfc_gamma, logfc_mu, logfc_theta, log_posterior, sample_gamma, tau_eta_update,
    tau_gamma_update, tau_theta_update, DirichletData, Hyperparams, ModelParams,
};
use crate::network::{DynamicNetwork, RowMask};

pub const MIN_PROPOSAL_SD: f64 = 1e-6;
pub const MAX_PROPOSAL_SD: f64 = 1e3;

/// Chain schedule and tuning knobs.
///
/// Defaults follow the production protocol: 400k sweeps, half discarded as
/// burn-in, every 20th draw kept, and proposal variances tuned during the
/// first half of burn-in toward acceptance rates in [0.22, 0.30], frozen
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iterations: u64,
    pub n_burnin: u64,
    pub thin: u64,
    pub adapt_window: u64,
    pub adapt_batch: u64,
    pub target_low: f64,
    pub target_high: f64,
    pub seed: u64,
    pub initial_proposal_sd: f64,
    /// Worker threads for likelihood evaluation only; does not affect
    /// results.
    pub threads: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iterations: 400_000,
            n_burnin: 200_000,
            thin: 20,
            adapt_window: 100_000,
            adapt_batch: 100,
            target_low: 0.22,
            target_high: 0.30,
            seed: 0,
            initial_proposal_sd: 0.1,
            threads: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below total iterations {}",
                self.n_burnin, self.n_iterations
            )));
        }
        if self.adapt_window > self.n_burnin {
            return Err(Error::Config(format!(
                "adaptation window {} exceeds burn-in {}",
                self.adapt_window, self.n_burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.adapt_batch == 0 {
            return Err(Error::Config("adapt_batch must be at least 1".into()));
        }
        if !(self.target_low > 0.0 && self.target_high < 1.0 && self.target_low < self.target_high)
        {
            return Err(Error::Config(format!(
                "acceptance band [{}, {}] must satisfy 0 < low < high < 1",
                self.target_low, self.target_high
            )));
        }
        if !self.initial_proposal_sd.is_finite() || self.initial_proposal_sd <= 0.0 {
            return Err(Error::Config("initial proposal sd must be positive".into()));
        }
        Ok(())
    }

    pub fn n_saved(&self) -> u64 {
        (self.n_iterations - self.n_burnin) / self.thin
    }
}

/// One Metropolis-Hastings block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Mu(usize),
    Theta(usize),
    /// Free receiver-effect coordinate, index >= 1.
    GammaFree(usize),
}

/// Mutable sampler state: current parameters, per-block proposal scales and
/// acceptance counters, and the RNG stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: ModelParams,
    /// One sd per MH block, laid out mu | theta | free gamma.
    pub proposal_sd: Vec<f64>,
    pub accepts: Vec<u64>,
    pub proposals: Vec<u64>,
    pub batch_accepts: Vec<u64>,
    pub batch_proposals: Vec<u64>,
    pub post_window_accepts: Vec<u64>,
    pub post_window_proposals: Vec<u64>,
    pub iteration: u64,
    /// Toggled by the driver once adaptation has frozen, to split the
    /// acceptance bookkeeping.
    pub past_adaptation: bool,
    rng: ChaCha20Rng,
}

impl ChainState {
    /// Zero-initialized state: all latents 0, unit precisions, uniform
    /// initial proposal sds.
    pub fn init(n_periods: usize, n_nodes: usize, config: &ChainConfig) -> Self {
        let n_blocks = n_periods + n_nodes + (n_nodes - 1);
        Self {
            params: ModelParams::zeros(n_periods, n_nodes),
            proposal_sd: vec![config.initial_proposal_sd; n_blocks],
            accepts: vec![0; n_blocks],
            proposals: vec![0; n_blocks],
            batch_accepts: vec![0; n_blocks],
            batch_proposals: vec![0; n_blocks],
            post_window_accepts: vec![0; n_blocks],
            post_window_proposals: vec![0; n_blocks],
            iteration: 0,
            past_adaptation: false,
            rng: ChaCha20Rng::seed_from_u64(config.seed),
        }
    }

    pub fn block_index(&self, block: Block) -> usize {
        let t = self.params.n_periods();
        let n = self.params.n_nodes();
        match block {
            Block::Mu(s) => {
                debug_assert!(s < t);
                s
            }
            Block::Theta(k) => {
                debug_assert!(k < n);
                t + k
            }
            Block::GammaFree(l) => {
                debug_assert!(l >= 1 && l < n);
                t + n + (l - 1)
            }
        }
    }

    pub fn block_label(&self, index: usize) -> String {
        let t = self.params.n_periods();
        let n = self.params.n_nodes();
        if index < t {
            format!("mu[{index}]")
        } else if index < t + n {
            format!("theta[{}]", index - t)
        } else {
            format!("gamma[{}]", index - t - n + 1)
        }
    }
}

/// Acceptance rule for symmetric proposals: plain full-conditional ratio,
/// no Hastings correction. Non-finite proposal densities are rejected.
pub(crate) fn mh_accept(fc_proposal: f64, fc_current: f64, u: f64) -> bool {
    fc_proposal.is_finite() && u.ln() < fc_proposal - fc_current
}

/// One Metropolis-Hastings update of a single block. Draws exactly one
/// standard normal and one uniform from the chain RNG. Returns the accept
/// flag.
pub fn mh_update(
    state: &mut ChainState,
    data: &DirichletData,
    hyper: &Hyperparams,
    block: Block,
) -> Result<bool> {
    let idx = state.block_index(block);
    let sd = state.proposal_sd[idx];
    let current = match block {
        Block::Mu(s) => state.params.mu[s],
        Block::Theta(k) => state.params.theta[k],
        Block::GammaFree(l) => state.params.gamma()[l],
    };
    let step: f64 = state.rng.sample(StandardNormal);
    let proposal = current + sd * step;
    let u: f64 = state.rng.random();

    let (fc_current, fc_proposal) = match block {
        Block::Mu(s) => (
            logfc_mu(&state.params, data, hyper, s, current)?,
            logfc_mu(&state.params, data, hyper, s, proposal)?,
        ),
        Block::Theta(k) => (
            logfc_theta(&state.params, data, hyper, k, current)?,
            logfc_theta(&state.params, data, hyper, k, proposal)?,
        ),
        Block::GammaFree(l) => (
            logfc_gamma(&state.params, data, hyper, l, current)?,
            logfc_gamma(&state.params, data, hyper, l, proposal)?,
        ),
    };
    if !fc_current.is_finite() {
        return Err(Error::ChainAbort {
            what: format!("log full conditional of {block:?} at current state"),
            iteration: state.iteration,
        });
    }

    let accept = mh_accept(fc_proposal, fc_current, u);
    if accept {
        match block {
            Block::Mu(s) => state.params.mu[s] = proposal,
            Block::Theta(k) => state.params.theta[k] = proposal,
            Block::GammaFree(l) => state.params.set_gamma_free(l, proposal),
        }
    }
    state.proposals[idx] += 1;
    state.batch_proposals[idx] += 1;
    if state.past_adaptation {
        state.post_window_proposals[idx] += 1;
    }
    if accept {
        state.accepts[idx] += 1;
        state.batch_accepts[idx] += 1;
        if state.past_adaptation {
            state.post_window_accepts[idx] += 1;
        }
    }
    Ok(accept)
}

/// One full Gibbs sweep in the fixed order: every drift block, every
/// sender block, every free receiver block, then the three conjugate
/// precision draws.
pub fn gibbs_sweep(
    state: &mut ChainState,
    data: &DirichletData,
    hyper: &Hyperparams,
) -> Result<()> {
    let t_count = state.params.n_periods();
    let n = state.params.n_nodes();
    for s in 0..t_count {
        mh_update(state, data, hyper, Block::Mu(s))?;
    }
    for k in 0..n {
        mh_update(state, data, hyper, Block::Theta(k))?;
    }
    for l in 1..n {
        mh_update(state, data, hyper, Block::GammaFree(l))?;
    }
    let (shape, rate) = tau_eta_update(&state.params, hyper);
    state.params.tau_eta = sample_gamma(shape, rate, &mut state.rng);
    let (shape, rate) = tau_theta_update(&state.params, hyper);
    state.params.tau_theta = sample_gamma(shape, rate, &mut state.rng);
    let (shape, rate) = tau_gamma_update(&state.params, hyper);
    state.params.tau_gamma = sample_gamma(shape, rate, &mut state.rng);
    Ok(())
}

/// Applies one batch-tuning step to every block and resets the batch
/// counters: grow the sd by 1.25 above the band, shrink by 0.8 below it,
/// clamped to [1e-6, 1e3]. The driver calls this every `adapt_batch`
/// sweeps while inside the adaptation window.
pub fn adapt(state: &mut ChainState, config: &ChainConfig) {
    for idx in 0..state.proposal_sd.len() {
        let proposals = state.batch_proposals[idx];
        if proposals == 0 {
            continue;
        }
        let rate = state.batch_accepts[idx] as f64 / proposals as f64;
        if rate > config.target_high {
            state.proposal_sd[idx] *= 1.25;
        } else if rate < config.target_low {
            state.proposal_sd[idx] *= 0.8;
        }
        state.proposal_sd[idx] = state.proposal_sd[idx].clamp(MIN_PROPOSAL_SD, MAX_PROPOSAL_SD);
        state.batch_accepts[idx] = 0;
        state.batch_proposals[idx] = 0;
    }
}

/// Receives every retained draw as soon as it is produced.
pub trait DrawSink {
    fn record(&mut self, iteration: u64, params: &ModelParams) -> Result<()>;
}

/// Discards draws; the in-memory sample still collects them.
pub struct NullSink;

impl DrawSink for NullSink {
    fn record(&mut self, _iteration: u64, _params: &ModelParams) -> Result<()> {
        Ok(())
    }
}

/// Per-block acceptance summary of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub labels: Vec<String>,
    pub overall: Vec<f64>,
    /// Acceptance measured after the adaptation window only.
    pub post_adaptation: Vec<f64>,
    pub final_proposal_sd: Vec<f64>,
}

/// Thinned draw archive plus run metadata.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub config: ChainConfig,
    pub hyper: Hyperparams,
    pub node_labels: Vec<u64>,
    pub period_labels: Vec<String>,
    pub saved_iterations: Vec<u64>,
    /// Draw-major: `mu[draw][t]`.
    pub mu: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    /// Precision draws `[tau_eta, tau_theta, tau_gamma]`.
    pub tau: Vec<[f64; 3]>,
    pub acceptance: AcceptanceReport,
    pub elapsed_secs: f64,
}

impl PosteriorSample {
    pub fn n_draws(&self) -> usize {
        self.mu.len()
    }
}

/// Runs the full schedule: adaptation during the window, freezing, burn-in
/// discard, thinned collection. Deterministic given the seed.
pub fn run_chain(
    net: &DynamicNetwork,
    mask: &RowMask,
    hyper: &Hyperparams,
    config: &ChainConfig,
    sink: &mut (dyn DrawSink + Send),
) -> Result<PosteriorSample> {
    config.validate()?;
    hyper.validate()?;
    let data = DirichletData::new(net, mask)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_chain_inner(net, &data, hyper, config, sink))
}

fn run_chain_inner(
    net: &DynamicNetwork,
    data: &DirichletData,
    hyper: &Hyperparams,
    config: &ChainConfig,
    sink: &mut (dyn DrawSink + Send),
) -> Result<PosteriorSample> {
    let start = std::time::Instant::now();
    let mut state = ChainState::init(data.n_periods(), data.n_nodes(), config);

    let initial = log_posterior(&state.params, data, hyper)?;
    if !initial.is_finite() {
        return Err(Error::ChainAbort { what: "initial log posterior".into(), iteration: 0 });
    }

    let n_saved = config.n_saved() as usize;
    let mut mu = Vec::with_capacity(n_saved);
    let mut theta = Vec::with_capacity(n_saved);
    let mut gamma = Vec::with_capacity(n_saved);
    let mut tau = Vec::with_capacity(n_saved);
    let mut saved_iterations = Vec::with_capacity(n_saved);

    for iter in 0..config.n_iterations {
        state.iteration = iter;
        state.past_adaptation = iter >= config.adapt_window;
        gibbs_sweep(&mut state, data, hyper)?;
        if iter < config.adapt_window && (iter + 1).is_multiple_of(config.adapt_batch) {
            adapt(&mut state, config);
        }
        if iter >= config.n_burnin && (iter - config.n_burnin) % config.thin == config.thin - 1 {
            sink.record(iter, &state.params)?;
            mu.push(state.params.mu.clone());
            theta.push(state.params.theta.clone());
            gamma.push(state.params.gamma().to_vec());
            tau.push([state.params.tau_eta, state.params.tau_theta, state.params.tau_gamma]);
            saved_iterations.push(iter);
        }
    }

    let n_blocks = state.proposal_sd.len();
    let rate = |acc: &[u64], prop: &[u64], i: usize| {
        if prop[i] == 0 {
            f64::NAN
        } else {
            acc[i] as f64 / prop[i] as f64
        }
    };
    let acceptance = AcceptanceReport {
        labels: (0..n_blocks).map(|i| state.block_label(i)).collect(),
        overall: (0..n_blocks).map(|i| rate(&state.accepts, &state.proposals, i)).collect(),
        post_adaptation: (0..n_blocks)
            .map(|i| rate(&state.post_window_accepts, &state.post_window_proposals, i))
            .collect(),
        final_proposal_sd: state.proposal_sd.clone(),
    };

    Ok(PosteriorSample {
        config: config.clone(),
        hyper: *hyper,
        node_labels: net.node_labels().to_vec(),
        period_labels: net.period_labels().to_vec(),
        saved_iterations,
        mu,
        theta,
        gamma,
        tau,
        acceptance,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
