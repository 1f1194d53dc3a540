//! Forward simulation from the generative model, for oracle-based
//! validation and parameter-recovery studies. Rows are drawn independently
//! with per-row RNG substreams derived from (seed, period, node), so
//! generation is reproducible and order-independent.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::model::{alpha, ModelParams};
use crate::network::{DynamicNetwork, RowMask, Stage};

/// Drift trajectory choice.
#[derive(Debug, Clone)]
pub enum MuSpec {
    Explicit(Vec<f64>),
    /// Zero start, Gaussian increments with the given precision.
    RandomWalk { tau_eta: f64 },
}

/// Node-effect choice for either sender or receiver effects.
#[derive(Debug, Clone)]
pub enum EffectSpec {
    Explicit(Vec<f64>),
    /// I.i.d. zero-mean Gaussian with the given precision.
    Iid { tau: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub n_periods: usize,
    pub mu: MuSpec,
    pub theta: EffectSpec,
    pub gamma: EffectSpec,
    pub seed: u64,
}

const SMALL_SHAPE: f64 = 0.1;
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// One Dirichlet draw via normalized Gamma variables.
///
/// Shapes below 0.1 are drawn in log space through the shape-boost
/// identity (a Gamma(a) variable equals Gamma(a+1) times U^(1/a)), so
/// heavily concentrated rows keep their largest coordinate instead of
/// underflowing to a flat row. Exact zeros after exponentiation are
/// floored at 1e-300 before the final normalization.
pub fn dirichlet_draw<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    assert!(!alpha.is_empty() && alpha.iter().all(|&a| a > 0.0 && a.is_finite()));
    let ln_g: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a < SMALL_SHAPE {
                let boosted: f64 = Gamma::new(a + 1.0, 1.0).unwrap().sample(rng);
                let u: f64 = rng.random();
                boosted.max(UNDERFLOW_FLOOR).ln() + u.ln() / a
            } else {
                let g: f64 = Gamma::new(a, 1.0).unwrap().sample(rng);
                g.max(UNDERFLOW_FLOOR).ln()
            }
        })
        .collect();
    let m = ln_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return vec![1.0 / alpha.len() as f64; alpha.len()];
    }
    let mut y: Vec<f64> = ln_g.iter().map(|&lg| (lg - m).exp()).collect();
    for v in &mut y {
        if *v == 0.0 {
            *v = UNDERFLOW_FLOOR;
        }
    }
    let sum: f64 = y.iter().sum();
    for v in &mut y {
        *v /= sum;
    }
    y
}

fn row_rng(seed: u64, t: usize, i: usize, n_nodes: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Stream 0 is the latent-parameter stream; rows start at 1.
    rng.set_stream(1 + (t * n_nodes + i) as u64);
    rng
}

/// Simulates a relative-exposure network from the model and returns it with
/// its (all-active) row mask and the ground-truth parameters.
pub fn generate(spec: &SynthSpec) -> Result<(DynamicNetwork, RowMask, ModelParams)> {
    if spec.n_nodes < 3 {
        return Err(Error::TooFewNodes(spec.n_nodes));
    }
    if spec.n_periods == 0 {
        return Err(Error::Config("need at least one period".into()));
    }
    let n = spec.n_nodes;
    let t_count = spec.n_periods;
    let mut latent_rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let (mu, tau_eta) = match &spec.mu {
        MuSpec::Explicit(v) => {
            if v.len() != t_count {
                return Err(Error::DimensionMismatch(format!(
                    "mu has {} entries, expected {t_count}",
                    v.len()
                )));
            }
            (v.clone(), 1.0)
        }
        MuSpec::RandomWalk { tau_eta } => {
            if !tau_eta.is_finite() || *tau_eta <= 0.0 {
                return Err(Error::Config("tau_eta must be positive".into()));
            }
            let step = Normal::new(0.0, (1.0 / tau_eta).sqrt()).unwrap();
            let mut mu = vec![0.0f64; t_count];
            for t in 1..t_count {
                mu[t] = mu[t - 1] + step.sample(&mut latent_rng);
            }
            (mu, *tau_eta)
        }
    };

    let mut draw_effect = |spec: &EffectSpec, name: &str| -> Result<(Vec<f64>, f64)> {
        match spec {
            EffectSpec::Explicit(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} has {} entries, expected {n}",
                        v.len()
                    )));
                }
                Ok((v.clone(), 1.0))
            }
            EffectSpec::Iid { tau } => {
                if !tau.is_finite() || *tau <= 0.0 {
                    return Err(Error::Config(format!("{name} precision must be positive")));
                }
                let normal = Normal::new(0.0, (1.0 / tau).sqrt()).unwrap();
                Ok(((0..n).map(|_| normal.sample(&mut latent_rng)).collect(), *tau))
            }
        }
    };
    let (theta, tau_theta) = draw_effect(&spec.theta, "theta")?;
    let (mut gamma, tau_gamma) = draw_effect(&spec.gamma, "gamma")?;

    // Center, then anchor, so the truth sits in the identifiable space.
    let gmean: f64 = gamma.iter().sum::<f64>() / n as f64;
    for g in &mut gamma {
        *g -= gmean;
    }
    let truth = ModelParams::from_parts(mu, theta, gamma, tau_eta, tau_theta, tau_gamma);

    let mut matrices = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let mut rng = row_rng(spec.seed, t, i, n);
            let cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let alphas: Vec<f64> = cols.iter().map(|&j| alpha(&truth, t, i, j)).collect();
            let row = dirichlet_draw(&alphas, &mut rng);
            for (&j, &y) in cols.iter().zip(row.iter()) {
                m[[i, j]] = y;
            }
        }
        matrices.push(m);
    }
    let net = DynamicNetwork::new(
        matrices,
        (0..n as u64).collect(),
        (0..t_count).map(|t| t.to_string()).collect(),
        Stage::Relative,
    )?;
    let mask = RowMask::from_network(&net);
    Ok((net, mask, truth))
}
