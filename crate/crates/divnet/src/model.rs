//! Latent parameterization, priors, log-likelihood, log-posterior and the
//! per-block log full conditionals.
//!
//! Every relative-exposure row is modelled as Dirichlet with
//! `log alpha_ij(t) = mu_t + theta_i + gamma_j` over the off-diagonal
//! entries, a random-walk prior on the drift `mu`, zero-mean Gaussian
//! priors on `theta` and on the free coordinates of `gamma`, and Gamma
//! priors on the three precisions. `gamma` is identified by the sum-to-zero
//! constraint: the first coordinate is always derived from the others.
//!
//! All densities are evaluated in log space through `ln_gamma`; the gamma
//! function itself is never exponentiated. Log full conditionals and the
//! log-posterior drop additive constants, but consistently, so that
//! differences agree across the two routes.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::network::{DynamicNetwork, RowMask};
use crate::par::sum_ordered;

/// Full latent state at one sampler iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    gamma: Vec<f64>,
    pub tau_eta: f64,
    pub tau_theta: f64,
    pub tau_gamma: f64,
}

impl ModelParams {
    /// All-zero state with unit precisions; the prior mode of the
    /// constrained parameterization.
    pub fn zeros(n_periods: usize, n_nodes: usize) -> Self {
        Self {
            mu: vec![0.0; n_periods],
            theta: vec![0.0; n_nodes],
            gamma: vec![0.0; n_nodes],
            tau_eta: 1.0,
            tau_theta: 1.0,
            tau_gamma: 1.0,
        }
    }

    /// Builds a state from explicit vectors; the first gamma coordinate is
    /// recomputed from the others so the constraint holds exactly.
    pub fn from_parts(
        mu: Vec<f64>,
        theta: Vec<f64>,
        gamma: Vec<f64>,
        tau_eta: f64,
        tau_theta: f64,
        tau_gamma: f64,
    ) -> Self {
        let mut p = Self { mu, theta, gamma, tau_eta, tau_theta, tau_gamma };
        p.reanchor_gamma();
        p
    }

    /// Like [`ModelParams::from_parts`] but keeps `gamma` exactly as given,
    /// bypassing the constraint. Useful for likelihood diagnostics on
    /// unconstrained configurations.
    pub fn from_parts_unconstrained(
        mu: Vec<f64>,
        theta: Vec<f64>,
        gamma: Vec<f64>,
        tau_eta: f64,
        tau_theta: f64,
        tau_gamma: f64,
    ) -> Self {
        Self { mu, theta, gamma, tau_eta, tau_theta, tau_gamma }
    }

    pub fn n_periods(&self) -> usize {
        self.mu.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.theta.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Sets a free gamma coordinate (index >= 1) and rederives the anchor.
    pub fn set_gamma_free(&mut self, l: usize, value: f64) {
        assert!(l >= 1 && l < self.gamma.len(), "gamma index {l} is not a free coordinate");
        self.gamma[l] = value;
        self.reanchor_gamma();
    }

    fn reanchor_gamma(&mut self) {
        let s: f64 = self.gamma[1..].iter().sum();
        self.gamma[0] = -s;
    }

    /// Sum over all gamma coordinates, folded in the same order used when
    /// deriving the anchor, so a constrained state returns exactly 0.0.
    pub fn gamma_sum(&self) -> f64 {
        self.gamma[0] + self.gamma[1..].iter().sum::<f64>()
    }
}

/// Fixed prior hyperparameters. All default to 0.01.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub tau_mu: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            tau_mu: 0.01,
            a_eta: 0.01,
            b_eta: 0.01,
            a_theta: 0.01,
            b_theta: 0.01,
            a_gamma: 0.01,
            b_gamma: 0.01,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tau_mu", self.tau_mu),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
            ("a_theta", self.a_theta),
            ("b_theta", self.b_theta),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hyperparameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Relative-exposure data prepared for repeated density evaluation: log
/// weights cached per entry, inactive rows excluded.
#[derive(Debug, Clone)]
pub struct DirichletData {
    n_nodes: usize,
    n_periods: usize,
    /// ln y per period; 0.0 placeholders on the diagonal and inactive rows.
    ln_y: Vec<ndarray::Array2<f64>>,
    active: Vec<Vec<bool>>,
    /// Ordered (t, i) pairs of active rows.
    pairs: Vec<(usize, usize)>,
}

impl DirichletData {
    pub fn new(net: &DynamicNetwork, mask: &RowMask) -> Result<Self> {
        let n = net.n_nodes();
        let t_count = net.n_periods();
        if n < 3 {
            return Err(Error::TooFewNodes(n));
        }
        let mut ln_y = Vec::with_capacity(t_count);
        let mut active = Vec::with_capacity(t_count);
        let mut pairs = Vec::new();
        for t in 0..t_count {
            let m = net.matrix(t);
            let mut ln_m = ndarray::Array2::<f64>::zeros((n, n));
            let mut act = Vec::with_capacity(n);
            for i in 0..n {
                let is_active = mask.is_active(t, i);
                act.push(is_active);
                if !is_active {
                    continue;
                }
                let mut sum = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let y = m[[i, j]];
                    if !y.is_finite() || y <= 0.0 {
                        return Err(Error::NonPositiveRow { t, i });
                    }
                    sum += y;
                    ln_m[[i, j]] = y.ln();
                }
                if (sum - 1.0).abs() > 1e-8 {
                    return Err(Error::RowNotNormalized { t, i, sum });
                }
                pairs.push((t, i));
            }
            ln_y.push(ln_m);
            active.push(act);
        }
        Ok(Self { n_nodes: n, n_periods: t_count, ln_y, active, pairs })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn is_active(&self, t: usize, i: usize) -> bool {
        self.active[t][i]
    }

    pub fn n_active_rows(&self) -> usize {
        self.pairs.len()
    }

    fn check_dims(&self, params: &ModelParams) -> Result<()> {
        if params.n_periods() != self.n_periods
            || params.n_nodes() != self.n_nodes
            || params.gamma.len() != self.n_nodes
        {
            return Err(Error::DimensionMismatch(format!(
                "params are ({} periods, {} nodes), data is ({}, {})",
                params.n_periods(),
                params.n_nodes(),
                self.n_periods,
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// `exp(mu_t + theta_i + gamma_j)`, the Dirichlet weight of pair (i, j) at
/// period t. Strictly increasing in each addend.
pub fn alpha(params: &ModelParams, t: usize, i: usize, j: usize) -> f64 {
    debug_assert_ne!(i, j, "self-pairs carry no Dirichlet weight");
    (params.mu[t] + params.theta[i] + params.gamma[j]).exp()
}

/// Log density of Dir(alpha) at y, in full (no constants dropped):
/// `ln G(sum a) - sum ln G(a_j) + sum (a_j - 1) ln y_j`.
pub fn log_dirichlet_row(y: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), alpha.len());
    let a_sum: f64 = alpha.iter().sum();
    let mut acc = ln_gamma(a_sum);
    for (&yj, &aj) in y.iter().zip(alpha) {
        acc += -ln_gamma(aj) + (aj - 1.0) * yj.ln();
    }
    acc
}

fn exp_gamma(params: &ModelParams) -> (Vec<f64>, f64) {
    let eg: Vec<f64> = params.gamma.iter().map(|&g| g.exp()).collect();
    let sum = eg.iter().sum();
    (eg, sum)
}

/// Full Dirichlet log density of row (t, i) given the row scale
/// `c = exp(mu_t + theta_i)` and cached `exp(gamma)`.
fn row_logdens(
    data: &DirichletData,
    t: usize,
    i: usize,
    c: f64,
    eg: &[f64],
    eg_sum: f64,
) -> f64 {
    let ln_y = &data.ln_y[t];
    let a_sum = c * (eg_sum - eg[i]);
    let mut acc = ln_gamma(a_sum);
    for j in 0..data.n_nodes {
        if j == i {
            continue;
        }
        let a = c * eg[j];
        acc += -ln_gamma(a) + (a - 1.0) * ln_y[[i, j]];
    }
    acc
}

/// Sum of the row log densities over every active (t, i) pair.
pub fn log_likelihood(params: &ModelParams, data: &DirichletData) -> Result<f64> {
    data.check_dims(params)?;
    let (eg, eg_sum) = exp_gamma(params);
    let pairs = &data.pairs;
    Ok(sum_ordered(pairs.len(), |k| {
        let (t, i) = pairs[k];
        let c = (params.mu[t] + params.theta[i]).exp();
        row_logdens(data, t, i, c, &eg, eg_sum)
    }))
}

/// Log posterior up to an additive constant. Keeps every term that depends
/// on any sampled parameter, including the `ln tau` factors of the
/// Gaussian prior normalizers.
pub fn log_posterior(params: &ModelParams, data: &DirichletData, hyper: &Hyperparams) -> Result<f64> {
    let mut lp = log_likelihood(params, data)?;

    // Random-walk prior on mu.
    lp += -0.5 * hyper.tau_mu * params.mu[0] * params.mu[0];
    for t in 1..params.n_periods() {
        let d = params.mu[t] - params.mu[t - 1];
        lp += 0.5 * params.tau_eta.ln() - 0.5 * params.tau_eta * d * d;
    }

    for &th in &params.theta {
        lp += 0.5 * params.tau_theta.ln() - 0.5 * params.tau_theta * th * th;
    }
    // Only the free gamma coordinates carry a prior; the anchor is derived.
    for &g in &params.gamma[1..] {
        lp += 0.5 * params.tau_gamma.ln() - 0.5 * params.tau_gamma * g * g;
    }

    lp += (hyper.a_eta - 1.0) * params.tau_eta.ln() - hyper.b_eta * params.tau_eta;
    lp += (hyper.a_theta - 1.0) * params.tau_theta.ln() - hyper.b_theta * params.tau_theta;
    lp += (hyper.a_gamma - 1.0) * params.tau_gamma.ln() - hyper.b_gamma * params.tau_gamma;
    Ok(lp)
}

/// Log full conditional of `mu_s` evaluated at `proposal`, up to an
/// additive constant. Touches only period-s data plus the random-walk
/// penalties gated on the position of s.
pub fn logfc_mu(
    params: &ModelParams,
    data: &DirichletData,
    hyper: &Hyperparams,
    s: usize,
    proposal: f64,
) -> Result<f64> {
    data.check_dims(params)?;
    let (eg, eg_sum) = exp_gamma(params);
    let n = data.n_nodes;
    let active = &data.active[s];
    let mut acc = sum_ordered(n, |i| {
        if active[i] {
            let c = (proposal + params.theta[i]).exp();
            row_logdens(data, s, i, c, &eg, eg_sum)
        } else {
            0.0
        }
    });
    if s == 0 {
        acc += -0.5 * hyper.tau_mu * proposal * proposal;
    } else {
        let d = proposal - params.mu[s - 1];
        acc += -0.5 * params.tau_eta * d * d;
    }
    if s + 1 < params.n_periods() {
        let d = params.mu[s + 1] - proposal;
        acc += -0.5 * params.tau_eta * d * d;
    }
    Ok(acc)
}

/// Log full conditional of `theta_k` at `proposal`: row k's data terms over
/// all periods plus the Gaussian penalty.
pub fn logfc_theta(
    params: &ModelParams,
    data: &DirichletData,
    hyper: &Hyperparams,
    k: usize,
    proposal: f64,
) -> Result<f64> {
    let _ = hyper;
    data.check_dims(params)?;
    let (eg, eg_sum) = exp_gamma(params);
    let t_count = data.n_periods;
    let mut acc = sum_ordered(t_count, |t| {
        if data.active[t][k] {
            let c = (params.mu[t] + proposal).exp();
            row_logdens(data, t, k, c, &eg, eg_sum)
        } else {
            0.0
        }
    });
    acc += -0.5 * params.tau_theta * proposal * proposal;
    Ok(acc)
}

/// Log full conditional of the free coordinate `gamma_l` (l >= 1) at
/// `proposal`, with the anchor coordinate rederived from the constraint.
///
/// A change to one free coordinate moves the anchor too, so every active
/// row's weight total shifts; only the data terms of the two affected
/// columns are kept beyond the row normalizers.
pub fn logfc_gamma(
    params: &ModelParams,
    data: &DirichletData,
    hyper: &Hyperparams,
    l: usize,
    proposal: f64,
) -> Result<f64> {
    let _ = hyper;
    data.check_dims(params)?;
    if l < 1 || l >= data.n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "gamma index {l} is not a free coordinate (1..{})",
            data.n_nodes
        )));
    }
    let mut gamma = params.gamma.clone();
    gamma[l] = proposal;
    let s: f64 = gamma[1..].iter().sum();
    gamma[0] = -s;
    let eg: Vec<f64> = gamma.iter().map(|&g| g.exp()).collect();
    let eg_sum: f64 = eg.iter().sum();

    let pairs = &data.pairs;
    let mut acc = sum_ordered(pairs.len(), |k| {
        let (t, i) = pairs[k];
        let c = (params.mu[t] + params.theta[i]).exp();
        let ln_y = &data.ln_y[t];
        let mut term = ln_gamma(c * (eg_sum - eg[i]));
        for j in [0usize, l] {
            if j != i {
                let a = c * eg[j];
                term += -ln_gamma(a) + (a - 1.0) * ln_y[[i, j]];
            }
        }
        term
    });
    acc += -0.5 * params.tau_gamma * proposal * proposal;
    Ok(acc)
}

/// Conjugate Gamma update for the drift-innovation precision:
/// shape `a + (T-1)/2`, rate `b + sum of squared increments / 2`.
pub fn tau_eta_update(params: &ModelParams, hyper: &Hyperparams) -> (f64, f64) {
    let t_count = params.n_periods();
    let ss: f64 = (1..t_count)
        .map(|t| {
            let d = params.mu[t] - params.mu[t - 1];
            d * d
        })
        .sum();
    (hyper.a_eta + (t_count as f64 - 1.0) / 2.0, hyper.b_eta + ss / 2.0)
}

/// Conjugate Gamma update for the theta precision: shape `a + N/2`,
/// rate `b + sum theta^2 / 2`.
pub fn tau_theta_update(params: &ModelParams, hyper: &Hyperparams) -> (f64, f64) {
    let ss: f64 = params.theta.iter().map(|&x| x * x).sum();
    (hyper.a_theta + params.n_nodes() as f64 / 2.0, hyper.b_theta + ss / 2.0)
}

/// Conjugate Gamma update for the gamma precision over the free
/// coordinates: shape `a + (N-1)/2`, rate `b + sum_{j>=2} gamma_j^2 / 2`.
pub fn tau_gamma_update(params: &ModelParams, hyper: &Hyperparams) -> (f64, f64) {
    let ss: f64 = params.gamma[1..].iter().map(|&x| x * x).sum();
    (hyper.a_gamma + (params.n_nodes() as f64 - 1.0) / 2.0, hyper.b_gamma + ss / 2.0)
}

/// Draws from Gamma(shape, rate). `rand_distr` is shape/scale, so the rate
/// is inverted.
pub fn sample_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "invalid Gamma(shape={shape}, rate={rate})");
    Gamma::new(shape, 1.0 / rate).expect("valid Gamma parameters").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{DynamicNetwork, Stage};
    use crate::transform::to_relative;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn dense_relative(n: usize, t: usize, seed: u64) -> (DynamicNetwork, RowMask) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mats = (0..t)
            .map(|_| {
                let mut m = ndarray::Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            m[[i, j]] = rng.random::<f64>() + 0.05;
                        }
                    }
                }
                m
            })
            .collect();
        let net = DynamicNetwork::new(
            mats,
            (0..n as u64).collect(),
            (0..t).map(|x| x.to_string()).collect(),
            Stage::Absolute,
        )
        .unwrap();
        to_relative(&net, 1e-8).unwrap()
    }

    fn random_params(n: usize, t: usize, seed: u64) -> ModelParams {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| -> f64 { (rng.random::<f64>() - 0.5) * 2.0 * scale };
        let mu = (0..t).map(|_| draw(0.8)).collect();
        let theta = (0..n).map(|_| draw(0.6)).collect();
        let gamma = (0..n).map(|_| draw(0.6)).collect();
        let mut p = ModelParams::from_parts(mu, theta, gamma, 1.0, 1.0, 1.0);
        p.tau_eta = 0.5 + rng.random::<f64>();
        p.tau_theta = 0.5 + rng.random::<f64>();
        p.tau_gamma = 0.5 + rng.random::<f64>();
        p
    }

    #[test]
    fn alpha_examples() {
        let mut p = ModelParams::zeros(1, 3);
        assert_eq!(alpha(&p, 0, 0, 1), 1.0);
        p.mu[0] = 1.0;
        p.theta[0] = -1.0;
        assert_eq!(alpha(&p, 0, 0, 1), 1.0);
        let p = ModelParams::from_parts_unconstrained(
            vec![0.5],
            vec![0.2, 0.0, 0.0],
            vec![0.0, -0.1, 0.0],
            1.0,
            1.0,
            1.0,
        );
        assert_relative_eq!(alpha(&p, 0, 0, 1), 0.6f64.exp(), epsilon = 1e-15);
        assert_relative_eq!(alpha(&p, 0, 0, 1), 1.8221188003905089, epsilon = 1e-12);
    }

    #[test]
    fn alpha_monotone_in_each_argument() {
        let base = ModelParams::from_parts_unconstrained(
            vec![0.1],
            vec![0.2, -0.3, 0.0],
            vec![0.05, -0.05, 0.0],
            1.0,
            1.0,
            1.0,
        );
        let a0 = alpha(&base, 0, 0, 1);
        for (field, idx) in [("mu", 0usize), ("theta", 0), ("gamma", 1)] {
            let mut p = base.clone();
            match field {
                "mu" => p.mu[idx] += 0.3,
                "theta" => p.theta[idx] += 0.3,
                _ => p.gamma[idx] += 0.3,
            }
            assert!(alpha(&p, 0, 0, 1) > a0);
        }
    }

    #[test]
    fn dirichlet_row_closed_forms() {
        // Uniform Dirichlet of dimension 3 has constant density Gamma(3) = 2.
        let y = [0.2, 0.3, 0.5];
        assert_relative_eq!(log_dirichlet_row(&y, &[1.0, 1.0, 1.0]), 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(
            log_dirichlet_row(&[0.5, 0.5], &[2.0, 2.0]),
            1.5f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dirichlet_row_matches_reference_library() {
        use statrs::distribution::{Continuous, Dirichlet};
        let alpha = vec![0.7, 2.3, 4.1];
        let y = vec![0.15, 0.35, 0.5];
        let reference = Dirichlet::new(alpha.clone()).unwrap();
        let ours = log_dirichlet_row(&y, &alpha);
        assert_relative_eq!(ours, reference.ln_pdf(&y.into()), epsilon = 1e-10);
    }

    /// Composite Simpson over [a, b].
    fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + h * k as f64);
        }
        acc * h / 3.0
    }

    #[test]
    fn dirichlet_row_normalizes_on_2_simplex() {
        // theta-substitution y = (1 - cos t)/2 removes the endpoint
        // singularities for a = 0.5. The 1e-7 cutoff keeps y strictly
        // positive in floats; the omitted tail mass is far below 1e-6.
        for a in [0.5, 1.0, 3.0] {
            let integral = simpson(1e-7, std::f64::consts::PI - 1e-7, 4000, |t| {
                let y = 0.5 * (1.0 - t.cos());
                let dens = log_dirichlet_row(&[y, 1.0 - y], &[a, a]).exp();
                dens * 0.5 * t.sin()
            });
            assert!((integral - 1.0).abs() < 1e-6, "a={a}: integral {integral}");
        }
    }

    #[test]
    fn likelihood_single_row_and_empty_mask() {
        let (net, _) = dense_relative(4, 1, 3);
        let only = RowMask::new(vec![vec![true, false, false, false]]);
        let data = DirichletData::new(&net, &only).unwrap();
        let p = random_params(4, 1, 5);
        let (eg, _) = exp_gamma(&p);
        let mut y_row = Vec::new();
        let mut a_row = Vec::new();
        for (j, &eg_j) in eg.iter().enumerate() {
            if j != 0 {
                y_row.push(net.matrix(0)[[0, j]]);
                a_row.push((p.mu[0] + p.theta[0]).exp() * eg_j);
            }
        }
        assert_relative_eq!(
            log_likelihood(&p, &data).unwrap(),
            log_dirichlet_row(&y_row, &a_row),
            epsilon = 1e-10
        );

        let none = RowMask::new(vec![vec![false; 4]]);
        let empty = DirichletData::new(&net, &none).unwrap();
        assert_eq!(log_likelihood(&p, &empty).unwrap(), 0.0);
    }

    #[test]
    fn likelihood_matches_brute_force_sum() {
        let (net, mask) = dense_relative(4, 2, 7);
        let data = DirichletData::new(&net, &mask).unwrap();
        let p = random_params(4, 2, 11);
        let mut expect = 0.0;
        for t in 0..2 {
            for i in 0..4 {
                let mut y_row = Vec::new();
                let mut a_row = Vec::new();
                for j in 0..4 {
                    if j != i {
                        y_row.push(net.matrix(t)[[i, j]]);
                        a_row.push((p.mu[t] + p.theta[i]).exp() * p.gamma()[j].exp());
                    }
                }
                expect += log_dirichlet_row(&y_row, &a_row);
            }
        }
        assert_relative_eq!(log_likelihood(&p, &data).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn data_rejects_degenerate_inputs() {
        let (net, mask) = dense_relative(2, 1, 13);
        assert!(matches!(DirichletData::new(&net, &mask), Err(Error::TooFewNodes(2))));

        // An active row containing an exact zero must be floored first.
        let mut m = ndarray::Array2::<f64>::zeros((3, 3));
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 0.5;
        m[[1, 2]] = 0.5;
        m[[2, 0]] = 0.5;
        m[[2, 1]] = 0.5;
        let net = DynamicNetwork::new(
            vec![m],
            vec![0, 1, 2],
            vec!["0".into()],
            Stage::Relative,
        )
        .unwrap();
        let mask = RowMask::from_network(&net);
        assert!(matches!(
            DirichletData::new(&net, &mask),
            Err(Error::NonPositiveRow { t: 0, i: 0 })
        ));
    }

    #[test]
    fn shear_in_theta_gamma_leaves_likelihood_unchanged() {
        let (net, mask) = dense_relative(5, 2, 17);
        let data = DirichletData::new(&net, &mask).unwrap();
        let p = random_params(5, 2, 19);
        let c = 0.37;
        let sheared = ModelParams::from_parts_unconstrained(
            p.mu.clone(),
            p.theta.iter().map(|&x| x + c).collect(),
            p.gamma().iter().map(|&x| x - c).collect(),
            p.tau_eta,
            p.tau_theta,
            p.tau_gamma,
        );
        assert_relative_eq!(
            log_likelihood(&p, &data).unwrap(),
            log_likelihood(&sheared, &data).unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn likelihood_invariant_under_joint_node_permutation() {
        let (net, mask) = dense_relative(5, 2, 23);
        let data = DirichletData::new(&net, &mask).unwrap();
        let p = random_params(5, 2, 29);
        let perm = [2usize, 0, 4, 1, 3]; // dense index -> new index
        let mut mats = Vec::new();
        for t in 0..2 {
            let m = net.matrix(t);
            let mut pm = ndarray::Array2::<f64>::zeros((5, 5));
            for i in 0..5 {
                for j in 0..5 {
                    pm[[perm[i], perm[j]]] = m[[i, j]];
                }
            }
            mats.push(pm);
        }
        let pnet = DynamicNetwork::new(
            mats,
            (0..5).collect(),
            net.period_labels().to_vec(),
            Stage::Relative,
        )
        .unwrap();
        let pmask = RowMask::from_network(&pnet);
        let pdata = DirichletData::new(&pnet, &pmask).unwrap();
        let mut theta = vec![0.0; 5];
        let mut gamma = vec![0.0; 5];
        for i in 0..5 {
            theta[perm[i]] = p.theta[i];
            gamma[perm[i]] = p.gamma()[i];
        }
        let pp = ModelParams::from_parts_unconstrained(
            p.mu.clone(),
            theta,
            gamma,
            p.tau_eta,
            p.tau_theta,
            p.tau_gamma,
        );
        assert_relative_eq!(
            log_likelihood(&p, &data).unwrap(),
            log_likelihood(&pp, &pdata).unwrap(),
            epsilon = 1e-8
        );
    }

    fn consistency_case(n: usize, t: usize, seed: u64) {
        let (net, mask) = dense_relative(n, t, seed);
        let data = DirichletData::new(&net, &mask).unwrap();
        let hyper = Hyperparams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xabcdef);
        for trial in 0..20 {
            let p = random_params(n, t, seed.wrapping_mul(31).wrapping_add(trial));
            let lp = log_posterior(&p, &data, &hyper).unwrap();
            let step = 0.4 * (rng.random::<f64>() - 0.5);

            // mu block
            let s = rng.random_range(0..t);
            let x0 = p.mu[s];
            let x1 = x0 + step;
            let mut q = p.clone();
            q.mu[s] = x1;
            let d_fc = logfc_mu(&p, &data, &hyper, s, x1).unwrap()
                - logfc_mu(&p, &data, &hyper, s, x0).unwrap();
            let d_lp = log_posterior(&q, &data, &hyper).unwrap() - lp;
            assert!((d_fc - d_lp).abs() < 1e-8, "mu: {d_fc} vs {d_lp}");

            // theta block
            let k = rng.random_range(0..n);
            let x0 = p.theta[k];
            let x1 = x0 + step;
            let mut q = p.clone();
            q.theta[k] = x1;
            let d_fc = logfc_theta(&p, &data, &hyper, k, x1).unwrap()
                - logfc_theta(&p, &data, &hyper, k, x0).unwrap();
            let d_lp = log_posterior(&q, &data, &hyper).unwrap() - lp;
            assert!((d_fc - d_lp).abs() < 1e-8, "theta: {d_fc} vs {d_lp}");

            // gamma block (anchor rederived on both routes)
            let l = rng.random_range(1..n);
            let x0 = p.gamma()[l];
            let x1 = x0 + step;
            let mut q = p.clone();
            q.set_gamma_free(l, x1);
            let d_fc = logfc_gamma(&p, &data, &hyper, l, x1).unwrap()
                - logfc_gamma(&p, &data, &hyper, l, x0).unwrap();
            let d_lp = log_posterior(&q, &data, &hyper).unwrap() - lp;
            assert!((d_fc - d_lp).abs() < 1e-8, "gamma: {d_fc} vs {d_lp}");

            // tau blocks through the conjugate shape/rate pairs
            for which in 0..3 {
                let mut q = p.clone();
                let (shape, rate, x0, x1) = match which {
                    0 => {
                        let (s_, r_) = tau_eta_update(&p, &hyper);
                        let x1 = p.tau_eta * (1.0 + 0.3 * rng.random::<f64>());
                        q.tau_eta = x1;
                        (s_, r_, p.tau_eta, x1)
                    }
                    1 => {
                        let (s_, r_) = tau_theta_update(&p, &hyper);
                        let x1 = p.tau_theta * (1.0 + 0.3 * rng.random::<f64>());
                        q.tau_theta = x1;
                        (s_, r_, p.tau_theta, x1)
                    }
                    _ => {
                        let (s_, r_) = tau_gamma_update(&p, &hyper);
                        let x1 = p.tau_gamma * (1.0 + 0.3 * rng.random::<f64>());
                        q.tau_gamma = x1;
                        (s_, r_, p.tau_gamma, x1)
                    }
                };
                let d_fc = (shape - 1.0) * (x1.ln() - x0.ln()) - rate * (x1 - x0);
                let d_lp = log_posterior(&q, &data, &hyper).unwrap() - lp;
                assert!((d_fc - d_lp).abs() < 1e-8, "tau{which}: {d_fc} vs {d_lp}");
            }
        }
    }

    #[test]
    fn full_conditionals_consistent_with_joint() {
        consistency_case(4, 2, 101);
        consistency_case(3, 1, 103);
        consistency_case(6, 3, 107);
    }

    #[test]
    fn logfc_mu_endpoint_indicators() {
        // With a single period only the tau_mu penalty applies; the
        // difference of the prior part must match the quadratic exactly
        // once the data terms are removed via a masked network.
        let (net, _) = dense_relative(3, 1, 31);
        let none = RowMask::new(vec![vec![false; 3]]);
        let data = DirichletData::new(&net, &none).unwrap();
        let hyper = Hyperparams { tau_mu: 2.0, ..Default::default() };
        let p = ModelParams::zeros(1, 3);
        let at = |x: f64| logfc_mu(&p, &data, &hyper, 0, x).unwrap();
        assert_relative_eq!(at(0.7), -0.5 * 2.0 * 0.49, epsilon = 1e-12);
        assert_relative_eq!(at(0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn logfc_mu_neighbor_penalties_by_position() {
        // With every row masked, only the random-walk penalties remain:
        // two for interior periods, one at each end.
        let (net, _) = dense_relative(3, 3, 33);
        let none = RowMask::new(vec![vec![false; 3]; 3]);
        let data = DirichletData::new(&net, &none).unwrap();
        let hyper = Hyperparams { tau_mu: 0.4, ..Default::default() };
        let mut p = random_params(3, 3, 35);
        p.tau_eta = 2.5;
        let x = 0.3;
        let first = logfc_mu(&p, &data, &hyper, 0, x).unwrap();
        assert_relative_eq!(
            first,
            -0.5 * 0.4 * x * x - 0.5 * 2.5 * (p.mu[1] - x).powi(2),
            epsilon = 1e-12
        );
        let interior = logfc_mu(&p, &data, &hyper, 1, x).unwrap();
        assert_relative_eq!(
            interior,
            -0.5 * 2.5 * ((x - p.mu[0]).powi(2) + (p.mu[2] - x).powi(2)),
            epsilon = 1e-12
        );
        let last = logfc_mu(&p, &data, &hyper, 2, x).unwrap();
        assert_relative_eq!(last, -0.5 * 2.5 * (x - p.mu[1]).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn logfc_theta_masked_everywhere_reduces_to_prior() {
        let (net, _) = dense_relative(4, 2, 37);
        // Node 2 inactive in both periods.
        let mut active = vec![vec![true; 4]; 2];
        active[0][2] = false;
        active[1][2] = false;
        let data = DirichletData::new(&net, &RowMask::new(active)).unwrap();
        let mut p = random_params(4, 2, 41);
        p.tau_theta = 1.7;
        let at = |x: f64| logfc_theta(&p, &data, &Hyperparams::default(), 2, x).unwrap();
        assert_relative_eq!(at(0.9), -0.5 * 1.7 * 0.81, epsilon = 1e-12);
    }

    #[test]
    fn gamma_constraint_is_exact() {
        let mut p = random_params(6, 2, 43);
        assert_eq!(p.gamma_sum(), 0.0);
        for (l, v) in [(1, 0.123), (3, -2.5), (5, 1e-7)] {
            p.set_gamma_free(l, v);
            assert_eq!(p.gamma_sum(), 0.0);
            assert_eq!(p.gamma()[l], v);
        }
    }

    #[test]
    fn logfc_gamma_zero_difference_at_current_value() {
        let (net, mask) = dense_relative(4, 2, 47);
        let data = DirichletData::new(&net, &mask).unwrap();
        let p = random_params(4, 2, 53);
        let hyper = Hyperparams::default();
        let v = logfc_gamma(&p, &data, &hyper, 2, p.gamma()[2]).unwrap();
        let w = logfc_gamma(&p, &data, &hyper, 2, p.gamma()[2]).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn tau_update_arithmetic() {
        let hyper = Hyperparams::default();
        let p = ModelParams::zeros(16, 100);
        let (shape, rate) = tau_eta_update(&p, &hyper);
        assert_relative_eq!(shape, 7.51, epsilon = 1e-12);
        assert_relative_eq!(rate, 0.01, epsilon = 1e-12);

        let mut p = ModelParams::zeros(4, 100);
        // sum theta^2 = 2
        p.theta[0] = 1.0;
        p.theta[1] = -1.0;
        let (shape, rate) = tau_theta_update(&p, &hyper);
        assert_relative_eq!(shape, 50.01, epsilon = 1e-12);
        assert_relative_eq!(rate, 1.01, epsilon = 1e-12);

        let (shape, _) = tau_gamma_update(&p, &hyper);
        assert_relative_eq!(shape, 0.01 + 99.0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_draws_match_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        let (shape, rate) = (7.51, 2.25);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_gamma(shape, rate, &mut rng)).collect();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let expect_mean = shape / rate;
        let sd = (shape.sqrt() / rate) / (n as f64).sqrt();
        assert!(
            (mean - expect_mean).abs() < 3.0 * sd,
            "mean {mean} vs {expect_mean} (3se {})",
            3.0 * sd
        );
    }

    #[test]
    fn posterior_mu_shift_changes_only_anchor_term() {
        let (net, _) = dense_relative(3, 3, 61);
        let none = RowMask::new(vec![vec![false; 3]; 3]);
        let data = DirichletData::new(&net, &none).unwrap();
        let hyper = Hyperparams { tau_mu: 0.8, ..Default::default() };
        let p = random_params(3, 3, 67);
        let c = 0.55;
        let mut q = p.clone();
        for m in &mut q.mu {
            *m += c;
        }
        let d = log_posterior(&q, &data, &hyper).unwrap() - log_posterior(&p, &data, &hyper).unwrap();
        let expect = -0.5 * hyper.tau_mu * ((p.mu[0] + c).powi(2) - p.mu[0].powi(2));
        assert_relative_eq!(d, expect, epsilon = 1e-9);
    }
}
