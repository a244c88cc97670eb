//! Gaussian mixture fitting by expectation-maximization.
//!
//! Full per-component covariances, k-means++ seeded means refined by a few
//! Lloyd steps, covariances started at the global covariance and uniform
//! weights. Every M-step adds `epsilon` to the covariance diagonal. Several
//! restarts with derived seeds are run and the one with the highest final
//! log-likelihood wins.
//!
//! All reductions run sequentially in row order, so a fit is bit-reproducible
//! for a given input and seed.

mod kmeans;
mod rank;

pub use rank::{
    rank_difficulty, read_assignment_csv, ClusterRanking, ClusterSummary, Difficulty, DifficultyAssignment,
    InstanceDifficulty,
};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{argmax, compensated_sum};

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("need more points than components: n = {n}, k = {k}")]
    TooFewPoints { n: usize, k: usize },
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("rows have inconsistent or zero width")]
    BadShape,
    #[error("dimension mismatch: model has {expected}, data has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance of component {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub kmeans_steps: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { k: 3, seed: 0, n_init: 10, max_iter: 200, tol: 1e-6, epsilon: 1e-6, kmeans_steps: 10 }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<(), GmmError> {
        if self.k == 0 {
            return Err(GmmError::ZeroComponents);
        }
        if self.n_init == 0 {
            return Err(GmmError::InvalidParameter("n_init must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(GmmError::InvalidParameter(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(GmmError::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// A fitted mixture. Covariances are stored as nested rows (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
    pub restart: usize,
    pub restart_seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

/// Posterior component probabilities, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    pub rows: Vec<Vec<f64>>,
}

impl Responsibilities {
    /// Hard labels by argmax, lowest component index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(r).unwrap_or(0)).collect()
    }

    pub fn max_per_row(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect()
    }
}

/// Per-restart bookkeeping, kept so callers can inspect convergence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RestartTrace {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the initial parameters followed by one entry per EM iteration.
    pub log_likelihoods: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    pub restarts: Vec<RestartTrace>,
    pub warnings: Vec<String>,
}

/// Cholesky factors and log-determinants for fast density evaluation.
struct Factored {
    dim: usize,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major lower-triangular factors.
    lowers: Vec<Vec<f64>>,
    log_dets: Vec<f64>,
}

impl Factored {
    fn new(weights: &[f64], means: &[Vec<f64>], covs: &[DMatrix<f64>]) -> Result<Self, GmmError> {
        let dim = means.first().map_or(0, Vec::len);
        let mut lowers = Vec::with_capacity(covs.len());
        let mut log_dets = Vec::with_capacity(covs.len());
        for (k, cov) in covs.iter().enumerate() {
            let chol = cov.clone().cholesky().ok_or(GmmError::NotPositiveDefinite(k))?;
            let l = chol.l();
            log_dets.push(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>());
            lowers.push((0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|ij| l[ij]).collect());
        }
        Ok(Self {
            dim,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            means: means.to_vec(),
            lowers,
            log_dets,
        })
    }

    /// `ln w_k + ln N(x | mu_k, Sigma_k)` for every component.
    fn weighted_log_densities(&self, x: &[f64], out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        let d = self.dim;
        let norm = d as f64 * (2.0 * PI).ln();
        out.clear();
        scratch.resize(d, 0.0);
        for k in 0..self.means.len() {
            // Forward substitution: L z = x - mu.
            let l = &self.lowers[k];
            let mu = &self.means[k];
            let mut maha = 0.0;
            for i in 0..d {
                let mut v = x[i] - mu[i];
                for j in 0..i {
                    v -= l[i * d + j] * scratch[j];
                }
                v /= l[i * d + i];
                scratch[i] = v;
                maha += v * v;
            }
            out.push(self.log_weights[k] - 0.5 * (norm + self.log_dets[k] + maha));
        }
    }

    /// Posterior rows and per-row log-sum-exp for every point.
    fn posteriors(&self, data: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut lp = Vec::with_capacity(self.means.len());
        let mut scratch = Vec::with_capacity(self.dim);
        let mut rows = Vec::with_capacity(data.len());
        let mut lses = Vec::with_capacity(data.len());
        for x in data {
            self.weighted_log_densities(x, &mut lp, &mut scratch);
            let (post, lse) = posterior(&lp);
            rows.push(post);
            lses.push(lse);
        }
        (rows, lses)
    }
}

fn check_data(data: &[Vec<f64>]) -> Result<usize, GmmError> {
    let dim = data.first().map(Vec::len).unwrap_or(0);
    if dim == 0 || data.iter().any(|r| r.len() != dim) {
        return Err(GmmError::BadShape);
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GmmError::NonFinite);
    }
    Ok(dim)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Weighted covariance around `mean`, symmetric by construction, plus `epsilon` on the diagonal.
fn weighted_covariance(data: &[Vec<f64>], weights: Option<&[f64]>, mean: &[f64], total: f64, epsilon: f64) -> DMatrix<f64> {
    let d = mean.len();
    let mut acc = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for (n, x) in data.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[n]);
        for i in 0..d {
            diff[i] = x[i] - mean[i];
        }
        for i in 0..d {
            let wi = w * diff[i];
            for j in i..d {
                acc[i * d + j] += wi * diff[j];
            }
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / total;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += epsilon;
    }
    cov
}

fn column_mean(data: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| compensated_sum(data.iter().map(|x| x[j])) / data.len() as f64)
        .collect()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<DMatrix<f64>>,
}

/// Normalized posterior from weighted log densities, plus their log-sum-exp.
fn posterior(log_densities: &[f64]) -> (Vec<f64>, f64) {
    let max = log_densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_densities.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / total).collect(), max + total.ln())
}

fn e_step(data: &[Vec<f64>], params: &Params) -> Result<(Vec<Vec<f64>>, f64), GmmError> {
    let f = Factored::new(&params.weights, &params.means, &params.covs)?;
    let (resp, lls) = f.posteriors(data);
    Ok((resp, compensated_sum(lls)))
}

fn m_step(data: &[Vec<f64>], resp: &[Vec<f64>], k: usize, dim: usize, epsilon: f64) -> Params {
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let r: Vec<f64> = resp.iter().map(|row| row[c]).collect();
        let nk = compensated_sum(r.iter().copied()).max(10.0 * f64::EPSILON);
        let mean: Vec<f64> = (0..dim)
            .map(|j| compensated_sum(data.iter().zip(&r).map(|(x, w)| w * x[j])) / nk)
            .collect();
        covs.push(weighted_covariance(data, Some(&r), &mean, nk, epsilon));
        weights.push(nk / n);
        means.push(mean);
    }
    let total = compensated_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Params { weights, means, covs }
}

fn run_em(data: &[Vec<f64>], dim: usize, cfg: &GmmConfig, restart_seed: u64) -> Result<(Params, RestartTrace), GmmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed);
    let means = kmeans::init_means(data, cfg.k, cfg.kmeans_steps, &mut rng);
    let global_mean = column_mean(data, dim);
    let global_cov = weighted_covariance(data, None, &global_mean, data.len() as f64, cfg.epsilon);
    let mut params = Params {
        weights: vec![1.0 / cfg.k as f64; cfg.k],
        means,
        covs: vec![global_cov; cfg.k],
    };

    let (mut resp, mut ll) = e_step(data, &params)?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        params = m_step(data, &resp, cfg.k, dim, cfg.epsilon);
        iterations += 1;
        let (next_resp, next_ll) = e_step(data, &params)?;
        trace.push(next_ll);
        let improvement = next_ll - ll;
        resp = next_resp;
        let prev = ll;
        ll = next_ll;
        if improvement < cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok((
        params,
        RestartTrace { seed: restart_seed, iterations, converged, log_likelihoods: trace },
    ))
}

/// Sub-seeds for each restart, derived from the user seed.
pub fn restart_seeds(seed: u64, n_init: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_init).map(|_| rng.gen()).collect()
}

/// Rows in lexicographic order, so the fit does not depend on input order.
fn canonical_rows(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut rows = data.to_vec();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Fit a `cfg.k`-component mixture to `data` (one row per point).
///
/// Rows are put in a canonical order before fitting, so permuting the
/// input yields a bitwise-identical model.
pub fn fit_gmm(data: &[Vec<f64>], cfg: &GmmConfig) -> Result<GmmFit, GmmError> {
    cfg.validate()?;
    let n = data.len();
    if n <= cfg.k {
        return Err(GmmError::TooFewPoints { n, k: cfg.k });
    }
    let dim = check_data(data)?;
    let data = &canonical_rows(data)[..];

    let mut warnings = Vec::new();
    if data.iter().all(|r| r == &data[0]) {
        let msg = format!("all {n} points are identical; covariances reduce to epsilon * I");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut best: Option<(usize, Params, f64)> = None;
    let mut restarts = Vec::with_capacity(cfg.n_init);
    for (r, seed) in restart_seeds(cfg.seed, cfg.n_init).into_iter().enumerate() {
        let (params, trace) = run_em(data, dim, cfg, seed)?;
        let ll = *trace.log_likelihoods.last().expect("trace is never empty");
        if best.as_ref().is_none_or(|(_, _, b)| ll > *b) {
            best = Some((r, params, ll));
        }
        restarts.push(trace);
    }
    let (restart, params, ll) = best.expect("n_init >= 1");
    let trace = &restarts[restart];
    if !trace.converged {
        let msg = format!("best restart did not converge within {} iterations", cfg.max_iter);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let model = GmmModel {
        k: cfg.k,
        dim,
        weights: params.weights,
        means: params.means,
        covariances: params.covs.iter().map(from_matrix).collect(),
        seed: cfg.seed,
        restart,
        restart_seed: trace.seed,
        iterations: trace.iterations,
        converged: trace.converged,
        log_likelihood: ll,
    };
    Ok(GmmFit { model, restarts, warnings })
}

impl GmmModel {
    fn factored(&self) -> Result<Factored, GmmError> {
        let covs: Vec<DMatrix<f64>> = self.covariances.iter().map(|c| to_matrix(c)).collect();
        Factored::new(&self.weights, &self.means, &covs)
    }

    /// Posterior `p(k | x)` for each row, normalized in log space.
    pub fn responsibilities(&self, data: &[Vec<f64>]) -> Result<Responsibilities, GmmError> {
        if let Some(bad) = data.iter().find(|r| r.len() != self.dim) {
            return Err(GmmError::DimensionMismatch { expected: self.dim, got: bad.len() });
        }
        Ok(Responsibilities { rows: self.factored()?.posteriors(data).0 })
    }

    /// Hard cluster labels by argmax responsibility.
    pub fn assign_clusters(&self, data: &[Vec<f64>]) -> Result<Vec<usize>, GmmError> {
        Ok(self.responsibilities(data)?.hard_labels())
    }

    /// Total log-likelihood of `data` under the model.
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64, GmmError> {
        if let Some(bad) = data.iter().find(|r| r.len() != self.dim) {
            return Err(GmmError::DimensionMismatch { expected: self.dim, got: bad.len() });
        }
        Ok(compensated_sum(self.factored()?.posteriors(data).1))
    }
}
