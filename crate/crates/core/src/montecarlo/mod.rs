//! Monte Carlo sampling of the exact SINR `beta = y* (Y Y* + rho I)^-1 y`.
//!
//! Every trial draws its channel from its own ChaCha stream, selected by the
//! trial index under a common master seed. Results therefore do not depend
//! on how trials are scheduled across worker threads.

mod kernel;
mod stats;

pub use kernel::SinrWorkspace;

pub use stats::{
    empirical_stats, ks_distance_normal, quantile_sorted, EmpiricalStats, Histogram, StatsOptions,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detsolve::{solve_general, SolverOptions};
use crate::fluctuations::theta_squared;
use crate::profiles::VarianceProfile;
use crate::{Error, Result};

/// Symbol law of the channel entries `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolDistribution {
    /// Independent `N(0, 1/2)` real and imaginary parts; `E|W|^4 = 2`.
    ComplexGaussian,
    /// Uniform on `{+-1 +- i} / sqrt(2)`; `E|W|^4 = 1`.
    UnitModulusQpsk,
}

impl SymbolDistribution {
    pub fn fourth_moment(self) -> f64 {
        match self {
            SymbolDistribution::ComplexGaussian => 2.0,
            SymbolDistribution::UnitModulusQpsk => 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        match self {
            SymbolDistribution::ComplexGaussian => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
            SymbolDistribution::UnitModulusQpsk => {
                let bits: u8 = rng.random();
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let re = if bits & 1 == 0 { h } else { -h };
                let im = if bits & 2 == 0 { h } else { -h };
                Complex64::new(re, im)
            }
        }
    }
}

/// RNG for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `Sigma` (`N x (K+1)`) with `Sigma[n][k] = sigma_nk / sqrt(K) * W_nk`.
///
/// Entries are drawn column by column, user of interest first.
pub fn sample_channel<R: Rng + ?Sized>(
    profile: &VarianceProfile,
    dist: SymbolDistribution,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let n = profile.n_rx();
    let k = profile.n_users();
    let inv_sqrt_k = 1.0 / (k as f64).sqrt();
    let mut sigma = DMatrix::zeros(n, k + 1);
    for c in 0..=k {
        for r in 0..n {
            let w = dist.sample(rng);
            sigma[(r, c)] = w * (profile.get(r, c).sqrt() * inv_sqrt_k);
        }
    }
    sigma
}

/// Draws a channel as in [`sample_channel`] straight into `ws`.
///
/// The draw order matches [`sample_channel`], so the same RNG state gives
/// the same entries.
pub fn sample_into<R: Rng + ?Sized>(
    profile: &VarianceProfile,
    dist: SymbolDistribution,
    rng: &mut R,
    ws: &mut SinrWorkspace,
) {
    let n = profile.n_rx();
    let k = profile.n_users();
    let inv_sqrt_k = 1.0 / (k as f64).sqrt();
    for c in 0..=k {
        for r in 0..n {
            let w = dist.sample(rng) * (profile.get(r, c).sqrt() * inv_sqrt_k);
            ws.set(r, c, w.re, w.im);
        }
    }
}

/// Exact SINR of column 0 against columns `1..` of `sigma`, via a Cholesky
/// solve of `(Y Y* + rho I) x = y`.
pub fn sinr(sigma: &DMatrix<Complex64>, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if sigma.ncols() < 1 {
        return Err(Error::InvalidDimensions(
            "channel matrix has no columns".into(),
        ));
    }
    let mut ws = SinrWorkspace::new(sigma.nrows(), sigma.ncols());
    for c in 0..sigma.ncols() {
        for r in 0..sigma.nrows() {
            let v = sigma[(r, c)];
            ws.set(r, c, v.re, v.im);
        }
    }
    ws.sinr(rho)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(
            "rho",
            format!("must be positive, got {rho}"),
        ));
    }
    Ok(())
}

/// Monte Carlo draws of `beta` with the deterministic quantities they are compared to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrSampleSet {
    pub samples: Vec<f64>,
    pub seed: u64,
    pub profile_digest: String,
    pub rho: f64,
    pub n_users: usize,
    pub distribution: SymbolDistribution,
    pub beta_bar: f64,
    pub theta_sq: f64,
    /// `sqrt(K) (beta - beta_bar) / theta`.
    pub normalized: Vec<f64>,
}

impl SinrSampleSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        samples: Vec<f64>,
        seed: u64,
        profile_digest: String,
        rho: f64,
        n_users: usize,
        distribution: SymbolDistribution,
        beta_bar: f64,
        theta_sq: f64,
    ) -> Self {
        let normalized = normalize(&samples, beta_bar, theta_sq, n_users);
        Self {
            samples,
            seed,
            profile_digest,
            rho,
            n_users,
            distribution,
            beta_bar,
            theta_sq,
            normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One `beta` per line under a comment line and a header row.
    pub fn to_csv(&self, config_digest: &str) -> String {
        let mut out = format!(
            "# seed={} config_digest={} profile_digest={} rho={} n_users={} beta_bar={} theta_sq={}\nbeta\n",
            self.seed,
            config_digest,
            self.profile_digest,
            self.rho,
            self.n_users,
            self.beta_bar,
            self.theta_sq
        );
        for s in &self.samples {
            out.push_str(&format!("{s}\n"));
        }
        out
    }
}

pub fn normalize(samples: &[f64], beta_bar: f64, theta_sq: f64, n_users: usize) -> Vec<f64> {
    let scale = (n_users as f64).sqrt() / theta_sq.sqrt();
    samples.iter().map(|b| (b - beta_bar) * scale).collect()
}

/// SHA-256 of the profile's JSON encoding, hex encoded.
pub fn profile_digest(profile: &VarianceProfile) -> String {
    let json = serde_json::to_string(profile).expect("profile serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Runs `f(i)` for `i in 0..n` on `workers` threads and returns results in index order.
pub fn run_indexed<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let workers = workers.max(1);
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub n_trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub solver: SolverOptions,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            n_trials: 10_000,
            seed: 0,
            workers: 1,
            solver: SolverOptions::default(),
        }
    }
}

/// Draws `n_trials` SINRs and attaches `beta_bar` and `theta^2` for the profile.
pub fn run_experiment(
    profile: &VarianceProfile,
    rho: f64,
    dist: SymbolDistribution,
    opts: &ExperimentOptions,
) -> Result<SinrSampleSet> {
    if opts.n_trials == 0 {
        return Err(Error::invalid("n_trials", "must be at least 1"));
    }
    let det = solve_general(profile, rho, &opts.solver)?;
    let fluct = theta_squared(profile, &det, dist.fourth_moment())?;
    check_rho(rho)?;
    let (n, cols) = (profile.n_rx(), profile.n_users() + 1);
    let samples = run_indexed(opts.n_trials, opts.workers, |i| {
        let mut rng = trial_rng(opts.seed, i);
        let mut ws = SinrWorkspace::new(n, cols);
        sample_into(profile, dist, &mut rng, &mut ws);
        let beta = ws.sinr(rho)?;
        let bound = ws.user_energy() / rho;
        if beta > bound * (1.0 + 1e-10) {
            return Err(Error::Numerical(format!(
                "trial {i}: beta = {beta} exceeds ||y||^2 / rho = {bound}"
            )));
        }
        Ok(beta)
    })?;
    Ok(SinrSampleSet::new(
        samples,
        opts.seed,
        profile_digest(profile),
        rho,
        profile.n_users(),
        dist,
        det.beta_bar,
        fluct.theta_sq,
    ))
}
