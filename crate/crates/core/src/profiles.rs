//! Variance profiles for the supported channel models.
//!
//! A channel matrix `Sigma` is `N x (K+1)` with entries
//! `Sigma[n][k] = sigma[n][k] / sqrt(K) * W[n][k]`. Column 0 belongs to the
//! user of interest, columns `1..=K` to the interferers. [`VarianceProfile`]
//! stores the `sigma^2` array; [`SeparableProfile`] stores the product form
//! `sigma^2[n][k] = d[n] * d_tilde[k]`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `N x (K+1)` array of nonnegative entry variances, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct VarianceProfile {
    n_rx: usize,
    n_users: usize,
    sigma_sq: Vec<f64>,
}

#[derive(Deserialize)]
struct RawProfile {
    n_rx: usize,
    n_users: usize,
    sigma_sq: Vec<f64>,
}

impl TryFrom<RawProfile> for VarianceProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        VarianceProfile::new(raw.n_rx, raw.n_users, raw.sigma_sq)
    }
}

impl VarianceProfile {
    /// Builds a profile from a row-major `n_rx x (n_users + 1)` array.
    pub fn new(n_rx: usize, n_users: usize, sigma_sq: Vec<f64>) -> Result<Self> {
        if n_rx == 0 || n_users == 0 {
            return Err(Error::InvalidDimensions(format!(
                "n_rx = {n_rx}, n_users = {n_users}; both must be positive"
            )));
        }
        let expected = n_rx * (n_users + 1);
        if sigma_sq.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "sigma_sq length",
                expected,
                actual: sigma_sq.len(),
            });
        }
        if let Some(bad) = sigma_sq.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(
                "sigma_sq",
                format!("entries must be finite and nonnegative, found {bad}"),
            ));
        }
        Ok(Self {
            n_rx,
            n_users,
            sigma_sq,
        })
    }

    /// Builds a profile entry by entry; `f(n, k)` with `k = 0` the user of interest.
    pub fn from_fn(n_rx: usize, n_users: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut sigma_sq = Vec::with_capacity(n_rx * (n_users + 1));
        for n in 0..n_rx {
            for k in 0..=n_users {
                sigma_sq.push(f(n, k));
            }
        }
        Self::new(n_rx, n_users, sigma_sq)
    }

    /// Number of receive dimensions `N`.
    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    /// Number of interferers `K`; the profile has `K + 1` columns.
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.sigma_sq[n * (self.n_users + 1) + k]
    }

    /// Row `n`, all `K + 1` columns.
    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.n_users + 1;
        &self.sigma_sq[n * w..(n + 1) * w]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sigma_sq
    }

    /// Diagonal of `D_k`.
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rx).map(move |n| self.get(n, k))
    }

    /// `sigma_max^2`, the largest entry.
    pub fn sigma_max_sq(&self) -> f64 {
        self.sigma_sq.iter().copied().fold(0.0, f64::max)
    }

    /// `(1/K) tr D_k`.
    pub fn column_trace(&self, k: usize) -> f64 {
        self.column(k).sum::<f64>() / self.n_users as f64
    }

    /// Attempts to factor the profile as `d[n] * d_tilde[k]` with `d[0] = 1`.
    ///
    /// Returns `None` if `sigma^2[0][0]` is zero or some entry deviates from
    /// the product form by more than `rel_tol`.
    pub fn factor_separable(&self, rel_tol: f64) -> Option<SeparableProfile> {
        let corner = self.get(0, 0);
        if corner <= 0.0 {
            return None;
        }
        let d_tilde: Vec<f64> = self.row(0).to_vec();
        let d: Vec<f64> = self.column(0).map(|v| v / corner).collect();
        for n in 0..self.n_rx {
            for k in 0..=self.n_users {
                let prod = d[n] * d_tilde[k];
                let v = self.get(n, k);
                if (prod - v).abs() > rel_tol * v.abs().max(prod.abs()) {
                    return None;
                }
            }
        }
        SeparableProfile::new(d, d_tilde).ok()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Product-form profile `sigma^2[n][k] = d[n] * d_tilde[k]`.
///
/// `d_tilde[0]` is the power factor of the user of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeparable")]
pub struct SeparableProfile {
    d: Vec<f64>,
    d_tilde: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeparable {
    d: Vec<f64>,
    d_tilde: Vec<f64>,
}

impl TryFrom<RawSeparable> for SeparableProfile {
    type Error = Error;

    fn try_from(raw: RawSeparable) -> Result<Self> {
        SeparableProfile::new(raw.d, raw.d_tilde)
    }
}

impl SeparableProfile {
    pub fn new(d: Vec<f64>, d_tilde: Vec<f64>) -> Result<Self> {
        if d.is_empty() || d_tilde.len() < 2 {
            return Err(Error::InvalidDimensions(format!(
                "separable profile needs N >= 1 and K + 1 >= 2 (got {} and {})",
                d.len(),
                d_tilde.len()
            )));
        }
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "d",
                format!("entries must be positive, found {bad}"),
            ));
        }
        if let Some(bad) = d_tilde.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "d_tilde",
                format!("entries must be positive, found {bad}"),
            ));
        }
        Ok(Self { d, d_tilde })
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// All `K + 1` column factors, index 0 first.
    pub fn d_tilde(&self) -> &[f64] {
        &self.d_tilde
    }

    /// Interferer column factors `d_tilde[1..=K]`.
    pub fn interferer_powers(&self) -> &[f64] {
        &self.d_tilde[1..]
    }

    pub fn n_rx(&self) -> usize {
        self.d.len()
    }

    pub fn n_users(&self) -> usize {
        self.d_tilde.len() - 1
    }

    pub fn to_variance_profile(&self) -> VarianceProfile {
        let sigma_sq = self
            .d
            .iter()
            .flat_map(|dn| self.d_tilde.iter().map(move |dk| dn * dk))
            .collect();
        VarianceProfile::new(self.n_rx(), self.n_users(), sigma_sq)
            .expect("positive factors give a valid profile")
    }

    /// Rescales so that `d[0] = 1`, moving the scale into `d_tilde`.
    pub fn canonical(&self) -> Self {
        let s = self.d[0];
        Self {
            d: self.d.iter().map(|v| v / s).collect(),
            d_tilde: self.d_tilde.iter().map(|v| v * s).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Which branch of the non-degeneracy condition on the variance holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum A4Branch {
    FourthMomentExceedsOne,
    CrossTracePositive,
    Both,
    Neither,
}

/// Runtime check of the boundedness, column-trace and non-degeneracy assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `sigma_max^2`.
    pub a2_sigma_max: f64,
    /// `min_k (1/K) tr D_k` over all `K + 1` columns.
    pub a3_min_column_trace: f64,
    pub a4_branch: A4Branch,
    /// `(1/K^2) tr(D_0 * sum_{k>=1} D_k)`.
    pub a4_cross_trace: f64,
}

impl AssumptionReport {
    pub fn a2_holds(&self) -> bool {
        self.a2_sigma_max.is_finite()
    }

    pub fn a3_holds(&self) -> bool {
        self.a3_min_column_trace > 0.0
    }

    pub fn a4_holds(&self) -> bool {
        self.a4_branch != A4Branch::Neither
    }
}

pub fn check_assumptions(profile: &VarianceProfile, fourth_moment: f64) -> AssumptionReport {
    let k = profile.n_users();
    let a3_min_column_trace = (0..=k)
        .map(|c| profile.column_trace(c))
        .fold(f64::INFINITY, f64::min);
    let a4_cross_trace = (0..profile.n_rx())
        .map(|n| {
            let row = profile.row(n);
            row[0] * row[1..].iter().sum::<f64>()
        })
        .sum::<f64>()
        / (k * k) as f64;
    let a4_branch = match (fourth_moment > 1.0, a4_cross_trace > 0.0) {
        (true, true) => A4Branch::Both,
        (true, false) => A4Branch::FourthMomentExceedsOne,
        (false, true) => A4Branch::CrossTracePositive,
        (false, false) => A4Branch::Neither,
    };
    AssumptionReport {
        a2_sigma_max: profile.sigma_max_sq(),
        a3_min_column_trace,
        a4_branch,
        a4_cross_trace,
    }
}

/// i.i.d. entries of variance `1/N`: `sigma^2 = K/N` everywhere.
pub fn build_iid_profile(n_rx: usize, n_users: usize) -> Result<VarianceProfile> {
    if n_rx == 0 || n_users == 0 {
        return Err(Error::InvalidDimensions(format!(
            "n_rx = {n_rx}, n_users = {n_users}; both must be positive"
        )));
    }
    let v = n_users as f64 / n_rx as f64;
    VarianceProfile::new(n_rx, n_users, vec![v; n_rx * (n_users + 1)])
}

/// Kronecker MIMO channel with receive-correlation eigenvalues `lambda` and
/// source powers `powers = [p_0, .., p_K]`.
pub fn build_mimo_kronecker(lambda: &[f64], powers: &[f64]) -> Result<SeparableProfile> {
    if lambda.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("lambda", "eigenvalues must be positive"));
    }
    if powers.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("powers", "powers must be positive"));
    }
    SeparableProfile::new(lambda.to_vec(), powers.to_vec())
}

/// Eigenvalues (ascending) of the `N x N` correlation matrix `[a^|m-n|]`.
pub fn exponential_correlation_eigenvalues(n: usize, a: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimensions(
            "correlation matrix size must be positive".into(),
        ));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(
            "correlation",
            format!("must lie in (0, 1), got {a}"),
        ));
    }
    let psi = DMatrix::from_fn(n, n, |i, j| a.powi(i.abs_diff(j) as i32));
    let mut eig = SymmetricEigen::new(psi).eigenvalues.as_slice().to_vec();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// CDMA on flat fading: i.i.d. signatures of variance `1/N` and powers `p`.
pub fn build_cdma_flat(n_rx: usize, powers: &[f64]) -> Result<SeparableProfile> {
    if n_rx == 0 || powers.len() < 2 {
        return Err(Error::InvalidDimensions(
            "need n_rx >= 1 and at least two users".into(),
        ));
    }
    let scale = (powers.len() - 1) as f64 / n_rx as f64;
    SeparableProfile::new(vec![1.0; n_rx], powers.iter().map(|p| scale * p).collect())
}

/// `|h(e^{2 i pi n / N})|^2 / ||g||^2` for `n = 0..N`, with `h(z) = sum_l g_l z^-l`.
pub fn normalized_frequency_response(taps: &[Complex64], n_bins: usize) -> Result<Vec<f64>> {
    let energy: f64 = taps.iter().map(|g| g.norm_sqr()).sum();
    if taps.is_empty() || !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::invalid(
            "taps",
            "tap vector must be nonzero and finite",
        ));
    }
    let nf = n_bins as f64;
    Ok((0..n_bins)
        .map(|n| {
            let h: Complex64 = taps
                .iter()
                .enumerate()
                .map(|(l, g)| {
                    // reduce the phase index mod N before scaling to keep the angle small
                    let phase = ((n * l) % n_bins) as f64 / nf;
                    g * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase)
                })
                .sum();
            h.norm_sqr() / energy
        })
        .collect())
}

/// MC-CDMA uplink: user `k` sees its own frequency-selective channel.
///
/// `sigma^2[n][k] = (K/N) P_k |sum_l g_{k,l} e^{-2 i pi n l / N}|^2 / ||g_k||^2`.
pub fn build_mccdma_uplink(
    taps: &[Vec<Complex64>],
    powers: &[f64],
    n_rx: usize,
) -> Result<VarianceProfile> {
    if taps.len() != powers.len() {
        return Err(Error::DimensionMismatch {
            context: "one tap vector per user",
            expected: powers.len(),
            actual: taps.len(),
        });
    }
    if powers.len() < 2 || n_rx == 0 {
        return Err(Error::InvalidDimensions(
            "need n_rx >= 1 and at least two users".into(),
        ));
    }
    if powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("powers", "powers must be positive"));
    }
    let n_users = powers.len() - 1;
    let scale = n_users as f64 / n_rx as f64;
    let responses = taps
        .iter()
        .map(|g| normalized_frequency_response(g, n_rx))
        .collect::<Result<Vec<_>>>()?;
    VarianceProfile::from_fn(n_rx, n_users, |n, k| scale * powers[k] * responses[k][n])
}

/// MC-CDMA downlink: one channel `h` shared by all users, so the profile is
/// separable with `d[n] = (K/N) |h_n|^2 / ||g||^2` and `d_tilde = powers`.
pub fn build_mccdma_downlink(
    taps: &[Complex64],
    powers: &[f64],
    n_rx: usize,
) -> Result<SeparableProfile> {
    if powers.len() < 2 || n_rx == 0 {
        return Err(Error::InvalidDimensions(
            "need n_rx >= 1 and at least two users".into(),
        ));
    }
    let scale = (powers.len() - 1) as f64 / n_rx as f64;
    let d = normalized_frequency_response(taps, n_rx)?
        .into_iter()
        .map(|v| scale * v)
        .collect();
    SeparableProfile::new(d, powers.to_vec())
}

/// Relative powers and frequencies of the five interferer power classes.
pub const POWER_CLASS_MULTIPLIERS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const POWER_CLASS_FREQUENCIES: [f64; 5] = [0.125, 0.25, 0.25, 0.125, 0.25];

/// Number of interferers per class, by largest-remainder rounding.
///
/// Ties in the remainder go to the lower class index.
pub fn power_class_counts(n_users: usize) -> [usize; 5] {
    let quotas = POWER_CLASS_FREQUENCIES.map(|f| f * n_users as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..5).collect();
    // stable sort keeps class order for equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &c in order.iter().take(n_users - assigned) {
        counts[c] += 1;
    }
    counts
}

/// Interferer powers drawn from the five power classes, in a seeded random order.
///
/// Returns `K` powers; the user of interest is not included and is taken to
/// belong to the first class (power `base_power`).
pub fn build_power_classes(base_power: f64, n_users: usize, seed: u64) -> Result<Vec<f64>> {
    if n_users == 0 {
        return Err(Error::InvalidDimensions("n_users must be positive".into()));
    }
    if !(base_power > 0.0 && base_power.is_finite()) {
        return Err(Error::invalid(
            "base_power",
            format!("must be positive, got {base_power}"),
        ));
    }
    let counts = power_class_counts(n_users);
    let mut powers: Vec<f64> = counts
        .iter()
        .zip(POWER_CLASS_MULTIPLIERS)
        .flat_map(|(&c, m)| std::iter::repeat_n(m * base_power, c))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    powers.shuffle(&mut rng);
    Ok(powers)
}
