//! Deterministic equivalents at `z = -rho`.
//!
//! For a general profile the diagonal matrices `T` (`N` entries) and `T~`
//! (`K` entries, interferers only) solve
//!
//! ```text
//! t_n  = 1 / (rho (1 + (1/K) sum_{k>=1} sigma^2_nk t~_k))
//! t~_k = 1 / (rho (1 + (1/K) sum_n     sigma^2_nk t_n ))
//! ```
//!
//! and the SINR approximation is `beta_bar = (1/K) sum_n sigma^2_n0 t_n`.
//! Separable profiles reduce to two scalar equations in `(delta, delta~)`.

use serde::{Deserialize, Serialize};

use crate::profiles::{SeparableProfile, VarianceProfile};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Smallest damping factor before the iteration keeps going undamped-halved.
const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Starting point of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    /// `t = 1/rho`, the solution without interference (upper bound).
    #[default]
    NoInterference,
    /// `t = 1/(rho + sigma_max^2)`, the lower bound.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum relative residual over all equations.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: InitialGuess::default(),
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "rho",
            format!("must be positive and finite, got {rho}"),
        ))
    }
}

/// Solution of the general fixed-point system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicEquivalent {
    pub rho: f64,
    /// `t_n(-rho)`, `n = 1..=N`.
    pub t: Vec<f64>,
    /// `t~_k(-rho)` for the interferer columns `k = 1..=K`.
    pub t_tilde: Vec<f64>,
    pub beta_bar: f64,
    /// Maximum relative residual of the `N + K` equations at `(t, t_tilde)`.
    pub residual: f64,
    pub iterations: usize,
}

/// `t~ = G(t)`.
fn update_t_tilde(profile: &VarianceProfile, rho: f64, t: &[f64], out: &mut [f64]) {
    let kf = profile.n_users() as f64;
    out.fill(0.0);
    for (n, &tn) in t.iter().enumerate() {
        for (acc, s) in out.iter_mut().zip(&profile.row(n)[1..]) {
            *acc += s * tn;
        }
    }
    for v in out.iter_mut() {
        *v = 1.0 / (rho * (1.0 + *v / kf));
    }
}

/// `t = F(t~)`.
fn update_t(profile: &VarianceProfile, rho: f64, t_tilde: &[f64], out: &mut [f64]) {
    let kf = profile.n_users() as f64;
    for (n, v) in out.iter_mut().enumerate() {
        let s: f64 = profile.row(n)[1..]
            .iter()
            .zip(t_tilde)
            .map(|(s, tt)| s * tt)
            .sum();
        *v = 1.0 / (rho * (1.0 + s / kf));
    }
}

fn max_rel_diff(x: &[f64], fx: &[f64]) -> f64 {
    x.iter()
        .zip(fx)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max)
}

/// Maximum relative residual of both equation families at `(t, t_tilde)`.
pub fn general_residual(
    profile: &VarianceProfile,
    rho: f64,
    t: &[f64],
    t_tilde: &[f64],
) -> Result<f64> {
    check_dims(profile, t, t_tilde)?;
    let mut ft = vec![0.0; t.len()];
    let mut ftt = vec![0.0; t_tilde.len()];
    update_t(profile, rho, t_tilde, &mut ft);
    update_t_tilde(profile, rho, t, &mut ftt);
    Ok(max_rel_diff(t, &ft).max(max_rel_diff(t_tilde, &ftt)))
}

fn check_dims(profile: &VarianceProfile, t: &[f64], t_tilde: &[f64]) -> Result<()> {
    if t.len() != profile.n_rx() {
        return Err(Error::DimensionMismatch {
            context: "t length vs n_rx",
            expected: profile.n_rx(),
            actual: t.len(),
        });
    }
    if t_tilde.len() != profile.n_users() {
        return Err(Error::DimensionMismatch {
            context: "t_tilde length vs n_users",
            expected: profile.n_users(),
            actual: t_tilde.len(),
        });
    }
    Ok(())
}

/// Solves the general `N + K` system by damped Picard iteration on `t`.
///
/// Each step maps `t -> F(G(t))`; the damping factor is halved whenever the
/// residual grows. The returned pair is re-checked against both equation
/// families before it is handed out.
pub fn solve_general(
    profile: &VarianceProfile,
    rho: f64,
    opts: &SolverOptions,
) -> Result<DeterministicEquivalent> {
    check_rho(rho)?;
    opts.validate()?;
    let n = profile.n_rx();
    let k = profile.n_users();

    let mut t = match opts.init {
        InitialGuess::NoInterference => vec![1.0 / rho; n],
        InitialGuess::LowerBound => vec![1.0 / (rho + profile.sigma_max_sq()); n],
    };
    let mut t_tilde = vec![0.0; k];
    let mut ft = vec![0.0; n];
    let mut omega = 1.0;
    let mut prev = f64::INFINITY;
    let mut last = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        update_t_tilde(profile, rho, &t, &mut t_tilde);
        update_t(profile, rho, &t_tilde, &mut ft);
        let res = max_rel_diff(&t, &ft);
        last = res;
        if res <= opts.tol {
            std::mem::swap(&mut t, &mut ft);
            update_t_tilde(profile, rho, &t, &mut t_tilde);
            let residual = general_residual(profile, rho, &t, &t_tilde)?;
            if residual <= opts.tol {
                let beta_bar = beta_bar_from_t(profile, &t);
                return Ok(DeterministicEquivalent {
                    rho,
                    t,
                    t_tilde,
                    beta_bar,
                    residual,
                    iterations: iter,
                });
            }
            last = residual;
            continue;
        }
        if res > prev && omega > MIN_DAMPING {
            omega *= 0.5;
        }
        prev = res;
        for (x, fx) in t.iter_mut().zip(&ft) {
            *x = (1.0 - omega) * *x + omega * fx;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last,
    })
}

fn beta_bar_from_t(profile: &VarianceProfile, t: &[f64]) -> f64 {
    profile.column(0).zip(t).map(|(s, tn)| s * tn).sum::<f64>() / profile.n_users() as f64
}

/// `beta_bar = (1/K) tr(D_0 T)`.
pub fn beta_bar(det: &DeterministicEquivalent, profile: &VarianceProfile) -> Result<f64> {
    check_dims(profile, &det.t, &det.t_tilde)?;
    Ok(beta_bar_from_t(profile, &det.t))
}

/// Solution of the two-equation separable system, with the closed-form `T`, `T~`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableEquivalent {
    pub rho: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    /// `(1/K) tr D^2 T^2`.
    pub gamma: f64,
    /// `(1/K) tr D~^2 T~^2` over the interferer columns.
    pub gamma_tilde: f64,
    /// `t_n = 1 / (rho (1 + delta~ d_n))`.
    pub t: Vec<f64>,
    /// `t~_k = 1 / (rho (1 + delta d~_k))`, `k = 1..=K`.
    pub t_tilde: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl SeparableEquivalent {
    /// `beta_bar = d~_0 * delta`.
    pub fn beta_bar(&self, sep: &SeparableProfile) -> f64 {
        sep.d_tilde()[0] * self.delta
    }
}

fn delta_of(d: &[f64], k: usize, rho: f64, delta_tilde: f64) -> f64 {
    d.iter()
        .map(|dn| dn / (rho * (1.0 + delta_tilde * dn)))
        .sum::<f64>()
        / k as f64
}

fn separable_residual(sep: &SeparableProfile, rho: f64, delta: f64, delta_tilde: f64) -> f64 {
    let k = sep.n_users();
    let fd = delta_of(sep.d(), k, rho, delta_tilde);
    let fdt = delta_of(sep.interferer_powers(), k, rho, delta);
    ((delta - fd).abs() / fd).max((delta_tilde - fdt).abs() / fdt)
}

/// Solves the separable system for `(delta, delta~)` by damped Picard iteration.
pub fn solve_separable(
    sep: &SeparableProfile,
    rho: f64,
    opts: &SolverOptions,
) -> Result<SeparableEquivalent> {
    check_rho(rho)?;
    opts.validate()?;
    let k = sep.n_users();
    let d = sep.d();
    let p = sep.interferer_powers();

    let dmax = d.iter().copied().fold(0.0, f64::max);
    let pmax = p.iter().copied().fold(0.0, f64::max);
    let mut delta = match opts.init {
        InitialGuess::NoInterference => delta_of(d, k, rho, 0.0),
        InitialGuess::LowerBound => d.iter().sum::<f64>() / (k as f64 * (rho + dmax * pmax)),
    };
    let mut omega = 1.0;
    let mut prev = f64::INFINITY;
    let mut last = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let delta_tilde = delta_of(p, k, rho, delta);
        let next = delta_of(d, k, rho, delta_tilde);
        let res = (delta - next).abs() / next;
        last = res;
        if res <= opts.tol {
            let delta = next;
            let delta_tilde = delta_of(p, k, rho, delta);
            let residual = separable_residual(sep, rho, delta, delta_tilde);
            if residual <= opts.tol {
                return Ok(separable_closed_form(
                    sep,
                    rho,
                    delta,
                    delta_tilde,
                    residual,
                    iter,
                ));
            }
            last = residual;
        }
        if res > prev && omega > MIN_DAMPING {
            omega *= 0.5;
        }
        prev = res;
        delta = (1.0 - omega) * delta + omega * next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last,
    })
}

fn separable_closed_form(
    sep: &SeparableProfile,
    rho: f64,
    delta: f64,
    delta_tilde: f64,
    residual: f64,
    iterations: usize,
) -> SeparableEquivalent {
    let kf = sep.n_users() as f64;
    let t: Vec<f64> = sep
        .d()
        .iter()
        .map(|dn| 1.0 / (rho * (1.0 + delta_tilde * dn)))
        .collect();
    let t_tilde: Vec<f64> = sep
        .interferer_powers()
        .iter()
        .map(|pk| 1.0 / (rho * (1.0 + delta * pk)))
        .collect();
    let gamma = sep
        .d()
        .iter()
        .zip(&t)
        .map(|(dn, tn)| (dn * tn).powi(2))
        .sum::<f64>()
        / kf;
    let gamma_tilde = sep
        .interferer_powers()
        .iter()
        .zip(&t_tilde)
        .map(|(pk, tk)| (pk * tk).powi(2))
        .sum::<f64>()
        / kf;
    SeparableEquivalent {
        rho,
        delta,
        delta_tilde,
        gamma,
        gamma_tilde,
        t,
        t_tilde,
        residual,
        iterations,
    }
}

/// Right-hand side of the scalar implicit equation for `delta`:
/// `(1/K) sum_n d_n / (rho + (1/K) d_n sum_k p_k / (1 + p_k delta))`.
pub fn scalar_delta_rhs(d: &[f64], p: &[f64], rho: f64, delta: f64) -> f64 {
    let kf = p.len() as f64;
    let interference = p.iter().map(|pk| pk / (1.0 + pk * delta)).sum::<f64>() / kf;
    d.iter()
        .map(|dn| dn / (rho + dn * interference))
        .sum::<f64>()
        / kf
}

/// Solves `delta = rhs(delta)` for the separable model directly.
///
/// `d` has the `N` row factors and `p` the `K` interferer powers. The
/// right-hand side is increasing in `delta`, so iterating from zero climbs
/// monotonically to the root. Converges when `|delta - rhs(delta)| <= tol`.
pub fn solve_scalar_delta(d: &[f64], p: &[f64], rho: f64, tol: f64) -> Result<f64> {
    check_rho(rho)?;
    if d.is_empty() || p.is_empty() {
        return Err(Error::InvalidDimensions("d and p must be nonempty".into()));
    }
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("d", "entries must be positive"));
    }
    if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("p", "entries must be nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let mut delta = 0.0;
    let mut gap = f64::INFINITY;
    for _ in 0..DEFAULT_MAX_ITER {
        let next = scalar_delta_rhs(d, p, rho, delta);
        if (next - scalar_delta_rhs(d, p, rho, next)).abs() <= tol {
            return Ok(next);
        }
        gap = (next - delta).abs();
        delta = next;
    }
    Err(Error::NonConvergence {
        iterations: DEFAULT_MAX_ITER,
        residual: gap,
    })
}
