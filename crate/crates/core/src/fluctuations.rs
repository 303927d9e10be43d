//! CLT variance of `sqrt(K) (beta - beta_bar)`.
//!
//! With `T` from the deterministic equivalent,
//!
//! ```text
//! A[l][m] = (1/K) ((1/K) tr D_l D_m T^2) / (1 + (1/K) tr D_l T)^2
//! Delta   = diag((1 + (1/K) tr D_l T)^2)
//! g[k]    = (1/K) tr D_0 D_k T^2
//! theta^2 = (1/K) g' (I - A)^-1 Delta^-1 g + (E|W|^4 - 1) (1/K) tr D_0^2 T^2
//! ```
//!
//! with `l, m, k` ranging over the `K` interferer columns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::detsolve::{DeterministicEquivalent, SeparableEquivalent};
use crate::profiles::VarianceProfile;
use crate::{Error, Result};

/// `rho^2 gamma gamma~` at or above this is treated as the degenerate boundary.
const OMEGA_BOUNDARY: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationParams {
    /// `theta^2 = quad_term + kurtosis_term`.
    pub theta_sq: f64,
    /// `(1/K) g' (I - A)^-1 Delta^-1 g`.
    pub quad_term: f64,
    /// `(E|W|^4 - 1) (1/K) tr D_0^2 T^2`.
    pub kurtosis_term: f64,
    pub fourth_moment: f64,
    /// Separable profiles only: `theta^2 / d~_0^2`.
    pub omega_sq: Option<f64>,
}

/// The `K x K` system defining the variance.
#[derive(Debug, Clone)]
pub struct CltSystem {
    pub a: DMatrix<f64>,
    /// Diagonal of `Delta`.
    pub delta: DVector<f64>,
    pub g: DVector<f64>,
}

fn check_det(profile: &VarianceProfile, det: &DeterministicEquivalent) -> Result<()> {
    if det.t.len() != profile.n_rx() {
        return Err(Error::DimensionMismatch {
            context: "t length vs n_rx",
            expected: profile.n_rx(),
            actual: det.t.len(),
        });
    }
    if det.t_tilde.len() != profile.n_users() {
        return Err(Error::DimensionMismatch {
            context: "t_tilde length vs n_users",
            expected: profile.n_users(),
            actual: det.t_tilde.len(),
        });
    }
    Ok(())
}

pub fn build_a_delta_g(
    profile: &VarianceProfile,
    det: &DeterministicEquivalent,
) -> Result<CltSystem> {
    check_det(profile, det)?;
    let n = profile.n_rx();
    let k = profile.n_users();
    let kf = k as f64;

    // interferer columns scaled by t_n and by t_n^2
    let s = DMatrix::from_fn(n, k, |r, c| profile.get(r, c + 1));
    let t = DVector::from_column_slice(&det.t);
    let t_sq = t.map(|v| v * v);
    let d0 = DVector::from_iterator(n, profile.column(0));

    // (1/K) tr D_l T
    let tr_dt = s.tr_mul(&t) / kf;
    let s_t2 = DMatrix::from_fn(n, k, |r, c| s[(r, c)] * t_sq[r]);
    // (1/K) tr D_l D_m T^2
    let gram = s_t2.tr_mul(&s) / kf;
    let delta = tr_dt.map(|v| (1.0 + v) * (1.0 + v));
    let a = DMatrix::from_fn(k, k, |l, m| gram[(l, m)] / (kf * delta[l]));
    let g = s_t2.tr_mul(&d0) / kf;
    Ok(CltSystem { a, delta, g })
}

pub fn theta_squared(
    profile: &VarianceProfile,
    det: &DeterministicEquivalent,
    fourth_moment: f64,
) -> Result<FluctuationParams> {
    check_fourth_moment(fourth_moment)?;
    let sys = build_a_delta_g(profile, det)?;
    let k = profile.n_users();
    let kf = k as f64;

    let rhs = sys.g.component_div(&sys.delta);
    let i_minus_a = DMatrix::identity(k, k) - &sys.a;
    let x = i_minus_a
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem("I - A is not invertible"))?;
    let quad_term = sys.g.dot(&x) / kf;

    let tr_d0sq_t2 = profile
        .column(0)
        .zip(&det.t)
        .map(|(s, t)| (s * t).powi(2))
        .sum::<f64>()
        / kf;
    let kurtosis_term = (fourth_moment - 1.0) * tr_d0sq_t2;
    Ok(FluctuationParams {
        theta_sq: quad_term + kurtosis_term,
        quad_term,
        kurtosis_term,
        fourth_moment,
        omega_sq: None,
    })
}

fn check_fourth_moment(m4: f64) -> Result<()> {
    if m4 >= 1.0 && m4.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "fourth_moment",
            format!("E|W|^4 must be finite and at least 1, got {m4}"),
        ))
    }
}

/// `omega^2 = gamma (rho^2 gamma gamma~ / (1 - rho^2 gamma gamma~) + E|W|^4 - 1)`.
pub fn omega_squared(eq: &SeparableEquivalent, fourth_moment: f64) -> Result<f64> {
    check_fourth_moment(fourth_moment)?;
    let product = eq.rho * eq.rho * eq.gamma * eq.gamma_tilde;
    if !(product < OMEGA_BOUNDARY) {
        return Err(Error::DegenerateVariance { product });
    }
    Ok(eq.gamma * (product / (1.0 - product) + (fourth_moment - 1.0)))
}

/// Structural facts about `(I - A)^-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltCertificate {
    pub inv_nonnegative: bool,
    pub inv_diag_min: f64,
    /// Maximum absolute row sum.
    pub inv_rowsum_norm: f64,
}

impl CltCertificate {
    pub fn holds(&self) -> bool {
        self.inv_nonnegative && self.inv_diag_min >= 1.0 && self.inv_rowsum_norm.is_finite()
    }
}

/// Explicitly inverts `I - A`.
pub fn resolvent_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "A must be square",
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    let k = a.nrows();
    (DMatrix::identity(k, k) - a)
        .lu()
        .try_inverse()
        .ok_or(Error::SingularSystem("I - A is not invertible"))
}

pub fn clt_certificate(a: &DMatrix<f64>) -> Result<CltCertificate> {
    let inv = resolvent_inverse(a)?;
    let inv_nonnegative = inv.iter().all(|&v| v >= 0.0);
    let inv_diag_min = inv.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    let inv_rowsum_norm = inv
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(CltCertificate {
        inv_nonnegative,
        inv_diag_min,
        inv_rowsum_norm,
    })
}

/// SINR level undershot with probability `prob_level` under the Gaussian
/// approximation: `beta_bar + sqrt(theta^2 / K) * z(prob_level)`.
pub fn outage_sinr(beta_bar: f64, theta_sq: f64, n_users: usize, prob_level: f64) -> Result<f64> {
    if !(prob_level > 0.0 && prob_level < 1.0) {
        return Err(Error::invalid(
            "prob_level",
            format!("must lie in (0, 1), got {prob_level}"),
        ));
    }
    if !(theta_sq >= 0.0) || n_users == 0 {
        return Err(Error::invalid("theta_sq", "needs theta^2 >= 0 and K >= 1"));
    }
    if theta_sq == 0.0 || prob_level == 0.5 {
        return Ok(beta_bar);
    }
    let z = Normal::standard().inverse_cdf(prob_level);
    Ok(beta_bar + (theta_sq / n_users as f64).sqrt() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detsolve::{solve_general, solve_separable, SolverOptions};
    use crate::profiles::{build_iid_profile, SeparableProfile};
    use approx::assert_relative_eq;

    const GOLDEN: f64 = 0.618_033_988_749_894_8;

    fn solved(p: &VarianceProfile, rho: f64) -> DeterministicEquivalent {
        solve_general(p, rho, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn no_interference_system() {
        let p = VarianceProfile::from_fn(4, 3, |n, k| if k == 0 { 1.0 + n as f64 } else { 0.0 })
            .unwrap();
        let det = solved(&p, 2.0);
        let sys = build_a_delta_g(&p, &det).unwrap();
        assert!(sys.a.iter().all(|&v| v == 0.0));
        assert!(sys.delta.iter().all(|&v| v == 1.0));
        assert!(sys.g.iter().all(|&v| v == 0.0));

        let fp = theta_squared(&p, &det, 2.0).unwrap();
        let tr_d0sq: f64 = p.column(0).map(|v| v * v).sum();
        assert_relative_eq!(fp.theta_sq, tr_d0sq / (3.0 * 4.0), max_relative = 1e-14);
        assert_eq!(fp.quad_term, 0.0);
    }

    #[test]
    fn iid_system_entries() {
        let k = 12;
        let p = build_iid_profile(k, k).unwrap();
        let det = solved(&p, 1.0);
        let sys = build_a_delta_g(&p, &det).unwrap();
        let d2 = GOLDEN * GOLDEN;
        for v in sys.a.iter() {
            assert_relative_eq!(*v, d2 * d2 / k as f64, max_relative = 1e-9);
        }
        for v in sys.delta.iter() {
            assert_relative_eq!(*v, 1.0 / d2, max_relative = 1e-9);
        }
        for v in sys.g.iter() {
            assert_relative_eq!(*v, d2, max_relative = 1e-9);
        }
    }

    #[test]
    fn separable_a_is_rank_one() {
        let sep =
            SeparableProfile::new(vec![0.5, 1.0, 2.0, 1.5, 0.8], vec![1.0, 2.0, 1.0, 4.0]).unwrap();
        let rho = 0.3;
        let eq = solve_separable(&sep, rho, &SolverOptions::default()).unwrap();
        let vp = sep.to_variance_profile();
        let sys = build_a_delta_g(&vp, &solved(&vp, rho)).unwrap();
        let k = sep.n_users();
        let dt = sep.interferer_powers();
        for l in 0..k {
            for m in 0..k {
                let expected = eq.gamma / k as f64 / sys.delta[l] * dt[l] * dt[m];
                assert_relative_eq!(sys.a[(l, m)], expected, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn theta_closed_forms() {
        let p = build_iid_profile(32, 32).unwrap();
        let det = solved(&p, 1.0);
        let d4 = GOLDEN.powi(4);
        let qpsk = theta_squared(&p, &det, 1.0).unwrap();
        assert_eq!(qpsk.kurtosis_term, 0.0);
        assert_relative_eq!(
            qpsk.theta_sq,
            GOLDEN.powi(6) / (1.0 - d4),
            max_relative = 1e-8
        );
        assert!((qpsk.theta_sq - 0.0652476).abs() < 1e-6);
        let gauss = theta_squared(&p, &det, 2.0).unwrap();
        assert_relative_eq!(
            gauss.theta_sq,
            GOLDEN.powi(2) / (1.0 - d4),
            max_relative = 1e-8
        );
        assert!((gauss.theta_sq - 0.4472136).abs() < 1e-6);
        assert_eq!(gauss.theta_sq, gauss.quad_term + gauss.kurtosis_term);
    }

    #[test]
    fn rejects_fourth_moment_below_one() {
        let p = build_iid_profile(4, 4).unwrap();
        let det = solved(&p, 1.0);
        assert!(theta_squared(&p, &det, 0.5).is_err());
    }

    #[test]
    fn omega_cases() {
        let sep = SeparableProfile::new(vec![1.0; 16], vec![1.0; 17]).unwrap();
        let eq = solve_separable(&sep, 1.0, &SolverOptions::default()).unwrap();
        assert!((omega_squared(&eq, 2.0).unwrap() - 0.4472136).abs() < 1e-6);
        assert!((omega_squared(&eq, 1.0).unwrap() - 0.0652476).abs() < 1e-6);

        let zero = SeparableEquivalent {
            gamma: 0.0,
            ..eq.clone()
        };
        assert_eq!(omega_squared(&zero, 2.0).unwrap(), 0.0);

        let boundary = SeparableEquivalent {
            gamma: 1.0,
            gamma_tilde: 1.0,
            rho: 1.0,
            ..eq
        };
        assert!(matches!(
            omega_squared(&boundary, 2.0),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn certificate_zero_a() {
        let c = clt_certificate(&DMatrix::zeros(5, 5)).unwrap();
        assert!(c.inv_nonnegative);
        assert_eq!(c.inv_diag_min, 1.0);
        assert_eq!(c.inv_rowsum_norm, 1.0);
        assert!(c.holds());
    }

    #[test]
    fn certificate_iid_symmetric_diagonal() {
        let p = build_iid_profile(8, 8).unwrap();
        let sys = build_a_delta_g(&p, &solved(&p, 1.0)).unwrap();
        let inv = resolvent_inverse(&sys.a).unwrap();
        let d0 = inv[(0, 0)];
        assert!(d0 >= 1.0);
        for i in 0..8 {
            assert_relative_eq!(inv[(i, i)], d0, max_relative = 1e-12);
        }
        // (I - c 11')^-1 = I + c/(1 - 8c) 11'
        let c = GOLDEN.powi(4) / 8.0;
        assert_relative_eq!(d0, 1.0 + c / (1.0 - 8.0 * c), max_relative = 1e-9);
        assert!(clt_certificate(&sys.a).unwrap().holds());
    }

    #[test]
    fn certificate_rank_one_matches_sherman_morrison() {
        let sep =
            SeparableProfile::new(vec![1.2, 0.4, 2.0, 1.0], vec![1.0, 1.0, 3.0, 0.5, 2.0]).unwrap();
        let rho = 0.5;
        let vp = sep.to_variance_profile();
        let eq = solve_separable(&sep, rho, &SolverOptions::default()).unwrap();
        let sys = build_a_delta_g(&vp, &solved(&vp, rho)).unwrap();
        let k = sep.n_users();
        // A = u v' with u = (gamma/K) Delta^-1 d~ and v = d~
        let dt = DVector::from_column_slice(sep.interferer_powers());
        let u = dt.component_div(&sys.delta) * (eq.gamma / k as f64);
        let denom = 1.0 - dt.dot(&u);
        let sm = DMatrix::identity(k, k) + (&u * dt.transpose()) / denom;
        let dense = resolvent_inverse(&sys.a).unwrap();
        for (a, b) in sm.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn outage_cases() {
        assert_eq!(outage_sinr(0.7, 0.3, 16, 0.5).unwrap(), 0.7);
        assert_eq!(outage_sinr(0.7, 0.0, 16, 0.01).unwrap(), 0.7);
        // z_{0.01} = -2.3263478740408408
        let v = outage_sinr(0.618, 0.4472, 64, 0.01).unwrap();
        let expected = 0.618 + 0.4472f64.sqrt() / 8.0 * -2.326_347_874_040_840_8;
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 0.4235376).abs() < 1e-6);
        assert!(outage_sinr(0.618, 0.4472, 64, 0.0).is_err());
        assert!(outage_sinr(0.618, 0.4472, 64, 1.0).is_err());
    }
}
