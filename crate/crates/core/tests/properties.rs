#![allow(clippy::needless_range_loop)]

use lmmse_clt::detsolve::{
    solve_general, solve_separable, InitialGuess, SolverOptions, DEFAULT_TOL,
};
use lmmse_clt::fluctuations::{build_a_delta_g, clt_certificate, omega_squared, theta_squared};
use lmmse_clt::profiles::{
    build_mccdma_uplink, build_power_classes, check_assumptions, power_class_counts,
    SeparableProfile, VarianceProfile,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn positive() -> impl Strategy<Value = f64> {
    0.05f64..4.0
}

fn separable(max_n: usize, max_k: usize) -> impl Strategy<Value = SeparableProfile> {
    (1..=max_n, 1..=max_k).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(positive(), n),
            prop::collection::vec(positive(), k + 1),
        )
            .prop_map(|(d, dt)| SeparableProfile::new(d, dt).unwrap())
    })
}

fn general(max_n: usize, max_k: usize) -> impl Strategy<Value = VarianceProfile> {
    (1..=max_n, 1..=max_k).prop_flat_map(|(n, k)| {
        prop::collection::vec(positive(), n * (k + 1))
            .prop_map(move |v| VarianceProfile::new(n, k, v).unwrap())
    })
}

fn rho() -> impl Strategy<Value = f64> {
    0.05f64..5.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separable_factorization_round_trip(sep in separable(12, 12)) {
        let canon = sep.canonical();
        let prof = canon.to_variance_profile();
        let back = prof.factor_separable(1e-12).expect("product form");
        prop_assert_eq!(back.d_tilde(), canon.d_tilde());
        let again = back.to_variance_profile();
        for (a, b) in again.as_slice().iter().zip(prof.as_slice()) {
            // d[n] is recovered by a division, so allow two ulps
            prop_assert!(rel(*a, *b) <= 4.5e-16, "{a} vs {b}");
        }
    }

    #[test]
    fn uplink_column_means_are_exact(
        n in 5usize..40,
        powers in prop::collection::vec(positive(), 1..8),
        seed_taps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 5 * 9),
    ) {
        let k = powers.len() - 1;
        prop_assume!(k >= 1);
        let taps: Vec<Vec<Complex64>> = (0..=k)
            .map(|c| (0..5).map(|l| {
                let (re, im) = seed_taps[c * 5 + l];
                Complex64::new(re + 1e-3, im)
            }).collect())
            .collect();
        let prof = build_mccdma_uplink(&taps, &powers, n).unwrap();
        for c in 0..=k {
            let mean = prof.column(c).sum::<f64>() / n as f64;
            let target = k as f64 / n as f64 * powers[c];
            prop_assert!(rel(mean, target) <= 1e-12, "col {c}: {mean} vs {target}");
        }
    }

    #[test]
    fn power_classes_sum_and_positivity(k in 1usize..300, seed in any::<u64>()) {
        prop_assert_eq!(power_class_counts(k).iter().sum::<usize>(), k);
        let p = build_power_classes(1.5, k, seed).unwrap();
        prop_assert_eq!(p.len(), k);
        prop_assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn cross_trace_zero_iff_disjoint_support(
        n in 1usize..10,
        k in 1usize..6,
        mask in prop::collection::vec(any::<bool>(), 60),
        vals in prop::collection::vec(positive(), 60),
    ) {
        let prof = VarianceProfile::from_fn(n, k, |r, c| {
            let i = r * (k + 1) + c;
            if mask[i] { vals[i] } else { 0.0 }
        }).unwrap();
        let rep = check_assumptions(&prof, 2.0);
        prop_assert!(rep.a4_cross_trace >= 0.0);
        let overlap = (0..n).any(|r| prof.get(r, 0) > 0.0 && (1..=k).any(|c| prof.get(r, c) > 0.0));
        prop_assert_eq!(rep.a4_cross_trace > 0.0, overlap);
    }

    #[test]
    fn json_round_trip_is_bit_exact(prof in general(6, 6), sep in separable(6, 6)) {
        let back = VarianceProfile::from_json(&prof.to_json().unwrap()).unwrap();
        prop_assert!(back.as_slice().iter().zip(prof.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let sback = SeparableProfile::from_json(&sep.to_json().unwrap()).unwrap();
        prop_assert_eq!(sback, sep);
    }

    #[test]
    fn t_bounds_and_certificate(prof in general(10, 10), rho in rho()) {
        let det = solve_general(&prof, rho, &SolverOptions::default()).unwrap();
        let lo = 1.0 / (rho + prof.sigma_max_sq());
        let hi = 1.0 / rho;
        for t in &det.t {
            prop_assert!(*t >= lo * (1.0 - 1e-12) && *t <= hi * (1.0 + 1e-12), "{t} not in [{lo}, {hi}]");
        }
        prop_assert!(det.residual <= DEFAULT_TOL);
        let sys = build_a_delta_g(&prof, &det).unwrap();
        let cert = clt_certificate(&sys.a).unwrap();
        prop_assert!(cert.holds(), "{cert:?}");
    }

    #[test]
    fn beta_bar_strictly_decreasing_in_rho(prof in general(8, 8)) {
        let grid = [0.05, 0.1, 0.3, 1.0, 3.0, 10.0];
        let betas: Vec<f64> = grid
            .iter()
            .map(|r| solve_general(&prof, *r, &SolverOptions::default()).unwrap().beta_bar)
            .collect();
        for w in betas.windows(2) {
            prop_assert!(w[1] < w[0], "{betas:?}");
        }
    }

    #[test]
    fn both_initial_guesses_agree(prof in general(10, 10), rho in rho()) {
        let up = solve_general(&prof, rho, &SolverOptions::default()).unwrap();
        let opts = SolverOptions { init: InitialGuess::LowerBound, ..Default::default() };
        let down = solve_general(&prof, rho, &opts).unwrap();
        for (a, b) in up.t.iter().zip(&down.t) {
            prop_assert!((a - b).abs() <= 10.0 * DEFAULT_TOL * a.abs().max(1.0));
        }
    }

    #[test]
    fn separable_matches_general(sep in separable(16, 16), rho in rho()) {
        let prof = sep.to_variance_profile();
        let det = solve_general(&prof, rho, &SolverOptions::default()).unwrap();
        let eq = solve_separable(&sep, rho, &SolverOptions::default()).unwrap();
        for (a, b) in det.t.iter().zip(&eq.t) {
            prop_assert!(rel(*a, *b) <= 1e-8);
        }
        for (a, b) in det.t_tilde.iter().zip(&eq.t_tilde) {
            prop_assert!(rel(*a, *b) <= 1e-8);
        }
        for m4 in [1.0, 2.0] {
            let theta = theta_squared(&prof, &det, m4).unwrap().theta_sq;
            let omega = omega_squared(&eq, m4).unwrap();
            prop_assert!(rel(theta, sep.d_tilde()[0].powi(2) * omega) <= 1e-8);
        }
    }

    #[test]
    fn theta_decomposition_ordering_positivity(prof in general(10, 10), rho in rho()) {
        let det = solve_general(&prof, rho, &SolverOptions::default()).unwrap();
        let psk = theta_squared(&prof, &det, 1.0).unwrap();
        let gauss = theta_squared(&prof, &det, 2.0).unwrap();
        for f in [&psk, &gauss] {
            prop_assert_eq!(f.theta_sq.to_bits(), (f.quad_term + f.kurtosis_term).to_bits());
        }
        // every entry is positive, so tr D_0^2 T^2 > 0
        prop_assert!(psk.theta_sq < gauss.theta_sq);
        for m4 in [1.0, 2.0] {
            if check_assumptions(&prof, m4).a4_holds() {
                let f = if m4 == 1.0 { &psk } else { &gauss };
                prop_assert!(f.theta_sq > 0.0);
            }
        }
    }
}
