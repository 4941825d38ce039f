//! The two-state example end to end: benchmarks, lagged search, robust construction.

use mpp_core::partial::{build_bilinear, census, solve_partial, PartialOptions};
use mpp_core::robust::{build_robust_mechanism, persuasive_lag, verify_robust, verify_robust_at};
use mpp_core::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn benchmark_values() {
    let inst = MppInstance::example1();
    let no = solve_benchmark(&inst, InfoModel::No).unwrap();
    let full = solve_benchmark(&inst, InfoModel::Full).unwrap();
    assert!(close(no.value, 1.0, 1e-9));
    assert!(close(full.value, 0.52, 1e-9));
    assert!(check_persuasive(&inst, &full.mechanism, InfoModel::Full, 1e-9, 4).unwrap().persuasive);
    assert!(!check_persuasive(&inst, &no.mechanism, InfoModel::Full, 1e-9, 4).unwrap().persuasive);
    let report = check_equality_condition(&inst).unwrap();
    assert!(!report.holds);
    assert!(report.failing_clause().is_some());
}

/// Best memoryless mechanism under lag one by brute force: σ(1|ω) on a grid,
/// posteriors written out by hand for the two-state example.
fn memoryless_lag_one_grid(n: usize) -> f64 {
    let p = |w: usize, a: usize| -> [f64; 2] {
        if (w == 0) == (a == 0) {
            [0.8, 0.2]
        } else {
            [0.2, 0.8]
        }
    };
    let mut best = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            let s = [i as f64 / n as f64, j as f64 / n as f64];
            let t = |w: usize, k: usize| (1.0 - s[w]) * p(w, 0)[k] + s[w] * p(w, 1)[k];
            let nu1 = t(0, 1) / (t(0, 1) + t(1, 0));
            let nu = [1.0 - nu1, nu1];
            let mut ok = true;
            for w in 0..2 {
                for a in 0..2 {
                    let mass = nu[w] * if a == 1 { s[w] } else { 1.0 - s[w] };
                    if mass <= 1e-12 {
                        continue;
                    }
                    let q = p(w, a);
                    let b = [q[0] * t(0, 0) + q[1] * t(1, 0), q[0] * t(0, 1) + q[1] * t(1, 1)];
                    let (r1, r0) = (b[1] * s[1] - b[0] * s[0], b[0] * (1.0 - s[0]) - b[1] * (1.0 - s[1]));
                    let (m1, m0) = (b[0] * s[0] + b[1] * s[1], b[0] * (1.0 - s[0]) + b[1] * (1.0 - s[1]));
                    if (m1 > 1e-12 && r1 < -1e-12) || (m0 > 1e-12 && r0 < -1e-12) {
                        ok = false;
                    }
                }
            }
            if ok {
                best = best.max(nu[0] * s[0] + nu[1] * s[1]);
            }
        }
    }
    best
}

#[test]
fn memoryless_lag_one_matches_grid() {
    let inst = MppInstance::example1();
    let grid = memoryless_lag_one_grid(400);
    assert!(close(grid, 0.5755, 5e-4), "{grid}");
    let program = build_bilinear(&inst, 1, 0, 4).unwrap();
    let sol = solve_partial(&program, &PartialOptions::new(10, 0)).unwrap();
    // The grid misses the optimum by at most its resolution.
    assert!(sol.value >= grid - 1e-6 && sol.value <= grid + 2e-3, "{} vs {grid}", sol.value);
    assert!(check_persuasive(&inst, &sol.mechanism, InfoModel::Lag(1), 1e-9, 4).unwrap().persuasive);
}

#[test]
fn lagged_values_climb_with_memory() {
    let inst = MppInstance::example1();
    let mut warm = Vec::new();
    let mut last = 0.0;
    let targets = [0.576, 0.772, 0.799];
    for (k, target) in targets.iter().enumerate() {
        let program = build_bilinear(&inst, 1, k, 4).unwrap();
        let mut opts = PartialOptions::new(10, 0);
        opts.warm_starts = warm;
        let sol = solve_partial(&program, &opts).unwrap();
        assert!(sol.value >= last - 1e-9);
        assert!(sol.value >= target - 0.01 && sol.value <= target + 0.005, "k={k}: {}", sol.value);
        assert!(sol.value >= 0.52 - 1e-7 && sol.value <= 1.0 + 1e-7);
        assert!(check_persuasive(&inst, &sol.mechanism, InfoModel::Lag(1), 1e-9, 4).unwrap().persuasive);
        last = sol.value;
        warm = vec![sol.mechanism];
    }
}

#[test]
fn bilinear_census_counts() {
    let inst = MppInstance::example1();
    let c = census(1, 1, &inst);
    assert_eq!(c.slice_length, 2);
    assert_eq!(c.variables, 16 * 4);
    assert_eq!(c.obedience_rows, 4 * 2 * 2);
    assert_eq!(c.flow_rows, 16 * 2);
    let c0 = census(2, 0, &inst);
    assert_eq!(c0.slice_length, 3);
    assert_eq!(c0.variables, 64 * 4);
}

/// Closed-form certificate for ε = 0.01. The no-history optimum always
/// recommends 1 with belief (1/2, 1/2); η = (0, 1) gives D = 1. The fallback
/// chain moves to state 0 w.p. 0.8 from both states, so ν_f = (0.8, 0.2),
/// τ = 5, and I − P_f has the single non-zero singular value √1.36. The
/// perturbation LP reduces to y0 − 4 y1 = 4, so y = (4, 0).
#[test]
fn robust_certificate_closed_form() {
    let inst = MppInstance::example1();
    let eps = 0.01;
    let cert = build_robust_mechanism(&inst, eps).unwrap();
    let s_f = 1.36f64.sqrt();
    let root2 = 2f64.sqrt();
    assert!(close(cert.regularity.d, 1.0, 1e-9));
    assert!(close(cert.w_min, 1.0, 1e-9));
    assert!(close(cert.perturbation.tau, 5.0, 1e-9));
    assert!(close(cert.perturbation.s_f, s_f, 1e-9));
    assert!(close(cert.perturbation.y[0], 4.0, 1e-9) && close(cert.perturbation.y[1], 0.0, 1e-9));
    assert!(close(cert.threshold, s_f / (2.0 * (s_f + 12.0 * root2)), 1e-12));
    let delta = 0.02 / 0.92;
    assert!(close(cert.delta, delta, 1e-12));
    assert!(close(cert.payoff, 0.92, 1e-9));
    assert!(close(cert.sharp_lower_bound, 0.9, 1e-9));
    assert!(close(cert.payoff_lower_bound, 1.0 - 0.02 * (1.0 + 12.0 * root2 / s_f), 1e-9));
    assert!(cert.payoff >= cert.payoff_lower_bound);
    assert!(close(cert.mechanism.prob(0, 1, 1), 1.0, 1e-9));
    assert!(close(cert.mechanism.prob(0, 0, 1), (1.0 - delta) / (1.0 + 7.0 * delta), 1e-9));

    let check = verify_robust(&inst, &cert, 10_000, 0);
    assert!(check.analytic_ok && check.sampled_ok && check.continuity_ok);
    // The center is checked along with the draws.
    assert_eq!(check.samples, 10_001);
    let wide = verify_robust_at(&inst, &cert, 0.1, 200, 0);
    assert!(!wide.analytic_ok);
    assert_eq!(wide.violating_action, Some(1));
}

#[test]
fn robust_epsilon_limits() {
    let inst = MppInstance::example1();
    let cert = build_robust_mechanism(&inst, 0.01).unwrap();
    match build_robust_mechanism(&inst, cert.threshold * 1.01) {
        Err(MppError::EpsilonTooLarge { threshold, .. }) => assert!(close(threshold, cert.threshold, 1e-15)),
        other => panic!("{other:?}"),
    }
    let zero = build_robust_mechanism(&inst, 0.0).unwrap();
    assert!(close(zero.payoff, 1.0, 1e-12));
    assert!(close(zero.mechanism.prob(0, 0, 1), 1.0, 1e-12));
}

#[test]
fn robust_mechanism_mixes_within_epsilon() {
    let inst = MppInstance::example1();
    let cert = build_robust_mechanism(&inst, 0.01).unwrap();
    let lag = persuasive_lag(&inst, &cert, 4).unwrap();
    let spectral = lag.spectral.unwrap();
    assert!(lag.exact <= spectral);
    assert!(lag_distance(&inst, &cert.mechanism, spectral).unwrap() <= 0.01);
    assert!(lag_distance(&inst, &cert.mechanism, lag.exact).unwrap() <= 0.01);
    if lag.exact > 0 {
        assert!(lag_distance(&inst, &cert.mechanism, lag.exact - 1).unwrap() > 0.01);
    }
    assert_eq!(lag.persuasive, Some(true));
}
