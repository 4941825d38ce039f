use mpp_core::benchmark::occupancy_from_mechanism;
use mpp_core::chain::{lag_distances, SliceChain};
use mpp_core::generate::{random_instance, random_mechanism, rng};
use mpp_core::linalg::dist1;
use mpp_core::lp::{self, LpStatus};
use mpp_core::partial::{build_bilinear, census, solve_partial, PartialOptions};
use mpp_core::robust::{build_robust_mechanism, merge_beliefs, split_mechanism, verify_robust, BeliefSignal};
use mpp_core::sim::{simulate, Behavior};
use mpp_core::*;
use proptest::prelude::*;

fn instance(seed: u64, ns: usize, na: usize) -> MppInstance {
    random_instance(&mut rng(seed, 0), ns, na)
}

fn mechanism(inst: &MppInstance, seed: u64, memory: usize) -> SignalingMechanism {
    random_mechanism(&mut rng(seed, 1), inst, memory)
}

/// Mixes a random no-history table with full revelation on a grid until it
/// passes the no-model check.
fn persuasive_sigma0(inst: &MppInstance, seed: u64) -> SignalingMechanism {
    let s = mechanism(inst, seed, 0);
    let fr = SignalingMechanism::full_revelation(inst, 0);
    for i in 0..=20 {
        let m = s.mix(&fr, i as f64 / 20.0);
        if check_persuasive(inst, &m, InfoModel::No, 1e-9, 4).unwrap().persuasive {
            return m;
        }
    }
    unreachable!("full revelation is obedient")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_rows_sum_to_one(seed in any::<u64>(), ns in 2usize..4, na in 2usize..4, k in 0usize..3) {
        let inst = instance(seed, ns, na);
        let sigma = mechanism(&inst, seed, k);
        let p = induced_chain(&inst, &sigma).unwrap();
        for i in 0..p.rows {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "row {} sums to {}", i, s);
        }
    }

    #[test]
    fn invariant_balances(seed in any::<u64>(), ns in 2usize..4, na in 2usize..4, k in 0usize..3) {
        let inst = instance(seed, ns, na);
        let sigma = mechanism(&inst, seed, k);
        let inv = sender_preferred_invariant(&inst, &sigma).unwrap();
        prop_assert!(inv.balance_residual(&inst, &sigma) <= 1e-8);
        prop_assert!((inv.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(inv.probs.iter().all(|&p| p >= -1e-12));
    }

    #[test]
    fn lag_distance_decreases_to_spectral_bound(seed in any::<u64>(), ns in 2usize..5, na in 2usize..4) {
        let inst = instance(seed, ns, na);
        let sigma = mechanism(&inst, seed, 0);
        let d = lag_distances(&inst, &sigma, 60).unwrap();
        for l in 1..d.len() {
            prop_assert!(d[l] <= d[l - 1] + 1e-12, "d[{}] = {} > d[{}] = {}", l, d[l], l - 1, d[l - 1]);
        }
        if let Ok(q) = spectral_quantities(&inst, &sigma) {
            for eps in [0.1, 0.01, 1e-4] {
                let l = q.lag_bound(eps);
                prop_assert!(lag_distance(&inst, &sigma, l).unwrap() <= eps);
            }
        }
    }

    #[test]
    fn obedience_sets_are_nested(seed in any::<u64>(), ns in 2usize..4, na in 2usize..4, t in 0.0f64..1.0, lag in 1usize..3) {
        let inst = instance(seed, ns, na);
        let fr = SignalingMechanism::full_revelation(&inst, 1);
        let sigma = mechanism(&inst, seed, 1).mix(&fr, t);
        let full = check_persuasive(&inst, &sigma, InfoModel::Full, 1e-9, 4).unwrap().persuasive;
        let lagged = check_persuasive(&inst, &sigma, InfoModel::Lag(lag), 1e-9, 4).unwrap().persuasive;
        let no = check_persuasive(&inst, &sigma, InfoModel::No, 1e-9, 4).unwrap().persuasive;
        prop_assert!(!full || lagged);
        prop_assert!(!lagged || no);
    }

    #[test]
    fn benchmark_ordering_and_round_trip(seed in any::<u64>(), ns in 2usize..5, na in 2usize..4) {
        let inst = instance(seed, ns, na);
        let no = solve_benchmark(&inst, InfoModel::No).unwrap();
        let full = solve_benchmark(&inst, InfoModel::Full).unwrap();
        prop_assert!(full.value <= no.value + 1e-8);
        for sol in [&no, &full] {
            prop_assert!((long_run_reward(&inst, &sol.mechanism).unwrap() - sol.value).abs() <= 1e-8);
        }
        // Rebuild the full-model occupancy from the extracted mechanism and
        // the invariant law of the previous pair.
        let prev = sender_preferred_invariant(&inst, &full.mechanism).unwrap().pair_marginal();
        let z = occupancy_from_mechanism(&inst, &full.mechanism, &prev);
        let mut value = 0.0;
        for (i, zi) in z.iter().enumerate() {
            let x = (i / na) % ns * na + i % na;
            value += zi * inst.reward[x];
        }
        prop_assert!((value - full.value).abs() <= 1e-8);
    }

    #[test]
    fn no_model_posteriors_are_bayes(seed in any::<u64>(), ns in 2usize..5, na in 2usize..4) {
        let inst = instance(seed, ns, na);
        let no = solve_benchmark(&inst, InfoModel::No).unwrap();
        let pair = no.invariant.pair_marginal();
        for post in &no.posteriors {
            let col: Vec<f64> = (0..ns).map(|w| pair[w * na + post.action]).collect();
            let mass: f64 = col.iter().sum();
            for w in 0..ns {
                prop_assert!((post.belief[w] - col[w] / mass).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn lp_is_invariant_under_row_permutation(seed in any::<u64>(), shift in 1usize..7) {
        let inst = instance(seed, 3, 2);
        let mut prog = benchmark::build_lp(&inst, InfoModel::No).unwrap();
        let a = lp::solve(&prog).unwrap();
        prop_assert_eq!(a.status, LpStatus::Optimal);
        prop_assert!((prog.value(&a.x) - a.objective).abs() <= 1e-9);
        let n = prog.ge_rows.len();
        prog.ge_rows.rotate_left(shift % n);
        prog.ge_rhs.rotate_left(shift % n);
        prog.eq_rows.reverse();
        prog.eq_rhs.reverse();
        let b = lp::solve(&prog).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-9);
    }

    #[test]
    fn split_then_merge_is_identity(seed in any::<u64>(), ns in 2usize..5, na in 2usize..4) {
        let inst = instance(seed, ns, na);
        let sigma = persuasive_sigma0(&inst, seed);
        let split = split_mechanism(&inst, &sigma).unwrap();
        let signals: Vec<BeliefSignal> = split
            .support
            .iter()
            .map(|&a| BeliefSignal { weight: split.weights[a], belief: split.beliefs[a].clone(), action: a })
            .collect();
        let merged = merge_beliefs(&inst, &signals).unwrap();
        let law = sender_preferred_invariant(&inst, &sigma).unwrap().state_marginal();
        for w in 0..ns {
            if law[w] > 1e-12 {
                prop_assert!(dist1(sigma.row(0, w), merged.row(0, w)) <= 1e-9);
            }
        }
    }

    #[test]
    fn merged_system_is_stationary(seed in any::<u64>(), ns in 2usize..4, na in 2usize..4, frac in 0.05f64..0.95) {
        let inst = instance(seed, ns, na);
        let Ok(probe) = build_robust_mechanism(&inst, 0.0) else { return Ok(()) };
        let cert = build_robust_mechanism(&inst, frac * probe.threshold).unwrap();
        let state: Vec<f64> = cert.state_law();
        let chain = SliceChain::new(&inst, &cert.mechanism);
        let pair = cert.invariant.clone();
        prop_assert!(dist1(&chain.step(&pair), &pair) <= 1e-8);
        prop_assert!((state.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(cert.payoff_lower_bound <= cert.payoff + 1e-8);
        prop_assert!(cert.sharp_lower_bound <= cert.payoff + 1e-8);
        prop_assert!(cert.payoff <= cert.opt_no + 1e-8);
        let check = verify_robust(&inst, &cert, 300, seed);
        prop_assert!(check.continuity_ok);
        prop_assert!(check.analytic_ok);
        prop_assert!(check.sampled_ok);
    }

    #[test]
    fn persuasive_mechanisms_are_followed(seed in any::<u64>()) {
        let inst = instance(seed, 3, 2);
        let no = solve_benchmark(&inst, InfoModel::No).unwrap();
        let follow = simulate(&inst, &no.mechanism, 400, seed, Behavior::Follow, 4).unwrap();
        let best = simulate(&inst, &no.mechanism, 400, seed, Behavior::BestRespond(InfoModel::No), 4).unwrap();
        prop_assert_eq!(&follow.actions, &best.actions);
        prop_assert_eq!(best.obedience_rate, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn partial_value_is_sandwiched(seed in any::<u64>(), ns in 2usize..4, na in 2usize..4) {
        let inst = instance(seed, ns, na);
        let no = solve_benchmark(&inst, InfoModel::No).unwrap().value;
        let full = solve_benchmark(&inst, InfoModel::Full).unwrap().value;
        let program = build_bilinear(&inst, 1, 1, 4).unwrap();
        let sol = solve_partial(&program, &PartialOptions::new(2, seed)).unwrap();
        prop_assert!(full - 1e-7 <= sol.value && sol.value <= no + 1e-7);
        prop_assert!(check_persuasive(&inst, &sol.mechanism, InfoModel::Lag(1), 1e-9, 4).unwrap().persuasive);
        let c = census(1, 1, &inst);
        prop_assert_eq!(c.variables, inst.n_pairs().pow(2) * ns * na);
    }
}
