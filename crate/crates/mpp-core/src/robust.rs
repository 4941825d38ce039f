//! Robust persuasion: mechanisms that stay obedient when the receiver's prior
//! over the current state is off by up to ε in ℓ1.
//!
//! The construction starts from the no-history optimum, splits it into
//! per-action beliefs, pushes each belief a little toward an interior point
//! of its obedience region, and restores stationarity with a few extra
//! state-revealing signals.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::benchmark::solve_benchmark;
use crate::chain::{lag_distances, sender_preferred_invariant, spectral_quantities, stationary_distribution};
use crate::error::{MppError, Result};
use crate::generate::rng;
use crate::instance::{receiver_best_action, MppInstance};
use crate::linalg::{self, Matrix};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::mechanism::SignalingMechanism;
use crate::persuasion::{check_persuasive, InfoModel, MAX_LAG};
use crate::POSITIVE;

/// A no-history mechanism written as a lottery over recommendation beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRepresentation {
    /// w_a = Σ_ω π(ω,a).
    pub weights: Vec<f64>,
    /// μ_a, one row per action.
    pub beliefs: Vec<Vec<f64>>,
    /// Actions with w_a > 1e-12.
    pub support: Vec<usize>,
}

impl SplitRepresentation {
    /// π(ω,a) = w_a μ_a(ω), laid out as ω·|A| + a.
    pub fn joint(&self) -> Vec<f64> {
        let na = self.weights.len();
        let ns = self.beliefs.first().map_or(0, |b| b.len());
        let mut j = vec![0.0; ns * na];
        for a in 0..na {
            for w in 0..ns {
                j[w * na + a] = self.weights[a] * self.beliefs[a][w];
            }
        }
        j
    }
}

/// Splits a no-history mechanism that passes the no-model obedience check.
pub fn split_mechanism(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<SplitRepresentation> {
    sigma.check_shape(inst)?;
    if sigma.memory != 0 {
        return Err(MppError::DimensionMismatch(format!("expected memory 0, got {}", sigma.memory)));
    }
    let check = check_persuasive(inst, sigma, InfoModel::No, 1e-9, crate::DEFAULT_SLICE_CAP)?;
    if !check.persuasive {
        return Err(MppError::NotPersuasive(check.max_violation));
    }
    let (ns, na) = (inst.n_states, inst.n_actions);
    let pi = sender_preferred_invariant(inst, sigma)?.probs;
    let mut weights = vec![0.0; na];
    let mut beliefs = Vec::with_capacity(na);
    let mut support = Vec::new();
    for a in 0..na {
        let col: Vec<f64> = (0..ns).map(|w| pi[w * na + a]).collect();
        let mass: f64 = col.iter().sum();
        if mass > POSITIVE {
            weights[a] = mass;
            beliefs.push(col.iter().map(|v| v / mass).collect());
            support.push(a);
        } else {
            let mut b = vec![0.0; ns];
            b[state_favouring(inst, a)] = 1.0;
            beliefs.push(b);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    Ok(SplitRepresentation { weights, beliefs, support })
}

/// A state where `a` is a receiver best response, or else where it loses least.
fn state_favouring(inst: &MppInstance, a: usize) -> usize {
    let mut best = 0;
    let mut gap = f64::NEG_INFINITY;
    for w in 0..inst.n_states {
        let g = inst.u(w, a) - inst.u(w, receiver_best_action(inst, w));
        if g > gap {
            gap = g;
            best = w;
        }
    }
    best
}

/// One signal of a belief lottery: its probability, the posterior it
/// induces and the action it recommends.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSignal {
    pub weight: f64,
    pub belief: Vec<f64>,
    pub action: usize,
}

/// Per-signal kernel σ(s|ω) = w_s μ_s(ω) / Σ_s' w_s' μ_s'(ω). States no signal
/// reaches get `None`.
fn signal_kernel(ns: usize, signals: &[BeliefSignal]) -> Vec<Option<Vec<f64>>> {
    (0..ns)
        .map(|w| {
            let den: f64 = signals.iter().map(|s| s.weight * s.belief[w]).sum();
            (den > POSITIVE).then(|| signals.iter().map(|s| s.weight * s.belief[w] / den).collect())
        })
        .collect()
}

/// Builds the no-history mechanism whose recommendation lottery is
/// `signals`. Signals recommending the same action are merged; states no
/// signal reaches recommend the receiver's best action.
pub fn merge_beliefs(inst: &MppInstance, signals: &[BeliefSignal]) -> Result<SignalingMechanism> {
    let (ns, na) = (inst.n_states, inst.n_actions);
    if signals.is_empty() {
        return Err(MppError::InvalidMechanism(format!("no signals")));
    }
    for s in signals {
        if s.belief.len() != ns || s.action >= na {
            return Err(MppError::DimensionMismatch(format!("signal belief of length {} for action {}", s.belief.len(), s.action)));
        }
        if s.weight < 0.0 || s.belief.iter().any(|&v| v < 0.0) {
            return Err(MppError::InvalidMechanism(format!("negative weight or belief")));
        }
    }
    let total: f64 = signals.iter().map(|s| s.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MppError::InvalidMechanism(format!("signal weights sum to {total}")));
    }
    let mut prior = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    for s in signals {
        for w in 0..ns {
            let m = s.weight * s.belief[w];
            prior[w] += m;
            for (j, p) in inst.row(w, s.action).iter().enumerate() {
                next[j] += m * p;
            }
        }
    }
    let residual = linalg::dist1(&prior, &next);
    if residual > 1e-8 {
        return Err(MppError::StationarityViolated(residual));
    }
    let kernel = signal_kernel(ns, signals);
    // Under the prior the posterior after s is prior(ω)σ(s|ω)/P(s), which
    // must give back μ_s.
    for (i, s) in signals.iter().enumerate() {
        if s.weight <= POSITIVE {
            continue;
        }
        let joint: Vec<f64> = (0..ns).map(|w| kernel[w].as_ref().map_or(0.0, |k| prior[w] * k[i])).collect();
        let mass: f64 = joint.iter().sum();
        let gap = joint.iter().zip(&s.belief).map(|(j, b)| (j / mass - b).abs()).sum::<f64>();
        if gap > 1e-8 {
            return Err(MppError::NumericalFailure(format!("posterior of signal {i} is off by {gap:e}")));
        }
    }
    let mut table = vec![0.0; ns * na];
    for w in 0..ns {
        match &kernel[w] {
            Some(k) => {
                for (s, q) in signals.iter().zip(k) {
                    table[w * na + s.action] += q;
                }
            }
            None => table[w * na + receiver_best_action(inst, w)] = 1.0,
        }
    }
    let mut sigma = SignalingMechanism { memory: 0, n_states: ns, n_actions: na, table };
    sigma.normalize();
    Ok(sigma)
}

/// Largest D_a with Σ_ω η(ω)∂u(ω,a,a') ≥ D_a·max_ω|∂u(ω,a,a')| for all a'.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularity {
    /// min of `margins` over the support.
    pub d: f64,
    /// D_a for every action.
    pub margins: Vec<f64>,
    /// Maximizing η_a for every action.
    pub interior: Vec<Vec<f64>>,
}

/// Regularity constants. Fails if an action in `support` has D_a ≤ 1e-10.
pub fn regularity_params(inst: &MppInstance, support: &[usize]) -> Result<Regularity> {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let mut margins = Vec::with_capacity(na);
    let mut interior = Vec::with_capacity(na);
    for a in 0..na {
        let scales: Vec<f64> = (0..na)
            .map(|a2| (0..ns).map(|w| inst.du(w, a, a2).abs()).fold(0.0, f64::max))
            .collect();
        if (0..na).any(|a2| a2 != a && scales[a2] == 0.0) {
            // A payoff twin of a: no belief makes a strictly better.
            let mut eta = vec![0.0; ns];
            eta[state_favouring(inst, a)] = 1.0;
            margins.push(0.0);
            interior.push(eta);
            continue;
        }
        // Variables η (ns), D⁺, D⁻.
        let nv = ns + 2;
        let mut prog = LinearProgram::new(nv);
        prog.objective[ns] = 1.0;
        prog.objective[ns + 1] = -1.0;
        let mut sum = vec![1.0; nv];
        sum[ns] = 0.0;
        sum[ns + 1] = 0.0;
        prog.add_eq(sum, 1.0);
        for a2 in 0..na {
            if a2 == a {
                continue;
            }
            let mut row: Vec<f64> = (0..ns).map(|w| inst.du(w, a, a2)).collect();
            row.push(-scales[a2]);
            row.push(scales[a2]);
            prog.add_ge(row, 0.0);
        }
        // A single action has no competitor; cap D there.
        prog.add_le({
            let mut r = vec![0.0; nv];
            r[ns] = 1.0;
            r
        }, 1.0);
        let sol = lp::solve(&prog)?;
        if sol.status != LpStatus::Optimal {
            return Err(MppError::NumericalFailure(format!("regularity LP for action {a}: {:?}", sol.status)));
        }
        let mut eta: Vec<f64> = sol.x[..ns].iter().map(|v| v.max(0.0)).collect();
        let s: f64 = eta.iter().sum();
        eta.iter_mut().for_each(|v| *v /= s);
        margins.push(sol.x[ns] - sol.x[ns + 1]);
        interior.push(eta);
    }
    let mut d = f64::INFINITY;
    for &a in support {
        if margins[a] <= 1e-10 {
            return Err(MppError::RegularityFails { action: a, margin: margins[a] });
        }
        d = d.min(margins[a]);
    }
    Ok(Regularity { d, margins, interior })
}

/// Solution of the perturbation LP and the constants of its a priori bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub y: Vec<f64>,
    pub y_norm: f64,
    /// a_ω = receiver_best_action(ω).
    pub fallback: Vec<usize>,
    /// max_ω 1/ν_f(ω) for the stationary law ν_f of the fallback chain.
    pub tau: f64,
    /// Smallest singular value of I − P_f above 1e-10.
    pub s_f: f64,
    /// 2(1+τ)√|Ω| / s_f.
    pub bound: f64,
}

/// min 1·y over y ≥ 0 with y(I − P_f) = Σ_{a∈A+} w_a (η_a P_a − η_a).
pub fn perturbation_lp(inst: &MppInstance, split: &SplitRepresentation, interior: &[Vec<f64>]) -> Result<Perturbation> {
    let ns = inst.n_states;
    let fallback: Vec<usize> = (0..ns).map(|w| receiver_best_action(inst, w)).collect();
    let mut pf = Matrix::zeros(ns, ns);
    for w in 0..ns {
        for (j, &p) in inst.row(w, fallback[w]).iter().enumerate() {
            pf.set(w, j, p);
        }
    }
    let mut rhs = vec![0.0; ns];
    for &a in &split.support {
        let wa = split.weights[a];
        for w in 0..ns {
            let m = wa * interior[a][w];
            rhs[w] -= m;
            for (j, p) in inst.row(w, a).iter().enumerate() {
                rhs[j] += m * p;
            }
        }
    }
    let mut prog = LinearProgram::new(ns);
    prog.objective = vec![-1.0; ns];
    for j in 0..ns {
        let row: Vec<f64> = (0..ns).map(|w| if w == j { 1.0 } else { 0.0 } - pf.get(w, j)).collect();
        prog.add_eq(row, rhs[j]);
    }
    let sol = lp::solve(&prog)?;
    if sol.status != LpStatus::Optimal {
        return Err(MppError::NumericalFailure(format!("perturbation LP: {:?}", sol.status)));
    }
    let y: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
    let y_norm: f64 = y.iter().sum();

    let nu = stationary_distribution(&pf)?;
    let tau = nu.iter().map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY }).fold(0.0, f64::max);
    let mut gap = Matrix::identity(ns);
    for (g, p) in gap.data.iter_mut().zip(&pf.data) {
        *g -= p;
    }
    let s_f = linalg::singular_values(&gap).into_iter().filter(|&s| s > 1e-10).fold(f64::INFINITY, f64::min);
    let bound = 2.0 * (1.0 + tau) * libm::sqrt(ns as f64) / s_f;
    if y_norm > bound + 1e-6 {
        return Err(MppError::NumericalFailure(format!("‖y‖₁ = {y_norm} exceeds its bound {bound}")));
    }
    Ok(Perturbation { y, y_norm, fallback, tau, s_f, bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustCertificate {
    pub epsilon: f64,
    pub split: SplitRepresentation,
    pub opt_no: f64,
    pub w_min: f64,
    pub regularity: Regularity,
    pub perturbation: Perturbation,
    /// Largest admissible ε: s_f·w_min·D / (2(s_f + 2(1+τ)√|Ω|)).
    pub threshold: f64,
    pub delta: f64,
    pub rho: f64,
    /// ξ_a = (1−δ)μ_a + δη_a for every action (only the support is used).
    pub shifted: Vec<Vec<f64>>,
    /// ŵ_a, zero off the support.
    pub action_weights: Vec<f64>,
    /// ŵ_ω of the state-revealing signals.
    pub state_weights: Vec<f64>,
    pub mechanism: SignalingMechanism,
    /// π̂(ω,a) at ω·|A| + a.
    pub invariant: Vec<f64>,
    pub payoff: f64,
    /// (1 − 2ε/(w_min D)·(1 + 2(1+τ)√|Ω|/s_f))·OPT_no.
    pub payoff_lower_bound: f64,
    /// (1−δ)/(1+δ‖y‖₁)·OPT_no.
    pub sharp_lower_bound: f64,
    /// Largest radius the analytic check certifies for this mechanism.
    pub verified_radius: f64,
}

impl RobustCertificate {
    /// State marginal of π̂.
    pub fn state_law(&self) -> Vec<f64> {
        let na = self.mechanism.n_actions;
        self.invariant.chunks(na).map(|r| r.iter().sum()).collect()
    }

    /// The lottery over S = A+ ∪ Ω: action signals first, then one
    /// state-revealing signal per state.
    pub fn signals(&self) -> Vec<BeliefSignal> {
        let ns = self.mechanism.n_states;
        let mut out: Vec<BeliefSignal> = self
            .split
            .support
            .iter()
            .map(|&a| BeliefSignal { weight: self.action_weights[a], belief: self.shifted[a].clone(), action: a })
            .collect();
        for w in 0..ns {
            let mut belief = vec![0.0; ns];
            belief[w] = 1.0;
            out.push(BeliefSignal { weight: self.state_weights[w], belief, action: self.perturbation.fallback[w] });
        }
        out
    }

    /// max_ω ξ_a(ω)/π̂(ω) for an action in the support.
    pub fn shift_ratio(&self, a: usize) -> f64 {
        let law = self.state_law();
        self.shifted[a]
            .iter()
            .zip(&law)
            .map(|(&x, &p)| if p > POSITIVE { x / p } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

/// The ε-robust mechanism and every intermediate of its construction.
pub fn build_robust_mechanism(inst: &MppInstance, epsilon: f64) -> Result<RobustCertificate> {
    if !(epsilon >= 0.0) {
        return Err(MppError::InvalidInstance(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let (ns, na) = (inst.n_states, inst.n_actions);
    let bench = solve_benchmark(inst, InfoModel::No)?;
    let split = split_mechanism(inst, &bench.mechanism)?;
    let opt_no = bench.value;
    let regularity = regularity_params(inst, &split.support)?;
    let perturbation = perturbation_lp(inst, &split, &regularity.interior)?;
    let d = regularity.d;
    let w_min = split.support.iter().map(|&a| split.weights[a]).fold(f64::INFINITY, f64::min);
    let (s_f, tau) = (perturbation.s_f, perturbation.tau);
    let root = libm::sqrt(ns as f64);
    let threshold = s_f * w_min * d / (2.0 * (s_f + 2.0 * (1.0 + tau) * root));
    if !(epsilon < threshold) {
        return Err(MppError::EpsilonTooLarge { epsilon, threshold });
    }
    let y_norm = perturbation.y_norm;
    let delta = 2.0 * epsilon / (w_min * d - 2.0 * epsilon * y_norm);
    let rho = delta * y_norm / (1.0 + delta * y_norm);
    let c = 1.0 / (1.0 + delta * y_norm);

    let shifted: Vec<Vec<f64>> = (0..na)
        .map(|a| {
            split.beliefs[a]
                .iter()
                .zip(&regularity.interior[a])
                .map(|(m, e)| (1.0 - delta) * m + delta * e)
                .collect()
        })
        .collect();
    let mut action_weights = vec![0.0; na];
    for &a in &split.support {
        action_weights[a] = c * split.weights[a];
    }
    let state_weights: Vec<f64> = perturbation.y.iter().map(|y| c * delta * y).collect();

    let mut invariant = vec![0.0; ns * na];
    for &a in &split.support {
        for w in 0..ns {
            invariant[w * na + a] += action_weights[a] * shifted[a][w];
        }
    }
    for w in 0..ns {
        invariant[w * na + perturbation.fallback[w]] += state_weights[w];
    }
    let payoff: f64 = (0..ns).flat_map(|w| (0..na).map(move |a| (w, a))).map(|(w, a)| invariant[w * na + a] * inst.v(w, a)).sum();
    let payoff_lower_bound = (1.0 - 2.0 * epsilon / (w_min * d) * (1.0 + perturbation.bound)) * opt_no;
    let sharp_lower_bound = (1.0 - delta) / (1.0 + delta * y_norm) * opt_no;

    let mut cert = RobustCertificate {
        epsilon,
        split,
        opt_no,
        w_min,
        regularity,
        perturbation,
        threshold,
        delta,
        rho,
        shifted,
        action_weights,
        state_weights,
        mechanism: SignalingMechanism::full_revelation(inst, 0),
        invariant,
        payoff,
        payoff_lower_bound,
        sharp_lower_bound,
        verified_radius: 0.0,
    };
    cert.mechanism = merge_beliefs(inst, &cert.signals())?;
    cert.verified_radius = cert
        .split
        .support
        .iter()
        .map(|&a| {
            let r = cert.shift_ratio(a);
            if r > 0.0 {
                cert.delta * d / (2.0 * r)
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min);
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustVerification {
    pub radius: f64,
    /// 2·max_ω(ξ_a/π̂)·radius ≤ δD for every action in the support.
    pub analytic_ok: bool,
    /// First support action failing the analytic check.
    pub violating_action: Option<usize>,
    /// Every sampled posterior is obedient and within δD of ξ_a.
    pub sampled_ok: bool,
    /// Smallest obedience margin Σ_ω ξ'_a(ω)∂u(ω,a,a') seen.
    pub worst_margin: f64,
    /// Largest ‖ξ'_a − ξ_a‖₁ seen.
    pub worst_shift: f64,
    /// Every sample satisfied ‖ξ'_a − ξ_a‖₁ ≤ 2·max(ξ_a/π̂)·‖π' − π̂‖₁.
    pub continuity_ok: bool,
    /// Priors checked: the center and every draw.
    pub samples: usize,
}

/// Checks the certificate at its own ε.
pub fn verify_robust(inst: &MppInstance, cert: &RobustCertificate, n_samples: usize, seed: u64) -> RobustVerification {
    verify_robust_at(inst, cert, cert.epsilon, n_samples, seed)
}

/// Analytic and sampled robustness checks at an arbitrary radius.
///
/// Priors are drawn from the ℓ1 ball around the state law of π̂ intersected
/// with the simplex; every odd sample is pushed onto the sphere. Sample `i`
/// uses stream `i` of `seed`.
pub fn verify_robust_at(
    inst: &MppInstance,
    cert: &RobustCertificate,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> RobustVerification {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let dd = cert.delta * cert.regularity.d;
    let center = cert.state_law();
    let mut out = RobustVerification {
        radius,
        analytic_ok: true,
        violating_action: None,
        sampled_ok: true,
        worst_margin: f64::INFINITY,
        worst_shift: 0.0,
        continuity_ok: true,
        samples: 0,
    };
    let ratios: Vec<f64> = (0..na).map(|a| cert.shift_ratio(a)).collect();
    for &a in &cert.split.support {
        if 2.0 * ratios[a] * radius > dd + 1e-10 {
            out.analytic_ok = false;
            out.violating_action = Some(a);
            break;
        }
    }

    let signals = cert.signals();
    let kernel = signal_kernel(ns, &signals);
    // States outside the support of π̂ send their revealing signal.
    let kernel: Vec<Vec<f64>> = kernel
        .into_iter()
        .enumerate()
        .map(|(w, k)| {
            k.unwrap_or_else(|| {
                let mut r = vec![0.0; signals.len()];
                r[cert.split.support.len() + w] = 1.0;
                r
            })
        })
        .collect();
    let check = |prior: &[f64], out: &mut RobustVerification| {
        let moved = linalg::dist1(prior, &center);
        for (i, &a) in cert.split.support.iter().enumerate() {
            let mut post: Vec<f64> = (0..ns).map(|w| prior[w] * kernel[w][i]).collect();
            let mass: f64 = post.iter().sum();
            if mass <= POSITIVE {
                continue;
            }
            post.iter_mut().for_each(|v| *v /= mass);
            for a2 in 0..na {
                if a2 == a {
                    continue;
                }
                let margin: f64 = (0..ns).map(|w| post[w] * inst.du(w, a, a2)).sum();
                out.worst_margin = out.worst_margin.min(margin);
                if margin < -1e-9 {
                    out.sampled_ok = false;
                }
            }
            let shift = linalg::dist1(&post, &cert.shifted[a]);
            out.worst_shift = out.worst_shift.max(shift);
            if shift > dd + 1e-9 {
                out.sampled_ok = false;
            }
            if shift > 2.0 * ratios[a] * moved + 1e-9 {
                out.continuity_ok = false;
            }
        }
        out.samples += 1;
    };
    check(&center, &mut out);
    for i in 0..n_samples {
        let mut r = rng(seed, i as u64);
        let prior = sample_ball(&mut r, &center, radius, i % 2 == 1);
        check(&prior, &mut out);
    }
    if out.worst_margin == f64::INFINITY {
        out.worst_margin = 0.0;
    }
    out
}

/// A point of {π' ∈ Δ : ‖π' − center‖₁ ≤ radius}, uniform on the ball by
/// rejection (or on its sphere when `boundary`). The first n−1 coordinates
/// are drawn from the cross-polytope and the last one closes the sum.
fn sample_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64, boundary: bool) -> Vec<f64> {
    let n = center.len();
    if n < 2 || radius <= 0.0 {
        return center.to_vec();
    }
    for _ in 0..10_000 {
        // n exponentials: n−1 coordinates plus the slack of the ball.
        let e: Vec<f64> = (0..n).map(|_| -libm::log(1.0 - rng.random::<f64>())).collect();
        let total: f64 = e.iter().sum();
        let mut v: Vec<f64> = e[..n - 1]
            .iter()
            .map(|x| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * radius * x / total
            })
            .collect();
        v.push(-v.iter().sum::<f64>());
        let norm = linalg::norm1(&v);
        if norm > radius {
            continue;
        }
        if boundary && norm > 0.0 {
            let f = radius / norm;
            v.iter_mut().for_each(|x| *x *= f);
        }
        let p: Vec<f64> = center.iter().zip(&v).map(|(c, d)| c + d).collect();
        if p.iter().all(|&x| x >= 0.0) {
            return p;
        }
    }
    center.to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagReport {
    /// Smallest ℓ with d_ℓ(σ̂) ≤ ε.
    pub exact: usize,
    /// ⌈ln(2/(ε·π_min))/γ⋆⌉, when the state chain has a gap.
    pub spectral: Option<usize>,
    pub real_spectrum: bool,
    /// Obedience of σ̂ under Lag(exact), unless the slice cap forbids the check.
    pub persuasive: Option<bool>,
}

/// How much lag makes the robust mechanism persuasive.
pub fn persuasive_lag(inst: &MppInstance, cert: &RobustCertificate, slice_cap: usize) -> Result<LagReport> {
    let sigma = &cert.mechanism;
    let eps = cert.epsilon;
    let mut span = 64usize;
    let exact = loop {
        let d = lag_distances(inst, sigma, span)?;
        if let Some(l) = d.iter().position(|&v| v <= eps) {
            break l;
        }
        if span >= MAX_LAG {
            return Err(MppError::CapExceeded { needed: span + 1, cap: MAX_LAG });
        }
        span = (span * 4).min(MAX_LAG);
    };
    let (spectral, real_spectrum) = match spectral_quantities(inst, sigma) {
        Ok(q) if eps > 0.0 => (Some(q.lag_bound(eps)), q.real_spectrum),
        Ok(q) => (None, q.real_spectrum),
        Err(MppError::DegenerateGap(_)) => (None, false),
        Err(e) => return Err(e),
    };
    // The lagged check propagates the known slice instead of enumerating
    // X^{ℓ+1}, so only the mechanism's own slice length meets the cap.
    let persuasive = match check_persuasive(inst, sigma, InfoModel::Lag(exact), 1e-9, slice_cap) {
        Ok(c) => Some(c.persuasive),
        Err(MppError::CapExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(LagReport { exact, spectral, real_spectrum, persuasive })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_split_and_regularity() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::constant(&inst, 0, 1);
        let split = split_mechanism(&inst, &s).unwrap();
        assert_eq!(split.support, vec![1]);
        assert!((split.weights[1] - 1.0).abs() < 1e-12);
        assert!((split.beliefs[1][0] - 0.5).abs() < 1e-12);
        let reg = regularity_params(&inst, &split.support).unwrap();
        assert!((reg.d - 1.0).abs() < 1e-9);
        assert!((reg.interior[1][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stationarity_violation_is_rejected() {
        let inst = MppInstance::example1();
        let signals = [BeliefSignal { weight: 1.0, belief: vec![0.6, 0.4], action: 1 }];
        assert!(matches!(merge_beliefs(&inst, &signals), Err(MppError::StationarityViolated(_))));
    }

    #[test]
    fn twin_actions_fail_regularity() {
        let inst = MppInstance::new(2, 2, vec![0.5; 8], vec![0.3, 0.3, 0.7, 0.7], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(regularity_params(&inst, &[0]), Err(MppError::RegularityFails { .. })));
    }

    #[test]
    fn zero_epsilon_recovers_benchmark() {
        let inst = MppInstance::example1();
        let cert = build_robust_mechanism(&inst, 0.0).unwrap();
        assert_eq!(cert.delta, 0.0);
        assert!((cert.payoff - cert.opt_no).abs() < 1e-9);
        let s = SignalingMechanism::constant(&inst, 0, 1);
        assert!(linalg::dist1(&cert.mechanism.table, &s.table) < 1e-9);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut r = rng(3, 0);
        let c = [0.2, 0.3, 0.5];
        for i in 0..500 {
            let p = sample_ball(&mut r, &c, 0.1, i % 2 == 0);
            assert!(linalg::dist1(&p, &c) <= 0.1 + 1e-12);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
