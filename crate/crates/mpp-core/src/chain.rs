//! Induced slice chains, invariant distributions and mixing quantities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{MppError, Result};
use crate::instance::MppInstance;
use crate::linalg::{self, Lu, Matrix};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::mechanism::{Slices, SignalingMechanism};

/// Transition structure of the chain on X^m, m = max(k, 1), induced by a
/// mechanism with memory k when receivers obey.
///
/// Row h has exactly |X| possible successors, `push(h, x)` for x ∈ X, and
/// `weights[h * |X| + x]` is p(ω | last h)·σ(a | suffix_k h, ω).
#[derive(Debug, Clone)]
pub struct SliceChain {
    pub slices: Slices,
    pub memory: usize,
    pub weights: Vec<f64>,
}

impl SliceChain {
    pub fn new(inst: &MppInstance, sigma: &SignalingMechanism) -> Self {
        Self::with_len(inst, sigma, sigma.memory.max(1))
    }

    /// Chain on X^len; requires `len >= sigma.memory`.
    pub fn with_len(inst: &MppInstance, sigma: &SignalingMechanism, len: usize) -> Self {
        assert!(len >= sigma.memory && len >= 1);
        let nx = inst.n_pairs();
        let slices = Slices::new(nx, len);
        let (ns, na) = (inst.n_states, inst.n_actions);
        let mut weights = vec![0.0; slices.count * nx];
        for h in 0..slices.count {
            let last = slices.last(h);
            let win = slices.suffix(h, sigma.memory);
            let row = inst.row_x(last);
            for w in 0..ns {
                let pw = row[w];
                if pw == 0.0 {
                    continue;
                }
                for a in 0..na {
                    weights[h * nx + w * na + a] = pw * sigma.prob(win, w, a);
                }
            }
        }
        SliceChain { slices, memory: sigma.memory, weights }
    }

    pub fn size(&self) -> usize {
        self.slices.count
    }

    #[inline]
    pub fn succ(&self, h: usize, x: usize) -> usize {
        self.slices.push(h, x)
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.size();
        let nx = self.slices.nx;
        let mut p = Matrix::zeros(n, n);
        for h in 0..n {
            for x in 0..nx {
                p.add(h, self.succ(h, x), self.weights[h * nx + x]);
            }
        }
        p
    }

    /// Row-vector step `d P`.
    pub fn step(&self, d: &[f64]) -> Vec<f64> {
        let nx = self.slices.nx;
        let mut out = vec![0.0; d.len()];
        for (h, &dh) in d.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            for x in 0..nx {
                out[self.succ(h, x)] += dh * self.weights[h * nx + x];
            }
        }
        out
    }

    /// Column-vector product `P g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let nx = self.slices.nx;
        (0..self.size())
            .map(|h| (0..nx).map(|x| self.weights[h * nx + x] * g[self.succ(h, x)]).sum())
            .collect()
    }

    /// Factorization of I − P + 11ᵀ. Nonsingular iff the stationary
    /// distribution is unique.
    pub fn fundamental_lu(&self) -> Option<Lu> {
        let n = self.size();
        let nx = self.slices.nx;
        let mut a = Matrix::zeros(n, n);
        a.data.iter_mut().for_each(|v| *v = 1.0);
        for h in 0..n {
            a.add(h, h, 1.0);
            for x in 0..nx {
                a.add(h, self.succ(h, x), -self.weights[h * nx + x]);
            }
        }
        Lu::factor(&a, 1e-11)
    }
}

/// Solves π(I − P + 11ᵀ) = 1ᵀ given the factorization, cleaning round-off.
pub(crate) fn stationary_from_lu(lu: &Lu, n: usize) -> Vec<f64> {
    let mut pi = lu.solve_transpose(&vec![1.0; n]);
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    pi
}

/// Dense transition matrix over X^m, m = max(k,1).
pub fn induced_chain(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<Matrix> {
    sigma.check_shape(inst)?;
    Ok(SliceChain::new(inst, sigma).to_matrix())
}

/// Unique stationary distribution of a row-stochastic matrix.
///
/// Solved as a linear system and cross-checked against power iteration on
/// the lazy chain.
pub fn stationary_distribution(p: &Matrix) -> Result<Vec<f64>> {
    if p.rows != p.cols || p.rows == 0 {
        return Err(MppError::DimensionMismatch(format!("{}x{} is not a square chain", p.rows, p.cols)));
    }
    let n = p.rows;
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-9 || p.row(i).iter().any(|&x| x < 0.0) {
            return Err(MppError::DimensionMismatch(format!("row {i} is not a distribution")));
        }
    }
    let mut a = Matrix::identity(n);
    for (v, q) in a.data.iter_mut().zip(&p.data) {
        *v += 1.0 - q;
    }
    let lu = Lu::factor(&a, 1e-11).ok_or(MppError::NonUnichain)?;
    let pi = stationary_from_lu(&lu, n);
    let res = linalg::dist1(&p.left_mul(&pi), &pi);
    if res > 1e-10 {
        return Err(MppError::NumericalFailure(format!("stationary residual {res:e}")));
    }
    // Independent route: power iteration on (I + P)/2 from the uniform law.
    let budget = (20_000_000 / (n * n)).clamp(50, 20_000);
    let mut d = vec![1.0 / n as f64; n];
    for _ in 0..budget {
        let next: Vec<f64> = p.left_mul(&d).iter().zip(&d).map(|(a, b)| 0.5 * (a + b)).collect();
        let diff = linalg::dist1(&next, &d);
        d = next;
        if diff < 1e-14 {
            let gap = linalg::dist1(&d, &pi);
            if gap > 1e-8 {
                return Err(MppError::NumericalFailure(format!("power iteration disagrees by {gap:e}")));
            }
            break;
        }
    }
    Ok(pi)
}

/// Distribution over X^m slices.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDistribution {
    pub slice_length: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl InvariantDistribution {
    pub fn slices(&self) -> Slices {
        Slices::new(self.n_states * self.n_actions, self.slice_length)
    }

    /// Marginal over the most recent `j ≤ m` pairs.
    pub fn suffix_marginal(&self, j: usize) -> Vec<f64> {
        assert!(j <= self.slice_length);
        let s = self.slices();
        let mut out = vec![0.0; crate::mechanism::pow(s.nx, j)];
        for (h, &p) in self.probs.iter().enumerate() {
            out[s.suffix(h, j)] += p;
        }
        out
    }

    /// π(ω, a) of the most recent pair, indexed ω·|A| + a.
    pub fn pair_marginal(&self) -> Vec<f64> {
        self.suffix_marginal(1)
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        let xa = self.pair_marginal();
        xa.chunks(self.n_actions).map(|c| c.iter().sum()).collect()
    }

    pub fn action_marginal(&self) -> Vec<f64> {
        let xa = self.pair_marginal();
        let mut out = vec![0.0; self.n_actions];
        for (x, p) in xa.iter().enumerate() {
            out[x % self.n_actions] += p;
        }
        out
    }

    pub fn expected_reward(&self, inst: &MppInstance) -> f64 {
        linalg::dot(&self.pair_marginal(), &inst.reward)
    }

    /// ‖πP − π‖₁ under the chain of `sigma` on slices of this length.
    pub fn balance_residual(&self, inst: &MppInstance, sigma: &SignalingMechanism) -> f64 {
        let chain = SliceChain::with_len(inst, sigma, self.slice_length);
        linalg::dist1(&chain.step(&self.probs), &self.probs)
    }
}

/// Invariant distribution maximizing the sender's reward among all
/// solutions of the balance equations.
pub fn sender_preferred_invariant(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<InvariantDistribution> {
    sigma.check_shape(inst)?;
    let chain = SliceChain::new(inst, sigma);
    let n = chain.size();
    let wrap = |probs| InvariantDistribution {
        slice_length: chain.slices.len,
        n_states: inst.n_states,
        n_actions: inst.n_actions,
        probs,
    };
    if let Some(lu) = chain.fundamental_lu() {
        let pi = stationary_from_lu(&lu, n);
        if linalg::dist1(&chain.step(&pi), &pi) <= 1e-10 {
            return Ok(wrap(pi));
        }
    }
    // Several invariant laws: pick the best one by LP.
    let nx = chain.slices.nx;
    let mut lp = LinearProgram::new(n);
    lp.objective = (0..n).map(|h| inst.reward[chain.slices.last(h)]).collect();
    let p = chain.to_matrix();
    for j in 0..n {
        let mut row: Vec<f64> = (0..n).map(|h| p.get(h, j)).collect();
        row[j] -= 1.0;
        lp.add_eq(row, 0.0);
    }
    lp.add_eq(vec![1.0; n], 1.0);
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(MppError::NumericalFailure(format!("invariant LP returned {:?}", sol.status)));
    }
    let _ = nx;
    let mut pi = sol.x;
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(wrap(pi))
}

/// E[v] under the sender-preferred invariant distribution.
pub fn long_run_reward(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<f64> {
    Ok(sender_preferred_invariant(inst, sigma)?.expected_reward(inst))
}

/// State chain T(ω,ω') = Σ_a σ(a|ω) p(ω'|ω,a) of a history-independent mechanism.
pub fn state_chain(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<Matrix> {
    sigma.check_shape(inst)?;
    if sigma.memory != 0 {
        return Err(MppError::DimensionMismatch(format!("expected memory 0, got {}", sigma.memory)));
    }
    let n = inst.n_states;
    let mut t = Matrix::zeros(n, n);
    for w in 0..n {
        for a in 0..inst.n_actions {
            let q = sigma.prob(0, w, a);
            for (next, &p) in inst.row(w, a).iter().enumerate() {
                t.add(w, next, q * p);
            }
        }
    }
    Ok(t)
}

/// d_ℓ(σ) = max_x ‖Q^ℓ(x,·) − π‖₁ with Q^ℓ(x,·) = p(·|x) T^ℓ.
pub fn lag_distance(inst: &MppInstance, sigma: &SignalingMechanism, lag: usize) -> Result<f64> {
    let t = state_chain(inst, sigma)?;
    let pi = sender_preferred_invariant(inst, sigma)?.state_marginal();
    let mut worst: f64 = 0.0;
    for x in 0..inst.n_pairs() {
        let mut d = inst.row_x(x).to_vec();
        for _ in 0..lag {
            d = t.left_mul(&d);
        }
        worst = worst.max(linalg::dist1(&d, &pi));
    }
    Ok(worst)
}

/// All distances d_0, …, d_{max_lag} in one pass.
pub fn lag_distances(inst: &MppInstance, sigma: &SignalingMechanism, max_lag: usize) -> Result<Vec<f64>> {
    let t = state_chain(inst, sigma)?;
    let pi = sender_preferred_invariant(inst, sigma)?.state_marginal();
    let mut rows: Vec<Vec<f64>> = (0..inst.n_pairs()).map(|x| inst.row_x(x).to_vec()).collect();
    let mut out = Vec::with_capacity(max_lag + 1);
    for l in 0..=max_lag {
        if l > 0 {
            rows = rows.iter().map(|d| t.left_mul(d)).collect();
        }
        out.push(rows.iter().map(|d| linalg::dist1(d, &pi)).fold(0.0, f64::max));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralQuantities {
    /// 1 − largest modulus among eigenvalues other than the unit one.
    pub gap: f64,
    pub pi_min: f64,
    /// Whether every eigenvalue of the state chain is real.
    pub real_spectrum: bool,
}

impl SpectralQuantities {
    /// ⌈ln(2/(ε·π_min)) / γ⋆⌉, never below zero.
    pub fn lag_bound(&self, epsilon: f64) -> usize {
        let v = libm::log(2.0 / (epsilon * self.pi_min)) / self.gap;
        if v <= 0.0 {
            0
        } else {
            libm::ceil(v) as usize
        }
    }
}

pub fn spectral_quantities(inst: &MppInstance, sigma: &SignalingMechanism) -> Result<SpectralQuantities> {
    let t = state_chain(inst, sigma)?;
    let pi = sender_preferred_invariant(inst, sigma)?.state_marginal();
    let mut ev = linalg::eigenvalues(&t);
    // Drop the eigenvalue closest to 1.
    let mut idx = 0;
    let mut best = f64::INFINITY;
    for (i, &(re, im)) in ev.iter().enumerate() {
        let d = libm::hypot(re - 1.0, im);
        if d < best {
            best = d;
            idx = i;
        }
    }
    ev.remove(idx);
    let lambda = ev.iter().map(|&(re, im)| libm::hypot(re, im)).fold(0.0, f64::max);
    let gap = 1.0 - lambda;
    if gap <= 1e-12 {
        return Err(MppError::DegenerateGap(gap));
    }
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let real_spectrum = ev.iter().all(|&(_, im)| im.abs() <= 1e-12);
    Ok(SpectralQuantities { gap, pi_min, real_spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn always_one() -> (MppInstance, SignalingMechanism) {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::constant(&inst, 0, 1);
        (inst, s)
    }

    #[test]
    fn two_state_switch_is_uniform() {
        let p = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.8, 0.2]]);
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_is_not_unichain() {
        assert_eq!(stationary_distribution(&Matrix::identity(2)), Err(MppError::NonUnichain));
    }

    #[test]
    fn always_one_chain_and_invariant() {
        let (inst, s) = always_one();
        let p = induced_chain(&inst, &s).unwrap();
        for x in 0..4 {
            let w = x / 2;
            for next in 0..2 {
                assert_eq!(p.get(x, next * 2 + 1), inst.p(w, x % 2, next));
                assert_eq!(p.get(x, next * 2), 0.0);
            }
        }
        let inv = sender_preferred_invariant(&inst, &s).unwrap();
        let sm = inv.state_marginal();
        assert!((sm[0] - 0.5).abs() < 1e-12);
        assert!((inv.action_marginal()[1] - 1.0).abs() < 1e-12);
        assert!((long_run_reward(&inst, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_revelation_reward_is_mass_on_state_one() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::full_revelation(&inst, 0);
        let t = state_chain(&inst, &s).unwrap();
        // Under a = ω: state 0 stays w.p. 0.8, state 1 flips w.p. 0.8.
        let pi1 = t.get(0, 1) / (t.get(0, 1) + t.get(1, 0));
        assert!((long_run_reward(&inst, &s).unwrap() - pi1).abs() < 1e-12);
    }

    #[test]
    fn lag_distance_closed_form() {
        let (inst, s) = always_one();
        let d = lag_distances(&inst, &s, 6).unwrap();
        for (l, v) in d.iter().enumerate() {
            assert!((v - libm::pow(0.6, (l + 1) as f64)).abs() < 1e-12, "l={l} {v}");
        }
        assert!((lag_distance(&inst, &s, 1).unwrap() - 0.36).abs() < 1e-12);
    }

    #[test]
    fn spectral_example() {
        let (inst, s) = always_one();
        let q = spectral_quantities(&inst, &s).unwrap();
        assert!((q.gap - 0.4).abs() < 1e-12);
        assert!((q.pi_min - 0.5).abs() < 1e-12);
        assert_eq!(q.lag_bound(0.1), 10);
        assert!(lag_distance(&inst, &s, q.lag_bound(0.1)).unwrap() <= 0.1);
    }

    #[test]
    fn echo_mechanism_picks_best_invariant() {
        // One state, indifferent receiver, mechanism repeats the last action.
        let inst = MppInstance::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], vec![0.3, 0.7]).unwrap();
        let s = SignalingMechanism::new(1, 1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let inv = sender_preferred_invariant(&inst, &s).unwrap();
        assert!((inv.probs[1] - 1.0).abs() < 1e-9);
        assert!((inv.expected_reward(&inst) - 0.7).abs() < 1e-9);
    }
}
