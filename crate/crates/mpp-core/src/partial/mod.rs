//! Lagged information: the receiver at time t knows the history up to
//! t − ℓ − 1. The sender's problem over Σ_k is a bilinear program in the
//! occupancy measure; it is solved here by multi-start local search over the
//! mechanism table with exact verification of every candidate.

mod eval;
mod slp;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::benchmark::solve_benchmark;
use crate::chain::{sender_preferred_invariant, stationary_from_lu, InvariantDistribution, SliceChain};
use crate::error::{MppError, Result};
use crate::generate::{dirichlet_row, rng};
use crate::instance::MppInstance;
use crate::mechanism::{pow, SignalingMechanism, Slices};
use crate::persuasion::{check_persuasive, InfoModel};

use eval::Evaluator;
pub use slp::SlpSettings;

/// Closed-form sizes of the bilinear program for (ℓ, k).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    /// L = ℓ + max(k, 1).
    pub slice_length: usize,
    /// |X|^L·|Ω|·|A|.
    pub variables: usize,
    /// One row per known slice in X^{max(k,1)} and ordered action pair.
    pub obedience_rows: usize,
    /// One row per (g, ω) with g ∈ X^L.
    pub flow_rows: usize,
    pub normalization_rows: usize,
    /// One row per window in X^k, state, action and unordered pair of
    /// distinct slices in X^L that share that window.
    pub consistency_rows: usize,
}

pub fn census(lag: usize, memory: usize, inst: &MppInstance) -> Census {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let nx = ns * na;
    let m = memory.max(1);
    let l = lag + m;
    let slices = pow(nx, l);
    let class = pow(nx, l - memory);
    Census {
        slice_length: l,
        variables: slices * ns * na,
        obedience_rows: pow(nx, m) * na * na,
        flow_rows: slices * ns,
        normalization_rows: 1,
        consistency_rows: pow(nx, memory) * ns * na * class * class.saturating_sub(1) / 2,
    }
}

/// The bilinear program for MPP(Φ_ℓ, Σ_k) on one instance.
///
/// Variables z(g, ω, a), g ∈ X^L the slice ending at t − 1, live at
/// `(g·|Ω| + ω)·|A| + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearProgram {
    pub instance: MppInstance,
    pub lag: usize,
    pub memory: usize,
    pub census: Census,
}

/// Rejects ℓ = 0 and sizes beyond the cap: max(k, 1) and ℓ must both be at
/// most `slice_cap`.
pub fn build_bilinear(inst: &MppInstance, lag: usize, memory: usize, slice_cap: usize) -> Result<BilinearProgram> {
    if lag == 0 {
        return Err(MppError::DimensionMismatch(String::from("lag must be at least 1")));
    }
    let m = memory.max(1);
    if m > slice_cap {
        return Err(MppError::CapExceeded { needed: m, cap: slice_cap });
    }
    if lag > slice_cap {
        return Err(MppError::CapExceeded { needed: lag, cap: slice_cap });
    }
    Ok(BilinearProgram { instance: inst.clone(), lag, memory, census: census(lag, memory, inst) })
}

/// Worst residual of each block for a candidate z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResiduals {
    /// Most negative obedience row (0 when all hold).
    pub obedience: f64,
    pub flow: f64,
    pub normalization: f64,
    pub consistency: f64,
}

impl BilinearProgram {
    fn slices(&self) -> Slices {
        Slices::new(self.instance.n_pairs(), self.census.slice_length)
    }

    /// z = π_L(g)·p(ω | last g)·σ(a | suffix_k g, ω) for the invariant law
    /// π_L of the chain on X^L.
    pub fn occupancy(&self, sigma: &SignalingMechanism) -> Result<Vec<f64>> {
        let inst = &self.instance;
        sigma.check_shape(inst)?;
        if sigma.memory != self.memory {
            return Err(MppError::DimensionMismatch(format!("mechanism memory {} ≠ {}", sigma.memory, self.memory)));
        }
        let chain = SliceChain::with_len(inst, sigma, self.census.slice_length);
        let lu = chain.fundamental_lu().ok_or(MppError::NonUnichain)?;
        let pi = stationary_from_lu(&lu, chain.size());
        let (ns, na) = (inst.n_states, inst.n_actions);
        let sl = self.slices();
        let win = pow(inst.n_pairs(), self.memory);
        let mut z = vec![0.0; self.census.variables];
        for g in 0..sl.count {
            let row = inst.row_x(sl.last(g));
            for w in 0..ns {
                for a in 0..na {
                    z[(g * ns + w) * na + a] = pi[g] * row[w] * sigma.prob(g % win, w, a);
                }
            }
        }
        Ok(z)
    }

    pub fn residuals(&self, z: &[f64]) -> BlockResiduals {
        let inst = &self.instance;
        let (ns, na) = (inst.n_states, inst.n_actions);
        let nx = inst.n_pairs();
        let sl = self.slices();
        let idx = |g: usize, w: usize, a: usize| (g * ns + w) * na + a;
        let tail = pow(nx, self.lag);

        let mut obedience: f64 = 0.0;
        for s in 0..pow(nx, self.memory.max(1)) {
            for a in 0..na {
                for a2 in 0..na {
                    let mut row = 0.0;
                    for r in 0..tail {
                        let g = s * tail + r;
                        for w in 0..ns {
                            row += z[idx(g, w, a)] * inst.du(w, a, a2);
                        }
                    }
                    obedience = obedience.max(-row);
                }
            }
        }

        let mut flow: f64 = 0.0;
        let drop = pow(nx, sl.len - 1);
        for g in 0..sl.count {
            let last = sl.last(g);
            let (lw, la) = (last / na, last % na);
            let head = g / nx;
            for w in 0..ns {
                let mut inflow = 0.0;
                for y in 0..nx {
                    inflow += z[idx(y * drop + head, lw, la)];
                }
                inflow *= inst.p(lw, la, w);
                let out: f64 = (0..na).map(|a| z[idx(g, w, a)]).sum();
                flow = flow.max((inflow - out).abs());
            }
        }

        let normalization = (z.iter().sum::<f64>() - 1.0).abs();

        let mut consistency: f64 = 0.0;
        let win = pow(nx, self.memory);
        for g in 0..sl.count {
            for g2 in g + 1..sl.count {
                if g % win != g2 % win {
                    continue;
                }
                for w in 0..ns {
                    let t1: f64 = (0..na).map(|a| z[idx(g, w, a)]).sum();
                    let t2: f64 = (0..na).map(|a| z[idx(g2, w, a)]).sum();
                    for a in 0..na {
                        let d = z[idx(g, w, a)] * t2 - z[idx(g2, w, a)] * t1;
                        consistency = consistency.max(d.abs());
                    }
                }
            }
        }
        BlockResiduals { obedience, flow, normalization, consistency }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartKind {
    FullRevelation,
    Benchmark,
    Warm,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub index: usize,
    pub kind: StartKind,
    /// Verified value of the candidate from this start, if it passed.
    pub value: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSolution {
    pub lag: usize,
    pub memory: usize,
    pub mechanism: SignalingMechanism,
    pub invariant: InvariantDistribution,
    /// Long-run reward of the mechanism: a lower bound on the optimum.
    pub value: f64,
    pub starts: usize,
    pub best_start: usize,
    pub trace: Vec<StartTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Obedience tolerance of the final check.
    pub tol: f64,
    pub slice_cap: usize,
    /// Extra deterministic starting points, e.g. a solution for smaller k.
    pub warm_starts: Vec<SignalingMechanism>,
    pub search: SlpSettings,
    /// Iterations every start gets before the best ones are refined; `None`
    /// picks a budget from the table size.
    pub screen_iterations: Option<usize>,
    /// How many screened starts are run to convergence.
    pub refine: usize,
}

impl PartialOptions {
    pub fn new(n_starts: usize, seed: u64) -> Self {
        PartialOptions {
            n_starts,
            seed,
            tol: 1e-9,
            slice_cap: crate::DEFAULT_SLICE_CAP,
            warm_starts: Vec::new(),
            search: SlpSettings::default(),
            screen_iterations: None,
            refine: 3,
        }
    }
}

/// Tables up to this many entries get the full iteration budget on every start.
const FULL_BUDGET_TABLE: usize = 512;
const SCREEN_ITERATIONS: usize = 1;

/// Multi-start search with default options.
pub fn alternating_solve(program: &BilinearProgram, n_starts: usize, seed: u64) -> Result<PartialSolution> {
    solve_partial(program, &PartialOptions::new(n_starts, seed))
}

/// Multi-start local search.
///
/// Every start is improved by sequential linear programming on the table,
/// then made exactly obedient (tiny entries dropped and binding terms
/// corrected, or as a last resort mixed with full revelation). Starts: full
/// revelation, the benchmark optimum (full-history one lifted to Σ_k when
/// k ≥ 1, the no-history one when k = 0), any caller warm starts, then
/// `n_starts` Dirichlet(1) tables drawn from stream `i` of `seed`. On large
/// tables each start first gets a short budget and only the `refine` most
/// promising ones continue. The returned mechanism is the best candidate
/// passing `check_persuasive` at `tol`.
pub fn solve_partial(program: &BilinearProgram, opts: &PartialOptions) -> Result<PartialSolution> {
    let inst = &program.instance;
    let (k, lag) = (program.memory, program.lag);
    if k.max(1) > opts.slice_cap || lag > opts.slice_cap {
        return Err(MppError::CapExceeded { needed: k.max(1).max(lag), cap: opts.slice_cap });
    }
    let fr = SignalingMechanism::full_revelation(inst, k);
    let mut starts: Vec<(StartKind, SignalingMechanism)> = vec![(StartKind::FullRevelation, fr.clone())];
    let bench = if k == 0 {
        solve_benchmark(inst, InfoModel::No)?.mechanism
    } else {
        solve_benchmark(inst, InfoModel::Full)?.mechanism.lift(k)
    };
    starts.push((StartKind::Benchmark, bench));
    for w in &opts.warm_starts {
        w.check_shape(inst)?;
        if w.memory > k {
            return Err(MppError::DimensionMismatch(format!("warm start memory {} > {k}", w.memory)));
        }
        starts.push((StartKind::Warm, w.lift(k)));
    }
    let windows = pow(inst.n_pairs(), k);
    for i in 0..opts.n_starts {
        let mut r = rng(opts.seed, i as u64);
        let mut table = Vec::with_capacity(windows * inst.n_pairs());
        for _ in 0..windows * inst.n_states {
            table.extend(dirichlet_row(&mut r, inst.n_actions));
        }
        let mut s = SignalingMechanism { memory: k, n_states: inst.n_states, n_actions: inst.n_actions, table };
        s.normalize();
        starts.push((StartKind::Random, s));
    }

    let mut ev = Evaluator::new(inst, k, lag);
    let full = opts.search.max_iterations;
    let screen = opts
        .screen_iterations
        .unwrap_or(if fr.table.len() <= FULL_BUDGET_TABLE { full } else { SCREEN_ITERATIONS })
        .min(full);
    let mut evaluations = vec![0usize; starts.len()];
    let mut local: Vec<(f64, Vec<f64>)> = Vec::with_capacity(starts.len());
    let short = SlpSettings { max_iterations: screen, ..opts.search };
    for (i, (_, start)) in starts.iter().enumerate() {
        let before = ev.evaluations;
        let x = slp::ascend(&mut ev, start.table.clone(), &short);
        let m = ev.eval(&x).map_or(f64::NEG_INFINITY, |p| slp::merit(&p, opts.search.penalty));
        local.push((m, x));
        evaluations[i] += ev.evaluations - before;
    }
    let mut finish = vec![screen == full; starts.len()];
    if screen < full {
        let mut order: Vec<usize> = (0..starts.len()).collect();
        order.sort_by(|&a, &b| local[b].0.partial_cmp(&local[a].0).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
        for &i in order.iter().take(opts.refine) {
            let before = ev.evaluations;
            let x = core::mem::take(&mut local[i].1);
            local[i].1 = slp::ascend(&mut ev, x, &opts.search);
            evaluations[i] += ev.evaluations - before;
            finish[i] = true;
        }
    }

    let mut best: Option<(f64, usize, SignalingMechanism, InvariantDistribution)> = None;
    let mut trace = Vec::with_capacity(starts.len());
    for (index, ((kind, start), (_, x))) in starts.into_iter().zip(local).enumerate() {
        let before = ev.evaluations;
        let mut candidates = Vec::new();
        if kind != StartKind::Random {
            candidates.push(start.table);
        }
        if finish[index] {
            candidates.extend(make_exact(&mut ev, x, &fr.table, 0.5 * opts.tol));
        }
        let mut start_best: Option<f64> = None;
        for table in candidates {
            let mut sigma = SignalingMechanism { memory: k, n_states: inst.n_states, n_actions: inst.n_actions, table };
            sigma.normalize();
            let Ok(check) = check_persuasive(inst, &sigma, InfoModel::Lag(lag), opts.tol, opts.slice_cap) else {
                continue;
            };
            if !check.persuasive {
                continue;
            }
            let inv = sender_preferred_invariant(inst, &sigma)?;
            let value = inv.expected_reward(inst);
            if start_best.map_or(true, |b| value > b) {
                start_best = Some(value);
            }
            if best.as_ref().map_or(true, |b| value > b.0 + 1e-12) {
                best = Some((value, index, sigma, inv));
            }
        }
        evaluations[index] += ev.evaluations - before;
        trace.push(StartTrace { index, kind, value: start_best, evaluations: evaluations[index] });
    }
    let (value, best_start, mechanism, invariant) = best.ok_or(MppError::NoFeasibleCandidate)?;
    Ok(PartialSolution { lag, memory: k, mechanism, invariant, value, starts: trace.len(), best_start, trace })
}

/// Obedient tables near a local solution: entries below a few thresholds
/// are dropped and the binding terms corrected; if none of those passes,
/// the smallest admissible mixture with full revelation.
fn make_exact(ev: &mut Evaluator, x: Vec<f64>, fr: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let na = ev.inst.n_actions;
    let mut out = Vec::new();
    for threshold in [1e-8, 1e-6, 1e-4] {
        let mut y = x.clone();
        for row in y.chunks_mut(na) {
            row.iter_mut().filter(|v| **v < threshold).for_each(|v| *v = 0.0);
            let t: f64 = row.iter().sum();
            if t > 0.0 {
                row.iter_mut().for_each(|v| *v /= t);
            }
        }
        if y.chunks(na).any(|r| r.iter().all(|&v| v == 0.0)) {
            continue;
        }
        if let Some(y) = slp::polish(ev, y, tol) {
            out.push(y);
        }
    }
    if out.is_empty() {
        out.extend(make_obedient(ev, x, fr, tol));
    }
    out
}

/// Euclidean projection of each length-`m` row onto the probability simplex.
fn project_rows(x: &mut [f64], m: usize) {
    let mut u = vec![0.0; m];
    for row in x.chunks_mut(m) {
        u.copy_from_slice(row);
        u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        let mut acc = 0.0;
        let mut theta = 0.0;
        for (j, &uj) in u.iter().enumerate() {
            acc += uj;
            let t = (acc - 1.0) / (j + 1) as f64;
            if uj - t > 0.0 {
                theta = t;
            }
        }
        for v in row.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
    }
}

/// Smallest mixture (1−t)·x + t·fr, searched over t, whose lagged
/// violation is at most `tol`.
fn make_obedient(ev: &mut Evaluator, mut x: Vec<f64>, fr: &[f64], tol: f64) -> Option<Vec<f64>> {
    project_rows(&mut x, ev.inst.n_actions);
    let mix = |t: f64| -> Vec<f64> { x.iter().zip(fr).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
    let ok = |ev: &mut Evaluator, t: f64| -> bool {
        match ev.eval(&mix(t)) {
            Some(p) => ev.violation(&p) <= tol,
            None => false,
        }
    };
    if ok(ev, 0.0) {
        return Some(x);
    }
    let mut hi = 1e-10;
    while hi < 1.0 && !ok(ev, hi) {
        hi *= 4.0;
    }
    if hi >= 1.0 {
        hi = 1.0;
        if !ok(ev, hi) {
            return None;
        }
    }
    let mut lo = hi / 4.0;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ok(ev, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(mix(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let mut x = vec![0.5, 0.9, -0.3, 2.0, 2.0, 2.0];
        project_rows(&mut x, 3);
        assert!((x[0] + x[1] + x[2] - 1.0).abs() < 1e-12);
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 0.7).abs() < 1e-12 && x[2] == 0.0);
        assert!(x[3..].iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn census_examples() {
        let inst = MppInstance::example1();
        assert_eq!(census(1, 1, &inst).variables, 64);
        assert_eq!(census(2, 1, &inst).variables, 256);
        assert_eq!(census(2, 1, &inst).slice_length, 3);
        let c = census(1, 0, &inst);
        assert_eq!(c.variables, 64);
        // Σ_0: every slice in X^2 shares the empty window.
        assert_eq!(c.consistency_rows, 2 * 2 * 16 * 15 / 2);
    }

    #[test]
    fn factored_occupancy_satisfies_equalities() {
        let inst = MppInstance::example1();
        let mut r = rng(3, 0);
        for (lag, k) in [(1, 0), (1, 1), (2, 1), (1, 2)] {
            let prog = build_bilinear(&inst, lag, k, 4).unwrap();
            let sigma = crate::generate::random_mechanism(&mut r, &inst, k);
            let z = prog.occupancy(&sigma).unwrap();
            assert_eq!(z.len(), prog.census.variables);
            let res = prog.residuals(&z);
            assert!(res.flow < 1e-12 && res.normalization < 1e-12 && res.consistency < 1e-14, "{res:?}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let inst = MppInstance::example1();
        assert_eq!(build_bilinear(&inst, 1, 5, 4), Err(MppError::CapExceeded { needed: 5, cap: 4 }));
        assert!(build_bilinear(&inst, 1, 4, 4).is_ok());
    }
}
