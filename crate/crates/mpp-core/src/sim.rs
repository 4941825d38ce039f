//! Monte Carlo trajectories of the sender–receiver process.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::chain::{sender_preferred_invariant, SliceChain};
use crate::error::{MppError, Result};
use crate::generate::rng;
use crate::instance::MppInstance;
use crate::mechanism::SignalingMechanism;
use crate::persuasion::{InfoModel, MAX_LAG};
use crate::POSITIVE;

const INIT_STREAM: u64 = 0;
const TRANSITION_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;

/// How receivers turn a recommendation into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Follow,
    /// Exact posterior under the model, best response, ties to the
    /// recommendation.
    BestRespond(InfoModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub length: usize,
    pub states: Vec<usize>,
    pub signals: Vec<usize>,
    pub actions: Vec<usize>,
    /// Empirical frequency of (ω, a) at ω·|A| + a.
    pub frequencies: Vec<f64>,
    pub reward: f64,
    /// Fraction of periods with a_t = s_t.
    pub obedience_rate: f64,
}

fn draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Joint law of (ω_t, s_t) the receiver holds given what the model reveals,
/// indexed by the revealed slice.
struct Beliefs {
    lag: Option<usize>,
    joints: Vec<Vec<f64>>,
}

impl Beliefs {
    fn new(chain: &SliceChain, pi: &[f64], model: InfoModel) -> Self {
        let nx = chain.slices.nx;
        let n = chain.size();
        let joint = |d: &[f64]| {
            let mut j = vec![0.0; nx];
            for (h, &dh) in d.iter().enumerate() {
                if dh != 0.0 {
                    for x in 0..nx {
                        j[x] += dh * chain.weights[h * nx + x];
                    }
                }
            }
            j
        };
        match model {
            InfoModel::No => Beliefs { lag: None, joints: vec![joint(pi)] },
            InfoModel::Full | InfoModel::Lag(_) => {
                let l = if let InfoModel::Lag(l) = model { l } else { 0 };
                let joints = (0..n)
                    .map(|s| {
                        let mut d = vec![0.0; n];
                        d[s] = 1.0;
                        for _ in 0..l {
                            d = chain.step(&d);
                        }
                        joint(&d)
                    })
                    .collect();
                Beliefs { lag: Some(l), joints }
            }
        }
    }

    fn joint(&self, history: &VecDeque<usize>) -> &[f64] {
        match self.lag {
            None => &self.joints[0],
            Some(l) => &self.joints[history[l]],
        }
    }
}

/// Receiver's choice after signal `s` under the joint law `joint`.
fn best_response(inst: &MppInstance, joint: &[f64], s: usize) -> usize {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let mass: f64 = (0..ns).map(|w| joint[w * na + s]).sum();
    if mass <= POSITIVE {
        return s;
    }
    let value = |a: usize| (0..ns).map(|w| joint[w * na + s] * inst.u(w, a)).sum::<f64>() / mass;
    let mut best = s;
    let mut top = value(s);
    for a in 0..na {
        let v = value(a);
        if v > top + 1e-12 {
            best = a;
            top = v;
        }
    }
    best
}

/// Simulates `length` periods from a slice drawn from the sender-preferred
/// invariant law. Transitions and signals use separate streams of `seed`.
///
/// Under `BestRespond(Lag(ℓ))` the ℓ slices before the first one are drawn
/// backwards from the reversed chain, so every behavior starts from the same
/// slice and shares the transition and signal draws.
pub fn simulate(
    inst: &MppInstance,
    sigma: &SignalingMechanism,
    length: usize,
    seed: u64,
    behavior: Behavior,
    slice_cap: usize,
) -> Result<Trajectory> {
    sigma.check_shape(inst)?;
    if length == 0 {
        return Err(MppError::InvalidInstance(format!("trajectory length must be positive")));
    }
    let m = sigma.memory.max(1);
    if m > slice_cap {
        return Err(MppError::CapExceeded { needed: m, cap: slice_cap });
    }
    if let Behavior::BestRespond(InfoModel::Lag(l)) = behavior {
        if l > MAX_LAG {
            return Err(MppError::CapExceeded { needed: l, cap: MAX_LAG });
        }
    }
    let na = inst.n_actions;
    let nx = inst.n_pairs();
    let chain = SliceChain::new(inst, sigma);
    let pi = sender_preferred_invariant(inst, sigma)?.probs;
    let beliefs = match behavior {
        Behavior::Follow => None,
        Behavior::BestRespond(model) => Some(Beliefs::new(&chain, &pi, model)),
    };
    let windows = sigma.windows();
    let mut init = rng(seed, INIT_STREAM);
    let mut trans = rng(seed, TRANSITION_STREAM);
    let mut sig = rng(seed, SIGNAL_STREAM);

    let keep = beliefs.as_ref().and_then(|b| b.lag).unwrap_or(0) + 1;
    let mut history: VecDeque<usize> = VecDeque::with_capacity(keep + 1);
    let mut h = draw(&mut init, &pi);
    history.push_back(h);
    // Earlier slices come from the time-reversed chain, so the starting
    // slice does not depend on the behavior.
    let top = crate::mechanism::pow(nx, chain.slices.len - 1);
    let mut back = vec![0.0; nx];
    while history.len() < keep {
        let cur = history[history.len() - 1];
        let x = chain.slices.last(cur);
        for (old, b) in back.iter_mut().enumerate() {
            let prev = old * top + cur / nx;
            *b = pi[prev] * chain.weights[prev * nx + x];
        }
        history.push_back(draw(&mut init, &back) * top + cur / nx);
    }

    let mut states = Vec::with_capacity(length);
    let mut signals = Vec::with_capacity(length);
    let mut actions = Vec::with_capacity(length);
    let mut counts = vec![0usize; nx];
    let mut reward = 0.0;
    let mut obeyed = 0usize;
    for _ in 0..length {
        let last = chain.slices.last(h);
        let w = draw(&mut trans, inst.row_x(last));
        let s = draw(&mut sig, sigma.row(h % windows, w));
        let a = match &beliefs {
            None => s,
            Some(b) => best_response(inst, b.joint(&history), s),
        };
        if a == s {
            obeyed += 1;
        }
        reward += inst.v(w, a);
        counts[w * na + a] += 1;
        states.push(w);
        signals.push(s);
        actions.push(a);
        h = chain.succ(h, w * na + a);
        history.push_front(h);
        history.truncate(keep);
    }
    let t = length as f64;
    Ok(Trajectory {
        seed,
        length,
        states,
        signals,
        actions,
        frequencies: counts.iter().map(|&c| c as f64 / t).collect(),
        reward: reward / t,
        obedience_rate: obeyed as f64 / t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_reward_is_exact() {
        let mut inst = MppInstance::example1();
        inst.reward = vec![0.25; 4];
        let s = SignalingMechanism::full_revelation(&inst, 1);
        let t = simulate(&inst, &s, 1000, 5, Behavior::Follow, 4).unwrap();
        assert_eq!(t.reward, 0.25);
        assert!((t.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn always_one_deviates_with_history() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::constant(&inst, 0, 1);
        let t = simulate(&inst, &s, 2000, 1, Behavior::BestRespond(InfoModel::No), 4).unwrap();
        assert_eq!(t.obedience_rate, 1.0);
        let t = simulate(&inst, &s, 2000, 1, Behavior::BestRespond(InfoModel::Full), 4).unwrap();
        assert!(t.obedience_rate < 0.9);
    }

    #[test]
    fn seeded_runs_repeat() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::full_revelation(&inst, 0);
        let a = simulate(&inst, &s, 500, 9, Behavior::Follow, 4).unwrap();
        let b = simulate(&inst, &s, 500, 9, Behavior::Follow, 4).unwrap();
        assert_eq!(a, b);
    }
}
