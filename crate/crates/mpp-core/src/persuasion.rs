//! Obedience checks under the no-history, full-history and lagged models.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{sender_preferred_invariant, SliceChain};
use crate::error::{MppError, Result};
use crate::instance::MppInstance;
use crate::mechanism::SignalingMechanism;
use crate::POSITIVE;

/// What the receiver knows about the past when acting at time t.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoModel {
    /// Nothing; the belief is the invariant distribution.
    No,
    /// The whole history.
    Full,
    /// Everything up to time t − ℓ − 1.
    Lag(usize),
}

/// Largest lag whose forward propagation we are willing to run.
pub const MAX_LAG: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PersuasionCheck {
    pub persuasive: bool,
    pub max_violation: f64,
    /// Known slice (or 0 for the no model), recommended action, alternative.
    pub worst: Option<(usize, usize, usize)>,
    pub beliefs_checked: usize,
}

/// Worst obedience violation for the joint law `joint[ω·|A| + a]` of the
/// current state and the recommendation. Recommendations with total mass at
/// most 1e-12 are skipped.
pub fn joint_violation(inst: &MppInstance, joint: &[f64]) -> (f64, Option<(usize, usize)>) {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let mut worst = 0.0;
    let mut arg = None;
    for a in 0..na {
        let mass: f64 = (0..ns).map(|w| joint[w * na + a]).sum();
        if mass <= POSITIVE {
            continue;
        }
        for a2 in 0..na {
            if a2 == a {
                continue;
            }
            let gain: f64 = (0..ns).map(|w| joint[w * na + a] * inst.du(w, a, a2)).sum::<f64>() / mass;
            if -gain > worst {
                worst = -gain;
                arg = Some((a, a2));
            }
        }
    }
    (worst, arg)
}

/// Checks every obedience inequality the model generates, at tolerance `tol`.
///
/// For `Lag(ℓ)` the receiver knows the slice of length max(k,1) ending ℓ
/// periods before the previous one, and the chain is propagated ℓ steps from
/// it. `slice_cap` bounds max(k,1).
pub fn check_persuasive(
    inst: &MppInstance,
    sigma: &SignalingMechanism,
    model: InfoModel,
    tol: f64,
    slice_cap: usize,
) -> Result<PersuasionCheck> {
    sigma.check_shape(inst)?;
    let m = sigma.memory.max(1);
    if m > slice_cap {
        return Err(MppError::CapExceeded { needed: m, cap: slice_cap });
    }
    if let InfoModel::Lag(l) = model {
        if l > MAX_LAG {
            return Err(MppError::CapExceeded { needed: l, cap: MAX_LAG });
        }
    }
    let chain = SliceChain::new(inst, sigma);
    let pi = sender_preferred_invariant(inst, sigma)?.probs;
    let nx = inst.n_pairs();
    let n = chain.size();
    let joint_after = |d: &[f64]| -> Vec<f64> {
        let mut j = vec![0.0; nx];
        for (h, &dh) in d.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            for x in 0..nx {
                j[x] += dh * chain.weights[h * nx + x];
            }
        }
        j
    };
    let mut out = PersuasionCheck { persuasive: true, max_violation: 0.0, worst: None, beliefs_checked: 0 };
    let mut record = |s: usize, joint: &[f64]| {
        let (v, arg) = joint_violation(inst, joint);
        out.beliefs_checked += 1;
        if v > out.max_violation {
            out.max_violation = v;
            out.worst = arg.map(|(a, a2)| (s, a, a2));
        }
    };
    match model {
        InfoModel::No => record(0, &joint_after(&pi)),
        InfoModel::Full => {
            for h in 0..n {
                if pi[h] > POSITIVE {
                    record(h, &chain.weights[h * nx..(h + 1) * nx]);
                }
            }
        }
        InfoModel::Lag(l) => {
            for s in 0..n {
                if pi[s] <= POSITIVE {
                    continue;
                }
                let mut d = vec![0.0; n];
                d[s] = 1.0;
                for _ in 0..l {
                    d = chain.step(&d);
                }
                record(s, &joint_after(&d));
            }
        }
    }
    out.persuasive = out.max_violation <= tol;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_SLICE_CAP as CAP;

    #[test]
    fn always_one_is_persuasive_only_without_history() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::constant(&inst, 0, 1);
        let no = check_persuasive(&inst, &s, InfoModel::No, 1e-9, CAP).unwrap();
        assert!(no.persuasive);
        assert!(no.max_violation.abs() < 1e-12);
        let full = check_persuasive(&inst, &s, InfoModel::Full, 1e-9, CAP).unwrap();
        assert!(!full.persuasive);
        // After x_{-1} = (1,1) the state is 1 with probability 0.2.
        assert!((full.max_violation - 0.6).abs() < 1e-12);
    }

    #[test]
    fn full_revelation_passes_everywhere() {
        let inst = MppInstance::example1();
        for k in 0..3 {
            let s = SignalingMechanism::full_revelation(&inst, k);
            for model in [InfoModel::No, InfoModel::Full, InfoModel::Lag(1), InfoModel::Lag(3)] {
                assert!(check_persuasive(&inst, &s, model, 1e-12, CAP).unwrap().persuasive);
            }
        }
    }

    #[test]
    fn cap_enforced() {
        let inst = MppInstance::example1();
        let s = SignalingMechanism::full_revelation(&inst, 3);
        assert_eq!(
            check_persuasive(&inst, &s, InfoModel::Full, 1e-9, 2),
            Err(MppError::CapExceeded { needed: 3, cap: 2 })
        );
    }

    #[test]
    fn memoryless_grid_point_matches_lag_one_boundary() {
        // σ(1|0) = 0.4275, σ(1|1) = 0.795 sits on the lag-one obedience boundary.
        let inst = MppInstance::example1();
        let s = SignalingMechanism::new(0, 2, 2, vec![0.5725, 0.4275, 0.205, 0.795]).unwrap();
        let c = check_persuasive(&inst, &s, InfoModel::Lag(1), 1e-9, CAP).unwrap();
        assert!(c.max_violation < 2e-3, "{}", c.max_violation);
    }
}
