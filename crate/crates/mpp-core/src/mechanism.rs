use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{MppError, Result};
use crate::instance::{receiver_best_action, MppInstance};

/// Index arithmetic for slices in X^len, X = Ω×A, pair x = ω·|A| + a.
///
/// A slice (x_{-len}, …, x_{-1}) is the base-|X| number with x_{-len} as the
/// most significant digit, so the last pair is `h % |X|` and the suffix of
/// length j is `h % |X|^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slices {
    pub nx: usize,
    pub len: usize,
    pub count: usize,
}

impl Slices {
    pub fn new(nx: usize, len: usize) -> Self {
        Slices { nx, len, count: pow(nx, len) }
    }

    #[inline]
    pub fn last(&self, h: usize) -> usize {
        h % self.nx
    }

    #[inline]
    pub fn suffix(&self, h: usize, j: usize) -> usize {
        h % pow(self.nx, j)
    }

    /// Drop the oldest pair and append `x`.
    #[inline]
    pub fn push(&self, h: usize, x: usize) -> usize {
        (h * self.nx + x) % self.count
    }

    /// Pairs from oldest to newest.
    pub fn decode(&self, mut h: usize) -> Vec<usize> {
        let mut out = vec![0; self.len];
        for i in (0..self.len).rev() {
            out[i] = h % self.nx;
            h /= self.nx;
        }
        out
    }

    pub fn encode(&self, pairs: &[usize]) -> usize {
        pairs.iter().fold(0, |h, &x| h * self.nx + x)
    }
}

pub fn pow(b: usize, e: usize) -> usize {
    (0..e).fold(1usize, |acc, _| acc.saturating_mul(b))
}

/// σ(a | h^k, ω) stored at `table[(h * n_states + ω) * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingMechanism {
    pub memory: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub table: Vec<f64>,
}

impl SignalingMechanism {
    pub fn windows(&self) -> usize {
        pow(self.n_states * self.n_actions, self.memory)
    }

    pub fn new(memory: usize, n_states: usize, n_actions: usize, table: Vec<f64>) -> Result<Self> {
        let s = SignalingMechanism { memory, n_states, n_actions, table };
        s.validate()?;
        Ok(s)
    }

    /// Same distribution over actions for every window; `row(ω)` gives it.
    pub fn from_state_rule(inst: &MppInstance, memory: usize, row: impl Fn(usize) -> Vec<f64>) -> Self {
        let (n, m) = (inst.n_states, inst.n_actions);
        let windows = pow(n * m, memory);
        let mut table = Vec::with_capacity(windows * n * m);
        for _ in 0..windows {
            for w in 0..n {
                let r = row(w);
                assert_eq!(r.len(), m);
                table.extend_from_slice(&r);
            }
        }
        SignalingMechanism { memory, n_states: n, n_actions: m, table }
    }

    /// Always recommends `action`.
    pub fn constant(inst: &MppInstance, memory: usize, action: usize) -> Self {
        Self::from_state_rule(inst, memory, |_| {
            let mut r = vec![0.0; inst.n_actions];
            r[action] = 1.0;
            r
        })
    }

    /// Recommends the receiver's best action for the current state.
    pub fn full_revelation(inst: &MppInstance, memory: usize) -> Self {
        Self::from_state_rule(inst, memory, |w| {
            let mut r = vec![0.0; inst.n_actions];
            r[receiver_best_action(inst, w)] = 1.0;
            r
        })
    }

    #[inline]
    pub fn prob(&self, window: usize, w: usize, a: usize) -> f64 {
        self.table[(window * self.n_states + w) * self.n_actions + a]
    }

    pub fn row(&self, window: usize, w: usize) -> &[f64] {
        let s = (window * self.n_states + w) * self.n_actions;
        &self.table[s..s + self.n_actions]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.windows() * self.n_states * self.n_actions;
        if self.table.len() != expected {
            return Err(MppError::InvalidMechanism(format!(
                "table has {} entries, expected {expected}",
                self.table.len()
            )));
        }
        for c in 0..self.windows() {
            for w in 0..self.n_states {
                let row = self.row(c, w);
                if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(MppError::InvalidMechanism(format!("negative entry at window {c}, state {w}")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(MppError::InvalidMechanism(format!("row sum {s} at window {c}, state {w}")));
                }
            }
        }
        Ok(())
    }

    pub fn check_shape(&self, inst: &MppInstance) -> Result<()> {
        if self.n_states != inst.n_states || self.n_actions != inst.n_actions {
            return Err(MppError::DimensionMismatch(format!(
                "mechanism is {}x{}, instance is {}x{}",
                self.n_states, self.n_actions, inst.n_states, inst.n_actions
            )));
        }
        self.validate()
    }

    /// Same mechanism viewed as a member of Σ_k for a larger k: the extra,
    /// older pairs are ignored.
    pub fn lift(&self, memory: usize) -> Self {
        assert!(memory >= self.memory);
        let nx = self.n_states * self.n_actions;
        let old = pow(nx, self.memory);
        let windows = pow(nx, memory);
        let mut table = Vec::with_capacity(windows * self.n_states * self.n_actions);
        for c in 0..windows {
            let src = c % old;
            for w in 0..self.n_states {
                table.extend_from_slice(self.row(src, w));
            }
        }
        SignalingMechanism { memory, n_states: self.n_states, n_actions: self.n_actions, table }
    }

    /// Renormalize rows after small floating drift; negative entries are clipped.
    pub fn normalize(&mut self) {
        let m = self.n_actions;
        for row in self.table.chunks_mut(m) {
            for x in row.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            } else {
                row.iter_mut().for_each(|x| *x = 1.0 / m as f64);
            }
        }
    }

    /// Pointwise mixture (1−t)·self + t·other, same memory.
    pub fn mix(&self, other: &SignalingMechanism, t: f64) -> Self {
        assert_eq!(self.table.len(), other.table.len());
        let table = self.table.iter().zip(&other.table).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        SignalingMechanism { table, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_arithmetic() {
        let s = Slices::new(4, 3);
        let h = s.encode(&[1, 2, 3]);
        assert_eq!(s.decode(h), vec![1, 2, 3]);
        assert_eq!(s.last(h), 3);
        assert_eq!(s.suffix(h, 2), s.encode(&[0, 2, 3]));
        assert_eq!(s.decode(s.push(h, 0)), vec![2, 3, 0]);
    }

    #[test]
    fn lift_ignores_old_pairs() {
        let inst = MppInstance::example1();
        let mut base = SignalingMechanism::constant(&inst, 1, 0);
        // window x=3 (ω=1,a=1): recommend 1 in state 0
        base.table[(3 * 2) * 2] = 0.25;
        base.table[(3 * 2) * 2 + 1] = 0.75;
        base.validate().unwrap();
        let up = base.lift(2);
        up.validate().unwrap();
        for older in 0..4 {
            assert_eq!(up.prob(older * 4 + 3, 0, 1), 0.75);
            assert_eq!(up.prob(older * 4 + 2, 0, 1), 0.0);
        }
    }
}
