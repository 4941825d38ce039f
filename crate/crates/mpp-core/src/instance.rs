use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{MppError, Result};

/// Finite MPP: states, actions, transition kernel, receiver utility and sender reward.
///
/// `kernel[(ω * n_actions + a) * n_states + ω']` is p(ω' | ω, a); `utility` and
/// `reward` are indexed by `ω * n_actions + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct MppInstance {
    pub n_states: usize,
    pub n_actions: usize,
    pub kernel: Vec<f64>,
    pub utility: Vec<f64>,
    pub reward: Vec<f64>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    Shape { field: &'static str, expected: usize, found: usize },
    NonFinite { field: &'static str, index: usize },
    NegativeKernel { state: usize, action: usize, next: usize, value: f64 },
    KernelRowSum { state: usize, action: usize, sum: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "instance needs at least one state and one action"),
            Violation::Shape { field, expected, found } => {
                write!(f, "{field} has {found} entries, expected {expected}")
            }
            Violation::NonFinite { field, index } => write!(f, "{field} entry {index} is not finite"),
            Violation::NegativeKernel { state, action, next, value } => {
                write!(f, "negative kernel entry {value} at (ω={state},a={action},ω'={next})")
            }
            Violation::KernelRowSum { state, action, sum } => {
                write!(f, "row sum ≠ 1 at (ω={state},a={action}): {sum}")
            }
            Violation::RewardOutOfRange { state, action, value } => {
                write!(f, "sender reward out of [0,1] at (ω={state},a={action}): {value}")
            }
        }
    }
}

impl MppInstance {
    /// Builds an instance and rejects it if [`validate_instance`] reports anything.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        utility: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let inst = MppInstance { n_states, n_actions, kernel, utility, reward, name: String::new() };
        let v = validate_instance(&inst);
        if let Some(first) = v.first() {
            return Err(MppError::InvalidInstance(format!("{first}")));
        }
        Ok(inst)
    }

    /// Two states, two actions. The receiver wants to match the state, the
    /// sender always wants action 1. Action 0 keeps the state with
    /// probability 0.8, action 1 flips it with probability 0.8.
    pub fn example1() -> Self {
        let kernel = vec![
            0.8, 0.2, // ω=0, a=0
            0.2, 0.8, // ω=0, a=1
            0.2, 0.8, // ω=1, a=0
            0.8, 0.2, // ω=1, a=1
        ];
        let utility = vec![1.0, 0.0, 0.0, 1.0];
        let reward = vec![0.0, 1.0, 0.0, 1.0];
        let mut inst = MppInstance::new(2, 2, kernel, utility, reward).expect("example is valid");
        inst.name = String::from("example1");
        inst
    }

    #[inline]
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn p(&self, w: usize, a: usize, next: usize) -> f64 {
        self.kernel[(w * self.n_actions + a) * self.n_states + next]
    }

    /// Row p(· | ω, a).
    #[inline]
    pub fn row(&self, w: usize, a: usize) -> &[f64] {
        let s = (w * self.n_actions + a) * self.n_states;
        &self.kernel[s..s + self.n_states]
    }

    /// Row p(· | x) for a pair index `x = ω * n_actions + a`.
    #[inline]
    pub fn row_x(&self, x: usize) -> &[f64] {
        &self.kernel[x * self.n_states..(x + 1) * self.n_states]
    }

    #[inline]
    pub fn u(&self, w: usize, a: usize) -> f64 {
        self.utility[w * self.n_actions + a]
    }

    #[inline]
    pub fn v(&self, w: usize, a: usize) -> f64 {
        self.reward[w * self.n_actions + a]
    }

    /// u(ω,a) − u(ω,a').
    #[inline]
    pub fn du(&self, w: usize, a: usize, a2: usize) -> f64 {
        self.u(w, a) - self.u(w, a2)
    }
}

/// Lists every broken instance invariant; empty means valid.
pub fn validate_instance(inst: &MppInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, m) = (inst.n_states, inst.n_actions);
    if n == 0 || m == 0 {
        out.push(Violation::Empty);
        return out;
    }
    let shapes = [
        ("kernel", n * m * n, inst.kernel.len()),
        ("receiver_utility", n * m, inst.utility.len()),
        ("sender_reward", n * m, inst.reward.len()),
    ];
    for (field, expected, found) in shapes {
        if expected != found {
            out.push(Violation::Shape { field, expected, found });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for (field, data) in [("kernel", &inst.kernel), ("receiver_utility", &inst.utility), ("sender_reward", &inst.reward)] {
        for (index, x) in data.iter().enumerate() {
            if !x.is_finite() {
                out.push(Violation::NonFinite { field, index });
            }
        }
    }
    for w in 0..n {
        for a in 0..m {
            let row = inst.row(w, a);
            for (next, &value) in row.iter().enumerate() {
                if value < 0.0 {
                    out.push(Violation::NegativeKernel { state: w, action: a, next, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                out.push(Violation::KernelRowSum { state: w, action: a, sum });
            }
            let value = inst.v(w, a);
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::RewardOutOfRange { state: w, action: a, value });
            }
        }
    }
    out
}

/// argmax_a u(ω,a), lowest index on ties.
pub fn receiver_best_action(inst: &MppInstance, w: usize) -> usize {
    let mut best = 0;
    for a in 1..inst.n_actions {
        if inst.u(w, a) > inst.u(w, best) {
            best = a;
        }
    }
    best
}

/// Table ∂u[ω][a][a'] = u(ω,a) − u(ω,a').
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalUtility {
    pub n_states: usize,
    pub n_actions: usize,
    pub table: Vec<f64>,
}

impl IncrementalUtility {
    pub fn new(inst: &MppInstance) -> Self {
        let (n, m) = (inst.n_states, inst.n_actions);
        let mut table = vec![0.0; n * m * m];
        for w in 0..n {
            for a in 0..m {
                for a2 in 0..m {
                    table[(w * m + a) * m + a2] = inst.du(w, a, a2);
                }
            }
        }
        IncrementalUtility { n_states: n, n_actions: m, table }
    }

    #[inline]
    pub fn get(&self, w: usize, a: usize, a2: usize) -> f64 {
        self.table[(w * self.n_actions + a) * self.n_actions + a2]
    }
}

/// True iff every deterministic stationary policy ω ↦ a induces an
/// irreducible, aperiodic state chain.
pub fn check_unichain(inst: &MppInstance) -> bool {
    let (n, m) = (inst.n_states, inst.n_actions);
    let mut policy = vec![0usize; n];
    loop {
        if !irreducible_aperiodic(n, |w, next| inst.p(w, policy[w], next) > 0.0) {
            return false;
        }
        let mut i = 0;
        loop {
            if i == n {
                return true;
            }
            policy[i] += 1;
            if policy[i] < m {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}

/// Strong connectivity plus period one, for the graph with edges `edge(i, j)`.
pub fn irreducible_aperiodic(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n == 0 {
        return false;
    }
    // BFS levels from node 0 on the forward graph.
    let mut level = vec![usize::MAX; n];
    let mut queue = vec![0usize];
    level[0] = 0;
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        for j in 0..n {
            if edge(i, j) && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push(j);
            }
        }
    }
    if level.iter().any(|&l| l == usize::MAX) {
        return false;
    }
    // Reverse reachability.
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(j) = stack.pop() {
        for i in 0..n {
            if edge(i, j) && !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return false;
    }
    let mut g = 0usize;
    for i in 0..n {
        for j in 0..n {
            if edge(i, j) {
                let d = (level[i] + 1).abs_diff(level[j]);
                g = gcd(g, d);
            }
        }
    }
    g == 1
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
