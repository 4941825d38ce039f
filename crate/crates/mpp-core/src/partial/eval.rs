//! Value, lagged obedience terms and their gradients for a mechanism table.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::stationary_from_lu;
use crate::instance::MppInstance;
use crate::linalg::{Lu, Matrix};
use crate::mechanism::{pow, Slices};
use crate::POSITIVE;

/// Above this many slices the stationary law and the Poisson equation are
/// solved by warm-started fixed-point sweeps instead of a dense LU.
const DENSE_LIMIT: usize = 64;
const SWEEP_LIMIT: usize = 5000;

type SparseRows = Vec<Vec<(usize, f64)>>;

pub struct Evaluator<'a> {
    pub inst: &'a MppInstance,
    pub lag: usize,
    pub slices: Slices,
    pub windows: usize,
    /// Multiplies every obedience term so that they are O(1).
    pub scale: f64,
    pi_warm: Vec<f64>,
    g_warm: Vec<f64>,
    pub evaluations: usize,
}

pub struct Point {
    pub weights: Vec<f64>,
    pub pi: Vec<f64>,
    lu: Option<Lu>,
    powers: Vec<SparseRows>,
    /// Law of (ω_t, a_t) given the known slice s, row-major per s.
    pub joint: Vec<f64>,
    pub value: f64,
    /// scale·π(s)·Σ_ω J_s(ω,a)∂u(ω,a,a') at `(s·|A| + a)·|A| + a'`; zero when a = a'.
    pub cons: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a MppInstance, memory: usize, lag: usize) -> Self {
        let nx = inst.n_pairs();
        let slices = Slices::new(nx, memory.max(1));
        Evaluator {
            inst,
            lag,
            slices,
            windows: pow(nx, memory),
            scale: slices.count as f64,
            pi_warm: Vec::new(),
            g_warm: Vec::new(),
            evaluations: 0,
        }
    }
    fn weights(&self, table: &[f64]) -> Vec<f64> {
        let (ns, na) = (self.inst.n_states, self.inst.n_actions);
        let nx = self.slices.nx;
        let n = self.slices.count;
        let mut w = vec![0.0; n * nx];
        for h in 0..n {
            let row = self.inst.row_x(self.slices.last(h));
            let c = h % self.windows;
            for om in 0..ns {
                for a in 0..na {
                    w[h * nx + om * na + a] = row[om] * table[c * nx + om * na + a];
                }
            }
        }
        w
    }

    fn dense(&self, weights: &[f64]) -> Matrix {
        let n = self.slices.count;
        let nx = self.slices.nx;
        let mut a = Matrix::zeros(n, n);
        a.data.iter_mut().for_each(|v| *v = 1.0);
        for h in 0..n {
            a.add(h, h, 1.0);
            for x in 0..nx {
                a.add(h, self.slices.push(h, x), -weights[h * nx + x]);
            }
        }
        a
    }

    fn step(&self, weights: &[f64], d: &[f64]) -> Vec<f64> {
        let nx = self.slices.nx;
        let mut out = vec![0.0; d.len()];
        for (h, &dh) in d.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            for x in 0..nx {
                out[self.slices.push(h, x)] += dh * weights[h * nx + x];
            }
        }
        out
    }

    fn stationary(&mut self, weights: &[f64]) -> Option<(Vec<f64>, Option<Lu>)> {
        let n = self.slices.count;
        if n > DENSE_LIMIT {
            let mut pi = if self.pi_warm.len() == n { self.pi_warm.clone() } else { vec![1.0 / n as f64; n] };
            for _ in 0..SWEEP_LIMIT {
                let next = self.step(weights, &pi);
                let res: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
                pi = next;
                if res < 1e-14 {
                    let s: f64 = pi.iter().sum();
                    pi.iter_mut().for_each(|v| *v /= s);
                    self.pi_warm = pi.clone();
                    return Some((pi, None));
                }
            }
        }
        let lu = Lu::factor(&self.dense(weights), 1e-11)?;
        let pi = stationary_from_lu(&lu, n);
        self.pi_warm = pi.clone();
        Some((pi, Some(lu)))
    }

    fn powers(&self, weights: &[f64]) -> Vec<SparseRows> {
        let n = self.slices.count;
        let nx = self.slices.nx;
        let mut out: Vec<SparseRows> = vec![(0..n).map(|s| vec![(s, 1.0)]).collect()];
        let mut acc = vec![0.0; n];
        let mut touched = Vec::new();
        for _ in 0..self.lag {
            let prev = out.last().unwrap();
            let mut next = Vec::with_capacity(n);
            for row in prev {
                for &(h, v) in row {
                    for x in 0..nx {
                        let q = weights[h * nx + x];
                        if q == 0.0 {
                            continue;
                        }
                        let t = self.slices.push(h, x);
                        if acc[t] == 0.0 {
                            touched.push(t);
                        }
                        acc[t] += v * q;
                    }
                }
                touched.sort_unstable();
                let r: Vec<(usize, f64)> = touched.iter().map(|&t| (t, acc[t])).filter(|e| e.1 != 0.0).collect();
                for &t in &touched {
                    acc[t] = 0.0;
                }
                touched.clear();
                next.push(r);
            }
            out.push(next);
        }
        out
    }

    /// Evaluates a mechanism table; `None` when the chain has several
    /// invariant laws.
    pub fn eval(&mut self, table: &[f64]) -> Option<Point> {
        self.evaluations += 1;
        let inst = self.inst;
        let (ns, na) = (inst.n_states, inst.n_actions);
        let nx = self.slices.nx;
        let n = self.slices.count;
        let weights = self.weights(table);
        let (pi, lu) = self.stationary(&weights)?;
        let powers = self.powers(&weights);
        let mut joint = vec![0.0; n * nx];
        for s in 0..n {
            let j = &mut joint[s * nx..(s + 1) * nx];
            for &(h, v) in &powers[self.lag][s] {
                for x in 0..nx {
                    j[x] += v * weights[h * nx + x];
                }
            }
        }
        let value = (0..n).map(|h| pi[h] * inst.reward[self.slices.last(h)]).sum();
        let mut cons = vec![0.0; n * na * na];
        for s in 0..n {
            let j = &joint[s * nx..(s + 1) * nx];
            for a in 0..na {
                for a2 in 0..na {
                    if a2 == a {
                        continue;
                    }
                    let g: f64 = (0..ns).map(|om| j[om * na + a] * inst.du(om, a, a2)).sum();
                    cons[(s * na + a) * na + a2] = self.scale * pi[s] * g;
                }
            }
        }
        Some(Point { weights, pi, lu, powers, joint, value, cons })
    }

    /// Makes sure the point carries a dense factorization, so that repeated
    /// Poisson solves are direct.
    pub fn factor(&self, pt: &mut Point) -> bool {
        if pt.lu.is_none() {
            pt.lu = Lu::factor(&self.dense(&pt.weights), 1e-11);
        }
        pt.lu.is_some()
    }

    /// Largest posterior obedience violation over reachable known slices,
    /// the same quantity the lagged persuasiveness check reports.
    pub fn violation(&self, pt: &Point) -> f64 {
        let nx = self.slices.nx;
        let mut worst: f64 = 0.0;
        for s in 0..self.slices.count {
            if pt.pi[s] <= POSITIVE {
                continue;
            }
            let j = &pt.joint[s * nx..(s + 1) * nx];
            worst = worst.max(crate::persuasion::joint_violation(self.inst, j).0);
        }
        worst
    }

    fn poisson(&mut self, pt: &Point, rhs: &[f64]) -> Vec<f64> {
        let n = self.slices.count;
        let nx = self.slices.nx;
        let mean: f64 = rhs.iter().zip(&pt.pi).map(|(a, b)| a * b).sum();
        let centered: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
        if let Some(lu) = &pt.lu {
            return lu.solve(&centered);
        }
        let mut g = if self.g_warm.len() == n { self.g_warm.clone() } else { centered.clone() };
        for _ in 0..SWEEP_LIMIT {
            let mut next: Vec<f64> = (0..n)
                .map(|h| {
                    let pg: f64 = (0..nx).map(|x| pt.weights[h * nx + x] * g[self.slices.push(h, x)]).sum();
                    centered[h] + pg
                })
                .collect();
            let shift: f64 = next.iter().zip(&pt.pi).map(|(a, b)| a * b).sum();
            next.iter_mut().for_each(|v| *v -= shift);
            let diff = next.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            g = next;
            if diff < 1e-13 {
                self.g_warm = g.clone();
                return g;
            }
        }
        match Lu::factor(&self.dense(&pt.weights), 1e-11) {
            Some(lu) => {
                let g = lu.solve(&centered);
                self.g_warm = g.clone();
                g
            }
            None => g,
        }
    }

    /// Gradient of value + Σ_i mult_i·cons_i with respect to the table.
    ///
    /// Entries are defined up to a constant per (window, state) row, which
    /// does not matter for moves that stay on the simplex.
    pub fn gradient(&mut self, pt: &Point, mult: &[f64]) -> Vec<f64> {
        let inst = self.inst;
        let (ns, na) = (inst.n_states, inst.n_actions);
        let nx = self.slices.nx;
        let n = self.slices.count;
        let nc = self.windows;
        let lag = self.lag;

        // c_s(ω,a) = scale·Σ_{a'} mult(s,a,a')·∂u(ω,a,a').
        let mut c = vec![0.0; n * nx];
        let mut any = false;
        for s in 0..n {
            for a in 0..na {
                for a2 in 0..na {
                    let m = mult[(s * na + a) * na + a2];
                    if a2 == a || m == 0.0 {
                        continue;
                    }
                    any = true;
                    for om in 0..ns {
                        c[s * nx + om * na + a] += self.scale * m * inst.du(om, a, a2);
                    }
                }
            }
        }

        let mut kappa: Vec<f64> = (0..n).map(|h| inst.reward[self.slices.last(h)]).collect();
        if any {
            for s in 0..n {
                let j = &pt.joint[s * nx..(s + 1) * nx];
                kappa[s] += (0..nx).map(|x| j[x] * c[s * nx + x]).sum::<f64>();
            }
        }
        let g = self.poisson(pt, &kappa);

        let mut grad = vec![0.0; nc * nx];
        // Through the invariant law.
        for h in 0..n {
            let w = pt.pi[h];
            if w == 0.0 {
                continue;
            }
            let row = inst.row_x(self.slices.last(h));
            let base = (h % nc) * nx;
            for om in 0..ns {
                let pw = w * row[om];
                if pw == 0.0 {
                    continue;
                }
                for a in 0..na {
                    let x = om * na + a;
                    grad[base + x] += pw * g[self.slices.push(h, x)];
                }
            }
        }
        if !any {
            return grad;
        }

        // β_s(h) = Σ_x T(h,x)·c_s(x), evaluated on demand.
        let beta = |s: usize, h: usize| -> f64 {
            let cs = &c[s * nx..(s + 1) * nx];
            (0..nx).map(|x| pt.weights[h * nx + x] * cs[x]).sum()
        };
        for s in 0..n {
            let ps = pt.pi[s];
            if ps == 0.0 || c[s * nx..(s + 1) * nx].iter().all(|&v| v == 0.0) {
                continue;
            }
            // Through the ℓ-step propagation.
            for i in 0..lag {
                let j = lag - 1 - i;
                for &(h, v) in &pt.powers[i][s] {
                    let row = inst.row_x(self.slices.last(h));
                    let base = (h % nc) * nx;
                    for om in 0..ns {
                        let coef = ps * v * row[om];
                        if coef == 0.0 {
                            continue;
                        }
                        for a in 0..na {
                            let t = self.slices.push(h, om * na + a);
                            let back: f64 = pt.powers[j][t].iter().map(|&(u, q)| q * beta(s, u)).sum();
                            grad[base + om * na + a] += coef * back;
                        }
                    }
                }
            }
            // Through the final recommendation.
            for &(h, v) in &pt.powers[lag][s] {
                let row = inst.row_x(self.slices.last(h));
                let base = (h % nc) * nx;
                for om in 0..ns {
                    let coef = ps * v * row[om];
                    if coef == 0.0 {
                        continue;
                    }
                    for a in 0..na {
                        grad[base + om * na + a] += coef * c[s * nx + om * na + a];
                    }
                }
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_instance, random_mechanism, rng};

    fn objective(ev: &mut Evaluator, t: &[f64], mult: &[f64]) -> f64 {
        let p = ev.eval(t).unwrap();
        p.value + p.cons.iter().zip(mult).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(7, 0);
        for &(k, lag) in &[(0usize, 1usize), (1, 1), (1, 2), (2, 1), (0, 3), (3, 1)] {
            let inst = random_instance(&mut r, 2, 2);
            let sigma = random_mechanism(&mut r, &inst, k);
            let mut ev = Evaluator::new(&inst, k, lag);
            let pt = ev.eval(&sigma.table).unwrap();
            let mult: Vec<f64> = (0..pt.cons.len()).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
            let grad = ev.gradient(&pt, &mult);
            let na = inst.n_actions;
            // Move mass between two actions of a row: stays on the simplex.
            for row in 0..sigma.table.len() / na {
                let mut dir = vec![0.0; sigma.table.len()];
                dir[row * na] = 1.0;
                dir[row * na + 1] = -1.0;
                let h = 1e-6;
                let plus: Vec<f64> = sigma.table.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
                let minus: Vec<f64> = sigma.table.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
                let fd = (objective(&mut ev, &plus, &mult) - objective(&mut ev, &minus, &mult)) / (2.0 * h);
                let an: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "k={k} lag={lag} row={row}: {fd} vs {an}");
            }
        }
    }
}
