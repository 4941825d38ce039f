//! Sequential linear programming on the mechanism table: each step solves
//! an LP built from the linearized value and obedience terms inside a box
//! trust region, with violations priced by an ℓ1 penalty.

use alloc::vec;
use alloc::vec::Vec;

use super::eval::{Evaluator, Point};
use crate::linalg::{Lu, Matrix};
use crate::POSITIVE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlpSettings {
    pub max_iterations: usize,
    /// Price of one unit of scaled obedience violation.
    pub penalty: f64,
    pub initial_radius: f64,
    pub min_radius: f64,
    /// Stop when the model predicts less merit gain than this.
    pub min_gain: f64,
}

impl Default for SlpSettings {
    fn default() -> Self {
        SlpSettings { max_iterations: 200, penalty: 100.0, initial_radius: 0.2, min_radius: 1e-9, min_gain: 1e-12 }
    }
}

pub(crate) fn merit(pt: &Point, penalty: f64) -> f64 {
    pt.value - penalty * pt.cons.iter().map(|&g| (-g).max(0.0)).sum::<f64>()
}

struct Model {
    /// ∂value/∂θ.
    value: Vec<f64>,
    /// (constraint index, ∂cons/∂θ) for every term that can move.
    rows: Vec<(usize, Vec<f64>)>,
}

fn reduce(g: &[f64], na: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len() / na * (na - 1));
    for row in g.chunks(na) {
        for a in 0..na - 1 {
            out.push(row[a] - row[na - 1]);
        }
    }
    out
}

/// ∂cons_i/∂θ given the unreduced value gradient `base`.
fn term_gradient(ev: &mut Evaluator, pt: &Point, base: &[f64], mult: &mut [f64], i: usize) -> Vec<f64> {
    mult[i] = 1.0;
    let g = ev.gradient(pt, mult);
    mult[i] = 0.0;
    let d: Vec<f64> = g.iter().zip(base).map(|(x, y)| x - y).collect();
    reduce(&d, ev.inst.n_actions)
}

/// Derivatives with respect to the free coordinates θ: the first |A| − 1
/// entries of every table row, the last entry absorbing the remainder.
fn model(ev: &mut Evaluator, pt: &mut Point) -> Model {
    let na = ev.inst.n_actions;
    ev.factor(pt);
    let nc = pt.cons.len();
    let mut mult = vec![0.0; nc];
    let base = ev.gradient(pt, &mult);
    let value = reduce(&base, na);
    let mut rows = Vec::new();
    for i in 0..nc {
        if (i / na) % na == i % na {
            continue;
        }
        let d = term_gradient(ev, pt, &base, &mut mult, i);
        if pt.cons[i] >= 0.0 && d.iter().all(|&v| v == 0.0) {
            continue;
        }
        rows.push((i, d));
    }
    Model { value, rows }
}

/// Locally maximizes the value subject to lagged obedience from `start`.
pub fn ascend(ev: &mut Evaluator, start: Vec<f64>, s: &SlpSettings) -> Vec<f64> {
    let na = ev.inst.n_actions;
    let free = na - 1;
    let mut x = start;
    let Some(mut pt) = ev.eval(&x) else { return x };
    let mut m = model(ev, &mut pt);
    let mut phi = merit(&pt, s.penalty);
    let mut radius = s.initial_radius;
    for _ in 0..s.max_iterations {
        if radius < s.min_radius {
            break;
        }
        let n_rows = x.len() / na;
        let nv = n_rows * free;
        // Columns: d = p − q with p, q ≥ 0 (2·nv), t ≥ 0 per obedience row,
        // then slacks. Coordinates the model is indifferent to stay put.
        let up: Vec<f64> = (0..nv).map(|j| radius.min(1.0 - x[j / free * na + j % free]).max(0.0)).collect();
        let down: Vec<f64> = (0..nv).map(|j| radius.min(x[j / free * na + j % free]).max(0.0)).collect();
        // Terms that stay satisfied everywhere in the box are left out.
        let live: Vec<&(usize, Vec<f64>)> = m
            .rows
            .iter()
            .filter(|(ci, g)| {
                let worst: f64 = g.iter().enumerate().map(|(j, &v)| if v > 0.0 { -v * down[j] } else { v * up[j] }).sum();
                pt.cons[*ci] + worst < 0.0
            })
            .collect();
        let binding: Vec<usize> = if free > 1 {
            (0..n_rows).filter(|&r| (0..free).map(|a| up[r * free + a]).sum::<f64>() > x[r * na + free]).collect()
        } else {
            Vec::new()
        };
        let nt = live.len();
        let mut lp = BoxLp::new(nt + binding.len(), 2 * nv + nt);
        for j in 0..nv {
            lp.cost[j] = -m.value[j];
            lp.cost[nv + j] = m.value[j];
            lp.upper[j] = up[j];
            lp.upper[nv + j] = down[j];
        }
        for (i, (ci, grad)) in live.into_iter().enumerate() {
            // cons + J·d + t ≥ 0  ⇔  −J·p + J·q − t ≤ cons.
            // Rows are scaled to unit size; t is rescaled with them.
            let size = grad.iter().fold(pt.cons[*ci].abs(), |m, v| m.max(v.abs()));
            let f = if size > 0.0 { 1.0 / size } else { 1.0 };
            let rhs = f * pt.cons[*ci];
            let row = lp.row_mut(i);
            for j in 0..nv {
                row[j] = -f * grad[j];
                row[nv + j] = f * grad[j];
            }
            row[2 * nv + i] = -1.0;
            lp.cost[2 * nv + i] = s.penalty / f;
            lp.rhs[i] = rhs;
            lp.start[i] = if rhs < 0.0 { 2 * nv + i } else { lp.slack(i) };
        }
        for (i, &r) in binding.iter().enumerate() {
            let i = nt + i;
            let row = lp.row_mut(i);
            for a in 0..free {
                row[r * free + a] = 1.0;
                row[nv + r * free + a] = -1.0;
            }
            lp.rhs[i] = x[r * na + free];
            lp.start[i] = lp.slack(i);
        }
        let Some(y) = lp.solve() else { break };
        let d: Vec<f64> = (0..nv).map(|j| y[j] - y[nv + j]).collect();

        let lin_pen: f64 = m
            .rows
            .iter()
            .map(|(ci, g)| (-(pt.cons[*ci] + g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>())).max(0.0))
            .sum();
        let pen_now: f64 = pt.cons.iter().map(|&g| (-g).max(0.0)).sum();
        let pred = m.value.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() - s.penalty * (lin_pen - pen_now);
        if pred <= s.min_gain {
            break;
        }
        let mut trial = x.clone();
        for r in 0..n_rows {
            let row = &mut trial[r * na..(r + 1) * na];
            let mut last = 1.0;
            for a in 0..free {
                row[a] = (row[a] + d[r * free + a]).clamp(0.0, 1.0);
                last -= row[a];
            }
            row[free] = last.max(0.0);
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= t);
        }
        let Some(mut tp) = ev.eval(&trial) else {
            radius *= 0.5;
            continue;
        };
        let phi_t = merit(&tp, s.penalty);
        let ratio = (phi_t - phi) / pred;
        if ratio > 0.1 {
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            x = trial;
            phi = phi_t;
            m = model(ev, &mut tp);
            pt = tp;
            if ratio > 0.75 && dmax > 0.5 * radius {
                radius = (2.0 * radius).min(1.0);
            }
        } else {
            radius *= 0.5;
        }
    }
    x
}

/// Pushes a nearly obedient table onto the obedient side by least-norm
/// Gauss–Newton corrections of the binding terms, moving only entries that
/// are already positive so the set of reachable slices is unchanged.
pub fn polish(ev: &mut Evaluator, mut x: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let na = ev.inst.n_actions;
    let ns = ev.inst.n_states;
    let free = na - 1;
    for _ in 0..30 {
        let mut pt = ev.eval(&x)?;
        if ev.violation(&pt) <= tol {
            return Some(x);
        }
        ev.factor(&mut pt);
        let mut mult = vec![0.0; pt.cons.len()];
        let base = ev.gradient(&pt, &mult);
        let nx = ev.slices.nx;
        let movable: Vec<usize> = (0..x.len() / na)
            .flat_map(|r| (0..free).map(move |a| (r, a)))
            .filter(|&(r, a)| x[r * na + a] > 0.0 && x[r * na + free] > 0.0)
            .map(|(r, a)| r * free + a)
            .collect();
        let mut rows = Vec::new();
        let mut resid = Vec::new();
        for ci in 0..pt.cons.len() {
            let s = ci / (na * na);
            let a = (ci / na) % na;
            if a == ci % na {
                continue;
            }
            if pt.pi[s] <= POSITIVE {
                continue;
            }
            let mass: f64 = (0..ns).map(|w| pt.joint[s * nx + w * na + a]).sum();
            if mass <= POSITIVE {
                continue;
            }
            let need = 0.25 * tol * ev.scale * pt.pi[s] * mass;
            if pt.cons[ci] < need {
                let grad = term_gradient(ev, &pt, &base, &mut mult, ci);
                rows.push(movable.iter().map(|&j| grad[j]).collect::<Vec<f64>>());
                resid.push(need - pt.cons[ci]);
            }
        }
        if rows.is_empty() || movable.is_empty() {
            return None;
        }
        let r = rows.len();
        let mut gram = Matrix::zeros(r, r);
        let mut trace = 0.0;
        for i in 0..r {
            for j in 0..=i {
                let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
            trace += gram.get(i, i);
        }
        for i in 0..r {
            gram.add(i, i, 1e-12 * trace / r as f64);
        }
        let lu = Lu::factor(&gram, 0.0)?;
        let lambda = lu.solve(&resid);
        let mut d = vec![0.0; x.len() / na * free];
        for (i, row) in rows.iter().enumerate() {
            for (c, &j) in movable.iter().enumerate() {
                d[j] += lambda[i] * row[c];
            }
        }
        // Longest step ≤ 1 keeping every entry nonnegative.
        let mut step: f64 = 1.0;
        for rr in 0..x.len() / na {
            let mut dl = 0.0;
            for a in 0..free {
                let dj = d[rr * free + a];
                dl -= dj;
                if dj < 0.0 {
                    step = step.min(0.9 * x[rr * na + a] / -dj);
                }
            }
            if dl < 0.0 {
                step = step.min(0.9 * x[rr * na + free] / -dl);
            }
        }
        for rr in 0..x.len() / na {
            let mut dl = 0.0;
            for a in 0..free {
                x[rr * na + a] += step * d[rr * free + a];
                dl -= d[rr * free + a];
            }
            x[rr * na + free] += step * dl;
        }
    }
    None
}

/// min cᵀz subject to A z + slack = rhs, 0 ≤ z ≤ upper, slack ≥ 0, from a
/// caller-supplied basis in which every basic variable is nonnegative.
#[derive(Clone)]
struct BoxLp {
    m: usize,
    n: usize,
    /// Row-major m × (n + m); the last m columns are the slacks.
    a: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<usize>,
    bland_only: bool,
}

const EPS: f64 = 1e-9;

impl BoxLp {
    fn new(m: usize, n: usize) -> Self {
        let w = n + m;
        let mut a = vec![0.0; m * w];
        for i in 0..m {
            a[i * w + n + i] = 1.0;
        }
        BoxLp { m, n, a, rhs: vec![0.0; m], cost: vec![0.0; w], upper: vec![f64::INFINITY; w], start: vec![0; m], bland_only: false }
    }

    fn slack(&self, i: usize) -> usize {
        self.n + i
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.n + self.m;
        &mut self.a[i * w..(i + 1) * w]
    }

    /// Bounded primal simplex; Dantzig pricing, Bland's rule after a run of
    /// degenerate pivots. Returns the structural part of an optimal point.
    fn solve(mut self) -> Option<Vec<f64>> {
        let (m, w) = (self.m, self.n + self.m);
        let mut basis = self.start.clone();
        let mut is_basic = vec![false; w];
        for i in 0..m {
            let b = basis[i];
            let piv = self.a[i * w + b];
            if piv.abs() < EPS {
                return None;
            }
            for v in &mut self.a[i * w..(i + 1) * w] {
                *v /= piv;
            }
            self.rhs[i] /= piv;
            if self.rhs[i] < -1e-12 || is_basic[b] {
                return None;
            }
            self.rhs[i] = self.rhs[i].max(0.0);
            is_basic[b] = true;
        }
        let mut d = self.cost.clone();
        for i in 0..m {
            let cb = self.cost[basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * w..(i + 1) * w];
                for j in 0..w {
                    d[j] -= cb * row[j];
                }
            }
        }
        let mut at_upper = vec![false; w];
        let mut degenerate = 0usize;
        let mut nz: Vec<usize> = Vec::new();
        let limit = 50 * (m + w);
        for _ in 0..limit {
            let bland = self.bland_only || degenerate > 50;
            let mut enter = None;
            let mut score = 0.0;
            for j in 0..w {
                if is_basic[j] {
                    continue;
                }
                let gain = if at_upper[j] { d[j] } else { -d[j] };
                if gain > 1e-10 && (gain > score || enter.is_none()) {
                    enter = Some(j);
                    score = gain;
                    if bland {
                        break;
                    }
                }
            }
            let Some(j) = enter else {
                let mut z = vec![0.0; self.n];
                for (jj, zj) in z.iter_mut().enumerate() {
                    if at_upper[jj] {
                        *zj = self.upper[jj];
                    }
                }
                for i in 0..m {
                    if basis[i] < self.n {
                        z[basis[i]] = self.rhs[i];
                    }
                }
                return Some(z);
            };
            let dir = if at_upper[j] { -1.0 } else { 1.0 };
            // Two-pass ratio test: find the largest step every basic variable
            // tolerates up to a small slack, then leave on the largest pivot
            // among rows that bind within it.
            let ratio = |i: usize, slack: f64| -> Option<(f64, bool)> {
                let alpha = self.a[i * w + j] * dir;
                if alpha > EPS {
                    Some(((self.rhs[i] + slack) / alpha, false))
                } else if alpha < -EPS && self.upper[basis[i]].is_finite() {
                    Some(((self.upper[basis[i]] - self.rhs[i] + slack) / -alpha, true))
                } else {
                    None
                }
            };
            let mut bound = self.upper[j];
            for i in 0..m {
                if let Some((t, _)) = ratio(i, 1e-9) {
                    bound = bound.min(t);
                }
            }
            let mut step = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut best_pivot = 0.0;
            for i in 0..m {
                if let Some((t, up)) = ratio(i, 0.0) {
                    if t > bound {
                        continue;
                    }
                    let size = self.a[i * w + j].abs();
                    let better = match leave {
                        None => true,
                        Some((l, _)) if bland => basis[i] < basis[l],
                        Some(_) => size > best_pivot,
                    };
                    if better {
                        step = t.max(0.0);
                        leave = Some((i, up));
                        best_pivot = size;
                    }
                }
            }
            if leave.is_some() && self.upper[j] <= step {
                step = self.upper[j];
                leave = None;
            }
            if !step.is_finite() {
                return None;
            }
            degenerate = if step <= 1e-12 { degenerate + 1 } else { 0 };
            for i in 0..m {
                self.rhs[i] -= self.a[i * w + j] * dir * step;
            }
            let Some((p, to_upper)) = leave else {
                at_upper[j] = !at_upper[j];
                continue;
            };
            let entering_value = if at_upper[j] { self.upper[j] - step } else { step };
            let out = basis[p];
            is_basic[out] = false;
            at_upper[out] = to_upper;
            is_basic[j] = true;
            at_upper[j] = false;
            basis[p] = j;
            let piv = self.a[p * w + j];
            {
                let row = &mut self.a[p * w..(p + 1) * w];
                for v in row.iter_mut() {
                    *v /= piv;
                }
            }
            self.rhs[p] = entering_value;
            let (head, rest) = self.a.split_at_mut(p * w);
            let (prow, tail) = rest.split_at_mut(w);
            nz.clear();
            nz.extend((0..w).filter(|&c| prow[c] != 0.0));
            let sparse = nz.len() * 3 < w;
            for row in head.chunks_mut(w).chain(tail.chunks_mut(w)) {
                let f = row[j];
                if f == 0.0 {
                    continue;
                }
                if sparse {
                    for &c in &nz {
                        row[c] -= f * prow[c];
                    }
                } else {
                    for (v, q) in row.iter_mut().zip(prow.iter()) {
                        *v -= f * q;
                    }
                }
            }
            let f = d[j];
            if f != 0.0 {
                for (v, q) in d.iter_mut().zip(prow.iter()) {
                    *v -= f * q;
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_lp_agrees_with_tableau_solver() {
        use crate::generate::rng;
        use crate::lp::{solve, LinearProgram};
        use rand::Rng;
        let mut r = rng(3, 0);
        for case in 0..200 {
            let (m, n) = if case < 100 || (case >= 150 && case < 175) { (r.random_range(1..6), r.random_range(1..7)) } else { (r.random_range(10..40), r.random_range(20..80)) };
            let mut lp = BoxLp::new(m, n + m);
            let mut reference = LinearProgram::new(n + m);
            let paired = case >= 150 && n % 2 == 0;
            for j in 0..n {
                lp.cost[j] = r.random_range(-1.0..1.0);
                if paired && j >= n / 2 {
                    lp.cost[j] = -lp.cost[j - n / 2];
                }
                lp.upper[j] = if r.random::<f64>() < 0.2 { 0.0 } else { r.random_range(0.0..1.0) };
                let mut row = vec![0.0; n + m];
                row[j] = 1.0;
                reference.add_le(row, lp.upper[j]);
            }
            for i in 0..m {
                lp.cost[n + i] = 2.0 + r.random::<f64>();
                let mut row = vec![0.0; n + m];
                let scale = if case >= 150 { libm::pow(10.0, -r.random_range(0.0..3.0)) } else { 1.0 };
                for j in 0..n {
                    let mut v = if r.random::<f64>() < 0.3 { 0.0 } else { scale * r.random_range(-1.0..1.0) };
                    if paired && j >= n / 2 {
                        v = -lp.row_mut(i)[j - n / 2];
                    }
                    lp.row_mut(i)[j] = v;
                    row[j] = v;
                }
                lp.row_mut(i)[n + i] = -1.0;
                row[n + i] = -1.0;
                lp.rhs[i] = if r.random::<f64>() < 0.3 { 0.0 } else { r.random_range(-1.0..1.0) };
                lp.start[i] = if lp.rhs[i] < 0.0 { n + i } else { lp.slack(i) };
                reference.add_le(row, lp.rhs[i]);
            }
            reference.objective = lp.cost.iter().map(|c| -c).collect();
            reference.objective.truncate(n + m);
            let want = -solve(&reference).unwrap().objective;
            let cost = lp.cost.clone();
            let copy = lp.clone();
            let z = lp.solve().unwrap();
            let w = copy.n + copy.m;
            let mut worst: f64 = 0.0;
            for i in 0..copy.m {
                let lhs: f64 = (0..copy.n).map(|j| copy.a[i * w + j] * z[j]).sum();
                worst = worst.max(lhs - copy.rhs[i]);
            }
            for j in 0..copy.n {
                worst = worst.max(z[j] - copy.upper[j]).max(-z[j]);
            }
            assert!(worst < 1e-9, "case {case}: infeasible by {worst}");
            let got: f64 = z.iter().zip(&cost).map(|(a, b)| a * b).sum();
            assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        }
    }

    #[test]
    fn box_lp_small() {
        // min −x − 2y, x + y ≤ 1.5, 0 ≤ x, y ≤ 1  →  x = 0.5, y = 1.
        let mut lp = BoxLp::new(1, 2);
        lp.cost[0] = -1.0;
        lp.cost[1] = -2.0;
        lp.upper[0] = 1.0;
        lp.upper[1] = 1.0;
        lp.row_mut(0)[0] = 1.0;
        lp.row_mut(0)[1] = 1.0;
        lp.rhs[0] = 1.5;
        lp.start[0] = lp.slack(0);
        let z = lp.solve().unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 1.0).abs() < 1e-12, "{z:?}");
    }

    #[test]
    fn box_lp_starts_from_penalty_column() {
        // −y − t ≤ −0.7 with y ≤ 0.5: min 10t − y gives y = 0.5, t = 0.2.
        let mut lp = BoxLp::new(1, 2);
        lp.cost[0] = -1.0;
        lp.cost[1] = 10.0;
        lp.upper[0] = 0.5;
        lp.row_mut(0)[0] = -1.0;
        lp.row_mut(0)[1] = -1.0;
        lp.rhs[0] = -0.7;
        lp.start[0] = 1;
        let z = lp.solve().unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.2).abs() < 1e-12, "{z:?}");
    }
}
