//! Dense two-phase primal simplex with a lexicographic ratio test.
//!
//! Problems are `max c·z` subject to equality rows, `row·z ≥ rhs` rows and
//! `z ≥ 0`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{MppError, Result};

pub const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const LEX_AFTER: usize = 50;
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ge_rows: Vec<Vec<f64>>,
    pub ge_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ge_rows: Vec::new(),
            ge_rhs: Vec::new(),
        }
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        assert_eq!(row.len(), self.n_vars);
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        assert_eq!(row.len(), self.n_vars);
        self.ge_rows.push(row);
        self.ge_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_ge(row.into_iter().map(|v| -v).collect(), -rhs);
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let bad = self.objective.len() != self.n_vars
            || self.eq_rows.len() != self.eq_rhs.len()
            || self.ge_rows.len() != self.ge_rhs.len()
            || self.eq_rows.iter().chain(&self.ge_rows).any(|r| r.len() != self.n_vars);
        if bad {
            return Err(MppError::DimensionMismatch(format!("inconsistent LP with {} variables", self.n_vars)));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.eq_rhs.iter())
            .chain(self.ge_rhs.iter())
            .chain(self.eq_rows.iter().flatten())
            .chain(self.ge_rows.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(MppError::DimensionMismatch(format!("non-finite LP coefficient")));
        }
        Ok(())
    }

    /// Largest violation of any constraint or sign bound by `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row, z) - b).abs());
        }
        for (row, &b) in self.ge_rows.iter().zip(&self.ge_rhs) {
            worst = worst.max(b - dot(row, z));
        }
        for &v in z {
            worst = worst.max(-v);
        }
        worst
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        dot(&self.objective, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs c_j − c_B B⁻¹ A_j and the current objective value.
    d: Vec<f64>,
    z: f64,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let piv = self.a[r * cols + c];
        for j in 0..cols {
            self.a[r * cols + j] /= piv;
        }
        self.b[r] /= piv;
        self.a[r * cols + c] = 1.0;
        let prow: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        let pb = self.b[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * cols..(i + 1) * cols];
            for (x, &p) in row.iter_mut().zip(&prow) {
                *x -= f * p;
            }
            row[c] = 0.0;
            self.b[i] -= f * pb;
            if self.b[i].abs() < 1e-13 {
                self.b[i] = 0.0;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (x, &p) in self.d.iter_mut().zip(&prow) {
                *x -= f * p;
            }
            self.d[c] = 0.0;
            self.z += f * pb;
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, c: &[f64]) {
        self.d = c.to_vec();
        self.z = 0.0;
        for i in 0..self.rows {
            let cb = c[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                self.d[j] -= cb * self.a[i * self.cols + j];
            }
            self.z += cb * self.b[i];
        }
    }

    /// Simplex iterations over the allowed columns; `Ok(false)` means
    /// unbounded. Largest reduced cost enters. The leaving row is the
    /// largest pivot among rows whose ratio is within a small slack of the
    /// minimum; after a run of degenerate pivots, ties are broken
    /// lexicographically on the rows of B⁻¹ (the artificial columns `lex..`)
    /// so the method cannot cycle.
    fn run(&mut self, allowed: &[bool], lex: usize) -> Result<bool> {
        let mut stalled = 0usize;
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols)
                .filter(|&j| allowed[j] && self.d[j] > PIVOT_TOL)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if self.d[b] >= self.d[j] => Some(b),
                    _ => Some(j),
                });
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut bound = f64::INFINITY;
            for i in 0..self.rows {
                let aij = self.at(i, c);
                if aij > PIVOT_TOL {
                    bound = bound.min((self.b[i].max(0.0) + RATIO_SLACK) / aij);
                }
            }
            if bound == f64::INFINITY {
                return Ok(false);
            }
            let careful = stalled > LEX_AFTER;
            let mut leave: Option<usize> = None;
            let mut ratio_at = f64::INFINITY;
            for i in 0..self.rows {
                let aij = self.at(i, c);
                if aij <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.b[i].max(0.0) / aij;
                if ratio > bound {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some(l) if careful => {
                        ratio < ratio_at - 1e-12 || (ratio <= ratio_at + 1e-12 && self.lex_less(i, l, c, lex))
                    }
                    Some(l) => aij > self.at(l, c),
                };
                if better {
                    leave = Some(i);
                    ratio_at = ratio;
                }
            }
            let r = leave.expect("a row attains the bound");
            if ratio_at <= 1e-12 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.pivot(r, c);
        }
        Err(MppError::NumericalFailure(format!("simplex did not finish in {MAX_PIVOTS} pivots")))
    }

    /// Whether row `i` scaled by its entry in column `c` precedes row `l`
    /// lexicographically on columns `from..`.
    fn lex_less(&self, i: usize, l: usize, c: usize, from: usize) -> bool {
        let (pi, pl) = (self.at(i, c), self.at(l, c));
        for j in from..self.cols {
            let (u, v) = (self.at(i, j) / pi, self.at(l, j) / pl);
            if u < v - 1e-12 {
                return true;
            }
            if u > v + 1e-12 {
                return false;
            }
        }
        i < l
    }
}

/// Solves the program. Deterministic; no randomness anywhere.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check_dimensions()?;
    let n = lp.n_vars;
    let n_surplus = lp.ge_rows.len();
    let m = lp.eq_rows.len() + n_surplus;
    let cols = n + n_surplus + m;
    let mut a = vec![0.0; m * cols];
    let mut b = vec![0.0; m];
    let all = lp.eq_rows.iter().zip(&lp.eq_rhs).chain(lp.ge_rows.iter().zip(&lp.ge_rhs));
    for (i, (row, &rhs)) in all.enumerate() {
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            a[i * cols + j] = sign * row[j];
        }
        if i >= lp.eq_rows.len() {
            a[i * cols + n + (i - lp.eq_rows.len())] = -sign;
        }
        a[i * cols + n + n_surplus + i] = 1.0;
        b[i] = sign * rhs;
    }
    let mut t = Tableau { rows: m, cols, a, b, basis: (0..m).map(|i| n + n_surplus + i).collect(), d: vec![], z: 0.0 };

    // Phase 1: maximize −Σ artificials.
    let mut c1 = vec![0.0; cols];
    for j in n + n_surplus..cols {
        c1[j] = -1.0;
    }
    t.set_costs(&c1);
    let allowed_all = vec![true; cols];
    t.run(&allowed_all, n + n_surplus)?;
    let scale = 1.0 + t.b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if -t.z > 1e-8 * scale {
        return Ok(LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], objective: 0.0 });
    }

    // Push artificials out of the basis; rows where that fails are redundant.
    let mut keep = vec![true; m];
    for i in 0..m {
        if t.basis[i] >= n + n_surplus {
            if let Some(j) = (0..n + n_surplus).find(|&j| t.at(i, j).abs() > PIVOT_TOL) {
                t.pivot(i, j);
            } else {
                keep[i] = false;
            }
        }
    }
    if keep.iter().any(|k| !k) {
        let rows: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
        let mut a2 = Vec::with_capacity(rows.len() * cols);
        for &i in &rows {
            a2.extend_from_slice(&t.a[i * cols..(i + 1) * cols]);
        }
        t.b = rows.iter().map(|&i| t.b[i]).collect();
        t.basis = rows.iter().map(|&i| t.basis[i]).collect();
        t.a = a2;
        t.rows = rows.len();
    }

    // Phase 2.
    let mut c2 = vec![0.0; cols];
    c2[..n].copy_from_slice(&lp.objective);
    t.set_costs(&c2);
    let mut allowed = vec![true; cols];
    for flag in allowed.iter_mut().skip(n + n_surplus) {
        *flag = false;
    }
    if !t.run(&allowed, n + n_surplus)? {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: vec![0.0; n], objective: f64::INFINITY });
    }
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.b[i];
        }
    }
    let viol = lp.max_violation(&x);
    if viol > 1e-7 {
        return Err(MppError::NumericalFailure(format!("simplex residual {viol:e}")));
    }
    let objective = lp.value(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_equality() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add_ge(vec![1.0, 0.0], 2.0);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add_ge(vec![1.0, -1.0], 0.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![1.0, 2.0, -1.0];
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0, 2.0], 2.0);
        lp.add_le(vec![0.0, 1.0, 0.0], 0.5);
        lp.add_ge(vec![-1.0, 0.0, 0.0], -0.8);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.5).abs() < 1e-12, "{}", s.objective);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook rule without anti-cycling.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.05).abs() < 1e-9, "{}", s.objective);
    }
}
