//! Occupancy-measure LPs for the no-history and full-history models.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{long_run_reward, InvariantDistribution};
use crate::error::{MppError, Result};
use crate::instance::{receiver_best_action, MppInstance};
use crate::linalg::{singular_values, Matrix};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::mechanism::SignalingMechanism;
use crate::persuasion::{check_persuasive, InfoModel};
use crate::{DEFAULT_SLICE_CAP, POSITIVE};

/// Posterior over Ω after recommendation `action` in context `context`
/// (0 for the no model, the previous pair x_{-1} for the full model).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub context: usize,
    pub action: usize,
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersuasionSolution {
    pub model: InfoModel,
    pub value: f64,
    pub mechanism: SignalingMechanism,
    pub invariant: InvariantDistribution,
    pub posteriors: Vec<Posterior>,
    pub occupancy: Vec<f64>,
}

/// Number of contexts W_i: one for the no model, |X|·|Ω| for the full model
/// (the previous pair together with the current state).
fn contexts(inst: &MppInstance, model: InfoModel) -> Result<usize> {
    match model {
        InfoModel::No => Ok(inst.n_states),
        InfoModel::Full => Ok(inst.n_pairs() * inst.n_states),
        InfoModel::Lag(_) => Err(MppError::DimensionMismatch(format!("benchmark LPs exist for the no and full models only"))),
    }
}

/// Variables z(w, a) at index `w * |A| + a`, where w = ω for the no model
/// and w = x_{-1}·|Ω| + ω for the full model.
pub fn build_lp(inst: &MppInstance, model: InfoModel) -> Result<LinearProgram> {
    let nw = contexts(inst, model)?;
    let (ns, na) = (inst.n_states, inst.n_actions);
    let nv = nw * na;
    let mut lp = LinearProgram::new(nv);
    for w in 0..nw {
        let om = w % ns;
        for a in 0..na {
            lp.objective[w * na + a] = inst.v(om, a);
        }
    }
    // Obedience: one row per information set and ordered action pair.
    let sets = if model == InfoModel::No { 1 } else { inst.n_pairs() };
    for set in 0..sets {
        for a in 0..na {
            for a2 in 0..na {
                let mut row = vec![0.0; nv];
                for om in 0..ns {
                    let w = set * ns + om;
                    row[w * na + a] = inst.du(om, a, a2);
                }
                lp.add_ge(row, 0.0);
            }
        }
    }
    // Flow: inflow into w equals the mass leaving w.
    for w in 0..nw {
        let om = w % ns;
        let mut row = vec![0.0; nv];
        for a in 0..na {
            row[w * na + a] -= 1.0;
        }
        match model {
            InfoModel::No => {
                for wh in 0..ns {
                    for ah in 0..na {
                        row[wh * na + ah] += inst.p(wh, ah, om);
                    }
                }
            }
            _ => {
                let x = w / ns;
                let (wh, ah) = (x / na, x % na);
                for xh in 0..inst.n_pairs() {
                    row[(xh * ns + wh) * na + ah] += inst.p(wh, ah, om);
                }
            }
        }
        lp.add_eq(row, 0.0);
    }
    lp.add_eq(vec![1.0; nv], 1.0);
    Ok(lp)
}

/// Solves the benchmark LP and extracts mechanism, invariant and posteriors.
pub fn solve_benchmark(inst: &MppInstance, model: InfoModel) -> Result<PersuasionSolution> {
    let lp = build_lp(inst, model)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(MppError::Infeasible),
        LpStatus::Unbounded => return Err(MppError::Unbounded),
    }
    let z: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
    let (ns, na) = (inst.n_states, inst.n_actions);
    let nw = contexts(inst, model)?;
    let memory = if model == InfoModel::No { 0 } else { 1 };
    let mut table = vec![0.0; nw * na];
    for w in 0..nw {
        let row = &z[w * na..(w + 1) * na];
        let total: f64 = row.iter().sum();
        if total > POSITIVE {
            for a in 0..na {
                table[w * na + a] = row[a] / total;
            }
        } else {
            table[w * na + receiver_best_action(inst, w % ns)] = 1.0;
        }
    }
    let mechanism = SignalingMechanism { memory, n_states: ns, n_actions: na, table };
    // Slice marginal over the current pair.
    let nx = inst.n_pairs();
    let mut pair = vec![0.0; nx];
    for w in 0..nw {
        for a in 0..na {
            pair[(w % ns) * na + a] += z[w * na + a];
        }
    }
    let s: f64 = pair.iter().sum();
    pair.iter_mut().for_each(|v| *v /= s);
    let invariant = InvariantDistribution { slice_length: 1, n_states: ns, n_actions: na, probs: pair };
    let sets = nw / ns;
    let mut posteriors = Vec::new();
    for set in 0..sets {
        for a in 0..na {
            let col: Vec<f64> = (0..ns).map(|om| z[(set * ns + om) * na + a]).collect();
            let mass: f64 = col.iter().sum();
            if mass > POSITIVE {
                posteriors.push(Posterior { context: set, action: a, belief: col.iter().map(|v| v / mass).collect() });
            }
        }
    }
    Ok(PersuasionSolution { model, value: sol.objective, mechanism, invariant, posteriors, occupancy: z })
}

/// z(x, ω, a) = π(x) p(ω|x) σ(a|x, ω) for a memory-one mechanism and a
/// distribution π over the previous pair; inverse of the extraction above.
pub fn occupancy_from_mechanism(inst: &MppInstance, sigma: &SignalingMechanism, pair_law: &[f64]) -> Vec<f64> {
    let (ns, na) = (inst.n_states, inst.n_actions);
    let nx = inst.n_pairs();
    let mut z = vec![0.0; nx * ns * na];
    for x in 0..nx {
        for om in 0..ns {
            let px = pair_law[x] * inst.row_x(x)[om];
            for a in 0..na {
                let win = if sigma.memory == 0 { 0 } else { x };
                z[(x * ns + om) * na + a] = px * sigma.prob(win, om, a);
            }
        }
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityReport {
    pub holds: bool,
    pub independent: bool,
    /// Pairs x whose kernel row p(·|x) is outside the hull of the beliefs.
    pub outside_hull: Vec<usize>,
    /// Recommended actions and their beliefs under the no-model optimum.
    pub beliefs: Vec<(usize, Vec<f64>)>,
    pub opt_no: f64,
    pub witness: Option<SignalingMechanism>,
    pub witness_value: Option<f64>,
}

impl EqualityReport {
    pub fn failing_clause(&self) -> Option<&'static str> {
        if !self.independent {
            Some("beliefs are linearly dependent")
        } else if !self.outside_hull.is_empty() {
            Some("kernel rows outside the convex hull of the beliefs")
        } else {
            None
        }
    }
}

/// Sufficient condition for the full-history optimum to match the
/// no-history one, with a memory-one witness when it holds.
pub fn check_equality_condition(inst: &MppInstance) -> Result<EqualityReport> {
    let no = solve_benchmark(inst, InfoModel::No)?;
    let (ns, na) = (inst.n_states, inst.n_actions);
    let pair = no.invariant.pair_marginal();
    let mut beliefs = Vec::new();
    for a in 0..na {
        let col: Vec<f64> = (0..ns).map(|w| pair[w * na + a]).collect();
        let mass: f64 = col.iter().sum();
        if mass > POSITIVE {
            beliefs.push((a, col.iter().map(|v| v / mass).collect::<Vec<f64>>()));
        }
    }
    let bm = Matrix::from_rows(&beliefs.iter().map(|b| b.1.clone()).collect::<Vec<_>>());
    let rank = singular_values(&bm).iter().filter(|&&s| s > 1e-9).count();
    let independent = rank == beliefs.len();

    let nb = beliefs.len();
    let mut outside_hull = Vec::new();
    let mut lambdas = Vec::new();
    for x in 0..inst.n_pairs() {
        let mut lp = LinearProgram::new(nb);
        for w in 0..ns {
            lp.add_eq(beliefs.iter().map(|b| b.1[w]).collect(), inst.row_x(x)[w]);
        }
        lp.add_eq(vec![1.0; nb], 1.0);
        let sol = lp::solve(&lp)?;
        if sol.status == LpStatus::Optimal {
            lambdas.push(sol.x);
        } else {
            outside_hull.push(x);
            lambdas.push(vec![0.0; nb]);
        }
    }
    let mut report = EqualityReport {
        holds: independent && outside_hull.is_empty(),
        independent,
        outside_hull,
        beliefs,
        opt_no: no.value,
        witness: None,
        witness_value: None,
    };
    if !report.holds {
        return Ok(report);
    }
    let nx = inst.n_pairs();
    let mut table = vec![0.0; nx * ns * na];
    for x in 0..nx {
        for w in 0..ns {
            let p = inst.row_x(x)[w];
            let row = &mut table[(x * ns + w) * na..(x * ns + w + 1) * na];
            if p <= POSITIVE {
                row[receiver_best_action(inst, w)] = 1.0;
                continue;
            }
            for (i, (a, mu)) in report.beliefs.iter().enumerate() {
                row[*a] = lambdas[x][i] * mu[w] / p;
            }
        }
    }
    let mut witness = SignalingMechanism { memory: 1, n_states: ns, n_actions: na, table };
    witness.normalize();
    let check = check_persuasive(inst, &witness, InfoModel::Full, 1e-8, DEFAULT_SLICE_CAP)?;
    if !check.persuasive {
        return Err(MppError::WitnessVerificationFailed(format!("obedience violated by {:e}", check.max_violation)));
    }
    let value = long_run_reward(inst, &witness)?;
    if (value - no.value).abs() > 1e-7 {
        return Err(MppError::WitnessVerificationFailed(format!("payoff {value} differs from {}", no.value)));
    }
    report.witness = Some(witness);
    report.witness_value = Some(value);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let inst = MppInstance::example1();
        let no = solve_benchmark(&inst, InfoModel::No).unwrap();
        assert!((no.value - 1.0).abs() < 1e-9);
        for w in 0..2 {
            assert!((no.mechanism.prob(0, w, 1) - 1.0).abs() < 1e-9);
        }
        let full = solve_benchmark(&inst, InfoModel::Full).unwrap();
        assert!((full.value - 0.52).abs() < 1e-9, "{}", full.value);
    }

    #[test]
    fn lp_census() {
        let inst = MppInstance::example1();
        let no = build_lp(&inst, InfoModel::No).unwrap();
        assert_eq!(no.n_vars, 4);
        assert_eq!(no.ge_rows.len(), 4);
        assert_eq!(no.eq_rows.len(), 3);
        assert_eq!(build_lp(&inst, InfoModel::Full).unwrap().n_vars, 16);
    }

    #[test]
    fn single_action_is_forced() {
        let inst = MppInstance::new(2, 1, vec![0.3, 0.7, 0.6, 0.4], vec![0.0, 0.0], vec![0.2, 0.9]).unwrap();
        let pi0 = 0.6 / 1.3;
        let expect = pi0 * 0.2 + (1.0 - pi0) * 0.9;
        for model in [InfoModel::No, InfoModel::Full] {
            let s = solve_benchmark(&inst, model).unwrap();
            assert!((s.value - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn example_fails_equality_condition() {
        let r = check_equality_condition(&MppInstance::example1()).unwrap();
        assert!(!r.holds);
        assert_eq!(r.failing_clause(), Some("kernel rows outside the convex hull of the beliefs"));
    }

    #[test]
    fn single_state_holds() {
        let inst = MppInstance::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let r = check_equality_condition(&inst).unwrap();
        assert!(r.holds);
        assert!((r.witness_value.unwrap() - r.opt_no).abs() < 1e-9);
    }
}
