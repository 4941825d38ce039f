//! JSON file formats for instances, mechanisms, solutions and certificates.

use std::collections::BTreeMap;

use mpp_core::chain::InvariantDistribution;
use mpp_core::mechanism::{pow, Slices};
use mpp_core::partial::PartialSolution;
use mpp_core::robust::{LagReport, RobustCertificate, RobustVerification};
use mpp_core::{MppError, MppInstance, PersuasionSolution, SignalingMechanism};
use serde::{Deserialize, Serialize};

/// Instance file. `kernel[ω][a]` is the next-state law after (ω, a);
/// `utility[ω][a]` and `reward[ω][a]` are the receiver's and sender's payoffs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub utility: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_instance(inst: &MppInstance) -> Self {
        let (ns, na) = (inst.n_states, inst.n_actions);
        InstanceFile {
            name: inst.name.clone(),
            notes: None,
            kernel: (0..ns).map(|w| (0..na).map(|a| inst.row(w, a).to_vec()).collect()).collect(),
            utility: (0..ns).map(|w| (0..na).map(|a| inst.u(w, a)).collect()).collect(),
            reward: (0..ns).map(|w| (0..na).map(|a| inst.v(w, a)).collect()).collect(),
        }
    }

    pub fn to_instance(&self) -> Result<MppInstance, MppError> {
        let ns = self.kernel.len();
        let na = self.kernel.first().map_or(0, |r| r.len());
        let bad = |what: &str| MppError::InvalidInstance(format!("{what} has the wrong shape for {ns} states and {na} actions"));
        if ns == 0 || na == 0 {
            return Err(MppError::InvalidInstance("instance needs at least one state and one action".into()));
        }
        if self.kernel.iter().any(|r| r.len() != na || r.iter().any(|p| p.len() != ns)) {
            return Err(bad("kernel"));
        }
        if self.utility.len() != ns || self.utility.iter().any(|r| r.len() != na) {
            return Err(bad("utility"));
        }
        if self.reward.len() != ns || self.reward.iter().any(|r| r.len() != na) {
            return Err(bad("reward"));
        }
        let kernel = self.kernel.iter().flatten().flatten().copied().collect();
        let utility = self.utility.iter().flatten().copied().collect();
        let reward = self.reward.iter().flatten().copied().collect();
        let mut inst = MppInstance::new(ns, na, kernel, utility, reward)?;
        inst.name = self.name.clone();
        Ok(inst)
    }
}

/// Label of a window: its pairs oldest first as `ω:a`, comma separated.
/// The empty window of a memory-zero mechanism is `""`.
pub fn window_key(n_actions: usize, nx: usize, memory: usize, window: usize) -> String {
    if memory == 0 {
        return String::new();
    }
    Slices::new(nx, memory)
        .decode(window)
        .iter()
        .map(|x| format!("{}:{}", x / n_actions, x % n_actions))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_window(key: &str, ns: usize, na: usize, memory: usize) -> Result<usize, MppError> {
    let nx = ns * na;
    if memory == 0 {
        return if key.is_empty() { Ok(0) } else { Err(MppError::InvalidMechanism(format!("memory-zero table has key {key:?}"))) };
    }
    let mut pairs = Vec::with_capacity(memory);
    for part in key.split(',') {
        let bad = || MppError::InvalidMechanism(format!("cannot read pair {part:?} in window {key:?}"));
        let (w, a) = part.trim().split_once(':').ok_or_else(bad)?;
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        if w >= ns || a >= na {
            return Err(bad());
        }
        pairs.push(w * na + a);
    }
    if pairs.len() != memory {
        return Err(MppError::InvalidMechanism(format!("window {key:?} has {} pairs, memory is {memory}", pairs.len())));
    }
    Ok(Slices::new(nx, memory).encode(&pairs))
}

/// Mechanism file: `table[window][ω][a]` with windows keyed by [`window_key`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismFile {
    pub memory: usize,
    pub table: BTreeMap<String, Vec<Vec<f64>>>,
}

impl MechanismFile {
    pub fn from_mechanism(s: &SignalingMechanism) -> Self {
        let nx = s.n_states * s.n_actions;
        let table = (0..s.windows())
            .map(|win| {
                let rows = (0..s.n_states).map(|w| s.row(win, w).to_vec()).collect();
                (window_key(s.n_actions, nx, s.memory, win), rows)
            })
            .collect();
        MechanismFile { memory: s.memory, table }
    }

    pub fn to_mechanism(&self, inst: &MppInstance) -> Result<SignalingMechanism, MppError> {
        let (ns, na) = (inst.n_states, inst.n_actions);
        let windows = pow(ns * na, self.memory);
        if self.table.len() != windows {
            return Err(MppError::InvalidMechanism(format!("expected {windows} windows, found {}", self.table.len())));
        }
        let mut table = vec![f64::NAN; windows * ns * na];
        for (key, rows) in &self.table {
            let win = parse_window(key, ns, na, self.memory)?;
            if rows.len() != ns || rows.iter().any(|r| r.len() != na) {
                return Err(MppError::InvalidMechanism(format!("window {key:?} is not a {ns}×{na} table")));
            }
            for (w, r) in rows.iter().enumerate() {
                table[(win * ns + w) * na..(win * ns + w + 1) * na].copy_from_slice(r);
            }
        }
        SignalingMechanism::new(self.memory, ns, na, table)
    }
}

/// A mechanism file or any document carrying one under `"mechanism"`.
pub fn read_mechanism(text: &str, inst: &MppInstance) -> Result<SignalingMechanism, ParseError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(ParseError::Json)?;
    let inner = value.get("mechanism").cloned().unwrap_or(value);
    let file: MechanismFile = serde_json::from_value(inner).map_err(ParseError::Json)?;
    file.to_mechanism(inst).map_err(ParseError::Model)
}

#[derive(Debug)]
pub enum ParseError {
    Json(serde_json::Error),
    Model(MppError),
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseError::Json(e) => write!(f, "{e}"),
            ParseError::Model(e) => write!(f, "{e}"),
        }
    }
}

pub fn read_instance(text: &str) -> Result<MppInstance, ParseError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(ParseError::Json)?;
    file.to_instance().map_err(ParseError::Model)
}

/// (ω, a) marginal of an invariant law as a ω-major table.
fn pair_table(inv: &InvariantDistribution) -> Vec<Vec<f64>> {
    inv.pair_marginal().chunks(inv.n_actions).map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorFile {
    pub context: usize,
    pub action: usize,
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionFile {
    pub instance: String,
    pub model: String,
    pub value: f64,
    pub mechanism: MechanismFile,
    /// Long-run frequency of (ω, a).
    pub frequencies: Vec<Vec<f64>>,
    pub posteriors: Vec<PosteriorFile>,
}

impl SolutionFile {
    pub fn new(inst: &MppInstance, model: &str, sol: &PersuasionSolution) -> Self {
        SolutionFile {
            instance: inst.name.clone(),
            model: model.to_string(),
            value: sol.value,
            mechanism: MechanismFile::from_mechanism(&sol.mechanism),
            frequencies: pair_table(&sol.invariant),
            posteriors: sol
                .posteriors
                .iter()
                .map(|p| PosteriorFile { context: p.context, action: p.action, belief: p.belief.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialFile {
    pub instance: String,
    pub lag: usize,
    pub memory: usize,
    pub value: f64,
    pub starts: usize,
    pub best_start: usize,
    pub mechanism: MechanismFile,
    pub frequencies: Vec<Vec<f64>>,
}

impl PartialFile {
    pub fn new(inst: &MppInstance, sol: &PartialSolution) -> Self {
        PartialFile {
            instance: inst.name.clone(),
            lag: sol.lag,
            memory: sol.memory,
            value: sol.value,
            starts: sol.starts,
            best_start: sol.best_start,
            mechanism: MechanismFile::from_mechanism(&sol.mechanism),
            frequencies: pair_table(&sol.invariant),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateFile {
    pub instance: String,
    pub epsilon: f64,
    pub opt_no: f64,
    /// w_a per action.
    pub weights: Vec<f64>,
    /// μ_a per action.
    pub beliefs: Vec<Vec<f64>>,
    pub support: Vec<usize>,
    pub w_min: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// D_a per action.
    pub margins: Vec<f64>,
    /// η_a per action.
    pub interior: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub y_norm: f64,
    pub y_bound: f64,
    pub fallback_actions: Vec<usize>,
    pub tau: f64,
    pub s_f: f64,
    pub threshold: f64,
    pub delta: f64,
    pub rho: f64,
    /// ξ_a per action.
    pub shifted: Vec<Vec<f64>>,
    pub action_weights: Vec<f64>,
    pub state_weights: Vec<f64>,
    pub mechanism: MechanismFile,
    /// π̂(ω, a).
    pub invariant: Vec<Vec<f64>>,
    pub payoff: f64,
    pub payoff_lower_bound: f64,
    pub sharp_lower_bound: f64,
    pub verified_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag: Option<LagFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationFile {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    pub analytic_ok: bool,
    pub violating_action: Option<usize>,
    pub sampled_ok: bool,
    pub continuity_ok: bool,
    pub worst_margin: f64,
    pub worst_shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LagFile {
    pub exact: usize,
    pub spectral: Option<usize>,
    pub real_spectrum: bool,
    pub persuasive_at_exact: Option<bool>,
}

impl CertificateFile {
    pub fn new(inst: &MppInstance, c: &RobustCertificate) -> Self {
        let na = inst.n_actions;
        CertificateFile {
            instance: inst.name.clone(),
            epsilon: c.epsilon,
            opt_no: c.opt_no,
            weights: c.split.weights.clone(),
            beliefs: c.split.beliefs.clone(),
            support: c.split.support.clone(),
            w_min: c.w_min,
            d: c.regularity.d,
            margins: c.regularity.margins.clone(),
            interior: c.regularity.interior.clone(),
            y: c.perturbation.y.clone(),
            y_norm: c.perturbation.y_norm,
            y_bound: c.perturbation.bound,
            fallback_actions: c.perturbation.fallback.clone(),
            tau: c.perturbation.tau,
            s_f: c.perturbation.s_f,
            threshold: c.threshold,
            delta: c.delta,
            rho: c.rho,
            shifted: c.shifted.clone(),
            action_weights: c.action_weights.clone(),
            state_weights: c.state_weights.clone(),
            mechanism: MechanismFile::from_mechanism(&c.mechanism),
            invariant: c.invariant.chunks(na).map(|r| r.to_vec()).collect(),
            payoff: c.payoff,
            payoff_lower_bound: c.payoff_lower_bound,
            sharp_lower_bound: c.sharp_lower_bound,
            verified_radius: c.verified_radius,
            verification: None,
            lag: None,
        }
    }

    pub fn with_verification(mut self, v: &RobustVerification, seed: u64) -> Self {
        self.verification = Some(VerificationFile {
            radius: v.radius,
            samples: v.samples,
            seed,
            analytic_ok: v.analytic_ok,
            violating_action: v.violating_action,
            sampled_ok: v.sampled_ok,
            continuity_ok: v.continuity_ok,
            worst_margin: v.worst_margin,
            worst_shift: v.worst_shift,
        });
        self
    }

    pub fn with_lag(mut self, l: &LagReport) -> Self {
        self.lag = Some(LagFile {
            exact: l.exact,
            spectral: l.spectral,
            real_spectrum: l.real_spectrum,
            persuasive_at_exact: l.persuasive,
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_round_trip() {
        let inst = MppInstance::example1();
        let text = serde_json::to_string(&InstanceFile::from_instance(&inst)).unwrap();
        assert_eq!(read_instance(&text).unwrap(), inst);
    }

    #[test]
    fn mechanism_round_trip() {
        let inst = MppInstance::example1();
        let mut r = mpp_core::generate::rng(1, 0);
        for k in 0..3 {
            let s = mpp_core::generate::random_mechanism(&mut r, &inst, k);
            let text = serde_json::to_string(&MechanismFile::from_mechanism(&s)).unwrap();
            let back = read_mechanism(&text, &inst).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn window_keys_are_oldest_first() {
        // Pairs (1,0) then (0,1): x = 2 then x = 1.
        let win = Slices::new(4, 2).encode(&[2, 1]);
        assert_eq!(window_key(2, 4, 2, win), "1:0,0:1");
        assert_eq!(parse_window("1:0,0:1", 2, 2, 2).unwrap(), win);
    }

    #[test]
    fn shape_errors_are_reported() {
        let text = r#"{"kernel": [[[1.0]]], "utility": [[0.0, 1.0]], "reward": [[0.0]]}"#;
        assert!(matches!(read_instance(text), Err(ParseError::Model(_))));
    }
}
