//! Subcommand bodies. Each returns the text for stdout or a [`CliError`]
//! carrying the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use mpp_core::benchmark::check_equality_condition;
use mpp_core::partial::{build_bilinear, solve_partial, PartialOptions, PartialSolution};
use mpp_core::robust::{build_robust_mechanism, persuasive_lag, verify_robust};
use mpp_core::sim::{simulate, Behavior};
use mpp_core::{solve_benchmark, InfoModel, MppError, MppInstance, SignalingMechanism, DEFAULT_SLICE_CAP};
use serde::Serialize;

use crate::format::{read_instance, read_mechanism, CertificateFile, MechanismFile, ParseError, PartialFile, SolutionFile};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CAP: i32 = 4;
pub const EXIT_PRECONDITION: i32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }
}

pub fn exit_code(e: &MppError) -> i32 {
    match e {
        MppError::InvalidInstance(_) | MppError::InvalidMechanism(_) | MppError::DimensionMismatch(_) => EXIT_INPUT,
        MppError::CapExceeded { .. } => EXIT_CAP,
        MppError::EpsilonTooLarge { .. } | MppError::RegularityFails { .. } | MppError::NotPersuasive(_) => EXIT_PRECONDITION,
        _ => EXIT_SOLVER,
    }
}

impl From<MppError> for CliError {
    fn from(e: MppError) -> Self {
        let message = match &e {
            MppError::EpsilonTooLarge { threshold, .. } => format!("{e}\nadmissible threshold: {threshold:.9}"),
            _ => e.to_string(),
        };
        CliError { code: exit_code(&e), message }
    }
}

/// Slice cap from `MPP_SLICE_CAP`, or the library default.
pub fn slice_cap() -> Result<usize, CliError> {
    match std::env::var("MPP_SLICE_CAP") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| CliError::input(format!("MPP_SLICE_CAP must be a positive integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_SLICE_CAP),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn parse_error(path: &Path, e: ParseError) -> CliError {
    match e {
        ParseError::Json(j) => CliError::input(format!("{}: {j}", path.display())),
        ParseError::Model(m) => {
            let code = exit_code(&m);
            CliError { code, message: format!("{}: {m}", path.display()) }
        }
    }
}

pub fn load_instance(path: &Path) -> Result<MppInstance, CliError> {
    let text = read_text(path)?;
    let mut inst = read_instance(&text).map_err(|e| parse_error(path, e))?;
    if inst.name.is_empty() {
        inst.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(inst)
}

pub fn load_mechanism(path: &Path, inst: &MppInstance) -> Result<SignalingMechanism, CliError> {
    let text = read_text(path)?;
    read_mechanism(&text, inst).map_err(|e| parse_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn parse_model(s: &str, lag: Option<usize>) -> Result<InfoModel, CliError> {
    match (s, lag) {
        ("no", _) => Ok(InfoModel::No),
        ("full", _) => Ok(InfoModel::Full),
        ("lag", Some(l)) => Ok(InfoModel::Lag(l)),
        ("lag", None) => Err(CliError::input("--model lag needs --lag")),
        _ => Err(CliError::input(format!("unknown model {s:?}; expected no, full or lag"))),
    }
}

fn mechanism_lines(out: &mut String, s: &SignalingMechanism) {
    let file = MechanismFile::from_mechanism(s);
    for (key, rows) in &file.table {
        for (w, row) in rows.iter().enumerate() {
            let probs: Vec<String> = row.iter().map(|p| format!("{p:.6}")).collect();
            let _ = writeln!(out, "  [{key}] state {w}: {}", probs.join(" "));
        }
    }
}

/// Benchmark LP under the no- or full-history model.
pub fn solve(inst: &MppInstance, model: InfoModel, out: Option<&Path>) -> Result<String, CliError> {
    let name = match model {
        InfoModel::No => "no",
        InfoModel::Full => "full",
        InfoModel::Lag(_) => return Err(CliError::input("solve supports --model no or full; use `partial` for lags")),
    };
    let sol = solve_benchmark(inst, model)?;
    let mut text = format!("OPT = {:.6}\n", sol.value);
    mechanism_lines(&mut text, &sol.mechanism);
    if let Some(path) = out {
        write_json(path, &SolutionFile::new(inst, name, &sol))?;
    }
    Ok(text)
}

/// Memory levels `K` or `A..B` (inclusive).
pub fn parse_memory(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::input(format!("--memory expects K or A..B, got {s:?}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a, b))
        }
        None => {
            let k: usize = s.trim().parse().map_err(|_| bad())?;
            Ok((k, k))
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartialRun {
    pub solution: PartialSolution,
    pub seconds: f64,
}

/// Solves memories 0..=`hi` at lag `lag`, each level warm-started from the
/// one below, and returns the levels `lo..=hi`.
pub fn partial_levels(
    inst: &MppInstance,
    lag: usize,
    (lo, hi): (usize, usize),
    starts: usize,
    seed: u64,
    tol: f64,
    cap: usize,
) -> Result<Vec<PartialRun>, CliError> {
    // Fail on the cap before spending time on the lower levels.
    build_bilinear(inst, lag, hi, cap)?;
    let mut warm: Vec<SignalingMechanism> = Vec::new();
    let mut out = Vec::new();
    for k in 0..=hi {
        let clock = Instant::now();
        let program = build_bilinear(inst, lag, k, cap)?;
        let mut opts = PartialOptions::new(starts, seed);
        opts.tol = tol;
        opts.slice_cap = cap;
        opts.warm_starts = warm.clone();
        let solution = solve_partial(&program, &opts)?;
        let seconds = clock.elapsed().as_secs_f64();
        warm = vec![solution.mechanism.clone()];
        if k >= lo {
            out.push(PartialRun { solution, seconds });
        }
    }
    Ok(out)
}

pub const PARTIAL_HEADER: &str = "lag,memory,value,starts,best_start";

pub fn partial_row(s: &PartialSolution) -> String {
    format!("{},{},{:.6},{},{}", s.lag, s.memory, s.value, s.starts, s.best_start)
}

/// CSV of the lagged-model solutions. Wall times go to `timings`, which
/// is kept apart so the CSV is reproducible byte for byte.
pub fn partial(
    inst: &MppInstance,
    lag: usize,
    memory: (usize, usize),
    starts: usize,
    seed: u64,
    tol: f64,
    cap: usize,
    out: Option<&Path>,
    timings: &mut String,
) -> Result<String, CliError> {
    let runs = partial_levels(inst, lag, memory, starts, seed, tol, cap)?;
    let mut csv = format!("{PARTIAL_HEADER}\n");
    for r in &runs {
        csv.push_str(&partial_row(&r.solution));
        csv.push('\n');
        let _ = writeln!(timings, "lag {} memory {}: {:.3} s", r.solution.lag, r.solution.memory, r.seconds);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        fs::write(dir.join("partial.csv"), &csv).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        for r in &runs {
            let name = format!("partial_l{}_k{}.json", r.solution.lag, r.solution.memory);
            write_json(&dir.join(name), &PartialFile::new(inst, &r.solution))?;
        }
    }
    Ok(csv)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Robust mechanism, its verification and the lag it needs.
pub fn robust(
    inst: &MppInstance,
    epsilon: f64,
    samples: usize,
    seed: u64,
    cap: usize,
    out: Option<&Path>,
) -> Result<String, CliError> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(CliError::input(format!("--epsilon must be a non-negative number, got {epsilon}")));
    }
    let cert = build_robust_mechanism(inst, epsilon)?;
    let check = verify_robust(inst, &cert, samples, seed);
    // No finite lag brings d_ℓ to exactly zero.
    let lag = if epsilon > 0.0 { Some(persuasive_lag(inst, &cert, cap)?) } else { None };
    let mut t = String::new();
    let _ = writeln!(t, "epsilon = {epsilon:.6} (admissible below {:.6})", cert.threshold);
    let _ = writeln!(t, "OPT(no) = {:.6}", cert.opt_no);
    let _ = writeln!(t, "payoff = {:.6}", cert.payoff);
    let _ = writeln!(t, "lower bound = {:.6} (sharp {:.6})", cert.payoff_lower_bound, cert.sharp_lower_bound);
    let _ = writeln!(t, "D = {:.6}, w_min = {:.6}, |y|_1 = {:.6}, tau = {:.6}, s_f = {:.6}", cert.regularity.d, cert.w_min, cert.perturbation.y_norm, cert.perturbation.tau, cert.perturbation.s_f);
    let _ = writeln!(t, "delta = {:.6}, rho = {:.6}, verified radius = {:.6}", cert.delta, cert.rho, cert.verified_radius);
    let _ = writeln!(t, "analytic check: {}", verdict(check.analytic_ok));
    let _ = writeln!(
        t,
        "sampled check: {} ({} priors, worst margin {:.3e}, worst shift {:.3e})",
        verdict(check.sampled_ok),
        check.samples,
        check.worst_margin,
        check.worst_shift
    );
    match &lag {
        Some(lag) => {
            let spectral = lag.spectral.map_or_else(|| "n/a".to_string(), |l| l.to_string());
            let _ = writeln!(t, "lag: exact {}, spectral {}", lag.exact, spectral);
            if let Some(p) = lag.persuasive {
                let _ = writeln!(t, "persuasive at lag {}: {}", lag.exact, if p { "yes" } else { "no" });
            }
        }
        None => {
            let _ = writeln!(t, "lag: n/a at epsilon 0");
        }
    }
    mechanism_lines(&mut t, &cert.mechanism);
    if let Some(path) = out {
        let mut file = CertificateFile::new(inst, &cert).with_verification(&check, seed);
        if let Some(lag) = &lag {
            file = file.with_lag(lag);
        }
        write_json(path, &file)?;
    }
    Ok(t)
}

pub fn check_equality(inst: &MppInstance, out: Option<&Path>) -> Result<String, CliError> {
    let report = check_equality_condition(inst)?;
    let full = solve_benchmark(inst, InfoModel::Full)?;
    let mut t = String::new();
    match report.failing_clause() {
        None if report.holds => {
            let _ = writeln!(t, "condition holds; OPT(no)={:.6} OPT(full)={:.6}", report.opt_no, full.value);
            if let Some(v) = report.witness_value {
                let _ = writeln!(t, "witness value {v:.6}");
            }
        }
        clause => {
            let _ = writeln!(t, "condition FAILS: {}", clause.unwrap_or("witness did not verify"));
            let _ = writeln!(t, "OPT(no)={:.6} OPT(full)={:.6}", report.opt_no, full.value);
        }
    }
    if let Some(path) = out {
        #[derive(Serialize)]
        struct Verdict<'a> {
            instance: &'a str,
            holds: bool,
            independent: bool,
            outside_hull: &'a [usize],
            opt_no: f64,
            opt_full: f64,
            witness: Option<MechanismFile>,
            witness_value: Option<f64>,
        }
        let v = Verdict {
            instance: &inst.name,
            holds: report.holds,
            independent: report.independent,
            outside_hull: &report.outside_hull,
            opt_no: report.opt_no,
            opt_full: full.value,
            witness: report.witness.as_ref().map(MechanismFile::from_mechanism),
            witness_value: report.witness_value,
        };
        write_json(path, &v)?;
    }
    Ok(t)
}

/// One-row CSV summary of a trajectory.
pub fn simulate_summary(
    inst: &MppInstance,
    sigma: &SignalingMechanism,
    steps: usize,
    seed: u64,
    behavior: Behavior,
    cap: usize,
) -> Result<String, CliError> {
    if steps == 0 {
        return Err(CliError::input("-T must be at least 1"));
    }
    let t = simulate(inst, sigma, steps, seed, behavior, cap)?;
    let na = inst.n_actions;
    let mut header = vec!["seed".to_string(), "T".into(), "reward".into(), "obedience_rate".into()];
    let mut row = vec![seed.to_string(), steps.to_string(), format!("{:.6}", t.reward), format!("{:.6}", t.obedience_rate)];
    for (x, f) in t.frequencies.iter().enumerate() {
        header.push(format!("f{}:{}", x / na, x % na));
        row.push(format!("{f:.6}"));
    }
    Ok(format!("{}\n{}\n", header.join(","), row.join(",")))
}
