//! Identity and inequality checks on simulation output: stationary
//! residual-time equalities, the exact queue-length decomposition, the
//! covariance bounds, and end-to-end validation of the closed-form bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bound_report, BoundError, BoundReport, UnitLaw};
use crate::loo::{self, GammaEstimates, LooError};
use crate::sim::{run, run_replications, Mode, ModelError, QueueModel, RunConfig, RunError, SimOutput};
use crate::stats::{ols_slope, Estimate, StatsError};

/// z threshold for equalities.
pub const Z_EQUALITY: f64 = 4.0;
/// z threshold for one-sided bounds.
pub const Z_BOUND: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Loo(#[from] LooError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Equality,
    UpperBound,
    LowerBound,
}

impl CheckKind {
    fn name(self) -> &'static str {
        match self {
            CheckKind::Equality => "equality",
            CheckKind::UpperBound => "upper_bound",
            CheckKind::LowerBound => "lower_bound",
        }
    }
}

/// Relative resolution of a check. Identities that hold pathwise (e.g. with
/// deterministic services) have batch SEs at rounding level.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: Estimate,
    pub rhs: f64,
    /// Standard error of lhs − rhs, floored at [`NUMERIC_TOLERANCE`]·max(1, |rhs|).
    pub se: f64,
    pub z_threshold: f64,
    /// (lhs − rhs)/se.
    pub z: f64,
    pub pass: bool,
    pub skip_reason: Option<String>,
}

impl IdentityCheck {
    pub fn new(name: impl Into<String>, kind: CheckKind, lhs: Estimate, rhs: f64, z_threshold: f64) -> Self {
        Self::with_se(name, kind, lhs, rhs, lhs.std_error, z_threshold)
    }

    /// As [`IdentityCheck::new`] with the SE of the difference given
    /// separately (when lhs and rhs are correlated estimates).
    pub fn with_se(name: impl Into<String>, kind: CheckKind, lhs: Estimate, rhs: f64, se: f64, z_threshold: f64) -> Self {
        let floor = if rhs.is_finite() { NUMERIC_TOLERANCE * rhs.abs().max(1.0) } else { 0.0 };
        let se = se.max(floor);
        let z = Estimate::new(lhs.value, se, lhs.n_batches).z_score(rhs);
        let pass = match kind {
            CheckKind::Equality => z.abs() <= z_threshold,
            CheckKind::UpperBound => z <= z_threshold,
            CheckKind::LowerBound => z >= -z_threshold,
        };
        Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            se,
            z_threshold,
            z,
            pass,
            skip_reason: None,
        }
    }

    pub fn skipped(name: impl Into<String>, kind: CheckKind, rhs: f64, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            lhs: Estimate::new(f64::NAN, f64::NAN, 0),
            rhs,
            se: f64::NAN,
            z_threshold: f64::NAN,
            z: f64::NAN,
            pass: true,
            skip_reason: Some(reason.into()),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skip_reason.is_some()
    }

    fn csv_row(&self) -> String {
        let num = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.name,
            self.kind.name(),
            num(self.lhs.value),
            num(self.rhs),
            num(self.se),
            num(self.z),
            self.pass,
            self.skip_reason.as_deref().unwrap_or("")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackRatio {
    pub bound: String,
    pub mode: Mode,
    pub simulated: f64,
    pub value: f64,
    /// bound / simulated.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: String,
    pub horizon_events: u64,
    pub seeds: Vec<u64>,
    pub checks: Vec<IdentityCheck>,
    pub slack: Vec<SlackRatio>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn new(model: &QueueModel, horizon_events: u64, seeds: Vec<u64>, checks: Vec<IdentityCheck>) -> Self {
        Self::labeled(model.label(), horizon_events, seeds, checks)
    }

    pub fn labeled(label: impl Into<String>, horizon_events: u64, seeds: Vec<u64>, checks: Vec<IdentityCheck>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self {
            model: label.into(),
            horizon_events,
            seeds,
            checks,
            slack: Vec::new(),
            pass,
        }
    }

    pub fn extend(&mut self, other: VerifyReport) {
        self.checks.extend(other.checks);
        self.slack.extend(other.slack);
        self.pass &= other.pass;
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// `check,kind,lhs,rhs,se,z,pass,skip_reason`, one row per check.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,kind,lhs,rhs,se,z,pass,skip_reason\n");
        for c in &self.checks {
            s.push_str(&c.csv_row());
            s.push('\n');
        }
        s
    }
}

fn require_modified(model: &QueueModel) -> Result<(), VerifyError> {
    if model.mode != Mode::Modified {
        return Err(LooError::Precondition("identity checks need a modified-mode run".into()).into());
    }
    Ok(())
}

/// Stationary residual-time identities (a)–(f) at z = 4. Pairs in (c) are
/// consecutive servers for homogeneous models and all pairs otherwise.
pub fn check_bar_identities(output: &SimOutput, model: &QueueModel) -> Result<Vec<IdentityCheck>, VerifyError> {
    require_modified(model)?;
    let n = model.n();
    let lambda = model.arrival_rate();
    let rho = model.rho();
    let half_s: Vec<f64> = (0..n)
        .map(|i| model.service_rate(i) * model.services[i].moments().second_moment / 2.0)
        .collect();
    let half_a = lambda * model.arrival.moments().second_moment / 2.0;
    let mut out = Vec::new();
    let eq = |name: String, e: Estimate, rhs: f64| IdentityCheck::new(name, CheckKind::Equality, e, rhs, Z_EQUALITY);

    for i in 0..n {
        out.push(eq(format!("a:time_avg_Rs[{i}]"), output.time_avg_rs(i)?, half_s[i]));
    }
    out.push(eq("b:time_avg_Ra".into(), output.time_avg_ra()?, half_a));
    let pairs: Vec<(usize, usize)> = if model.is_homogeneous() {
        (1..n).map(|i| (i - 1, i)).collect()
    } else {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    };
    for (i, j) in pairs {
        let e = output.estimate(|b| {
            let ci = &b.classes[1 + i];
            let cj = &b.classes[1 + j];
            ci.rs[j] / ci.count as f64 + cj.rs[i] / cj.count as f64
        })?;
        out.push(eq(format!("c:Es{i}_Rs{j}+Es{j}_Rs{i}"), e, half_s[i] + half_s[j]));
    }
    for i in 0..n {
        let e = output.estimate(|b| {
            let ci = &b.classes[1 + i];
            let ca = &b.classes[0];
            ci.ra / ci.count as f64 + ca.rs[i] / ca.count as f64
        })?;
        out.push(eq(format!("d:Es{i}_Ra+Ea_Rs{i}"), e, half_s[i] + half_a));
    }
    out.push(eq("e:Ps[Q=0]".into(), output.palm_completions(|c| c.q_zero)?, 1.0 - rho));
    for &j in &output.tracked {
        let name = format!("f:Ps[Qloo{j}=0,i!={j}]");
        let target = 1.0 - rho - model.service_rate(j) / model.mu_sum();
        if model.rho_minus(j) < 1.0 {
            out.push(eq(name, loo::loo_zero_frequency(output, j)?, target));
        } else {
            out.push(IdentityCheck::skipped(
                name,
                CheckKind::Equality,
                target,
                format!("leave-one-out system {j} unstable (rho_-j = {:.6})", model.rho_minus(j)),
            ));
        }
    }
    Ok(out)
}

/// (ρVar(ΛA) + Σ_j (μ_j/μ_Σ)Var(μ_jS_j) + 1 − ρ)/2 + ΣΓ_sj − Γ_a.
pub fn decomposition_rhs(model: &QueueModel, sum_gamma_s: f64, gamma_a: f64) -> f64 {
    let rho = model.rho();
    let a = UnitLaw::of(&model.arrival);
    let wvar: f64 = (0..model.n())
        .map(|j| model.service_rate(j) / model.mu_sum() * UnitLaw::of(&model.services[j]).variance)
        .sum();
    (rho * a.variance + wvar + 1.0 - rho) / 2.0 + sum_gamma_s - gamma_a
}

/// Equality (1−ρ)E[Q] = [`decomposition_rhs`] with the SE taken from the
/// per-batch difference of both sides.
pub fn check_key_decomposition(output: &SimOutput, model: &QueueModel, gammas: &GammaEstimates) -> Result<IdentityCheck, VerifyError> {
    require_modified(model)?;
    let rho = model.rho();
    let lhs = output.time_avg_q()?.scale(1.0 - rho);
    let sum_gamma: f64 = gammas.gamma_s.iter().map(|t| t.value.value).sum();
    let rhs = decomposition_rhs(model, sum_gamma, gammas.gamma_a.value.value);
    let constant = decomposition_rhs(model, 0.0, 0.0);
    let gamma_batches = GammaEstimates::batch_sum(output, model);
    let diffs: Vec<f64> = output
        .batches
        .iter()
        .zip(&gamma_batches)
        .map(|(b, g)| (1.0 - rho) * b.time.q / b.time.duration - constant - g)
        .collect();
    let diff = Estimate::from_batches(&diffs)?;
    Ok(IdentityCheck::with_se(
        "decomposition",
        CheckKind::Equality,
        lhs,
        rhs,
        diff.std_error,
        Z_EQUALITY,
    ))
}

/// Γ_sj ≤ min(1−ρ, μ_j/μ_Σ)(R_sj^max − E[(μ_jS_j)²]/2) for every j and
/// −Γ_a ≤ (1−ρ)(E[(ΛA)²]/2 − R_a^min), each at z = 3.
pub fn check_covariance_bounds(gammas: &GammaEstimates, model: &QueueModel) -> Vec<IdentityCheck> {
    let mut out: Vec<IdentityCheck> = gammas
        .gamma_s
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let bound = loo::gamma_s_bound(model, j);
            if bound.is_finite() {
                IdentityCheck::new(format!("gamma_s[{j}]"), CheckKind::UpperBound, t.value, bound, Z_BOUND)
            } else {
                IdentityCheck::skipped(format!("gamma_s[{j}]"), CheckKind::UpperBound, bound, "R_s^max is infinite")
            }
        })
        .collect();
    out.push(IdentityCheck::new(
        "neg_gamma_a",
        CheckKind::UpperBound,
        gammas.gamma_a.value.scale(-1.0),
        loo::neg_gamma_a_bound(model),
        Z_BOUND,
    ));
    out
}

/// Dominance of every tracked leave-one-out queue, as an exact check.
pub fn check_loo_dominance(output: &SimOutput) -> Result<IdentityCheck, VerifyError> {
    let d = loo::check_dominance(output)?;
    Ok(IdentityCheck::new(
        "loo_dominance_violations",
        CheckKind::UpperBound,
        Estimate::exact(d.violations as f64),
        0.0,
        0.0,
    ))
}

/// All checks on one modified-mode output: identities, decomposition,
/// covariance bounds and leave-one-out dominance.
pub fn verify_output(output: &SimOutput, model: &QueueModel) -> Result<VerifyReport, VerifyError> {
    let mut checks = check_bar_identities(output, model)?;
    let gammas = loo::estimate_gammas(output, model)?;
    checks.push(check_key_decomposition(output, model, &gammas)?);
    checks.extend(check_covariance_bounds(&gammas, model));
    if !output.tracked.is_empty() {
        checks.push(check_loo_dominance(output)?);
    }
    Ok(VerifyReport::new(model, output.horizon_events, output.seeds.clone(), checks))
}

/// Simulated E[Q] + 3 SE against every asserted bound of `report`.
pub fn check_bounds_against(q: Estimate, mode: Mode, report: &BoundReport) -> (Vec<IdentityCheck>, Vec<SlackRatio>) {
    let mut checks = Vec::new();
    let mut slack = Vec::new();
    for e in report.asserted() {
        let name = format!("bound:{}:{}", e.name, mode_name(mode));
        if !e.applicable {
            checks.push(IdentityCheck::skipped(name, CheckKind::UpperBound, e.value, e.flags.join("; ")));
            continue;
        }
        checks.push(IdentityCheck::new(name, CheckKind::UpperBound, q, e.value, Z_BOUND));
        slack.push(SlackRatio {
            bound: e.name.clone(),
            mode,
            simulated: q.value,
            value: e.value,
            ratio: e.value / q.value,
        });
    }
    (checks, slack)
}

/// [`check_bounds_against`] for fresh runs of the original and the
/// modified system, reporting bound/simulated slack ratios.
pub fn validate_bounds_end_to_end(model: &QueueModel, seeds: &[u64], events: u64) -> Result<VerifyReport, VerifyError> {
    let report = bound_report(model, None, 0.5)?;
    let mut checks = Vec::new();
    let mut slack = Vec::new();
    for mode in [Mode::Original, Mode::Modified] {
        let m = model.clone().with_mode(mode);
        let cfg = RunConfig::new(0, events).with_tracked(Vec::new());
        let q = run_replications(&m, seeds, &cfg)?.time_avg_q()?;
        let (c, s) = check_bounds_against(q, mode, &report);
        checks.extend(c);
        slack.extend(s);
    }
    let mut r = VerifyReport::new(model, events, seeds.to_vec(), checks);
    r.slack = slack;
    Ok(r)
}

pub(crate) fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Original => "original",
        Mode::Modified => "modified",
    }
}

/// Batch counts used by [`check_finiteness`].
pub const FINITENESS_PREFIXES: [usize; 5] = [32, 64, 128, 256, 512];

/// Arrival- and completion-event averages of Q have batch-means SE that
/// shrinks like B^{-1/2} over batch prefixes B = 32..512 of equal size.
/// Each check carries the fitted log-log slope magnitude as `lhs` and
/// passes when it lies within 0.5 ± 0.1.
pub fn check_finiteness(model: &QueueModel, seed: u64, events: u64) -> Result<Vec<IdentityCheck>, VerifyError> {
    let cfg = RunConfig::new(seed, events).with_batches(512).with_tracked(Vec::new());
    let out = run(model, &cfg)?;
    let series: [(&str, Box<dyn Fn(&crate::sim::BatchStats) -> f64>); 2] = [
        ("finiteness:Ea[Q]", Box::new(|b| b.classes[0].q / b.classes[0].count as f64)),
        ("finiteness:Es[Q]", Box::new(|b| b.pooled(|c| c.q) / b.completion_count())),
    ];
    let mut checks = Vec::new();
    for (name, f) in series {
        let values: Vec<f64> = out.batches.iter().map(|b| f(b)).collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &b in &FINITENESS_PREFIXES {
            let e = Estimate::from_batches(&values[..b])?;
            x.push((b as f64).ln());
            y.push(e.std_error.ln());
        }
        let slope = ols_slope(&x, &y).abs();
        checks.push(IdentityCheck::with_se(name, CheckKind::Equality, Estimate::exact(slope), 0.5, 0.1, 1.0));
    }
    Ok(checks)
}

/// Erlang-C delay probability C(n, a) for offered load a = Λ/μ < n, by
/// the Erlang-B recursion B(k) = aB(k−1)/(k + aB(k−1)).
pub fn erlang_c(n: usize, a: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=n {
        b = a * b / (k as f64 + a * b);
    }
    let rho = a / n as f64;
    b / (1.0 - rho * (1.0 - b))
}

/// Stationary mean number waiting in the original M/M/n queue.
pub fn mmn_waiting(n: usize, rho: f64) -> f64 {
    erlang_c(n, rho * n as f64) * rho / (1.0 - rho)
}

/// Stationary mean queue length ρ/(1−ρ) of the modified M/M/n queue, a
/// birth–death chain with rates Λ up and nμ down.
pub fn modified_mmn_mean(rho: f64) -> f64 {
    rho / (1.0 - rho)
}
