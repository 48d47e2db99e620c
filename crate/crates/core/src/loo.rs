//! Leave-one-out estimators: the Γ covariance terms, pathwise dominance of
//! the leave-one-out queue, the uncorrelation residual, and conditional
//! mean-residual bounds on (Q, Q_loo) cells.
//!
//! All estimators take a modified-mode [`SimOutput`]. Palm averages over
//! "completions" pool every server's completion events, so server i enters
//! with weight μ_i/μ_Σ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::UnitLaw;
use crate::sim::{BatchStats, CellSums, ClassSums, Mode, QueueModel, SimOutput, CELL_NAMES};
use crate::stats::{Estimate, StatsError};

/// Cells with fewer samples than this are reported but not tested.
pub const MIN_CELL_SAMPLES: u64 = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LooError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// One Γ term with its two pieces: `value = palm_piece − (1−ρ)·stationary_piece`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTerm {
    pub value: Estimate,
    pub palm_piece: Estimate,
    pub stationary_piece: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimates {
    pub rho: f64,
    /// Γ_sj for every server j (the decomposition needs all of them).
    pub gamma_s: Vec<GammaTerm>,
    pub gamma_a: GammaTerm,
}

impl GammaEstimates {
    /// Per-batch Σ_j Γ_sj − Γ_a, used by the decomposition check.
    pub(crate) fn batch_sum(output: &SimOutput, model: &QueueModel) -> Vec<f64> {
        let rho = model.rho();
        output
            .batches
            .iter()
            .map(|b| {
                let s: f64 = (0..model.n()).map(|j| gamma_s_batch(b, model, j, rho).0).sum();
                s - gamma_a_batch(b, model, rho).0
            })
            .collect()
    }
}

fn gamma_s_batch(b: &BatchStats, model: &QueueModel, j: usize, rho: f64) -> (f64, f64, f64) {
    let mu = model.service_rate(j);
    let palm = mu * b.pooled(|c| c.q_zero_rs[j]) / b.completion_count();
    let stat = mu * b.time.rs[j] / b.time.duration;
    (palm - (1.0 - rho) * stat, palm, stat)
}

fn gamma_a_batch(b: &BatchStats, model: &QueueModel, rho: f64) -> (f64, f64, f64) {
    let lambda = model.arrival_rate();
    let palm = lambda * b.pooled(|c| c.q_zero_ra) / b.completion_count();
    let stat = lambda * b.time.ra / b.time.duration;
    (palm - (1.0 - rho) * stat, palm, stat)
}

fn term(output: &SimOutput, f: impl Fn(&BatchStats) -> (f64, f64, f64)) -> Result<GammaTerm, StatsError> {
    let parts: Vec<(f64, f64, f64)> = output.batches.iter().map(f).collect();
    let pick = |k: usize| -> Vec<f64> {
        parts
            .iter()
            .map(|p| match k {
                0 => p.0,
                1 => p.1,
                _ => p.2,
            })
            .collect()
    };
    Ok(GammaTerm {
        value: Estimate::from_batches(&pick(0))?,
        palm_piece: Estimate::from_batches(&pick(1))?,
        stationary_piece: Estimate::from_batches(&pick(2))?,
    })
}

fn require_modified(model: &QueueModel) -> Result<(), LooError> {
    if model.mode != Mode::Modified {
        return Err(LooError::Precondition("leave-one-out estimators need a modified-mode run".into()));
    }
    Ok(())
}

pub fn estimate_gammas(output: &SimOutput, model: &QueueModel) -> Result<GammaEstimates, LooError> {
    require_modified(model)?;
    let rho = model.rho();
    if rho >= 1.0 {
        return Err(LooError::Precondition(format!("load {rho} is not below 1")));
    }
    let gamma_s = (0..model.n())
        .map(|j| term(output, |b| gamma_s_batch(b, model, j, rho)))
        .collect::<Result<Vec<_>, _>>()?;
    let gamma_a = term(output, |b| gamma_a_batch(b, model, rho))?;
    Ok(GammaEstimates { rho, gamma_s, gamma_a })
}

/// min(1−ρ, μ_j/μ_Σ)·(R_sj^max − E[(μ_jS_j)²]/2).
pub fn gamma_s_bound(model: &QueueModel, j: usize) -> f64 {
    let w = model.service_rate(j) / model.mu_sum();
    (1.0 - model.rho()).min(w) * UnitLaw::of(&model.services[j]).service_excess()
}

/// (1−ρ)·(E[(ΛA)²]/2 − R_a^min), the upper bound on −Γ_a.
pub fn neg_gamma_a_bound(model: &QueueModel) -> f64 {
    (1.0 - model.rho()) * UnitLaw::of(&model.arrival).arrival_excess()
}

/// CSV rows `quantity,j,value,se,ci_lo,ci_hi,bound,pass`: Γ_sj and −Γ_a
/// against their upper bounds with `z` standard errors of slack.
pub fn gamma_rows(g: &GammaEstimates, model: &QueueModel, z: f64) -> String {
    let mut out = String::from("quantity,j,value,se,ci_lo,ci_hi,bound,pass\n");
    let mut row = |q: &str, j: String, e: Estimate, bound: f64| {
        let pass = e.value <= bound + z * e.std_error;
        out.push_str(&format!(
            "{q},{j},{},{},{},{},{bound},{pass}\n",
            e.value, e.std_error, e.ci95.0, e.ci95.1
        ));
    };
    for (j, t) in g.gamma_s.iter().enumerate() {
        row("gamma_s", j.to_string(), t.value, gamma_s_bound(model, j));
    }
    row("neg_gamma_a", String::new(), g.gamma_a.value.scale(-1.0), neg_gamma_a_bound(model));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub pass: bool,
    /// min over event boundaries and tracked j of Q_loo[j] − Q.
    pub min_margin: i64,
    pub violations: u64,
}

/// Q_loo[j] ≥ Q at every event boundary for every tracked j.
pub fn check_dominance(output: &SimOutput) -> Result<DominanceCheck, LooError> {
    let min_margin = output
        .loo_min_margin
        .filter(|_| !output.tracked.is_empty())
        .ok_or_else(|| LooError::Precondition("no leave-one-out index was tracked".into()))?;
    Ok(DominanceCheck {
        pass: output.loo_violations == 0 && min_margin >= 0,
        min_margin,
        violations: output.loo_violations,
    })
}

fn tracked_slot(output: &SimOutput, j: usize) -> Result<usize, LooError> {
    output
        .tracked
        .iter()
        .position(|&t| t == j)
        .ok_or_else(|| LooError::Precondition(format!("server {j} is not tracked")))
}

/// E_{s,i}[1{Q_loo[j]=0}·R_s[j]] − P_{s,i}[Q_loo[j]=0]·E_π[R_s[j]], which
/// vanishes when the leave-one-out system is stable and S_j is non-lattice.
pub fn check_uncorrelation(output: &SimOutput, model: &QueueModel, i: usize, j: usize) -> Result<Estimate, LooError> {
    require_modified(model)?;
    if i == j {
        return Err(LooError::Precondition("uncorrelation needs i != j".into()));
    }
    if model.rho_minus(j) >= 1.0 {
        return Err(LooError::Precondition(format!("leave-one-out load without server {j} is not below 1")));
    }
    if model.services[j].is_lattice() {
        return Err(LooError::Precondition(format!("service law of server {j} is lattice")));
    }
    let k = tracked_slot(output, j)?;
    Ok(output.estimate(|b| {
        let c = &b.classes[1 + i];
        let n = c.count as f64;
        c.loo_zero_rs[k] / n - (c.loo_zero[k] / n) * (b.time.rs[j] / b.time.duration)
    })?)
}

/// Fraction of all completions that happen at servers i ≠ j while
/// Q_loo[j] = 0; equals 1 − ρ − μ_j/μ_Σ when ρ_{−j} < 1.
pub fn loo_zero_frequency(output: &SimOutput, j: usize) -> Result<Estimate, LooError> {
    let k = tracked_slot(output, j)?;
    Ok(output.estimate(|b| {
        let hits: f64 = b.classes[1..]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, c)| c.loo_zero[k])
            .sum();
        hits / b.completion_count()
    })?)
}

/// E_{s,i}[R_s[j]] − E_π[R_s[j]] for every ordered pair i ≠ j.
pub fn palm_residual_gaps(output: &SimOutput, model: &QueueModel) -> Result<Vec<(usize, usize, Estimate)>, LooError> {
    let n = model.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let e = output.estimate(|b| {
                let c = &b.classes[1 + i];
                c.rs[j] / c.count as f64 - b.time.rs[j] / b.time.duration
            })?;
            out.push((i, j, e));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMeasure {
    /// Time average.
    Stationary,
    /// Completions at servers other than j.
    OtherCompletions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellQuantity {
    /// μ_j R_s[j], bounded above by R_sj^max.
    ServiceResidual,
    /// Λ R_a, bounded below by R_a^min.
    ArrivalResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub j: usize,
    pub cell: String,
    pub measure: CellMeasure,
    pub quantity: CellQuantity,
    pub samples: u64,
    pub estimate: Option<Estimate>,
    pub bound: f64,
    pub pass: bool,
    pub skip_reason: Option<String>,
}

/// Conditional averages of μ_jR_s[j] and ΛR_a on each (Q, Q_loo[j]) cell,
/// under the time average and at completions of servers i ≠ j, against
/// R_sj^max (from above) and R_a^min (from below) with `z` SE of slack.
pub fn check_conditional_residuals(output: &SimOutput, model: &QueueModel, z: f64) -> Vec<CellCheck> {
    let mut out = Vec::new();
    let lambda = model.arrival_rate();
    let ra_min = UnitLaw::of(&model.arrival).r_min;
    let totals = output.totals();
    for (k, &j) in output.tracked.iter().enumerate() {
        let mu = model.service_rate(j);
        let rs_max = UnitLaw::of(&model.services[j]).r_max;
        let others = |b: &BatchStats, cell: usize| {
            let mut s = CellSums::default();
            for (_, c) in b.classes[1..].iter().enumerate().filter(|(i, _)| *i != j) {
                let x = &c.cells[k][cell];
                s.weight += x.weight;
                s.rs += x.rs;
                s.ra += x.ra;
            }
            s
        };
        for cell in 0..4 {
            let all_events: f64 = totals.classes.iter().map(|c: &ClassSums| c.cells[k][cell].weight).sum();
            let other_events = others(&totals, cell).weight;
            for measure in [CellMeasure::Stationary, CellMeasure::OtherCompletions] {
                let samples = match measure {
                    CellMeasure::Stationary => all_events,
                    CellMeasure::OtherCompletions => other_events,
                } as u64;
                for quantity in [CellQuantity::ServiceResidual, CellQuantity::ArrivalResidual] {
                    let (scale, bound) = match quantity {
                        CellQuantity::ServiceResidual => (mu, rs_max),
                        CellQuantity::ArrivalResidual => (lambda, ra_min),
                    };
                    let ratio = |b: &BatchStats| {
                        let s = match measure {
                            CellMeasure::Stationary => b.time.cells[k][cell],
                            CellMeasure::OtherCompletions => others(b, cell),
                        };
                        let v = match quantity {
                            CellQuantity::ServiceResidual => s.rs,
                            CellQuantity::ArrivalResidual => s.ra,
                        };
                        scale * v / s.weight
                    };
                    let mut check = CellCheck {
                        j,
                        cell: CELL_NAMES[cell].to_string(),
                        measure,
                        quantity,
                        samples,
                        estimate: None,
                        bound,
                        pass: true,
                        skip_reason: None,
                    };
                    if samples < MIN_CELL_SAMPLES {
                        check.skip_reason = Some(format!("{samples} samples < {MIN_CELL_SAMPLES}"));
                    } else if !bound.is_finite() {
                        check.skip_reason = Some("bound is infinite".into());
                    } else {
                        match output.estimate(ratio) {
                            Ok(e) => {
                                check.pass = match quantity {
                                    CellQuantity::ServiceResidual => e.value <= bound + z * e.std_error,
                                    CellQuantity::ArrivalResidual => e.value >= bound - z * e.std_error,
                                };
                                check.estimate = Some(e);
                            }
                            Err(err) => check.skip_reason = Some(err.to_string()),
                        }
                    }
                    out.push(check);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec;
    use crate::sim::{run, RunConfig};

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    fn modified(service: DistributionSpec, n: usize, rho: f64) -> QueueModel {
        QueueModel::poisson(service, n, rho, Mode::Modified).unwrap()
    }

    #[test]
    fn mm1_gammas() {
        let m = modified(exp(1.0), 1, 0.5);
        let out = run(&m, &RunConfig::new(3, 2_000_000)).unwrap();
        let g = estimate_gammas(&out, &m).unwrap();
        assert!(g.gamma_s[0].value.z_score(-0.5).abs() < 4.0, "{:?}", g.gamma_s[0]);
        assert_eq!(g.gamma_s[0].palm_piece.value, 0.0);
        assert!(g.gamma_a.value.z_score(0.0).abs() < 4.0, "{:?}", g.gamma_a);
    }

    #[test]
    fn gamma_pieces_compose_exactly() {
        let m = QueueModel::homogeneous(
            DistributionSpec::hyperexponential(vec![0.5, 0.5], vec![0.5, 2.0]).unwrap(),
            DistributionSpec::gamma(2.0, 2.0).unwrap(),
            3,
            Mode::Modified,
        )
        .unwrap()
        .with_load(0.7)
        .unwrap();
        let out = run(&m, &RunConfig::new(8, 200_000)).unwrap();
        let g = estimate_gammas(&out, &m).unwrap();
        for t in g.gamma_s.iter().chain([&g.gamma_a]) {
            let rebuilt = t.palm_piece.value - (1.0 - g.rho) * t.stationary_piece.value;
            assert!((t.value.value - rebuilt).abs() <= 1e-12 * rebuilt.abs().max(1.0));
        }
    }

    #[test]
    fn mmn_arrival_gamma_vanishes() {
        let m = modified(exp(1.0), 4, 0.7);
        let out = run(&m, &RunConfig::new(5, 1_000_000)).unwrap();
        let g = estimate_gammas(&out, &m).unwrap();
        assert!(g.gamma_a.value.z_score(0.0).abs() < 4.0);
        let text = gamma_rows(&g, &m, 3.0);
        assert!(text.starts_with("quantity,j,value,se,ci_lo,ci_hi,bound,pass\n"));
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().skip(1).all(|l| l.ends_with("true")), "{text}");
    }

    #[test]
    fn md10_gamma_bound() {
        let m = modified(DistributionSpec::deterministic(1.0).unwrap(), 10, 0.5);
        assert!((gamma_s_bound(&m, 0) - 0.05).abs() < 1e-12);
        let out = run(&m, &RunConfig::new(2, 1_000_000)).unwrap();
        let g = estimate_gammas(&out, &m).unwrap();
        let e = g.gamma_s[0].value;
        assert!(e.value <= 0.05 + 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn original_mode_is_rejected() {
        let m = modified(exp(1.0), 2, 0.5);
        let out = run(&m, &RunConfig::new(1, 20_000)).unwrap();
        let orig = m.clone().with_mode(Mode::Original);
        assert!(matches!(estimate_gammas(&out, &orig), Err(LooError::Precondition(_))));
    }

    #[test]
    fn insufficient_batches() {
        let m = modified(exp(1.0), 2, 0.5);
        let out = run(&m, &RunConfig::new(1, 20_000).with_batches(4)).unwrap();
        assert!(matches!(
            estimate_gammas(&out, &m),
            Err(LooError::Stats(StatsError::InsufficientData { batches: 4 }))
        ));
    }

    #[test]
    fn dominance_holds() {
        for (n, rho) in [(1, 0.5), (3, 0.99), (4, 0.6)] {
            let m = modified(exp(1.0), n, rho);
            let out = run(&m, &RunConfig::new(n as u64, 200_000)).unwrap();
            let d = check_dominance(&out).unwrap();
            assert!(d.pass && d.min_margin >= 0, "{d:?}");
        }
        let m = modified(exp(1.0), 2, 0.5);
        let out = run(&m, &RunConfig::new(1, 20_000).with_tracked(vec![])).unwrap();
        assert!(check_dominance(&out).is_err());
    }

    #[test]
    fn uncorrelation_mm3() {
        let m = modified(exp(1.0), 3, 0.5);
        let out = run(&m, &RunConfig::new(4, 1_000_000).with_tracked(vec![1])).unwrap();
        let r = check_uncorrelation(&out, &m, 0, 1).unwrap();
        assert!(r.z_score(0.0).abs() < 4.0, "{r:?}");
        assert!(check_uncorrelation(&out, &m, 1, 1).is_err());
        assert!(check_uncorrelation(&out, &m, 0, 2).is_err());
    }

    #[test]
    fn loo_zero_identity() {
        let m = modified(exp(1.0), 3, 0.5);
        let out = run(&m, &RunConfig::new(6, 1_000_000)).unwrap();
        let f = loo_zero_frequency(&out, 0).unwrap();
        assert!(f.z_score(1.0 - 0.5 - 1.0 / 3.0).abs() < 4.0, "{f:?}");
    }

    #[test]
    fn conditional_cells() {
        let m = modified(DistributionSpec::gamma(0.5, 0.5).unwrap(), 3, 0.6);
        let out = run(&m, &RunConfig::new(9, 1_000_000)).unwrap();
        let cells = check_conditional_residuals(&out, &m, 4.0);
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|c| c.pass), "{cells:#?}");
        assert!(cells.iter().filter(|c| c.skip_reason.is_none()).count() >= 8);
    }

    #[test]
    fn exponential_palm_residual_matches_time_average() {
        let m = modified(exp(1.0), 2, 0.7);
        let out = run(&m, &RunConfig::new(10, 500_000)).unwrap();
        for (_, _, e) in palm_residual_gaps(&out, &m).unwrap() {
            assert!(e.z_score(0.0).abs() < 4.0, "{e:?}");
        }
    }
}
