use serde::{Deserialize, Serialize};

use crate::bounds::bound_report;
use crate::dist::DistributionSpec;
use crate::sim::{run_replications, Mode, QueueModel, RunConfig};
use crate::verify::{CheckKind, IdentityCheck, VerifyError, VerifyReport, Z_BOUND};

/// One of the worked M/GI/n examples and the bound it states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub name: String,
    pub service: DistributionSpec,
    /// The example's bound times (1−ρ).
    pub constant: f64,
}

/// NBUE (Erlang-2): 1/(1−ρ). Gamma(α): max(1/α, 1)/(1−ρ). Two-phase
/// phase-type: μ·max_k τ_k/(1−ρ). Uniform(0.5, 1.5): μM/(1−ρ).
pub fn worked_examples() -> Vec<WorkedExample> {
    let ph = DistributionSpec::phase_type(vec![0.5, 0.5], vec![vec![-1.0, 0.5], vec![0.0, -3.0]]).unwrap();
    let ph_constant = ph.unitize().phase_residual_bound().unwrap();
    let gamma = |alpha: f64| WorkedExample {
        name: format!("gamma_{alpha}"),
        service: DistributionSpec::gamma(alpha, 1.0 / alpha).unwrap(),
        constant: (1.0 / alpha).max(1.0),
    };
    vec![
        WorkedExample {
            name: "nbue_erlang2".into(),
            service: DistributionSpec::erlang(2, 2.0).unwrap(),
            constant: 1.0,
        },
        gamma(0.5),
        gamma(2.0),
        WorkedExample {
            name: "phase_type_2".into(),
            service: ph,
            constant: ph_constant,
        },
        WorkedExample {
            name: "bounded_uniform".into(),
            service: DistributionSpec::uniform(0.5, 1.5).unwrap(),
            constant: 1.5,
        },
    ]
}

pub const EXAMPLE_LOADS: [f64; 2] = [0.5, 0.9];
pub const EXAMPLE_SERVERS: [usize; 2] = [1, 10];

/// Simulates every worked example with Poisson arrivals at ρ ∈ {0.5, 0.9}
/// and n ∈ {1, 10}, in both the original and the modified system, and
/// checks simulated E[Q] + 3 SE against the stated bound and against the
/// general bound.
pub fn reproduce_examples(seeds: &[u64], events: u64) -> Result<VerifyReport, VerifyError> {
    let mut checks = Vec::new();
    for ex in worked_examples() {
        for &rho in &EXAMPLE_LOADS {
            for &n in &EXAMPLE_SERVERS {
                let model = QueueModel::poisson(ex.service.clone(), n, rho, Mode::Original)?;
                let stated = ex.constant / (1.0 - rho);
                let main = bound_report(&model, None, 0.5)?.value("main").unwrap_or(f64::INFINITY);
                for mode in [Mode::Original, Mode::Modified] {
                    let m = model.clone().with_mode(mode);
                    let cfg = RunConfig::new(0, events).with_tracked(Vec::new());
                    let q = run_replications(&m, seeds, &cfg)?.time_avg_q()?;
                    let tag = format!("{}:rho={rho}:n={n}:{}", ex.name, mode_tag(mode));
                    checks.push(IdentityCheck::new(format!("example:{tag}"), CheckKind::UpperBound, q, stated, Z_BOUND));
                    checks.push(IdentityCheck::new(format!("main:{tag}"), CheckKind::UpperBound, q, main, Z_BOUND));
                }
            }
        }
    }
    Ok(VerifyReport::labeled("worked M/GI/n examples", events, seeds.to_vec(), checks))
}

fn mode_tag(mode: Mode) -> &'static str {
    match mode {
        Mode::Original => "original",
        Mode::Modified => "modified",
    }
}
