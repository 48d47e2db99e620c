use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use super::ExperimentError;
use crate::bounds::bound_report;
use crate::sim::run_replications;
use crate::stats::Estimate;
use crate::verify::Z_BOUND;

/// Bound columns of the sweep table, in order.
pub const BOUND_COLUMNS: [&str; 8] = [
    "kingman",
    "main",
    "simplified",
    "mgn",
    "li_goldberg",
    "hetero_main",
    "hetero_simplified",
    "hetero_mgn",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Grid,
    /// ρ = 1 − c/√n.
    HalfinWhitt,
    /// ρ = 1 − c/n.
    Nds,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Grid => "grid",
            Regime::HalfinWhitt => "HW",
            Regime::Nds => "NDS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regime: Regime,
    /// Scale c of tagged cells.
    pub c: Option<f64>,
    pub rho: f64,
    pub n: usize,
    pub simulated: Option<Estimate>,
    /// Values in [`BOUND_COLUMNS`] order; `None` when not applicable.
    pub bounds: Vec<Option<f64>>,
    /// mgn bound times (1−ρ), or the simplified bound's when mgn does not apply.
    pub bound_times_one_minus_rho: f64,
    /// Smallest asserted bound over simulated E[Q].
    pub slack_ratio: Option<f64>,
    /// Simulated E[Q] + 3 SE below every asserted bound.
    pub pass: Option<bool>,
}

impl SweepRow {
    pub fn bound(&self, name: &str) -> Option<f64> {
        let k = BOUND_COLUMNS.iter().position(|b| *b == name)?;
        self.bounds[k]
    }
}

/// Cells of the sweep: the ρ × n grid followed by tagged cells.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<(Regime, Option<f64>, f64, usize)>, ConfigError> {
    let sw = cfg.sweep.as_ref().ok_or(ConfigError::Invalid {
        field: "sweep".into(),
        message: "missing [sweep] section".into(),
    })?;
    let mut cells = Vec::new();
    for &n in &sw.n {
        for &rho in &sw.rho {
            cells.push((Regime::Grid, None, rho, n));
        }
    }
    for (regime, scales) in [(Regime::HalfinWhitt, &sw.halfin_whitt), (Regime::Nds, &sw.nds)] {
        for &n in &sw.n {
            for &c in scales {
                let gap = match regime {
                    Regime::HalfinWhitt => c / (n as f64).sqrt(),
                    _ => c / n as f64,
                };
                if gap < 1.0 {
                    cells.push((regime, Some(c), 1.0 - gap, n));
                }
            }
        }
    }
    Ok(cells)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let sw = cfg.sweep.clone().unwrap_or_else(|| unreachable!("validated"));
    let seeds = cfg.run.seed_list();
    let events = sw.events.unwrap_or(cfg.run.events);
    let mut rows = Vec::new();
    for (regime, c, rho, n) in sweep_cells(cfg)? {
        let model = cfg.model.sweep_cell(n, rho)?;
        let report = bound_report(&model, None, cfg.bounds.epsilon)?;
        let bounds: Vec<Option<f64>> = BOUND_COLUMNS
            .iter()
            .map(|name| report.get(name).filter(|e| e.applicable).map(|e| e.value))
            .collect();
        let pick = |name: &str| report.get(name).filter(|e| e.applicable).map(|e| e.value);
        let scaled = pick("mgn").or_else(|| pick("simplified")).unwrap_or(f64::INFINITY) * (1.0 - rho);
        let simulated = if sw.simulate {
            let mut run_cfg = cfg.run.run_config(events);
            run_cfg.track_loo = Some(Vec::new());
            Some(run_replications(&model, &seeds, &run_cfg)?.time_avg_q()?)
        } else {
            None
        };
        let asserted: Vec<f64> = report.asserted().filter(|e| e.applicable).map(|e| e.value).collect();
        let tightest = asserted.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(SweepRow {
            regime,
            c,
            rho,
            n,
            simulated,
            bounds,
            bound_times_one_minus_rho: scaled,
            slack_ratio: simulated.map(|q| tightest / q.value),
            pass: simulated.map(|q| asserted.iter().all(|&b| q.value <= b + Z_BOUND * q.std_error)),
        });
    }
    Ok(rows)
}

/// `regime,c,rho,n,sim_mean,sim_se,<bounds...>,bound_times_one_minus_rho,slack_ratio,pass`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut s = format!(
        "regime,c,rho,n,sim_mean,sim_se,{},bound_times_one_minus_rho,slack_ratio,pass\n",
        BOUND_COLUMNS.join(",")
    );
    for r in rows {
        let b: Vec<String> = r.bounds.iter().map(|v| opt(*v)).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.regime.tag(),
            opt(r.c),
            r.rho,
            r.n,
            opt(r.simulated.map(|q| q.value)),
            opt(r.simulated.map(|q| q.std_error)),
            b.join(","),
            r.bound_times_one_minus_rho,
            opt(r.slack_ratio),
            r.pass.map_or(String::new(), |p| p.to_string()),
        ));
    }
    s
}
