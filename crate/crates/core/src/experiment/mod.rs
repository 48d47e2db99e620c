//! Config-driven experiments: replication fan-out, (ρ, n) sweeps, the worked
//! examples, and the artifact files `summary.json`, `verify.csv`,
//! `sweep.csv` and `events.csv`.
//!
//! Replication seeds come from `run.seeds` or, failing that, from
//! `split_seed(run.master_seed, r)` for r = 0, 1, …. Replications run in
//! parallel and are merged in seed order, so every artifact is a
//! deterministic function of the configuration.

mod config;
mod reproduce;
mod sweep;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

pub use config::{BoundsBlock, ConfigError, ExperimentConfig, ModelConfig, OutputBlock, RunBlock, SweepConfig, Task};
pub use reproduce::{reproduce_examples, worked_examples, WorkedExample, EXAMPLE_LOADS, EXAMPLE_SERVERS};
pub use sweep::{run_sweep, sweep_cells, sweep_csv, Regime, SweepRow, BOUND_COLUMNS};

use crate::bounds::{bound_report, BoundError};
use crate::loo::{self, LooError};
use crate::sim::{run, run_coupled_dominance_from, run_replications, Mode, RunError, SimOutput};
use crate::stats::StatsError;
use crate::verify::{self, VerifyError, VerifyReport, Z_BOUND};

pub const TOOL_NAME: &str = "ggn-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Loo(#[from] LooError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Init(#[from] crate::sim::InitError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Contents of the artifact files, headers included.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub config_hash: String,
    pub summary: Value,
    pub verify_csv: Option<String>,
    pub sweep_csv: Option<String>,
    pub events_csv: Option<String>,
    /// False when any verification, dominance or bound check failed.
    pub pass: bool,
}

/// First line of every CSV artifact.
pub fn csv_header(config_hash: &str) -> String {
    format!("# {TOOL_NAME} {TOOL_VERSION} config_hash={config_hash}\n")
}

fn tool_json(config_hash: &str) -> Value {
    json!({"name": TOOL_NAME, "version": TOOL_VERSION, "config_hash": config_hash})
}

impl Artifacts {
    fn new(config_hash: String) -> Self {
        Self {
            summary: json!({"tool": tool_json(&config_hash)}),
            config_hash,
            verify_csv: None,
            sweep_csv: None,
            events_csv: None,
            pass: true,
        }
    }

    fn insert(&mut self, key: &str, value: Value) {
        self.summary
            .as_object_mut()
            .expect("summary is an object")
            .insert(key.to_string(), value);
    }

    /// Writes the artifacts into `dir`, returning the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ExperimentError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut files = vec![(
            "summary.json",
            serde_json::to_string_pretty(&self.summary).expect("json") + "\n",
        )];
        for (name, body) in [
            ("verify.csv", &self.verify_csv),
            ("sweep.csv", &self.sweep_csv),
            ("events.csv", &self.events_csv),
        ] {
            if let Some(b) = body {
                files.push((name, b.clone()));
            }
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    seeds: Vec<u64>,
    configured: Option<SimOutput>,
    other: Option<SimOutput>,
}

impl Runner<'_> {
    fn output(&mut self, mode: Mode) -> Result<&SimOutput, ExperimentError> {
        let model = self.cfg.model.build()?.with_mode(mode);
        let same = mode == self.cfg.model.mode;
        let slot = if same { &mut self.configured } else { &mut self.other };
        if slot.is_none() {
            let run_cfg = self.cfg.run.run_config(self.cfg.run.events);
            *slot = Some(run_replications(&model, &self.seeds, &run_cfg)?);
        }
        Ok(slot.as_ref().expect("just filled"))
    }
}

/// Executes `tasks` (the configuration's own list when empty).
pub fn run_experiment(cfg: &ExperimentConfig, tasks: &[Task]) -> Result<Artifacts, ExperimentError> {
    let owned;
    let cfg = if tasks.is_empty() {
        cfg
    } else {
        owned = ExperimentConfig {
            tasks: tasks.to_vec(),
            ..cfg.clone()
        };
        &owned
    };
    cfg.validate()?;
    let tasks = &cfg.tasks[..];
    let hash = cfg.hash();
    let mut art = Artifacts::new(hash.clone());
    let model = cfg.model.build()?;
    art.insert(
        "model",
        json!({
            "label": model.label(),
            "n": model.n(),
            "rho": model.rho(),
            "mode": model.mode,
            "arrival_rate": model.arrival_rate(),
            "service_rates": model.service_rates(),
        }),
    );
    let mut runner = Runner {
        cfg,
        seeds: cfg.run.seed_list(),
        configured: None,
        other: None,
    };
    let mut verify_csv = String::new();

    if tasks.contains(&Task::Simulate) {
        let out = runner.output(cfg.model.mode)?;
        art.insert("simulate", out.summary_json());
        if cfg.run.events_csv {
            let mut c = cfg.run.run_config(cfg.run.log_events).with_log();
            c.seed = runner.seeds[0];
            let log = run(&model, &c)?.log.expect("logging was requested");
            let mut buf = csv_header(&hash).into_bytes();
            log.write_csv(&mut buf).expect("writing to memory");
            art.events_csv = Some(String::from_utf8(buf).expect("utf-8"));
        }
    }
    if tasks.contains(&Task::Bounds) || tasks.contains(&Task::Verify) {
        let report = bound_report(&model, None, cfg.bounds.epsilon)?;
        art.insert("bounds", serde_json::to_value(&report).expect("json"));
    }
    if tasks.contains(&Task::Verify) {
        let out = runner.output(Mode::Modified)?.clone();
        let modified = model.clone().with_mode(Mode::Modified);
        let mut report = verify::verify_output(&out, &modified)?;
        let bounds = bound_report(&model, None, cfg.bounds.epsilon)?;
        let (c, s) = verify::check_bounds_against(out.time_avg_q()?, Mode::Modified, &bounds);
        if model.mode == Mode::Original {
            let q = runner.output(Mode::Original)?.time_avg_q()?;
            let (c2, s2) = verify::check_bounds_against(q, Mode::Original, &bounds);
            report.extend(VerifyReport::labeled("", 0, Vec::new(), c2));
            report.slack.extend(s2);
        }
        report.extend(VerifyReport::labeled("", 0, Vec::new(), c));
        report.slack.extend(s);
        art.pass &= report.pass;
        verify_csv.push_str(&report.to_csv());
        let gammas = loo::estimate_gammas(&out, &modified)?;
        verify_csv.push('\n');
        verify_csv.push_str(&loo::gamma_rows(&gammas, &modified, Z_BOUND));
        art.insert("verify", serde_json::to_value(&report).expect("json"));
    }
    if tasks.contains(&Task::Gammas) {
        let out = runner.output(Mode::Modified)?;
        let modified = model.clone().with_mode(Mode::Modified);
        let gammas = loo::estimate_gammas(out, &modified)?;
        let cells = loo::check_conditional_residuals(out, &modified, 4.0);
        let pairs = out.tracked.iter().flat_map(|&j| {
            (0..model.n())
                .filter(move |&i| i != j)
                .map(move |i| (i, j))
        });
        let uncorrelation: Vec<Value> = pairs
            .map(|(i, j)| match loo::check_uncorrelation(out, &modified, i, j) {
                Ok(e) => json!({"i": i, "j": j, "residual": e}),
                Err(e) => json!({"i": i, "j": j, "skipped": e.to_string()}),
            })
            .collect();
        let gaps: Vec<Value> = loo::palm_residual_gaps(out, &modified)?
            .into_iter()
            .map(|(i, j, e)| json!({"i": i, "j": j, "gap": e}))
            .collect();
        art.pass &= cells.iter().all(|c| c.pass);
        art.insert(
            "gammas",
            json!({
                "estimates": gammas,
                "gamma_s_bounds": (0..model.n()).map(|j| loo::gamma_s_bound(&modified, j)).collect::<Vec<_>>(),
                "neg_gamma_a_bound": loo::neg_gamma_a_bound(&modified),
                "conditional_cells": cells,
                "uncorrelation": uncorrelation,
                "palm_residual_gaps": gaps,
            }),
        );
    }
    if tasks.contains(&Task::Dominance) {
        let out = runner.output(Mode::Modified)?;
        let loo_check = loo::check_dominance(out).ok();
        let original = model.clone().with_mode(Mode::Original);
        let mut coupled = Vec::new();
        for &seed in &runner.seeds {
            coupled.push(run_coupled_dominance_from(&original, seed, cfg.run.events, &cfg.run.init)?);
        }
        let holds = loo_check.as_ref().map_or(true, |d| d.pass) && coupled.iter().all(|r| r.holds());
        art.pass &= holds;
        art.insert("dominance", json!({"loo": loo_check, "coupled": coupled, "pass": holds}));
    }
    if tasks.contains(&Task::Sweep) {
        let rows = run_sweep(cfg)?;
        art.pass &= rows.iter().all(|r| r.pass != Some(false));
        art.sweep_csv = Some(csv_header(&hash) + &sweep_csv(&rows));
        art.insert("sweep", serde_json::to_value(&rows).expect("json"));
    }
    if !verify_csv.is_empty() {
        art.verify_csv = Some(csv_header(&hash) + &verify_csv);
    }
    art.insert("pass", json!(art.pass));
    Ok(art)
}

/// Worked examples as artifacts: checks in `verify.csv`, the report in
/// `summary.json`.
pub fn reproduce_artifacts(seeds: &[u64], events: u64) -> Result<Artifacts, ExperimentError> {
    let hash = {
        use sha2::{Digest, Sha256};
        let d = Sha256::digest(format!("reproduce {seeds:?} {events}").as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect::<String>()
    };
    let report = reproduce_examples(seeds, events)?;
    let mut art = Artifacts::new(hash.clone());
    art.pass = report.pass;
    art.verify_csv = Some(csv_header(&hash) + &report.to_csv());
    art.insert("reproduce", serde_json::to_value(&report).expect("json"));
    art.insert("pass", json!(report.pass));
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    const MM1: &str = r#"
tasks = ["simulate", "bounds"]
[model]
arrival = { family = "exponential", rate = 0.5 }
service = { family = "exponential", rate = 1.0 }
[run]
replications = 2
events = 400000
"#;

    #[test]
    fn minimal_simulate_and_bounds() {
        let art = run_experiment(&parse(MM1), &[]).unwrap();
        let q = art.summary["simulate"]["time_avg"]["Q"]["value"].as_f64().unwrap();
        assert!((q - 1.0).abs() < 0.1, "{q}");
        let main = art.summary["bounds"]["entries"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["name"] == "main")
            .unwrap()["value"]
            .as_f64()
            .unwrap();
        assert_eq!(main, 2.0);
        assert_eq!(art.summary["tool"]["version"], TOOL_VERSION);
        assert!(art.verify_csv.is_none());
    }

    #[test]
    fn verify_on_mm2() {
        let cfg = parse(
            r#"
tasks = ["verify"]
[model]
arrival = { family = "exponential", rate = 1.0 }
service = { family = "exponential", rate = 1.0 }
n = 2
[run]
events = 1000000
"#,
        );
        let art = run_experiment(&cfg, &[]).unwrap();
        assert!(art.pass);
        let csv = art.verify_csv.unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# ggn-lab "));
        assert_eq!(lines.next().unwrap(), "check,kind,lhs,rhs,se,z,pass,skip_reason");
        let checks = csv.lines().take_while(|l| !l.is_empty()).count() - 2;
        assert!(checks >= 8, "{csv}");
        assert!(csv.contains("quantity,j,value,se,ci_lo,ci_hi,bound,pass"));
    }

    #[test]
    fn sweep_columns_and_scaling() {
        let cfg = parse(
            r#"
tasks = ["sweep"]
[model]
arrival = { family = "exponential", rate = 1.0 }
service = { family = "exponential", rate = 1.0 }
[sweep]
rho = [0.5, 0.9, 0.99]
n = [1, 10, 100]
halfin_whitt = [1.0]
nds = [1.0]
simulate = false
"#,
        );
        let art = run_experiment(&cfg, &[]).unwrap();
        let csv = art.sweep_csv.unwrap();
        assert!(csv.lines().nth(1).unwrap().contains("bound_times_one_minus_rho"));
        let rows = run_sweep(&cfg).unwrap();
        for r in &rows {
            assert!((r.bound_times_one_minus_rho - 1.0).abs() < 1e-12, "{r:?}");
        }
        let hw: Vec<&SweepRow> = rows.iter().filter(|r| r.regime == Regime::HalfinWhitt).collect();
        assert_eq!(hw.len(), 2);
        for r in hw {
            assert!((r.bound("mgn").unwrap() - (r.n as f64).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn artifacts_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse(&MM1.replace("events = 400000", "events = 50000\nevents_csv = true\nlog_events = 1000"));
        let a = run_experiment(&cfg, &[]).unwrap();
        let b = run_experiment(&cfg, &[]).unwrap();
        assert_eq!(a, b);
        let files = a.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
        assert!(events.starts_with(&csv_header(&cfg.hash())));
        assert_eq!(events.lines().count(), 1002);
    }

    #[test]
    fn dominance_task() {
        let cfg = parse(
            r#"
tasks = ["dominance"]
[model]
arrival = { family = "exponential", rate = 1.6 }
service = { family = "exponential", rate = 1.0 }
n = 2
[run]
replications = 3
events = 50000
"#,
        );
        let art = run_experiment(&cfg, &[]).unwrap();
        assert!(art.pass);
        assert_eq!(art.summary["dominance"]["coupled"].as_array().unwrap().len(), 3);
    }
}
