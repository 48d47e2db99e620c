use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dist::DistributionSpec;
use crate::rng::split_seed;
use crate::sim::{InitConfig, Mode, QueueModel, Routing, RunConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simulate,
    Bounds,
    Verify,
    Gammas,
    Dominance,
    Sweep,
}

/// `[model]`: one arrival law and either `service` with `n` servers or an
/// explicit `services` list. `rho`, when given, rescales the arrival law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arrival: DistributionSpec,
    #[serde(default)]
    pub service: Option<DistributionSpec>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub services: Option<Vec<DistributionSpec>>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub routing: Routing,
}

impl ModelConfig {
    pub fn build(&self) -> Result<QueueModel, ConfigError> {
        let services = match (&self.service, &self.services) {
            (Some(s), None) => vec![s.clone(); self.n.unwrap_or(1)],
            (None, Some(list)) => {
                if self.n.is_some_and(|n| n != list.len()) {
                    return Err(invalid("model.n", "disagrees with the length of model.services"));
                }
                list.clone()
            }
            _ => return Err(invalid("model.service", "give exactly one of `service` and `services`")),
        };
        let mut m = QueueModel::new(self.arrival.clone(), services, self.mode)
            .map_err(|e| invalid("model.services", e.to_string()))?
            .with_routing(self.routing);
        if let Some(rho) = self.rho {
            m = m.with_load(rho).map_err(|e| invalid("model.rho", e.to_string()))?;
        }
        Ok(m)
    }

    /// The same service law on `n` servers at load `rho`.
    pub fn sweep_cell(&self, n: usize, rho: f64) -> Result<QueueModel, ConfigError> {
        let s = self
            .service
            .clone()
            .ok_or_else(|| invalid("model.service", "a sweep needs a single `service` law"))?;
        QueueModel::homogeneous(self.arrival.clone(), s, n, self.mode)
            .and_then(|m| m.with_load(rho))
            .map(|m| m.with_routing(self.routing))
            .map_err(|e| invalid("sweep", e.to_string()))
    }
}

fn default_master_seed() -> u64 {
    1
}
fn default_replications() -> usize {
    1
}
fn default_events() -> u64 {
    1_000_000
}
fn default_batches() -> usize {
    32
}
fn default_log_events() -> u64 {
    100_000
}

/// `[run]`: replication seeds (explicit `seeds`, or `replications` seeds
/// split from `master_seed`), horizon and batching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_events")]
    pub events: u64,
    #[serde(default)]
    pub warmup: Option<u64>,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub track: Option<Vec<usize>>,
    /// Write `events.csv` from a separate logged run of the first seed.
    #[serde(default)]
    pub events_csv: bool,
    #[serde(default = "default_log_events")]
    pub log_events: u64,
}

impl Default for RunBlock {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl RunBlock {
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replications as u64).map(|r| split_seed(self.master_seed, r)).collect(),
        }
    }

    pub fn run_config(&self, events: u64) -> RunConfig {
        RunConfig {
            seed: 0,
            horizon_events: events,
            warmup_events: self.warmup,
            batches: self.batches,
            track_loo: self.track.clone(),
            init: self.init.clone(),
            record_log: false,
        }
    }
}

fn default_true() -> bool {
    true
}

/// `[sweep]`: the (ρ, n) grid plus Halfin–Whitt cells ρ = 1 − c/√n and
/// nondegenerate-slowdown cells ρ = 1 − c/n for each listed c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub rho: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default)]
    pub halfin_whitt: Vec<f64>,
    #[serde(default)]
    pub nds: Vec<f64>,
    #[serde(default = "default_true")]
    pub simulate: bool,
    /// Events per replication in each cell (default: `run.events`).
    #[serde(default)]
    pub events: Option<u64>,
}

fn default_epsilon() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    /// ε of the moment-based comparison bound.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        Self { epsilon: 0.5 }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Simulate]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bounds: BoundsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = self.model.build()?;
        if !(model.rho() > 0.0) {
            return Err(invalid("model.rho", "load must be positive"));
        }
        let seeds = self.run.seed_list();
        if seeds.is_empty() {
            return Err(invalid("run.seeds", "at least one replication is needed"));
        }
        if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
            return Err(invalid("run.seeds", "seeds must be distinct"));
        }
        if self.run.batches < crate::stats::MIN_BATCHES {
            return Err(invalid("run.batches", format!("need at least {}", crate::stats::MIN_BATCHES)));
        }
        if let Some(track) = &self.run.track {
            if let Some(&j) = track.iter().find(|&&j| j >= model.n()) {
                return Err(invalid("run.track", format!("server {j} does not exist")));
            }
        }
        if !(self.bounds.epsilon > 0.0 && self.bounds.epsilon <= 0.5) {
            return Err(invalid("bounds.epsilon", "must lie in (0, 0.5]"));
        }
        if self.tasks.contains(&Task::Sweep) {
            let sw = self
                .sweep
                .as_ref()
                .ok_or_else(|| invalid("sweep", "task `sweep` needs a [sweep] section"))?;
            self.model.sweep_cell(1, 0.5)?;
            if sw.n.is_empty() || sw.n.contains(&0) {
                return Err(invalid("sweep.n", "grid must be nonempty with positive entries"));
            }
            if sw.rho.is_empty() && sw.halfin_whitt.is_empty() && sw.nds.is_empty() {
                return Err(invalid("sweep.rho", "grid must be nonempty"));
            }
            if let Some(r) = sw.rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
                return Err(invalid("sweep.rho", format!("{r} is not in (0, 1)")));
            }
            if let Some(c) = sw.halfin_whitt.iter().chain(&sw.nds).find(|c| !(**c > 0.0)) {
                return Err(invalid("sweep.halfin_whitt", format!("scale {c} must be positive")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration (overrides included) as JSON,
    /// first 16 hex digits.
    /// Hash of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output = OutputBlock::default();
        let json = serde_json::to_string(&cfg).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
tasks = ["simulate", "bounds"]

[model]
arrival = { family = "exponential", rate = 0.5 }
service = { family = "exponential", rate = 1.0 }
n = 1
"#;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let m = c.model.build().unwrap();
        assert!((m.rho() - 0.5).abs() < 1e-12);
        assert_eq!(c.run.events, 1_000_000);
        assert_eq!(c.run.seed_list(), vec![split_seed(1, 0)]);
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn malformed_family_names_the_field() {
        let bad = MINIMAL.replace("family = \"exponential\", rate = 1.0", "family = \"exponentail\", rate = 1.0");
        let err = ExperimentConfig::parse(&bad).unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, ConfigError::Parse { line: 6, .. }), "{text}");
        assert!(text.contains("exponentail"), "{text}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let bad = MINIMAL.replace("n = 1", "n = 1\nservers = 3");
        let text = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(text.contains("servers"), "{text}");
    }

    #[test]
    fn validation_errors_name_fields() {
        let cases = [
            (format!("{MINIMAL}\n[run]\nseeds = [1, 1]\n"), "run.seeds"),
            (format!("{MINIMAL}\n[run]\nbatches = 4\n"), "run.batches"),
            (format!("{MINIMAL}\n[run]\ntrack = [3]\n"), "run.track"),
            (MINIMAL.replace("tasks = [\"simulate\", \"bounds\"]", "tasks = [\"sweep\"]"), "sweep"),
            (
                format!("{}\n[sweep]\nrho = [1.5]\nn = [1]\n", MINIMAL.replace("\"bounds\"", "\"sweep\"")),
                "sweep.rho",
            ),
        ];
        for (text, field) in cases {
            match ExperimentConfig::parse(&text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn rho_rescales_and_services_list() {
        let text = r#"
[model]
arrival = { family = "exponential", rate = 1.0 }
services = [{ family = "exponential", rate = 1.0 }, { family = "deterministic", value = 0.5 }]
rho = 0.6
"#;
        let m = ExperimentConfig::parse(text).unwrap().model.build().unwrap();
        assert!((m.rho() - 0.6).abs() < 1e-12);
        assert_eq!(m.n(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.events += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
