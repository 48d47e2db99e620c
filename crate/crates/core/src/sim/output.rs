use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::engine::{EventKind, InitError, Observer, Simulation};
use super::log::{EventLog, LogRecorder};
use super::model::{InitConfig, QueueModel};
use crate::stats::{Estimate, StatsError};

/// Conditioning cell on (Q, Q_loo): 2·1{Q>0} + 1{Q_loo>0}.
#[inline]
pub fn cell_index(q: u64, q_loo: u64) -> usize {
    2 * (q > 0) as usize + (q_loo > 0) as usize
}

pub const CELL_NAMES: [&str; 4] = ["Q=0,Qloo=0", "Q=0,Qloo>0", "Q>0,Qloo=0", "Q>0,Qloo>0"];

/// Weight and sums of R_s[j], R_a in one conditioning cell. For time
/// integrals the weight is time, for Palm sums it is the event count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSums {
    pub weight: f64,
    pub rs: f64,
    pub ra: f64,
}

impl CellSums {
    fn add(&mut self, o: &CellSums) {
        self.weight += o.weight;
        self.rs += o.rs;
        self.ra += o.ra;
    }
}

/// Running Palm sums for one event class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSums {
    pub count: u64,
    pub q_zero: f64,
    pub q: f64,
    pub ra: f64,
    pub q_zero_ra: f64,
    pub rs: Vec<f64>,
    pub q_zero_rs: Vec<f64>,
    /// Per tracked index: Σ 1{Q_loo[j] = 0}.
    pub loo_zero: Vec<f64>,
    /// Per tracked index: Σ 1{Q_loo[j] = 0}·R_s[j].
    pub loo_zero_rs: Vec<f64>,
    pub cells: Vec<[CellSums; 4]>,
}

impl ClassSums {
    fn new(n: usize, tracked: usize) -> Self {
        Self {
            rs: vec![0.0; n],
            q_zero_rs: vec![0.0; n],
            loo_zero: vec![0.0; tracked],
            loo_zero_rs: vec![0.0; tracked],
            cells: vec![[CellSums::default(); 4]; tracked],
            ..Default::default()
        }
    }

    fn add(&mut self, o: &ClassSums) {
        self.count += o.count;
        self.q_zero += o.q_zero;
        self.q += o.q;
        self.ra += o.ra;
        self.q_zero_ra += o.q_zero_ra;
        add_vec(&mut self.rs, &o.rs);
        add_vec(&mut self.q_zero_rs, &o.q_zero_rs);
        add_vec(&mut self.loo_zero, &o.loo_zero);
        add_vec(&mut self.loo_zero_rs, &o.loo_zero_rs);
        for (a, b) in self.cells.iter_mut().zip(&o.cells) {
            for k in 0..4 {
                a[k].add(&b[k]);
            }
        }
    }
}

fn add_vec(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Exact time integrals over one batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSums {
    pub duration: f64,
    pub q: f64,
    pub q_zero: f64,
    pub ra: f64,
    pub rs: Vec<f64>,
    pub cells: Vec<[CellSums; 4]>,
}

impl TimeSums {
    fn new(n: usize, tracked: usize) -> Self {
        Self {
            rs: vec![0.0; n],
            cells: vec![[CellSums::default(); 4]; tracked],
            ..Default::default()
        }
    }

    fn add(&mut self, o: &TimeSums) {
        self.duration += o.duration;
        self.q += o.q;
        self.q_zero += o.q_zero;
        self.ra += o.ra;
        add_vec(&mut self.rs, &o.rs);
        for (a, b) in self.cells.iter_mut().zip(&o.cells) {
            for k in 0..4 {
                a[k].add(&b[k]);
            }
        }
    }
}

/// Sums over one batch of consecutive post-warmup events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub events: u64,
    pub time: TimeSums,
    /// Index 0: arrivals; 1 + i: completions at server i.
    pub classes: Vec<ClassSums>,
}

impl BatchStats {
    fn new(n: usize, tracked: usize) -> Self {
        Self {
            events: 0,
            time: TimeSums::new(n, tracked),
            classes: (0..=n).map(|_| ClassSums::new(n, tracked)).collect(),
        }
    }

    pub fn add(&mut self, o: &BatchStats) {
        self.events += o.events;
        self.time.add(&o.time);
        for (a, b) in self.classes.iter_mut().zip(&o.classes) {
            a.add(b);
        }
    }

    /// Completion events of all servers pooled.
    pub fn completion_count(&self) -> f64 {
        self.classes[1..].iter().map(|c| c.count as f64).sum()
    }

    pub fn pooled<F: Fn(&ClassSums) -> f64>(&self, f: F) -> f64 {
        self.classes[1..].iter().map(f).sum()
    }
}

/// Run parameters. `horizon_events` counts every event, warmup included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon_events: u64,
    /// Defaults to 10% of the horizon.
    pub warmup_events: Option<u64>,
    pub batches: usize,
    /// Defaults to [`QueueModel::default_tracked`].
    pub track_loo: Option<Vec<usize>>,
    pub init: InitConfig,
    pub record_log: bool,
}

impl RunConfig {
    pub fn new(seed: u64, horizon_events: u64) -> Self {
        Self {
            seed,
            horizon_events,
            warmup_events: None,
            batches: 32,
            track_loo: None,
            init: InitConfig::default(),
            record_log: false,
        }
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_events.unwrap_or(self.horizon_events / 10)
    }

    pub fn with_batches(mut self, b: usize) -> Self {
        self.batches = b;
        self
    }

    pub fn with_warmup(mut self, w: u64) -> Self {
        self.warmup_events = Some(w);
        self
    }

    pub fn with_tracked(mut self, tracked: Vec<usize>) -> Self {
        self.track_loo = Some(tracked);
        self
    }

    pub fn with_init(mut self, init: InitConfig) -> Self {
        self.init = init;
        self
    }

    pub fn with_log(mut self) -> Self {
        self.record_log = true;
        self
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RunError {
    #[error("horizon_events ({horizon}) must exceed warmup_events ({warmup})")]
    Horizon { horizon: u64, warmup: u64 },
    #[error("batch count must be positive and at most the post-warmup event count")]
    Batches,
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Init(#[from] InitError),
}

/// Result of one run (or a merge of several).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub horizon_events: u64,
    pub warmup_events: u64,
    pub tracked: Vec<usize>,
    pub batches: Vec<BatchStats>,
    /// min over event boundaries and tracked j of Q_loo[j] − Q.
    pub loo_min_margin: Option<i64>,
    pub loo_violations: u64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub log: Option<EventLog>,
}

struct Accumulator {
    batches: Vec<BatchStats>,
    /// Event index at which each batch ends (exclusive).
    ends: Vec<u64>,
    current: usize,
    warmup: u64,
    seen: u64,
    tracked: Vec<usize>,
    min_margin: Option<i64>,
    violations: u64,
}

impl Accumulator {
    #[inline]
    fn active(&self) -> bool {
        self.seen >= self.warmup && self.current < self.batches.len()
    }

    fn check_margin(&mut self, sim: &Simulation) {
        let q = sim.q() as i64;
        for &x in sim.q_loo() {
            let m = x as i64 - q;
            if m < 0 {
                self.violations += 1;
            }
            self.min_margin = Some(self.min_margin.map_or(m, |old| old.min(m)));
        }
    }
}

impl Observer for Accumulator {
    fn on_segment(&mut self, sim: &Simulation, until: f64) {
        if !self.active() {
            return;
        }
        let t0 = sim.clock();
        let dt = until - t0;
        if dt <= 0.0 {
            return;
        }
        let mid = 0.5 * (t0 + until);
        let b = &mut self.batches[self.current].time;
        let q = sim.q();
        b.duration += dt;
        b.q += dt * q as f64;
        if q == 0 {
            b.q_zero += dt;
        }
        let ra = dt * (sim.next_arrival() - mid);
        b.ra += ra;
        for i in 0..b.rs.len() {
            let next = sim.next_completion(i);
            if next.is_finite() {
                b.rs[i] += dt * (next - mid);
            }
        }
        for (k, &j) in self.tracked.iter().enumerate() {
            let c = &mut b.cells[k][cell_index(q, sim.q_loo()[k])];
            c.weight += dt;
            c.rs += dt * (sim.next_completion(j) - mid);
            c.ra += ra;
        }
    }

    fn on_event(&mut self, sim: &Simulation, kind: EventKind) {
        if self.active() {
            let batch = &mut self.batches[self.current];
            batch.events += 1;
            let c = &mut batch.classes[kind.class()];
            let q = sim.q();
            let idle = q == 0;
            let ra = sim.ra();
            c.count += 1;
            c.q += q as f64;
            c.ra += ra;
            if idle {
                c.q_zero += 1.0;
                c.q_zero_ra += ra;
            }
            for i in 0..c.rs.len() {
                let r = sim.rs(i);
                c.rs[i] += r;
                if idle {
                    c.q_zero_rs[i] += r;
                }
            }
            for (k, &j) in self.tracked.iter().enumerate() {
                let ql = sim.q_loo()[k];
                let r = sim.rs(j);
                if ql == 0 {
                    c.loo_zero[k] += 1.0;
                    c.loo_zero_rs[k] += r;
                }
                let cell = &mut c.cells[k][cell_index(q, ql)];
                cell.weight += 1.0;
                cell.rs += r;
                cell.ra += ra;
            }
        }
        self.seen += 1;
        if self.seen >= self.warmup {
            while self.current < self.ends.len() && self.seen >= self.ends[self.current] {
                self.current += 1;
            }
        }
    }
}

struct Both<'a, A, B>(&'a mut A, &'a mut B);

impl<A: Observer, B: Observer> Observer for Both<'_, A, B> {
    fn on_segment(&mut self, sim: &Simulation, until: f64) {
        self.0.on_segment(sim, until);
        self.1.on_segment(sim, until);
    }
    fn on_event(&mut self, sim: &Simulation, kind: EventKind) {
        self.0.on_event(sim, kind);
        self.1.on_event(sim, kind);
    }
    fn on_service_start(&mut self, time: f64, server: usize, duration: f64, real: bool) {
        self.0.on_service_start(time, server, duration, real);
        self.1.on_service_start(time, server, duration, real);
    }
}

/// Simulates `horizon_events` events and returns batch-means statistics over
/// the post-warmup part.
pub fn run(model: &QueueModel, cfg: &RunConfig) -> Result<SimOutput, RunError> {
    let warmup = cfg.warmup();
    if cfg.horizon_events <= warmup {
        return Err(RunError::Horizon {
            horizon: cfg.horizon_events,
            warmup,
        });
    }
    let post = cfg.horizon_events - warmup;
    if cfg.batches == 0 || cfg.batches as u64 > post {
        return Err(RunError::Batches);
    }
    let tracked = cfg.track_loo.clone().unwrap_or_else(|| model.default_tracked());
    let mut warnings = Vec::new();
    if model.rho() >= 1.0 {
        warnings.push(format!("load {:.6} is not below 1; no steady state", model.rho()));
    }
    for &j in &tracked {
        if model.rho_minus(j) >= 1.0 {
            warnings.push(format!("leave-one-out system {j} is unstable (rho_-j = {:.6})", model.rho_minus(j)));
        }
    }
    let mut sim = Simulation::new(model, cfg.seed, &cfg.init, &tracked)?;
    let n = model.n();
    let b = cfg.batches as u64;
    let mut acc = Accumulator {
        batches: (0..cfg.batches).map(|_| BatchStats::new(n, tracked.len())).collect(),
        ends: (1..=b).map(|k| warmup + k * post / b).collect(),
        current: 0,
        warmup,
        seen: 0,
        tracked: tracked.clone(),
        min_margin: None,
        violations: 0,
    };
    let mut log = cfg.record_log.then(|| LogRecorder::new(n, sim.q()));
    if !tracked.is_empty() {
        acc.check_margin(&sim);
    }
    while sim.events() < cfg.horizon_events {
        match log.as_mut() {
            Some(l) => sim.step(&mut Both(&mut acc, l)),
            None => sim.step(&mut acc),
        };
        if !tracked.is_empty() {
            acc.check_margin(&sim);
        }
    }
    Ok(SimOutput {
        n,
        seeds: vec![cfg.seed],
        horizon_events: cfg.horizon_events,
        warmup_events: warmup,
        tracked,
        batches: acc.batches,
        loo_min_margin: acc.min_margin,
        loo_violations: acc.violations,
        warnings,
        log: log.map(|l| l.finish(sim.q())),
    })
}

/// Runs one replication per seed (in parallel) and concatenates their
/// batches in seed order, so the result does not depend on scheduling.
pub fn run_replications(model: &QueueModel, seeds: &[u64], cfg: &RunConfig) -> Result<SimOutput, RunError> {
    use rayon::prelude::*;
    let outs: Vec<SimOutput> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            run(model, &c)
        })
        .collect::<Result<_, _>>()?;
    let mut it = outs.into_iter();
    let mut first = it.next().ok_or(RunError::NoSeeds)?;
    for o in it {
        first.merge(o);
    }
    Ok(first)
}

impl SimOutput {
    /// Concatenates batches of an independent replication of the same model.
    pub fn merge(&mut self, other: SimOutput) {
        assert_eq!(self.n, other.n, "merging outputs of different models");
        assert_eq!(self.tracked, other.tracked, "merging outputs with different tracking");
        self.seeds.extend(other.seeds);
        self.batches.extend(other.batches);
        self.loo_min_margin = match (self.loo_min_margin, other.loo_min_margin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.loo_violations += other.loo_violations;
        self.warnings.extend(other.warnings);
        self.log = None;
    }

    pub fn totals(&self) -> BatchStats {
        let mut t = BatchStats::new(self.n, self.tracked.len());
        for b in &self.batches {
            t.add(b);
        }
        t
    }

    /// Post-warmup simulated time.
    pub fn horizon_time(&self) -> f64 {
        self.batches.iter().map(|b| b.time.duration).sum()
    }

    pub fn event_counts(&self) -> Vec<u64> {
        self.totals().classes.iter().map(|c| c.count).collect()
    }

    /// Estimate from one number per batch.
    pub fn estimate<F: Fn(&BatchStats) -> f64>(&self, f: F) -> Result<Estimate, StatsError> {
        let v: Vec<f64> = self.batches.iter().map(f).collect();
        Estimate::from_batches(&v)
    }

    pub fn time_avg_q(&self) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.time.q / b.time.duration)
    }

    pub fn time_avg_idle(&self) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.time.q_zero / b.time.duration)
    }

    pub fn time_avg_ra(&self) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.time.ra / b.time.duration)
    }

    pub fn time_avg_rs(&self, i: usize) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.time.rs[i] / b.time.duration)
    }

    /// Palm average of a class statistic.
    pub fn palm<F: Fn(&ClassSums) -> f64>(&self, class: usize, f: F) -> Result<Estimate, StatsError> {
        self.estimate(|b| {
            let c = &b.classes[class];
            f(c) / c.count as f64
        })
    }

    /// Average over all completion events pooled.
    pub fn palm_completions<F: Fn(&ClassSums) -> f64>(&self, f: F) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.pooled(&f) / b.completion_count())
    }

    /// Event rate of a class per unit time.
    pub fn event_rate(&self, class: usize) -> Result<Estimate, StatsError> {
        self.estimate(|b| b.classes[class].count as f64 / b.time.duration)
    }

    /// JSON summary with keys `time_avg`, `palm`, `event_counts`, `seed`,
    /// `warmup_events`.
    pub fn summary_json(&self) -> Value {
        let est = |r: Result<Estimate, StatsError>| match r {
            Ok(e) => json!({"value": e.value, "se": e.std_error, "ci95": [e.ci95.0, e.ci95.1]}),
            Err(e) => json!({"error": e.to_string()}),
        };
        let mut palm = serde_json::Map::new();
        for class in 0..=self.n {
            let name = if class == 0 {
                "arrival".to_string()
            } else {
                format!("completion_{}", class - 1)
            };
            let rs: Vec<Value> = (0..self.n).map(|j| est(self.palm(class, |c| c.rs[j]))).collect();
            palm.insert(
                name,
                json!({
                    "count": self.totals().classes[class].count,
                    "Q": est(self.palm(class, |c| c.q)),
                    "P_Q0": est(self.palm(class, |c| c.q_zero)),
                    "R_a": est(self.palm(class, |c| c.ra)),
                    "R_s": rs,
                }),
            );
        }
        let counts = self.event_counts();
        let rs: Vec<Value> = (0..self.n).map(|i| est(self.time_avg_rs(i))).collect();
        json!({
            "seed": if self.seeds.len() == 1 { json!(self.seeds[0]) } else { json!(self.seeds) },
            "horizon_events": self.horizon_events,
            "warmup_events": self.warmup_events,
            "horizon_time": self.horizon_time(),
            "batches": self.batches.len(),
            "event_counts": {
                "arrival": counts[0],
                "completion": &counts[1..],
            },
            "time_avg": {
                "Q": est(self.time_avg_q()),
                "P_Q0": est(self.time_avg_idle()),
                "R_a": est(self.time_avg_ra()),
                "R_s": rs,
            },
            "palm": palm,
            "loo": {
                "tracked": self.tracked,
                "min_margin": self.loo_min_margin,
                "violations": self.loo_violations,
            },
            "warnings": self.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec;
    use crate::sim::model::Mode;

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    #[test]
    fn batches_partition_post_warmup_events() {
        let m = QueueModel::poisson(exp(1.0), 2, 0.6, Mode::Modified).unwrap();
        let out = run(&m, &RunConfig::new(3, 10_007).with_batches(10)).unwrap();
        assert_eq!(out.warmup_events, 1_000);
        let total: u64 = out.batches.iter().map(|b| b.events).sum();
        assert!((9_007..=9_010).contains(&total), "{total}");
        let counts: u64 = out.event_counts().iter().sum();
        assert_eq!(counts, total);
    }

    #[test]
    fn rejects_bad_horizon() {
        let m = QueueModel::poisson(exp(1.0), 1, 0.5, Mode::Modified).unwrap();
        assert!(run(&m, &RunConfig::new(1, 100).with_warmup(100)).is_err());
        assert!(run(&m, &RunConfig::new(1, 100).with_batches(0)).is_err());
    }

    #[test]
    fn completion_class_sees_zero_own_residual() {
        let m = QueueModel::poisson(DistributionSpec::gamma(0.5, 2.0).unwrap(), 3, 0.7, Mode::Modified).unwrap();
        let out = run(&m, &RunConfig::new(5, 50_000)).unwrap();
        let t = out.totals();
        for i in 0..3 {
            assert_eq!(t.classes[1 + i].rs[i], 0.0);
        }
        assert_eq!(t.classes[0].ra, 0.0);
    }

    #[test]
    fn merge_concatenates() {
        let m = QueueModel::poisson(exp(1.0), 2, 0.5, Mode::Modified).unwrap();
        let mut a = run(&m, &RunConfig::new(1, 20_000).with_batches(8)).unwrap();
        let b = run(&m, &RunConfig::new(2, 20_000).with_batches(8)).unwrap();
        let before = a.totals().events + b.totals().events;
        a.merge(b);
        assert_eq!(a.batches.len(), 16);
        assert_eq!(a.totals().events, before);
        assert_eq!(a.seeds, vec![1, 2]);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let m = QueueModel::poisson(DistributionSpec::erlang(2, 1.0).unwrap(), 3, 0.8, Mode::Modified).unwrap();
        let a = run(&m, &RunConfig::new(77, 30_000)).unwrap();
        let b = run(&m, &RunConfig::new(77, 30_000)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run(&m, &RunConfig::new(78, 30_000)).unwrap();
        assert_ne!(a.totals(), c.totals());
    }

    #[test]
    fn summary_has_contract_keys() {
        let m = QueueModel::poisson(exp(1.0), 2, 0.5, Mode::Modified).unwrap();
        let v = run(&m, &RunConfig::new(1, 20_000)).unwrap().summary_json();
        for k in ["time_avg", "palm", "event_counts", "seed", "warmup_events"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
