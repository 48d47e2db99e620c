use std::io::{self, Write};

use super::engine::{EventKind, EventRecord, Observer, SimState, Simulation};

/// Compact columnar event log. Residuals are stored flat, `n` per event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub n: usize,
    pub q0: u64,
    pub times: Vec<f64>,
    pub kinds: Vec<EventKind>,
    pub q_pre: Vec<u64>,
    pub ra_pre: Vec<f64>,
    pub rs_pre: Vec<f64>,
    /// Q after the last logged event.
    pub final_q: u64,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn record(&self, k: usize) -> EventRecord {
        EventRecord {
            time: self.times[k],
            kind: self.kinds[k],
            pre: SimState {
                clock: self.times[k],
                ra: self.ra_pre[k],
                rs: self.rs_pre[k * self.n..(k + 1) * self.n].to_vec(),
                q: self.q_pre[k],
                q_loo: Vec::new(),
                busy: Vec::new(),
            },
        }
    }

    /// Simulated Q right after event k.
    pub fn q_after(&self, k: usize) -> u64 {
        if k + 1 < self.len() {
            self.q_pre[k + 1]
        } else {
            self.final_q
        }
    }

    /// `time,kind,server,Q_pre,Ra_pre,Rs_pre_0..` with one residual column per server.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time,kind,server,Q_pre,Ra_pre")?;
        for i in 0..self.n {
            write!(w, ",Rs_pre_{i}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            let (kind, server) = match self.kinds[k] {
                EventKind::Arrival => ("arrival", String::new()),
                EventKind::Completion(i) => ("completion", i.to_string()),
            };
            write!(w, "{},{kind},{server},{},{}", self.times[k], self.q_pre[k], self.ra_pre[k])?;
            for r in &self.rs_pre[k * self.n..(k + 1) * self.n] {
                write!(w, ",{r}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub(crate) struct LogRecorder(EventLog);

impl LogRecorder {
    pub fn new(n: usize, q0: u64) -> Self {
        Self(EventLog {
            n,
            q0,
            ..Default::default()
        })
    }

    pub fn finish(mut self, final_q: u64) -> EventLog {
        self.0.final_q = final_q;
        self.0
    }
}

impl Observer for LogRecorder {
    fn on_event(&mut self, sim: &Simulation, kind: EventKind) {
        let l = &mut self.0;
        l.times.push(sim.clock());
        l.kinds.push(kind);
        l.q_pre.push(sim.q());
        l.ra_pre.push(sim.ra());
        for i in 0..l.n {
            l.rs_pre.push(sim.rs(i));
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("log inconsistent at event {index}: formula gives {oracle}, simulation had {simulated}")]
    LogInconsistent { index: usize, oracle: u64, simulated: u64 },
}

/// Queue length after each event of a modified-mode log, recomputed from the
/// arrival and completion counts alone:
///
/// Q(t) = max{ Q(0) + X(t), sup_{t' ≤ t} (X(t) − X(t')) },
///
/// where X counts arrivals minus completions (virtual ones included). The
/// supremum is a running minimum of X.
pub fn queue_length_formula(q0: u64, kinds: &[EventKind]) -> Vec<u64> {
    let mut x: i64 = 0;
    let mut min_x: i64 = 0;
    kinds
        .iter()
        .map(|k| {
            x += match k {
                EventKind::Arrival => 1,
                EventKind::Completion(_) => -1,
            };
            min_x = min_x.min(x);
            (q0 as i64 + x).max(x - min_x) as u64
        })
        .collect()
}

/// Checks the formula against the simulated trajectory at every event.
pub fn queue_length_oracle(log: &EventLog) -> Result<Vec<u64>, OracleError> {
    let q = queue_length_formula(log.q0, &log.kinds);
    for (k, &oracle) in q.iter().enumerate() {
        let simulated = log.q_after(k);
        if oracle != simulated {
            return Err(OracleError::LogInconsistent { index: k, oracle, simulated });
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec;
    use crate::sim::model::{InitConfig, Mode, QueueModel};
    use crate::sim::output::{run, RunConfig};

    #[test]
    fn empty_log() {
        assert!(queue_length_formula(0, &[]).is_empty());
        let log = EventLog::default();
        assert_eq!(queue_length_oracle(&log).unwrap(), Vec::<u64>::new());
    }

    #[test]
    fn hand_evaluated_log() {
        let kinds = [EventKind::Arrival, EventKind::Arrival, EventKind::Completion(0)];
        assert_eq!(queue_length_formula(0, &kinds), vec![1, 2, 1]);
        // completions on an empty queue are absorbed
        let kinds = [EventKind::Completion(0), EventKind::Arrival, EventKind::Completion(1), EventKind::Completion(0)];
        assert_eq!(queue_length_formula(1, &kinds), vec![0, 1, 0, 0]);
    }

    #[test]
    fn oracle_matches_simulation() {
        let m = QueueModel::poisson(DistributionSpec::exponential(1.0).unwrap(), 2, 0.8, Mode::Modified).unwrap();
        let out = run(&m, &RunConfig::new(12, 100_000).with_log().with_init(InitConfig::fresh(3))).unwrap();
        let log = out.log.unwrap();
        assert_eq!(log.len(), 100_000);
        assert!(queue_length_oracle(&log).is_ok());
    }

    #[test]
    fn tampered_log_is_caught() {
        let m = QueueModel::poisson(DistributionSpec::exponential(1.0).unwrap(), 2, 0.8, Mode::Modified).unwrap();
        let mut log = run(&m, &RunConfig::new(1, 1_000).with_log()).unwrap().log.unwrap();
        log.q_pre[500] += 1;
        assert!(matches!(queue_length_oracle(&log), Err(OracleError::LogInconsistent { index: 499, .. })));
    }

    #[test]
    fn csv_header() {
        let m = QueueModel::poisson(DistributionSpec::exponential(1.0).unwrap(), 2, 0.5, Mode::Modified).unwrap();
        let log = run(&m, &RunConfig::new(1, 100).with_log()).unwrap().log.unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,kind,server,Q_pre,Ra_pre,Rs_pre_0,Rs_pre_1\n"));
        assert_eq!(text.lines().count(), 101);
    }
}
