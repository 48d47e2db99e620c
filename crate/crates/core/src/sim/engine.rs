use serde::{Deserialize, Serialize};

use super::model::{InitConfig, Mode, QueueModel, ResidualInit, Routing};
use crate::rng::RandomStream;

/// Stream layout under one master seed.
pub(crate) const ARRIVAL_STREAM: u64 = 0;
pub(crate) fn service_stream(i: usize) -> u64 {
    1 + i as u64
}
pub(crate) fn routing_stream(n: usize) -> u64 {
    1 + n as u64
}
pub(crate) fn init_stream(n: usize) -> u64 {
    2 + n as u64
}

/// Events closer than this to the earliest pending one fire together.
pub(crate) fn tie_tolerance(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Arrival,
    Completion(usize),
}

impl EventKind {
    /// 0 for arrivals, 1 + i for completions at server i.
    pub fn class(self) -> usize {
        match self {
            EventKind::Arrival => 0,
            EventKind::Completion(i) => 1 + i,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InitError {
    #[error("explicit residuals list {got} entries for {n} servers")]
    CountMismatch { got: usize, n: usize },
    #[error("residual {name} = {value} is not allowed")]
    BadResidual { name: String, value: f64 },
    #[error("{0}")]
    Inconsistent(String),
}

/// Observable state between events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub clock: f64,
    pub ra: f64,
    /// Residual service times; 0 for idle servers in original mode.
    pub rs: Vec<f64>,
    pub q: u64,
    /// Leave-one-out queue lengths, one per tracked server.
    pub q_loo: Vec<u64>,
    pub busy: Vec<bool>,
}

/// Pre-event snapshot plus the event that fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub pre: SimState,
}

/// Hooks called by [`Simulation::step`].
pub trait Observer {
    /// The state is constant on `[sim.clock(), until)` except for residuals
    /// falling at unit rate. Called before the clock moves.
    fn on_segment(&mut self, _sim: &Simulation, _until: f64) {}
    /// Called with the pre-event state; the firing residual is exactly 0.
    fn on_event(&mut self, _sim: &Simulation, _kind: EventKind) {}
    /// A job (real or virtual) of length `duration` starts at `server`.
    fn on_service_start(&mut self, _time: f64, _server: usize, _duration: f64, _real: bool) {}
}

impl Observer for () {}

/// Collects every record; for tests and small runs.
#[derive(Debug, Default)]
pub struct RecordAll(pub Vec<EventRecord>);

impl Observer for RecordAll {
    fn on_event(&mut self, sim: &Simulation, kind: EventKind) {
        self.0.push(EventRecord {
            time: sim.clock(),
            kind,
            pre: sim.state(),
        });
    }
}

/// Event-driven GI/GI/n state machine.
#[derive(Debug, Clone)]
pub struct Simulation {
    model: QueueModel,
    clock: f64,
    next_arrival: f64,
    /// Absolute completion epochs; `INFINITY` marks an idle server.
    next_completion: Vec<f64>,
    q: u64,
    tracked: Vec<usize>,
    q_loo: Vec<u64>,
    arrivals: RandomStream,
    services: Vec<RandomStream>,
    routing: RandomStream,
    mu: Vec<f64>,
    events: u64,
    firing: Vec<usize>,
    idle: Vec<usize>,
}

impl Simulation {
    pub fn new(model: &QueueModel, seed: u64, init: &InitConfig, tracked: &[usize]) -> Result<Self, InitError> {
        let n = model.n();
        if let Some(&j) = tracked.iter().find(|&&j| j >= n) {
            return Err(InitError::Inconsistent(format!("tracked server {j} out of range")));
        }
        if model.mode == Mode::Original && !tracked.is_empty() {
            return Err(InitError::Inconsistent("leave-one-out tracking needs modified mode".into()));
        }
        let mut init_rng = RandomStream::substream(seed, init_stream(n));
        let mut sim = Self {
            model: model.clone(),
            clock: 0.0,
            next_arrival: 0.0,
            next_completion: vec![f64::INFINITY; n],
            q: init.q0,
            tracked: tracked.to_vec(),
            q_loo: vec![init.q0; tracked.len()],
            arrivals: RandomStream::substream(seed, ARRIVAL_STREAM),
            services: (0..n).map(|i| RandomStream::substream(seed, service_stream(i))).collect(),
            routing: RandomStream::substream(seed, routing_stream(n)),
            mu: model.service_rates(),
            events: 0,
            firing: Vec::with_capacity(n),
            idle: Vec::with_capacity(n),
        };
        let busy: Vec<bool> = match (&init.residuals, model.mode) {
            (ResidualInit::Explicit { rs, .. }, Mode::Original) => {
                if rs.len() != n {
                    return Err(InitError::CountMismatch { got: rs.len(), n });
                }
                rs.iter().map(|&r| r > 0.0).collect()
            }
            (_, Mode::Modified) => vec![true; n],
            (_, Mode::Original) => match &init.busy {
                Some(b) if b.len() != n => return Err(InitError::CountMismatch { got: b.len(), n }),
                Some(b) => b.clone(),
                None => vec![init.q0 > 0; n],
            },
        };
        if model.mode == Mode::Original && init.q0 > 0 && busy.iter().any(|b| !b) {
            return Err(InitError::Inconsistent("a waiting job with an idle server".into()));
        }
        match &init.residuals {
            ResidualInit::Explicit { ra, rs } => {
                if rs.len() != n {
                    return Err(InitError::CountMismatch { got: rs.len(), n });
                }
                if !(ra.is_finite() && *ra >= 0.0) {
                    return Err(InitError::BadResidual { name: "R_a".into(), value: *ra });
                }
                for (i, &r) in rs.iter().enumerate() {
                    let ok = r.is_finite() && if model.mode == Mode::Modified { r > 0.0 } else { r >= 0.0 };
                    if !ok {
                        return Err(InitError::BadResidual { name: format!("R_s[{i}]"), value: r });
                    }
                }
                sim.next_arrival = *ra;
                for i in 0..n {
                    if busy[i] {
                        sim.next_completion[i] = rs[i];
                    }
                }
            }
            ResidualInit::FreshDraws => {
                sim.next_arrival = model.arrival.sample(&mut init_rng);
                for i in 0..n {
                    let r = model.services[i].sample(&mut init_rng);
                    if busy[i] {
                        sim.next_completion[i] = r;
                    }
                }
            }
            ResidualInit::EquilibriumDraws => {
                sim.next_arrival = model.arrival.equilibrium_sample(&mut init_rng);
                for i in 0..n {
                    let r = model.services[i].equilibrium_sample(&mut init_rng);
                    if busy[i] {
                        sim.next_completion[i] = r;
                    }
                }
            }
        }
        Ok(sim)
    }

    pub fn model(&self) -> &QueueModel {
        &self.model
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn tracked(&self) -> &[usize] {
        &self.tracked
    }

    pub fn q_loo(&self) -> &[u64] {
        &self.q_loo
    }

    #[inline]
    pub fn ra(&self) -> f64 {
        self.next_arrival - self.clock
    }

    #[inline]
    pub fn rs(&self, i: usize) -> f64 {
        let t = self.next_completion[i];
        if t.is_finite() {
            t - self.clock
        } else {
            0.0
        }
    }

    pub(crate) fn next_arrival(&self) -> f64 {
        self.next_arrival
    }

    pub(crate) fn next_completion(&self, i: usize) -> f64 {
        self.next_completion[i]
    }

    pub fn is_busy(&self, i: usize) -> bool {
        self.next_completion[i].is_finite()
    }

    /// Events fired so far (simultaneous events count separately).
    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn state(&self) -> SimState {
        let n = self.model.n();
        SimState {
            clock: self.clock,
            ra: self.ra(),
            rs: (0..n).map(|i| self.rs(i)).collect(),
            q: self.q,
            q_loo: self.q_loo.clone(),
            busy: (0..n).map(|i| self.is_busy(i)).collect(),
        }
    }

    /// Time of the next event.
    pub fn peek(&self) -> f64 {
        self.next_completion.iter().copied().fold(self.next_arrival, f64::min)
    }

    /// Advances to the next event epoch and fires everything due there:
    /// the arrival first, then completions by ascending server index.
    /// Returns the number of events fired.
    pub fn step<O: Observer + ?Sized>(&mut self, obs: &mut O) -> usize {
        let t = self.peek();
        let tol = tie_tolerance(t);
        obs.on_segment(self, t);
        self.clock = t;
        let arrival_due = self.next_arrival <= t + tol;
        if arrival_due {
            self.next_arrival = t;
        }
        self.firing.clear();
        for i in 0..self.next_completion.len() {
            if self.next_completion[i] <= t + tol {
                self.next_completion[i] = t;
                self.firing.push(i);
            }
        }
        let mut fired = 0;
        if arrival_due {
            obs.on_event(self, EventKind::Arrival);
            self.arrive(obs);
            fired += 1;
        }
        for k in 0..self.firing.len() {
            let i = self.firing[k];
            obs.on_event(self, EventKind::Completion(i));
            self.complete(i, obs);
            fired += 1;
        }
        self.events += fired as u64;
        fired
    }

    fn start_service<O: Observer + ?Sized>(&mut self, i: usize, real: bool, obs: &mut O) {
        let s = self.model.services[i].sample(&mut self.services[i]);
        self.next_completion[i] = self.clock + s;
        obs.on_service_start(self.clock, i, s, real);
    }

    fn arrive<O: Observer + ?Sized>(&mut self, obs: &mut O) {
        let a = self.model.arrival.sample(&mut self.arrivals);
        self.next_arrival = self.clock + a;
        match self.model.mode {
            Mode::Modified => {
                self.q += 1;
                for x in &mut self.q_loo {
                    *x += 1;
                }
            }
            Mode::Original => {
                self.idle.clear();
                for i in 0..self.next_completion.len() {
                    if !self.next_completion[i].is_finite() {
                        self.idle.push(i);
                    }
                }
                if self.idle.is_empty() {
                    self.q += 1;
                    return;
                }
                let server = match self.model.routing {
                    Routing::UniformRandomIdle => self.idle[self.routing.index(self.idle.len())],
                    Routing::FastestIdle => {
                        let mut best = self.idle[0];
                        for &i in &self.idle[1..] {
                            if self.mu[i] > self.mu[best] {
                                best = i;
                            }
                        }
                        best
                    }
                };
                self.start_service(server, true, obs);
            }
        }
    }

    fn complete<O: Observer + ?Sized>(&mut self, i: usize, obs: &mut O) {
        match self.model.mode {
            Mode::Modified => {
                let real = self.q > 0;
                if real {
                    self.q -= 1;
                }
                for (k, &j) in self.tracked.iter().enumerate() {
                    if j != i && self.q_loo[k] > 0 {
                        self.q_loo[k] -= 1;
                    }
                }
                self.start_service(i, real, obs);
            }
            Mode::Original => {
                if self.q > 0 {
                    self.q -= 1;
                    self.start_service(i, true, obs);
                } else {
                    self.next_completion[i] = f64::INFINITY;
                }
            }
        }
    }

    /// Steps until `events` events have fired in total.
    pub fn run_until_events<O: Observer + ?Sized>(&mut self, events: u64, obs: &mut O) {
        while self.events < events {
            self.step(obs);
        }
    }
}
