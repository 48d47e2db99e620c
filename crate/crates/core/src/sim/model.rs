use serde::{Deserialize, Serialize};

use crate::dist::{DistError, DistributionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// FCFS; a server with nothing to do idles.
    Original,
    /// A server that frees up with an empty queue starts a virtual job.
    #[default]
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    #[default]
    UniformRandomIdle,
    /// Idle server with the largest service rate, lowest index on ties.
    FastestIdle,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("a queue needs at least one server")]
    NoServers,
    #[error("load must lie in (0, 1) to rescale arrivals, got {0}")]
    BadLoad(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Arrival law, per-server service laws, discipline.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    pub arrival: DistributionSpec,
    pub services: Vec<DistributionSpec>,
    pub mode: Mode,
    pub routing: Routing,
}

impl QueueModel {
    pub fn new(arrival: DistributionSpec, services: Vec<DistributionSpec>, mode: Mode) -> Result<Self, ModelError> {
        if services.is_empty() {
            return Err(ModelError::NoServers);
        }
        Ok(Self {
            arrival,
            services,
            mode,
            routing: Routing::default(),
        })
    }

    pub fn homogeneous(arrival: DistributionSpec, service: DistributionSpec, n: usize, mode: Mode) -> Result<Self, ModelError> {
        Self::new(arrival, vec![service; n], mode)
    }

    /// Poisson arrivals and `n` copies of `service` at load `rho`.
    pub fn poisson(service: DistributionSpec, n: usize, rho: f64, mode: Mode) -> Result<Self, ModelError> {
        Self::homogeneous(DistributionSpec::exponential(1.0)?, service, n, mode)?.with_load(rho)
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Rescales the arrival law so that ρ = `rho`.
    pub fn with_load(mut self, rho: f64) -> Result<Self, ModelError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(ModelError::BadLoad(rho));
        }
        let target_mean = 1.0 / (rho * self.mu_sum());
        self.arrival = self.arrival.scaled(target_mean / self.arrival.mean())?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.services.len()
    }

    /// Λ.
    pub fn arrival_rate(&self) -> f64 {
        self.arrival.rate()
    }

    /// μ_i.
    pub fn service_rate(&self, i: usize) -> f64 {
        self.services[i].rate()
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.services.iter().map(|s| s.rate()).collect()
    }

    /// μ_Σ.
    pub fn mu_sum(&self) -> f64 {
        self.services.iter().map(|s| s.rate()).sum()
    }

    pub fn rho(&self) -> f64 {
        self.arrival_rate() / self.mu_sum()
    }

    /// ρ_{−j}: load of the system with server j removed (infinite for n = 1).
    pub fn rho_minus(&self, j: usize) -> f64 {
        let rest = self.mu_sum() - self.service_rate(j);
        if rest > 0.0 {
            self.arrival_rate() / rest
        } else {
            f64::INFINITY
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.services.windows(2).all(|w| w[0] == w[1])
    }

    /// Leave-one-out indices tracked by default: server 0 for homogeneous
    /// models, every j with ρ_{−j} < 1 otherwise. Empty in original mode.
    pub fn default_tracked(&self) -> Vec<usize> {
        match self.mode {
            Mode::Original => Vec::new(),
            Mode::Modified if self.is_homogeneous() => vec![0],
            Mode::Modified => (0..self.n()).filter(|&j| self.rho_minus(j) < 1.0).collect(),
        }
    }

    pub fn label(&self) -> String {
        let arrival = if self.arrival.is_exponential() {
            "M".to_string()
        } else {
            self.arrival.to_string()
        };
        if self.is_homogeneous() {
            format!("{arrival}/{}/{} rho={:.4}", self.services[0], self.n(), self.rho())
        } else {
            let s: Vec<String> = self.services.iter().map(|s| s.to_string()).collect();
            format!("{arrival}/[{}] rho={:.4}", s.join(", "), self.rho())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ResidualInit {
    /// Full fresh interarrival and service times.
    FreshDraws,
    /// Draws from the equilibrium (excess) laws, approximating stationarity.
    #[default]
    EquilibriumDraws,
    /// Given residuals; in original mode a zero entry marks an idle server.
    Explicit { ra: f64, rs: Vec<f64> },
}

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub q0: u64,
    #[serde(default)]
    pub residuals: ResidualInit,
    /// Original mode only: which servers start busy (default: all when q0 > 0,
    /// none otherwise). Ignored for explicit residuals.
    #[serde(default)]
    pub busy: Option<Vec<bool>>,
}

impl InitConfig {
    pub fn explicit(q0: u64, ra: f64, rs: Vec<f64>) -> Self {
        Self {
            q0,
            residuals: ResidualInit::Explicit { ra, rs },
            busy: None,
        }
    }

    pub fn fresh(q0: u64) -> Self {
        Self {
            q0,
            residuals: ResidualInit::FreshDraws,
            busy: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    #[test]
    fn derived_rates() {
        let m = QueueModel::new(exp(1.2), vec![exp(1.0), exp(2.0)], Mode::Modified).unwrap();
        assert!((m.mu_sum() - 3.0).abs() < 1e-15);
        assert!((m.rho() - 0.4).abs() < 1e-15);
        assert!((m.rho_minus(1) - 1.2).abs() < 1e-15);
        assert!((m.rho_minus(0) - 0.6).abs() < 1e-15);
        assert!(!m.is_homogeneous());
        assert_eq!(m.default_tracked(), vec![0]);
    }

    #[test]
    fn load_rescales_arrivals() {
        let m = QueueModel::poisson(DistributionSpec::gamma(0.5, 2.0).unwrap(), 4, 0.8, Mode::Modified).unwrap();
        assert!((m.rho() - 0.8).abs() < 1e-12);
        assert!((m.arrival_rate() - 3.2).abs() < 1e-12);
        assert!(m.is_homogeneous());
        assert!(QueueModel::poisson(exp(1.0), 1, 1.0, Mode::Modified).is_err());
    }

    #[test]
    fn single_server_leave_one_out_is_empty() {
        let m = QueueModel::poisson(exp(1.0), 1, 0.5, Mode::Modified).unwrap();
        assert_eq!(m.rho_minus(0), f64::INFINITY);
    }
}
