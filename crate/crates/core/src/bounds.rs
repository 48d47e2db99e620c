//! Closed-form mean queue-length bounds.
//!
//! Every bound depends on the arrival and service laws only through their
//! unitized versions ΛA and μS, summarized by [`UnitLaw`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistributionSpec, Family, ProfileMethod};
use crate::sim::QueueModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("load {0} is not in (0, 1)")]
    Unstable(f64),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("supplied load {given} disagrees with derived load {derived}")]
    LoadMismatch { given: f64, derived: f64 },
}

/// Moments and residual extremes of a unitized law V/E[V].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitLaw {
    pub variance: f64,
    pub second_moment: f64,
    /// R^max of the unitized law.
    pub r_max: f64,
    /// R^min of the unitized law.
    pub r_min: f64,
    pub method: ProfileMethod,
    pub lattice: bool,
}

impl UnitLaw {
    pub fn of(d: &DistributionSpec) -> Self {
        let u = d.unitize();
        let m = u.moments();
        let p = u.residual_profile();
        Self {
            variance: m.variance,
            second_moment: m.second_moment,
            r_max: p.r_sup,
            r_min: p.r_inf,
            method: p.method,
            lattice: d.is_lattice(),
        }
    }

    /// R^max − E[V²]/2: the service-side slack term.
    pub fn service_excess(&self) -> f64 {
        self.r_max - self.second_moment / 2.0
    }

    /// E[V²]/2 − R^min: the arrival-side slack term.
    pub fn arrival_excess(&self) -> f64 {
        self.second_moment / 2.0 - self.r_min
    }
}

fn stable(rho: f64) -> Result<(), BoundError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(BoundError::Unstable(rho))
    }
}

fn finite_rmax(s: &UnitLaw, what: &str) -> Result<(), BoundError> {
    if s.r_max.is_finite() {
        Ok(())
    } else {
        Err(BoundError::AssumptionViolated(format!("R_s^max = inf for {what}")))
    }
}

/// (ρ²Var(μS) + Var(λA)) / (2(1−ρ)) with ρ = λ/(nμ).
pub fn kingman_bound(a: &DistributionSpec, s: &DistributionSpec, n: usize) -> Result<f64, BoundError> {
    let rho = a.rate() / (n as f64 * s.rate());
    stable(rho)?;
    let (ua, us) = (UnitLaw::of(a), UnitLaw::of(s));
    Ok(kingman_value(&ua, &us, rho))
}

pub fn kingman_value(a: &UnitLaw, s: &UnitLaw, rho: f64) -> f64 {
    (rho * rho * s.variance + a.variance) / (2.0 * (1.0 - rho))
}

/// Main bound on E[Q] for the homogeneous modified (hence original) queue.
pub fn main_bound(a: &DistributionSpec, s: &DistributionSpec, n: usize, rho: f64) -> Result<f64, BoundError> {
    main_value(&UnitLaw::of(a), &UnitLaw::of(s), n, rho)
}

pub fn main_value(a: &UnitLaw, s: &UnitLaw, n: usize, rho: f64) -> Result<f64, BoundError> {
    stable(rho)?;
    finite_rmax(s, "the service law")?;
    let first = (rho * a.variance + s.variance + 1.0 - rho) / (2.0 * (1.0 - rho));
    let weight = (n as f64).min(1.0 / (1.0 - rho));
    Ok(first + weight * s.service_excess() + a.arrival_excess())
}

/// Main bound with the minimum relaxed to 1/(1−ρ).
pub fn simplified_bound(a: &DistributionSpec, s: &DistributionSpec, rho: f64) -> Result<f64, BoundError> {
    simplified_value(&UnitLaw::of(a), &UnitLaw::of(s), rho)
}

pub fn simplified_value(a: &UnitLaw, s: &UnitLaw, rho: f64) -> Result<f64, BoundError> {
    stable(rho)?;
    finite_rmax(s, "the service law")?;
    Ok((rho * a.variance - rho + 2.0 * s.r_max) / (2.0 * (1.0 - rho)) + a.arrival_excess())
}

/// R_s^max/(1−ρ), valid for Poisson arrivals.
pub fn mgn_bound(s: &DistributionSpec, rho: f64) -> Result<f64, BoundError> {
    mgn_value(&UnitLaw::of(s), rho)
}

pub fn mgn_value(s: &UnitLaw, rho: f64) -> Result<f64, BoundError> {
    stable(rho)?;
    finite_rmax(s, "the service law")?;
    Ok(s.r_max / (1.0 - rho))
}

/// The comparison bound with its explicit constant, for ε ∈ (0, 1/2].
pub fn li_goldberg_bound(a: &DistributionSpec, s: &DistributionSpec, eps: f64, rho: f64) -> Result<f64, BoundError> {
    stable(rho)?;
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(BoundError::AssumptionViolated(format!("epsilon {eps} outside (0, 0.5]")));
    }
    let (ua, us) = (UnitLaw::of(a), UnitLaw::of(s));
    let frac = s.unitize().fractional_moment(2.0 + eps);
    Ok(li_goldberg_value(ua.second_moment, us.second_moment, frac, eps, rho))
}

pub fn li_goldberg_value(ea2: f64, es2: f64, es_2_eps: f64, eps: f64, rho: f64) -> f64 {
    (2.1e21 * es2 * (es2.powf(1.0 + eps) + es_2_eps) * (1.0 / eps).powi(4) + 49.0 * ea2) / (1.0 - rho)
}

fn weights(services: &[DistributionSpec]) -> Vec<f64> {
    let mu: Vec<f64> = services.iter().map(|s| s.rate()).collect();
    let total: f64 = mu.iter().sum();
    mu.iter().map(|m| m / total).collect()
}

fn check_all(laws: &[UnitLaw]) -> Result<(), BoundError> {
    let bad: Vec<String> = laws
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.r_max.is_finite())
        .map(|(j, _)| j.to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(BoundError::AssumptionViolated(format!("R_s^max = inf at servers [{}]", bad.join(", "))))
    }
}

/// Heterogeneous bounds: (main, relaxed, Poisson-arrival form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroBounds {
    pub main: f64,
    pub simplified: f64,
    /// Σ_j (μ_j/μ_Σ) R_sj^max/(1−ρ); only meaningful for Poisson arrivals.
    pub mgn: f64,
}

pub fn hetero_bound(a: &DistributionSpec, services: &[DistributionSpec], rho: f64) -> Result<HeteroBounds, BoundError> {
    let laws: Vec<UnitLaw> = services.iter().map(UnitLaw::of).collect();
    hetero_value(&UnitLaw::of(a), &laws, &weights(services), rho)
}

pub fn hetero_value(a: &UnitLaw, laws: &[UnitLaw], w: &[f64], rho: f64) -> Result<HeteroBounds, BoundError> {
    stable(rho)?;
    check_all(laws)?;
    let wvar: f64 = laws.iter().zip(w).map(|(l, w)| w * l.variance).sum();
    let wmax: f64 = laws.iter().zip(w).map(|(l, w)| w * l.r_max).sum();
    let excess: f64 = laws
        .iter()
        .zip(w)
        .map(|(l, w)| (1.0f64).min(w / (1.0 - rho)) * l.service_excess())
        .sum();
    Ok(HeteroBounds {
        main: (rho * a.variance + wvar + 1.0 - rho) / (2.0 * (1.0 - rho)) + excess + a.arrival_excess(),
        simplified: (rho * a.variance - rho + 2.0 * wmax) / (2.0 * (1.0 - rho)) + a.arrival_excess(),
        mgn: wmax / (1.0 - rho),
    })
}

/// min(1, C e^{−(t−1)/C}): tail of a mean-one law whose mean residual time
/// never exceeds C.
pub fn tail_bound(c: f64, t: f64) -> f64 {
    (c * (-(t - 1.0) / c).exp()).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    pub value: f64,
    pub applicable: bool,
    pub flags: Vec<String>,
}

/// All bounds for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho: f64,
    pub n: usize,
    pub poisson: bool,
    pub homogeneous: bool,
    pub arrival: UnitLaw,
    pub services: Vec<UnitLaw>,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Value of an applicable bound.
    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).filter(|e| e.applicable).map(|e| e.value)
    }

    /// Asserted bounds (the comparison lines excluded).
    pub fn asserted(&self) -> impl Iterator<Item = &BoundEntry> {
        self.entries
            .iter()
            .filter(|e| e.applicable && !matches!(e.name.as_str(), "kingman" | "li_goldberg"))
    }

    /// `bound,value,applicable,flags` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bound,value,applicable,flags\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", e.name, e.value, e.applicable, e.flags.join(";")));
        }
        s
    }
}

fn entry(name: &str, r: Result<f64, BoundError>, mut flags: Vec<String>) -> BoundEntry {
    match r {
        Ok(v) => BoundEntry {
            name: name.into(),
            value: v,
            applicable: true,
            flags,
        },
        Err(e) => {
            flags.push(e.to_string());
            BoundEntry {
                name: name.into(),
                value: f64::INFINITY,
                applicable: false,
                flags,
            }
        }
    }
}

/// Evaluates every bound for `model`. A supplied `rho` must match the load
/// derived from the model within 1e-9.
pub fn bound_report(model: &QueueModel, rho: Option<f64>, eps: f64) -> Result<BoundReport, BoundError> {
    let derived = model.rho();
    if let Some(given) = rho {
        if (given - derived).abs() > 1e-9 {
            return Err(BoundError::LoadMismatch { given, derived });
        }
    }
    let rho = derived;
    let n = model.n();
    let a = UnitLaw::of(&model.arrival);
    let laws: Vec<UnitLaw> = model.services.iter().map(UnitLaw::of).collect();
    let poisson = model.arrival.is_exponential();
    let homogeneous = model.is_homogeneous();
    let mut common = Vec::new();
    if laws.iter().any(|l| l.lattice) {
        common.push("lattice service law: non-lattice assumption fails".to_string());
    }
    let mut entries = Vec::new();
    if homogeneous {
        let s = &laws[0];
        let kflags = if n == 1 {
            vec![]
        } else {
            vec!["comparison only: single-server formula".to_string()]
        };
        entries.push(entry("kingman", stable(rho).map(|_| kingman_value(&a, s, rho)), kflags));
        entries.push(entry("main", main_value(&a, s, n, rho), common.clone()));
        entries.push(entry("simplified", simplified_value(&a, s, rho), common.clone()));
        let mgn = if poisson {
            mgn_value(s, rho)
        } else {
            Err(BoundError::AssumptionViolated("arrivals are not Poisson".into()))
        };
        entries.push(entry("mgn", mgn, common.clone()));
        entries.push(entry(
            "li_goldberg",
            li_goldberg_bound(&model.arrival, &model.services[0], eps, rho),
            vec![format!("epsilon={eps}")],
        ));
        if let Family::PhaseType { .. } = model.services[0].family() {
            let bound = model.services[0].unitize().phase_residual_bound().unwrap();
            let r = if poisson {
                stable(rho).map(|_| bound / (1.0 - rho))
            } else {
                Err(BoundError::AssumptionViolated("arrivals are not Poisson".into()))
            };
            entries.push(entry("phase_type_max_tau", r, common.clone()));
        }
    }
    let w = weights(&model.services);
    let het = hetero_value(&a, &laws, &w, rho);
    entries.push(entry("hetero_main", het.clone().map(|h| h.main), common.clone()));
    entries.push(entry("hetero_simplified", het.clone().map(|h| h.simplified), common.clone()));
    let hm = if poisson {
        het.clone().map(|h| h.mgn)
    } else {
        Err(BoundError::AssumptionViolated("arrivals are not Poisson".into()))
    };
    entries.push(entry("hetero_mgn", hm, common));
    Ok(BoundReport {
        rho,
        n,
        poisson,
        homogeneous,
        arrival: a,
        services: laws,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Mode;
    use proptest::prelude::*;
    use statrs::function::gamma::gamma;

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }
    fn det(c: f64) -> DistributionSpec {
        DistributionSpec::deterministic(c).unwrap()
    }
    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-10 * b.abs().max(1.0)
    }

    #[test]
    fn kingman_examples() {
        assert!(close(kingman_bound(&exp(0.8), &exp(1.0), 1).unwrap(), 4.1));
        assert_eq!(kingman_bound(&det(2.0), &det(1.0), 1).unwrap(), 0.0);
        assert!(close(kingman_bound(&exp(0.5), &det(1.0), 1).unwrap(), 1.0));
        assert!(matches!(kingman_bound(&exp(1.0), &exp(1.0), 1), Err(BoundError::Unstable(_))));
    }

    #[test]
    fn main_examples() {
        assert!(close(main_bound(&exp(1.0), &exp(1.0), 4, 0.9).unwrap(), 10.0));
        assert!(close(main_bound(&exp(1.0), &exp(1.0), 1, 0.5).unwrap(), 2.0));
        let g = DistributionSpec::gamma(0.5, 2.0).unwrap();
        assert!(close(mgn_bound(&g, 0.9).unwrap(), 20.0));
        assert!(main_bound(&exp(1.0), &g, 1000, 0.9).unwrap() <= 20.0 + 1e-12);
    }

    #[test]
    fn simplified_examples() {
        assert!(close(simplified_bound(&exp(1.0), &exp(3.0), 0.9).unwrap(), 10.0));
        let g = DistributionSpec::gamma(0.5, 2.0).unwrap();
        assert!(close(simplified_bound(&exp(1.0), &g, 0.5).unwrap(), 4.0));
        for rho in [0.5, 0.9] {
            assert!(main_bound(&exp(1.0), &exp(1.0), 1, rho).unwrap() <= simplified_bound(&exp(1.0), &exp(1.0), rho).unwrap());
        }
    }

    #[test]
    fn mgn_examples() {
        assert!(close(mgn_bound(&DistributionSpec::gamma(2.0, 0.5).unwrap(), 0.9).unwrap(), 10.0));
        assert!(mgn_bound(&DistributionSpec::erlang(3, 1.0).unwrap(), 0.5).unwrap() <= 2.0 + 1e-12);
        // bounded support: μM/(1−ρ)
        let u = DistributionSpec::uniform(0.5, 1.5).unwrap();
        assert!(mgn_bound(&u, 0.9).unwrap() <= 1.5 / 0.1 + 1e-9);
    }

    #[test]
    fn li_goldberg_examples() {
        let want = (2.1e21 * 2.0 * (2f64.powf(1.5) + gamma(3.5)) * 16.0 + 98.0) / 0.5;
        let got = li_goldberg_bound(&exp(1.0), &exp(1.0), 0.5, 0.5).unwrap();
        assert!(close(got, want));
        assert!((got / 8.27e23 - 1.0).abs() < 1e-3);
        let hi = li_goldberg_bound(&exp(1.0), &exp(1.0), 0.5, 0.9).unwrap();
        assert!(close(hi, want * 5.0));
        assert!(hi / main_bound(&exp(1.0), &exp(1.0), 4, 0.9).unwrap() > 1e18);
    }

    #[test]
    fn hetero_examples() {
        let h = hetero_bound(&exp(1.0), &[exp(1.0), exp(2.0)], 0.8).unwrap();
        assert!(close(h.mgn, 5.0));
        let h = hetero_bound(&exp(1.0), &[exp(1.0), det(1.0)], 0.9).unwrap();
        assert!(close(h.mgn, 10.0));
        for n in [1, 3, 10] {
            for rho in [0.3, 0.8, 0.97] {
                let s = DistributionSpec::gamma(0.5, 1.0).unwrap();
                let a = DistributionSpec::erlang(2, 1.0).unwrap();
                let het = hetero_bound(&a, &vec![s.clone(); n], rho).unwrap();
                assert!(close(het.main, main_bound(&a, &s, n, rho).unwrap()));
                assert!(close(het.simplified, simplified_bound(&a, &s, rho).unwrap()));
            }
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail_bound(1.0, 1.0), 1.0);
        assert!((tail_bound(1.0, 3.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((tail_bound(2.0, 5.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exponential_terms_vanish() {
        let e = UnitLaw::of(&exp(3.0));
        assert!(e.service_excess().abs() < 1e-15);
        assert!(e.arrival_excess().abs() < 1e-15);
    }

    #[test]
    fn report_checks_supplied_load() {
        let m = QueueModel::poisson(exp(1.0), 4, 0.9, Mode::Modified).unwrap();
        let r = bound_report(&m, Some(0.9), 0.5).unwrap();
        assert!(close(r.value("main").unwrap(), 10.0));
        assert!(close(r.value("mgn").unwrap(), r.value("simplified").unwrap()));
        assert!(matches!(bound_report(&m, Some(0.8), 0.5), Err(BoundError::LoadMismatch { .. })));
        assert!(r.to_csv().starts_with("bound,value,applicable,flags\n"));
    }

    proptest! {
        #[test]
        fn joint_rescaling_leaves_bounds_unchanged(shape in 0.3f64..5.0, c in 0.01f64..100.0, rho in 0.05f64..0.99, n in 1usize..50) {
            let a = DistributionSpec::erlang(3, 1.3).unwrap();
            let s = DistributionSpec::gamma(shape, 0.7).unwrap();
            let (a2, s2) = (a.scaled(c).unwrap(), s.scaled(c).unwrap());
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-10 * y.abs();
            prop_assert!(rel(main_bound(&a2, &s2, n, rho).unwrap(), main_bound(&a, &s, n, rho).unwrap()));
            prop_assert!(rel(simplified_bound(&a2, &s2, rho).unwrap(), simplified_bound(&a, &s, rho).unwrap()));
            prop_assert!(rel(mgn_bound(&s2, rho).unwrap(), mgn_bound(&s, rho).unwrap()));
        }

        #[test]
        fn ordering_and_monotonicity(shape in 0.3f64..5.0, n in 1usize..64, r1 in 0.01f64..0.98, dr in 0.001f64..0.01) {
            let a = exp(1.0);
            let s = DistributionSpec::gamma(shape, 1.0).unwrap();
            let m = main_bound(&a, &s, n, r1).unwrap();
            let sb = simplified_bound(&a, &s, r1).unwrap();
            prop_assert!(m <= sb * (1.0 + 1e-12));
            prop_assert!((sb - mgn_bound(&s, r1).unwrap()).abs() <= 1e-10 * sb);
            let r2 = r1 + dr;
            prop_assert!(main_bound(&a, &s, n, r2).unwrap() > m);
            prop_assert!(simplified_bound(&a, &s, r2).unwrap() > sb);
        }
    }
}
