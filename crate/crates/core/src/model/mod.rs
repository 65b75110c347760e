//! Network specification and first-order traffic analysis.
//!
//! A network is `K` single-server FIFO stations with renewal exogenous
//! arrivals, i.i.d. services and Bernoulli routing. `validate` aggregates
//! every structural invariant; `solve_traffic` computes the effective
//! arrival rates `a = (I - P^T)^{-1} lambda` and the per-station drifts
//! `nu_k = mu_k - lambda_k - sum_l p_lk mu_l`, flagging both subcriticality
//! (`mu > a`) and the strictly stronger drift condition (`nu > 0`) that the
//! reflection majorants require. The two are not equivalent: a tandem with
//! equal service rates is subcritical but has a zero drift component.

mod dist;

pub use dist::{Capabilities, DistributionSpec, Family, GapSampler};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};

/// Row-stochastic-or-less routing matrix; the deficit of each row is the
/// exit probability of the station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoutingMatrix {
    rows: Vec<Vec<f64>>,
}

impl RoutingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Vec<ValidationIssue>> {
        let m = Self { rows };
        let issues = m.issues();
        if issues.is_empty() {
            Ok(m)
        } else {
            Err(issues)
        }
    }

    /// Structural problems: shape, entry range, row sums.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let k = self.rows.len();
        if k == 0 {
            issues.push(ValidationIssue::network("routing matrix is empty"));
            return issues;
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != k {
                issues.push(ValidationIssue::at_station(
                    i,
                    format!("routing row has {} entries, expected {k}", row.len()),
                ));
                continue;
            }
            let mut sum = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    issues.push(ValidationIssue::at_station(
                        i,
                        format!("routing probability p[{i}][{j}] = {p} outside [0, 1]"),
                    ));
                }
                sum += p;
            }
            if sum > 1.0 + 1e-12 {
                issues.push(ValidationIssue::at_station(
                    i,
                    format!("routing row sum exceeds 1 at station {i} (sum {sum})"),
                ));
            }
        }
        issues
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    /// Exit probability `p_k0 = 1 - sum_l p_kl`, clamped at zero.
    pub fn exit_prob(&self, from: usize) -> f64 {
        (1.0 - self.rows[from].iter().sum::<f64>()).max(0.0)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }

    fn matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| self.rows[i][j])
    }
}

/// Spectral radius of the routing matrix, by power iteration on `P + eps I`.
///
/// The shift makes the Perron root strictly dominant in modulus even for
/// cyclic routing, so the iteration converges for every admissible matrix.
/// Absolute tolerance 1e-10; deterministic (fixed start vector).
pub fn spectral_radius(p: &RoutingMatrix) -> Result<f64> {
    let issues = p.issues();
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    let k = p.dim();
    let eps = 1e-3;
    let a = p.matrix() + DMatrix::identity(k, k) * eps;
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let mut rho_prev = 0.0;
    for _ in 0..2_000_000 {
        let w = &a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            // Can only happen for the zero matrix after shift removal.
            return Ok(0.0);
        }
        let rho = norm;
        v = w / norm;
        if (rho - rho_prev).abs() < 1e-13 {
            return Ok((rho - eps).max(0.0));
        }
        rho_prev = rho;
    }
    Err(Error::Numerical("power iteration for the spectral radius did not converge".into()))
}

/// One station: optional exogenous arrivals, service law, initial queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    #[serde(default)]
    pub arrival: Option<DistributionSpec>,
    pub service: DistributionSpec,
    #[serde(default)]
    pub initial_queue: u64,
}

/// A generalized Jackson network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub stations: Vec<StationSpec>,
    pub routing: RoutingMatrix,
}

impl NetworkSpec {
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    /// Exogenous arrival rates; zero where a station has no arrivals.
    pub fn lambda(&self) -> Vec<f64> {
        self.stations
            .iter()
            .map(|s| s.arrival.as_ref().map_or(0.0, |d| 1.0 / d.mean()))
            .collect()
    }

    /// Service rates.
    pub fn mu(&self) -> Vec<f64> {
        self.stations.iter().map(|s| 1.0 / s.service.mean()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(text)
            .map_err(|e| Error::Validation(vec![ValidationIssue::network(format!("spec parse error: {e}"))]))?;
        validate(&spec)?;
        Ok(spec)
    }
}

/// First-order traffic diagnostics for a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Effective arrival rates, the solution of `a = lambda + P^T a`.
    pub effective_arrivals: Vec<f64>,
    /// Per-station drifts `nu_k = mu_k - lambda_k - sum_l p_lk mu_l`.
    pub nu: Vec<f64>,
    /// `mu > a` entrywise.
    pub subcritical: bool,
    /// `nu > 0` entrywise; what the reflection majorants need.
    pub strong_drift: bool,
    /// Non-fatal observations (heavy equilibrium tails and the like).
    pub warnings: Vec<String>,
}

impl DriftReport {
    /// Stations with a nonpositive drift component.
    pub fn weak_drift_stations(&self) -> Vec<usize> {
        self.nu
            .iter()
            .enumerate()
            .filter_map(|(k, &v)| (v <= 0.0).then_some(k))
            .collect()
    }

    /// Per-station service slack `mu_k - a_k`; positive iff subcritical.
    pub fn slack(&self) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.effective_arrivals)
            .map(|(&m, &a)| m - a)
            .collect()
    }
}

/// Solve the traffic equations and compute drift flags.
///
/// Requires `rho(P) < 1`; `(I - P^T)` is then invertible and the effective
/// arrival rates follow from a direct linear solve.
pub fn solve_traffic(spec: &NetworkSpec) -> Result<DriftReport> {
    let k = spec.station_count();
    let rho = spectral_radius(&spec.routing)?;
    if rho >= 1.0 {
        return Err(Error::Validation(vec![ValidationIssue::network(format!(
            "routing spectral radius {rho} is not below 1"
        ))]));
    }
    let lambda = spec.lambda();
    let mu = spec.mu();
    let p = spec.routing.matrix();
    let i_minus_pt = DMatrix::identity(k, k) - p.transpose();
    let a = i_minus_pt
        .clone()
        .lu()
        .solve(&DVector::from_vec(lambda.clone()))
        .ok_or_else(|| Error::Numerical("traffic equation solve failed despite rho(P) < 1".into()))?;
    let nu_vec = &i_minus_pt * DVector::from_vec(mu.clone()) - DVector::from_vec(lambda.clone());

    let effective_arrivals: Vec<f64> = a.iter().copied().collect();
    let nu: Vec<f64> = nu_vec.iter().copied().collect();
    let subcritical = mu.iter().zip(&effective_arrivals).all(|(&m, &ar)| m > ar);
    let strong_drift = nu.iter().all(|&v| v > 0.0);

    let mut warnings = Vec::new();
    for (idx, st) in spec.stations.iter().enumerate() {
        for (role, d) in [("arrival", st.arrival.as_ref()), ("service", Some(&st.service))] {
            if let Some(d) = d {
                if d.equilibrium_mean().is_none() {
                    warnings.push(format!(
                        "station {idx}: {role} {} has an infinite equilibrium mean",
                        d.family_name()
                    ));
                }
            }
        }
    }

    Ok(DriftReport {
        lambda,
        mu,
        effective_arrivals,
        nu,
        subcritical,
        strong_drift,
        warnings,
    })
}

/// Aggregate every invariant check on a network specification.
///
/// Structural violations are errors; an overloaded network is not an error,
/// it is reported through the `subcritical`/`strong_drift` flags.
pub fn validate(spec: &NetworkSpec) -> Result<DriftReport> {
    let mut issues = Vec::new();
    let k = spec.station_count();
    if k == 0 {
        issues.push(ValidationIssue::network("network has no stations"));
    }
    if spec.routing.dim() != k {
        issues.push(ValidationIssue::network(format!(
            "routing matrix is {}x{} but the network has {k} stations",
            spec.routing.dim(),
            spec.routing.dim()
        )));
    }
    issues.extend(spec.routing.issues());
    if spec.stations.iter().all(|s| s.arrival.is_none()) {
        issues.push(ValidationIssue::network("no station has exogenous arrivals"));
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    match spectral_radius(&spec.routing) {
        Ok(rho) if rho < 1.0 => {}
        Ok(rho) => {
            return Err(Error::Validation(vec![ValidationIssue::network(format!(
                "routing spectral radius {rho} is not below 1"
            ))]))
        }
        Err(e) => return Err(e),
    }
    solve_traffic(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn mm1(lambda: f64, mu: f64) -> NetworkSpec {
        NetworkSpec {
            stations: vec![StationSpec {
                arrival: Some(DistributionSpec::exponential(lambda).unwrap()),
                service: DistributionSpec::exponential(mu).unwrap(),
                initial_queue: 0,
            }],
            routing: RoutingMatrix::new(vec![vec![0.0]]).unwrap(),
        }
    }

    fn tandem(lambda: f64, mu1: f64, mu2: f64) -> NetworkSpec {
        NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(lambda).unwrap()),
                    service: DistributionSpec::exponential(mu1).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: None,
                    service: DistributionSpec::exponential(mu2).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
        }
    }

    #[test]
    fn spectral_radius_zero_matrix() {
        let p = RoutingMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(spectral_radius(&p).unwrap().abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_symmetric_pair() {
        let p = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert!((spectral_radius(&p).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_matches_characteristic_root() {
        // det(P - xI) = x^2 - 0.7x + 0.06; larger root by the quadratic formula.
        let p = RoutingMatrix::new(vec![vec![0.3, 0.3], vec![0.2, 0.4]]).unwrap();
        let oracle = (0.7 + (0.7_f64 * 0.7 - 4.0 * 0.06).sqrt()) / 2.0;
        assert!((spectral_radius(&p).unwrap() - oracle).abs() < 1e-10);
        // second route: eigenvalues from nalgebra
        let eig_max = p
            .matrix()
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        assert!((spectral_radius(&p).unwrap() - eig_max).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_rejects_bad_entries() {
        let p = RoutingMatrix { rows: vec![vec![0.5, 0.7], vec![0.1, 0.2]] };
        assert!(matches!(spectral_radius(&p), Err(Error::Validation(_))));
        let q = RoutingMatrix { rows: vec![vec![0.5, -0.1], vec![0.1, 0.2]] };
        assert!(matches!(spectral_radius(&q), Err(Error::Validation(_))));
    }

    #[test]
    fn single_station_traffic() {
        let r = solve_traffic(&mm1(0.5, 1.0)).unwrap();
        assert!((r.effective_arrivals[0] - 0.5).abs() < 1e-12);
        assert!((r.nu[0] - 0.5).abs() < 1e-12);
        assert!(r.subcritical && r.strong_drift);
    }

    #[test]
    fn tandem_equal_rates_is_subcritical_but_not_strong() {
        // Hand solve: (I - P^T) a = lambda gives a = (0.5, 0.5);
        // nu = (I - P^T) mu - lambda = (1 - 0.5, 1 - 1) = (0.5, 0).
        let r = solve_traffic(&tandem(0.5, 1.0, 1.0)).unwrap();
        assert!((r.effective_arrivals[0] - 0.5).abs() < 1e-10);
        assert!((r.effective_arrivals[1] - 0.5).abs() < 1e-10);
        assert!((r.nu[0] - 0.5).abs() < 1e-10);
        assert!(r.nu[1].abs() < 1e-10);
        assert!(r.subcritical);
        assert!(!r.strong_drift);
        assert_eq!(r.weak_drift_stations(), vec![1]);
    }

    #[test]
    fn tandem_faster_second_station_has_strong_drift() {
        let r = solve_traffic(&tandem(0.5, 1.0, 1.5)).unwrap();
        assert!((r.nu[0] - 0.5).abs() < 1e-10);
        assert!((r.nu[1] - 0.5).abs() < 1e-10);
        assert!(r.strong_drift);
    }

    #[test]
    fn validate_flags_overload_without_erroring() {
        let r = validate(&mm1(1.5, 1.0)).unwrap();
        assert!(!r.subcritical);
        assert!(!r.strong_drift);
    }

    #[test]
    fn validate_rejects_row_sum_above_one() {
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(1.0).unwrap()),
                    service: DistributionSpec::exponential(2.0).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: None,
                    service: DistributionSpec::exponential(2.0).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix { rows: vec![vec![0.6, 0.6], vec![0.0, 0.0]] },
        };
        let err = validate(&spec).unwrap_err();
        let issues = err.validation_issues().unwrap();
        assert!(issues.iter().any(|i| i.message.contains("row sum exceeds 1")));
    }

    #[test]
    fn validate_requires_some_arrivals() {
        let spec = NetworkSpec {
            stations: vec![StationSpec {
                arrival: None,
                service: DistributionSpec::exponential(1.0).unwrap(),
                initial_queue: 3,
            }],
            routing: RoutingMatrix::new(vec![vec![0.0]]).unwrap(),
        };
        let err = validate(&spec).unwrap_err();
        assert!(err.to_string().contains("exogenous arrivals"));
    }

    #[test]
    fn neumann_series_matches_inverse_and_dominates_lambda() {
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.4).unwrap()),
                    service: DistributionSpec::exponential(2.0).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.2).unwrap()),
                    service: DistributionSpec::exponential(2.0).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.1, 0.5], vec![0.3, 0.2]]).unwrap(),
        };
        let r = solve_traffic(&spec).unwrap();
        // a = sum_j (P^T)^j lambda, summed until the increment vanishes.
        let pt = spec.routing.matrix().transpose();
        let lambda = DVector::from_vec(spec.lambda());
        let mut term = lambda.clone();
        let mut acc = lambda.clone();
        for _ in 0..10_000 {
            term = &pt * term;
            acc += &term;
            if term.amax() < 1e-16 {
                break;
            }
        }
        for k in 0..2 {
            assert!((acc[k] - r.effective_arrivals[k]).abs() < 1e-10);
            assert!(r.effective_arrivals[k] >= spec.lambda()[k] - 1e-12);
        }
        // a solves a = lambda + P^T a
        let resid = &lambda + &pt * DVector::from_vec(r.effective_arrivals.clone())
            - DVector::from_vec(r.effective_arrivals.clone());
        assert!(resid.amax() < 1e-10);
    }

    fn random_network_strategy() -> impl Strategy<Value = NetworkSpec> {
        (2usize..=4).prop_flat_map(|k| {
            let rates = proptest::collection::vec(0.2f64..3.0, k);
            let srates = proptest::collection::vec(0.2f64..3.0, k);
            let rows = proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, k), k);
            (rates, srates, rows).prop_map(move |(ar, sr, raw)| {
                let rows: Vec<Vec<f64>> = raw
                    .iter()
                    .map(|row| {
                        let sum: f64 = row.iter().sum();
                        // scale every row to a sum strictly below 1
                        let target = 0.85 * sum.max(1e-9).min(1.0) / sum.max(1e-9);
                        row.iter().map(|p| p * target).collect()
                    })
                    .collect();
                NetworkSpec {
                    stations: (0..k)
                        .map(|i| StationSpec {
                            arrival: Some(DistributionSpec::exponential(ar[i]).unwrap()),
                            service: DistributionSpec::exponential(sr[i]).unwrap(),
                            initial_queue: 0,
                        })
                        .collect(),
                    routing: RoutingMatrix { rows },
                }
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn strong_drift_implies_subcritical(spec in random_network_strategy()) {
            let r = solve_traffic(&spec).unwrap();
            if r.strong_drift {
                prop_assert!(r.subcritical);
            }
        }

        #[test]
        fn traffic_solution_is_permutation_equivariant(spec in random_network_strategy()) {
            let k = spec.station_count();
            let perm: Vec<usize> = (0..k).rev().collect();
            let permuted = NetworkSpec {
                stations: perm.iter().map(|&i| spec.stations[i].clone()).collect(),
                routing: RoutingMatrix {
                    rows: perm.iter().map(|&i| perm.iter().map(|&j| spec.routing.prob(i, j)).collect()).collect(),
                },
            };
            let base = solve_traffic(&spec).unwrap();
            let permed = solve_traffic(&permuted).unwrap();
            for (new_idx, &old_idx) in perm.iter().enumerate() {
                prop_assert!((permed.effective_arrivals[new_idx] - base.effective_arrivals[old_idx]).abs() < 1e-9);
                prop_assert!((permed.nu[new_idx] - base.nu[old_idx]).abs() < 1e-9);
            }
        }
    }
}
