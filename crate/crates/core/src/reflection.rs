//! One-dimensional Skorohod reflection and the reflection majorants that
//! dominate each queue pathwise.
//!
//! For a station `k` with drift `nu_k > 0`, the centered netflow
//!
//! ```text
//! C_k(t) = Q_k(0) + (A_k(t) - lambda_k t)
//!        + sum_l [Phi_lk(D_l(t)) - p_lk D_l(t)]
//!        + sum_l p_lk [D_l(t) - mu_l B_l(t)]
//!        - [D_k(t) - mu_k B_k(t)]
//! ```
//!
//! satisfies `Q_k = psi(C_k - nu_k t - sum_l p_lk mu_l (t - B_l(t)))`, where
//! `psi` is the reflection map, because `mu_k (t - B_k(t))` is exactly the
//! regulator keeping the queue at zero. Dropping the nondecreasing idle-time
//! sum strongly majorizes the input, so with `M_k(t) = C_k(t) - nu_k t`,
//!
//! ```text
//! Q_k(t) <= psi(M_k)(t) = M_k(t) - min(inf_{s<=t} M_k(s), 0).
//! ```
//!
//! A second, coarser domination splits the drift four ways between an
//! arrival burst term, per-source routing fluctuation terms, per-source
//! service fluctuation terms, and the decaying initial-state term:
//!
//! ```text
//! Q_k(t) <= Y_arr(t) + sum_l Y_route,l(t) + sum_l Y_serv,l(t)
//!         + (Q_k(0) - nu_k t / 4)^+,
//! Y_arr(t)     = sup_{s<=t} (Abar_k(t) - Abar_k(s) - nu_k (t-s)/4),
//! Y_route,l(t) = sup_{s<=t} (Phibar_lk(D_l(t)) - Phibar_lk(D_l(s)) - nu_k (t-s)/(4K)),
//! Y_serv,l(t)  = sup_{s<=t} (|Dbar_l(t) - Dbar_l(s)| - nu_k (t-s)/(4K)).
//! ```
//!
//! Every supremum and infimum is computed exactly: between events all paths
//! are linear, so extrema sit at event times or their left limits, and both
//! are evaluated from the same closed formulas. There is no time
//! discretization error; checks use a 1e-9 absolute tolerance for float
//! roundoff only.

use crate::error::{Error, Result};
use crate::model::DriftReport;
use crate::path::StepPath;
use crate::simulator::{EventKind, Trajectory};

/// One-dimensional Skorohod reflection of a step path:
/// `psi(x)(t) = x(t) - min(inf_{s<=t} x(s), 0)`. Single left-to-right pass.
pub fn skorohod_reflect(x: &StepPath) -> StepPath {
    if x.is_empty() {
        return StepPath::empty();
    }
    let mut out = Vec::with_capacity(x.len());
    let mut inf = f64::INFINITY;
    for &v in x.values() {
        inf = inf.min(v);
        out.push(v - inf.min(0.0));
    }
    StepPath::new(x.times().to_vec(), out)
}

/// Majorant processes of one station along a trajectory, tabulated on the
/// event grid (plus any probe times).
#[derive(Debug, Clone)]
pub struct MajorantBundle {
    pub station: usize,
    /// Drift of the majorized input.
    pub nu: f64,
    /// Grid times: 0, every event time, and requested probes.
    pub times: Vec<f64>,
    /// Queue length at grid times.
    pub queue: Vec<f64>,
    /// Centered netflow `C_k`.
    pub centered_queue: Vec<f64>,
    /// Drifted input `M_k = C_k - nu_k t`.
    pub drifted: Vec<f64>,
    /// Reflection of the drifted input.
    pub reflected: Vec<f64>,
    /// Arrival burst term.
    pub fluct_arrival: Vec<f64>,
    /// Routing fluctuation terms, one inner vector per source station.
    pub fluct_routing: Vec<Vec<f64>>,
    /// Service fluctuation terms, one inner vector per source station.
    pub fluct_service: Vec<Vec<f64>>,
    /// `(Q_k(0) - nu_k t / 4)^+`.
    pub initial_term: Vec<f64>,
}

impl MajorantBundle {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }

    pub fn routing_sum(&self, i: usize) -> f64 {
        self.fluct_routing.iter().map(|v| v[i]).sum()
    }

    pub fn service_sum(&self, i: usize) -> f64 {
        self.fluct_service.iter().map(|v| v[i]).sum()
    }

    /// Right-hand side of the fluctuation domination at grid index `i`.
    pub fn fluctuation_rhs(&self, i: usize) -> f64 {
        self.fluct_arrival[i] + self.routing_sum(i) + self.service_sum(i) + self.initial_term[i]
    }

    /// CSV dump `(t, queue, reflected, y_arrival, y_routing, y_service)`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,queue,reflected_majorant,y_arrival,y_routing_sum,y_service_sum")?;
        for i in 0..self.grid_len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[i],
                self.queue[i],
                self.reflected[i],
                self.fluct_arrival[i],
                self.routing_sum(i),
                self.service_sum(i)
            )?;
        }
        Ok(())
    }
}

/// Full scan output, including the input with the idle-time correction
/// retained; its reflection must reproduce the queue exactly. Used by tests
/// to verify the whole majorization chain.
#[derive(Debug, Clone)]
pub(crate) struct MajorantScan {
    pub bundle: MajorantBundle,
    /// `C_k - nu t - sum_l p_lk mu_l (t - B_l)`.
    pub exact_input: Vec<f64>,
    /// Reflection of `exact_input` with exact interval infima.
    pub exact_reflected: Vec<f64>,
    /// Left limits at grid times (index 0 unused).
    pub exact_input_left: Vec<f64>,
    pub drifted_left: Vec<f64>,
}

/// Build the majorant bundle for `station`. Requires `nu_k > 0`.
pub fn build_majorants(traj: &Trajectory, drift: &DriftReport, station: usize) -> Result<MajorantBundle> {
    Ok(scan_majorants(traj, drift, station, &[])?.bundle)
}

/// Fluctuation terms `(arrival, routing per source, service per source)` at
/// an arbitrary time `t` (not necessarily an event time).
pub fn y_components(
    traj: &Trajectory,
    drift: &DriftReport,
    station: usize,
    t: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let scan = scan_majorants(traj, drift, station, &[t])?;
    let b = &scan.bundle;
    let i = b.times.iter().position(|&u| u == t).expect("probe time present in grid");
    Ok((
        b.fluct_arrival[i],
        b.fluct_routing.iter().map(|v| v[i]).collect(),
        b.fluct_service.iter().map(|v| v[i]).collect(),
    ))
}

/// Values of every scanned process at one instant.
struct Snapshot {
    centered: f64,
    drifted: f64,
    exact: f64,
    arr_centered: f64,
    dbar: Vec<f64>,
    route_centered: Vec<f64>,
}

struct Scanner<'a> {
    traj: &'a Trajectory,
    station: usize,
    kk: usize,
    lam_k: f64,
    nu: f64,
    mu: Vec<f64>,
    p_to_k: Vec<f64>,
    q0: f64,
    quarter: f64,
    share: f64,
    // counters
    q: Vec<f64>,
    busy_time: Vec<f64>,
    departures: Vec<u64>,
    transfers_to_k: Vec<u64>,
    route_idx: Vec<usize>,
    arrivals_k: u64,
    ev_idx: usize,
    // running extrema over left limits and event values
    runmax_arr: f64,
    runmax_route: Vec<f64>,
    runmax_serv_up: Vec<f64>,
    runmax_serv_down: Vec<f64>,
    runinf_drifted: f64,
    runinf_exact: f64,
}

impl<'a> Scanner<'a> {
    fn new(traj: &'a Trajectory, drift: &DriftReport, station: usize) -> Self {
        let kk = traj.station_count();
        Self {
            traj,
            station,
            kk,
            lam_k: drift.lambda[station],
            nu: drift.nu[station],
            mu: drift.mu.clone(),
            p_to_k: (0..kk).map(|l| traj.routing.prob(l, station)).collect(),
            q0: traj.stations[station].initial_queue as f64,
            quarter: 0.25 * drift.nu[station],
            share: 0.25 * drift.nu[station] / kk as f64,
            q: traj.stations.iter().map(|s| s.initial_queue as f64).collect(),
            busy_time: vec![0.0; kk],
            departures: vec![0; kk],
            transfers_to_k: vec![0; kk],
            route_idx: vec![0; kk],
            arrivals_k: 0,
            ev_idx: 0,
            runmax_arr: f64::NEG_INFINITY,
            runmax_route: vec![f64::NEG_INFINITY; kk],
            runmax_serv_up: vec![f64::NEG_INFINITY; kk],
            runmax_serv_down: vec![f64::NEG_INFINITY; kk],
            runinf_drifted: f64::INFINITY,
            runinf_exact: f64::INFINITY,
        }
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        let arr_centered = self.arrivals_k as f64 - self.lam_k * t;
        let mut centered = self.q0 + arr_centered;
        let mut dbar = vec![0.0; self.kk];
        let mut route_centered = vec![0.0; self.kk];
        let mut idle_correction = 0.0;
        for l in 0..self.kk {
            dbar[l] = self.departures[l] as f64 - self.mu[l] * self.busy_time[l];
            route_centered[l] =
                self.transfers_to_k[l] as f64 - self.p_to_k[l] * self.departures[l] as f64;
            centered += route_centered[l] + self.p_to_k[l] * dbar[l];
            idle_correction += self.p_to_k[l] * self.mu[l] * (t - self.busy_time[l]);
        }
        centered -= dbar[self.station];
        let drifted = centered - self.nu * t;
        Snapshot { centered, drifted, exact: drifted - idle_correction, arr_centered, dbar, route_centered }
    }

    /// Fold an instant into the running suprema/infima (`s`-candidates).
    fn absorb(&mut self, snap: &Snapshot, t: f64) {
        self.runmax_arr = self.runmax_arr.max(-snap.arr_centered + self.quarter * t);
        for l in 0..self.kk {
            self.runmax_route[l] = self.runmax_route[l].max(-snap.route_centered[l] + self.share * t);
            self.runmax_serv_up[l] = self.runmax_serv_up[l].max(-snap.dbar[l] + self.share * t);
            self.runmax_serv_down[l] = self.runmax_serv_down[l].max(snap.dbar[l] + self.share * t);
        }
        self.runinf_drifted = self.runinf_drifted.min(snap.drifted);
        self.runinf_exact = self.runinf_exact.min(snap.exact);
    }

    /// Apply every event record stamped `t`.
    fn apply_events_at(&mut self, t: f64) {
        while self.ev_idx < self.traj.events.len() && self.traj.events[self.ev_idx].time == t {
            let ev = &self.traj.events[self.ev_idx];
            self.q[ev.station] = ev.queue_after as f64;
            match ev.kind {
                EventKind::External => {
                    if ev.station == self.station {
                        self.arrivals_k += 1;
                    }
                }
                EventKind::Departure => {
                    let l = ev.station;
                    self.departures[l] += 1;
                    let decision =
                        self.traj.stations[l].routing_decisions.get(self.route_idx[l]).copied().flatten();
                    self.route_idx[l] += 1;
                    if decision == Some(self.station) {
                        self.transfers_to_k[l] += 1;
                    }
                }
                EventKind::Arrival => {}
            }
            self.ev_idx += 1;
        }
    }

    fn emit(&self, t: f64, snap: &Snapshot, left: Option<&Snapshot>, out: &mut MajorantScan) {
        let b = &mut out.bundle;
        b.times.push(t);
        b.queue.push(self.q[self.station]);
        b.centered_queue.push(snap.centered);
        b.drifted.push(snap.drifted);
        b.reflected.push(snap.drifted - self.runinf_drifted.min(0.0));
        b.fluct_arrival.push(self.runmax_arr + snap.arr_centered - self.quarter * t);
        for l in 0..self.kk {
            b.fluct_routing[l].push(self.runmax_route[l] + snap.route_centered[l] - self.share * t);
            let up = snap.dbar[l] + self.runmax_serv_up[l];
            let down = -snap.dbar[l] + self.runmax_serv_down[l];
            b.fluct_service[l].push(up.max(down) - self.share * t);
        }
        b.initial_term.push((self.q0 - self.quarter * t).max(0.0));
        out.exact_input.push(snap.exact);
        out.exact_reflected.push(snap.exact - self.runinf_exact.min(0.0));
        out.exact_input_left.push(left.map_or(f64::NAN, |s| s.exact));
        out.drifted_left.push(left.map_or(f64::NAN, |s| s.drifted));
    }
}

pub(crate) fn scan_majorants(
    traj: &Trajectory,
    drift: &DriftReport,
    station: usize,
    probes: &[f64],
) -> Result<MajorantScan> {
    if station >= traj.station_count() {
        return Err(Error::Precondition(format!("station {station} out of range")));
    }
    let nu = drift.nu[station];
    if nu <= 0.0 {
        return Err(Error::Precondition(format!(
            "station {station} has drift nu = {nu}; the reflection majorants need nu > 0"
        )));
    }
    for &p in probes {
        if !(0.0..=traj.end_time).contains(&p) {
            return Err(Error::Precondition(format!(
                "probe time {p} outside the simulated range [0, {}]",
                traj.end_time
            )));
        }
    }

    let mut grid: Vec<f64> = traj.events.iter().map(|e| e.time).collect();
    grid.extend(probes.iter().copied().filter(|&p| p > 0.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let kk = traj.station_count();
    let n = grid.len() + 1;
    let mut out = MajorantScan {
        bundle: MajorantBundle {
            station,
            nu,
            times: Vec::with_capacity(n),
            queue: Vec::with_capacity(n),
            centered_queue: Vec::with_capacity(n),
            drifted: Vec::with_capacity(n),
            reflected: Vec::with_capacity(n),
            fluct_arrival: Vec::with_capacity(n),
            fluct_routing: vec![Vec::with_capacity(n); kk],
            fluct_service: vec![Vec::with_capacity(n); kk],
            initial_term: Vec::with_capacity(n),
        },
        exact_input: Vec::with_capacity(n),
        exact_reflected: Vec::with_capacity(n),
        exact_input_left: Vec::with_capacity(n),
        drifted_left: Vec::with_capacity(n),
    };

    let mut scan = Scanner::new(traj, drift, station);
    let s0 = scan.snapshot(0.0);
    scan.absorb(&s0, 0.0);
    scan.emit(0.0, &s0, None, &mut out);

    let mut prev_t = 0.0;
    for &t in &grid {
        for l in 0..kk {
            if scan.q[l] > 0.0 {
                scan.busy_time[l] += t - prev_t;
            }
        }
        let left = scan.snapshot(t);
        scan.absorb(&left, t);
        scan.apply_events_at(t);
        let right = scan.snapshot(t);
        scan.absorb(&right, t);
        scan.emit(t, &right, Some(&left), &mut out);
        prev_t = t;
    }

    Ok(out)
}

/// A grid point where a domination inequality failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorantViolation {
    pub station: usize,
    pub time: f64,
    pub queue: f64,
    pub bound: f64,
    pub which: &'static str,
}

/// Check `Q <= reflected majorant` and `Q <= fluctuation sum` at every grid
/// point. Returns all violations beyond `tol`.
pub fn verify_majorization(bundle: &MajorantBundle, tol: f64) -> Vec<MajorantViolation> {
    let mut violations = Vec::new();
    for i in 0..bundle.grid_len() {
        let q = bundle.queue[i];
        if q > bundle.reflected[i] + tol {
            violations.push(MajorantViolation {
                station: bundle.station,
                time: bundle.times[i],
                queue: q,
                bound: bundle.reflected[i],
                which: "reflection",
            });
        }
        let rhs = bundle.fluctuation_rhs(i);
        if q > rhs + tol {
            violations.push(MajorantViolation {
                station: bundle.station,
                time: bundle.times[i],
                queue: q,
                bound: rhs,
                which: "fluctuation",
            });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_traffic, DistributionSpec, NetworkSpec, RoutingMatrix, StationSpec};
    use crate::simulator::{simulate, SimHorizon, SimOptions};
    use proptest::prelude::*;

    #[test]
    fn reflect_nonnegative_nondecreasing_is_identity() {
        let x = StepPath::new(vec![0.0, 1.0, 2.0], vec![0.5, 1.0, 3.0]);
        assert_eq!(skorohod_reflect(&x), x);
    }

    #[test]
    fn reflect_two_step_example() {
        let x = StepPath::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, -1.0]);
        let psi = skorohod_reflect(&x);
        assert_eq!(psi.values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reflect_pure_negative_drift_is_zero() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| -0.3 * t).collect();
        let psi = skorohod_reflect(&StepPath::new(times, values));
        assert!(psi.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn reflect_empty_path() {
        assert!(skorohod_reflect(&StepPath::empty()).is_empty());
    }

    fn random_step_path(seed: u64, len: usize) -> StepPath {
        use rand::Rng;
        let mut rng = crate::primitives::tagged_rng(seed, &[len as u64]);
        let mut t = 0.0;
        let mut times = Vec::with_capacity(len);
        let mut values = Vec::with_capacity(len);
        let mut v = 0.0;
        for _ in 0..len {
            times.push(t);
            values.push(v);
            t += rng.random::<f64>() + 1e-3;
            v += rng.random::<f64>() * 4.0 - 2.0;
        }
        StepPath::new(times, values)
    }

    #[test]
    fn reflection_properties_on_random_paths() {
        for seed in 0..1000u64 {
            let x = random_step_path(seed, 60);
            let psi = skorohod_reflect(&x);
            // nonnegativity
            assert!(psi.values().iter().all(|&v| v >= -1e-12));
            // complementarity: the regulator increases only where psi = 0
            let mut prev_reg = 0.0;
            for i in 0..x.len() {
                let reg = psi.values()[i] - x.values()[i];
                assert!(reg >= prev_reg - 1e-12, "regulator must be nondecreasing");
                if reg > prev_reg + 1e-12 {
                    assert!(psi.values()[i].abs() < 1e-9, "regulator grew away from zero");
                }
                prev_reg = reg;
            }
            // reflection fixes its own range
            let psi2 = skorohod_reflect(&psi);
            for (a, b) in psi.values().iter().zip(psi2.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reflection_is_lipschitz_with_factor_two() {
        use rand::Rng;
        for seed in 0..1000u64 {
            let x = random_step_path(seed, 40);
            let mut rng = crate::primitives::tagged_rng(seed, &[7]);
            let perturbed: Vec<f64> =
                x.values().iter().map(|&v| v + rng.random::<f64>() * 0.6 - 0.3).collect();
            let y = StepPath::new(x.times().to_vec(), perturbed);
            let dx = x
                .values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let (px, py) = (skorohod_reflect(&x), skorohod_reflect(&y));
            let dpsi = px
                .values()
                .iter()
                .zip(py.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dpsi <= 2.0 * dx + 1e-12, "seed {seed}: {dpsi} vs {dx}");
        }
    }

    fn mm1(lambda: f64, mu: f64, initial: u64) -> NetworkSpec {
        NetworkSpec {
            stations: vec![StationSpec {
                arrival: Some(DistributionSpec::exponential(lambda).unwrap()),
                service: DistributionSpec::exponential(mu).unwrap(),
                initial_queue: initial,
            }],
            routing: RoutingMatrix::new(vec![vec![0.0]]).unwrap(),
        }
    }

    #[test]
    fn isolated_station_majorant_is_pure_drift() {
        // station 1 receives nothing: its drifted input is exactly -nu t and
        // the reflected majorant stays at zero
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.5).unwrap()),
                    service: DistributionSpec::exponential(1.0).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: None,
                    service: DistributionSpec::exponential(1.0).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        };
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(50.0)), 3, 0).unwrap();
        let b = build_majorants(&traj, &drift, 1).unwrap();
        let nu = drift.nu[1];
        for i in 0..b.grid_len() {
            assert!((b.drifted[i] + nu * b.times[i]).abs() < 1e-9);
            assert!(b.reflected[i].abs() < 1e-9);
            assert_eq!(b.queue[i], 0.0);
        }
        assert!(verify_majorization(&b, 1e-9).is_empty());
    }

    #[test]
    fn rejects_station_without_positive_drift() {
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.5).unwrap()),
                    service: DistributionSpec::exponential(1.0).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: None,
                    service: DistributionSpec::exponential(1.0).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
        };
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(10.0)), 3, 0).unwrap();
        let err = build_majorants(&traj, &drift, 1).unwrap_err();
        assert!(err.to_string().contains("station 1"));
    }

    #[test]
    fn pure_drain_majorization_holds() {
        let mut spec = mm1(0.5, 1.0, 3);
        spec.stations[0].arrival = Some(DistributionSpec::deterministic(1e6).unwrap());
        spec.stations[0].service = DistributionSpec::deterministic(1.0).unwrap();
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(10.0)), 1, 0).unwrap();
        let b = build_majorants(&traj, &drift, 0).unwrap();
        assert!(verify_majorization(&b, 1e-9).is_empty());
        // drain departures at 1, 2, 3
        assert_eq!(traj.departure_count_at(0, 10.0), 3);
    }

    #[test]
    fn y_components_at_time_zero_vanish() {
        let spec = mm1(0.5, 1.0, 0);
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(20.0)), 5, 0).unwrap();
        let (y_arr, y_route, y_serv) = y_components(&traj, &drift, 0, 0.0).unwrap();
        assert_eq!(y_arr, 0.0);
        assert!(y_route.iter().all(|&v| v == 0.0));
        assert!(y_serv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fluctuation_terms_dominate_queue_at_random_times() {
        let spec = mm1(0.5, 1.0, 0);
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(
            &spec,
            SimOptions::new(SimHorizon::Time(200.0)),
            8,
            0,
        )
        .unwrap();
        use rand::Rng;
        let mut rng = crate::primitives::tagged_rng(31, &[1]);
        for _ in 0..100 {
            let t = rng.random::<f64>() * 200.0;
            let (y_arr, y_route, y_serv) = y_components(&traj, &drift, 0, t).unwrap();
            let rhs = y_arr
                + y_route.iter().sum::<f64>()
                + y_serv.iter().sum::<f64>()
                + (0.0f64 - drift.nu[0] * t / 4.0).max(0.0);
            let q = traj.queue_at(0, t).unwrap() as f64;
            assert!(q <= rhs + 1e-9, "t={t}: queue {q} above fluctuation rhs {rhs}");
        }
    }

    #[test]
    fn exact_input_reflects_back_to_queue() {
        // the chain: psi(exact input) == Q, exact input strongly majorized by
        // the drifted input, and psi preserves the order
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.5).unwrap()),
                    service: DistributionSpec::gamma(2.0, 2.5).unwrap(),
                    initial_queue: 2,
                },
                StationSpec {
                    arrival: Some(DistributionSpec::uniform(0.5, 2.5).unwrap()),
                    service: DistributionSpec::exponential(2.0).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.1, 0.4], vec![0.2, 0.05]]).unwrap(),
        };
        let drift = solve_traffic(&spec).unwrap();
        assert!(drift.strong_drift);
        for rep in 0..5 {
            let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(300.0)), 77, rep).unwrap();
            for k in 0..2 {
                let scan = scan_majorants(&traj, &drift, k, &[]).unwrap();
                for i in 0..scan.bundle.grid_len() {
                    let q = scan.bundle.queue[i];
                    assert!(
                        (scan.exact_reflected[i] - q).abs() < 1e-9,
                        "rep {rep} station {k} t={}: psi(exact) {} vs queue {q}",
                        scan.bundle.times[i],
                        scan.exact_reflected[i]
                    );
                    // strong majorization of increments: exact increments
                    // never exceed drifted increments
                    if i > 0 {
                        let d_exact = scan.exact_input[i] - scan.exact_input[i - 1];
                        let d_drift = scan.bundle.drifted[i] - scan.bundle.drifted[i - 1];
                        assert!(d_exact <= d_drift + 1e-9);
                    }
                    assert!(q <= scan.bundle.reflected[i] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn centered_netflow_identity_against_queue() {
        // Q == C_k - nu t - sum_l p_lk mu_l (t - B_l) + mu_k (t - B_k)
        let spec = mm1(0.5, 1.0, 1);
        let drift = solve_traffic(&spec).unwrap();
        let traj = simulate(&spec, SimOptions::new(SimHorizon::Time(400.0)), 2, 0).unwrap();
        let scan = scan_majorants(&traj, &drift, 0, &[]).unwrap();
        for i in 0..scan.bundle.grid_len() {
            let t = scan.bundle.times[i];
            let b0 = traj.busy_time(0, t).unwrap();
            let rhs = scan.exact_input[i] + drift.mu[0] * (t - b0);
            assert!((scan.bundle.queue[i] - rhs).abs() < 1e-9, "identity failed at {t}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        // sample-path majorization on M/M/1 across seeds
        #[test]
        fn mm1_majorization_zero_violations(rep in 0u64..200) {
            let spec = mm1(0.5, 1.0, 0);
            let drift = solve_traffic(&spec).unwrap();
            let traj = simulate(&spec, SimOptions::new(SimHorizon::Events(2000)), 54, rep).unwrap();
            let b = build_majorants(&traj, &drift, 0).unwrap();
            prop_assert!(verify_majorization(&b, 1e-9).is_empty());
        }
    }
}
