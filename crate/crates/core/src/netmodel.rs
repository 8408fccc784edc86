//! Per-unit network model and nodal admittance matrix construction.
//!
//! Bus ids are arbitrary positive integers taken from the case file; on
//! construction they are mapped to contiguous 0-based indices which every
//! matrix and vector in this crate uses.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("base MVA must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("bus {0}: initial voltage must be positive")]
    BadInitialVoltage(u32),
    #[error("bus {0}: v_min exceeds v_max")]
    BadVoltageBounds(u32),
    #[error("{what} references unknown bus {bus}")]
    DanglingBus { what: String, bus: u32 },
    #[error("branch {index} connects bus {bus} to itself")]
    SelfLoop { index: usize, bus: u32 },
    #[error("branch {index} has non-positive tap ratio {tap}")]
    BadTap { index: usize, tap: f64 },
    #[error("branch {index} is in service with zero impedance")]
    ZeroImpedanceBranch { index: usize },
    #[error("generator {index}: inconsistent limits")]
    BadGenLimits { index: usize },
    #[error("network has no slack bus")]
    NoSlack,
    #[error("network has {0} slack buses")]
    MultipleSlack(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    PQ,
    PV,
    Slack,
}

impl BusKind {
    /// Maps the conventional case-file type code (1 = PQ, 2 = PV, 3 = reference).
    pub fn from_code(code: i64) -> Option<BusKind> {
        match code {
            1 => Some(BusKind::PQ),
            2 => Some(BusKind::PV),
            3 => Some(BusKind::Slack),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// MW
    pub p_demand: f64,
    /// MVAr
    pub q_demand: f64,
    /// MW consumed at 1 pu voltage
    pub shunt_g: f64,
    /// MVAr injected at 1 pu voltage
    pub shunt_b: f64,
    pub v_init: f64,
    /// degrees
    pub a_init: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Bus {
    /// A flat PQ bus with no load, handy for building small networks in code.
    pub fn new(id: u32, kind: BusKind) -> Bus {
        Bus {
            id,
            kind,
            p_demand: 0.0,
            q_demand: 0.0,
            shunt_g: 0.0,
            shunt_b: 0.0,
            v_init: 1.0,
            a_init: 0.0,
            v_min: 0.9,
            v_max: 1.1,
        }
    }

    pub fn with_load(mut self, p_mw: f64, q_mvar: f64) -> Bus {
        self.p_demand = p_mw;
        self.q_demand = q_mvar;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// total line charging susceptance, pu
    pub b_charge: f64,
    /// off-nominal turns ratio, 1.0 for lines
    pub tap: f64,
    /// phase shift in degrees
    pub shift: f64,
    pub status: bool,
    pub rate_a: f64,
}

impl Branch {
    pub fn line(from_bus: u32, to_bus: u32, r: f64, x: f64) -> Branch {
        Branch {
            from_bus,
            to_bus,
            r,
            x,
            b_charge: 0.0,
            tap: 1.0,
            shift: 0.0,
            status: true,
            rate_a: 0.0,
        }
    }

    /// Complex turns ratio `tap * e^{j shift}`.
    pub fn tap_complex(&self) -> Complex64 {
        Complex64::from_polar(self.tap, self.shift.to_radians())
    }

    /// Two-port admittances `(yff, yft, ytf, ytt)` of the standard pi model
    /// with an ideal phase-shifting transformer at the from end.
    pub fn two_port(&self) -> (Complex64, Complex64, Complex64, Complex64) {
        let ys = Complex64::new(self.r, self.x).inv();
        let half_charge = Complex64::new(0.0, self.b_charge / 2.0);
        let tau = self.tap_complex();
        let ytt = ys + half_charge;
        let yff = ytt / (self.tap * self.tap);
        let yft = -ys / tau.conj();
        let ytf = -ys / tau;
        (yff, yft, ytf, ytt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    /// MW
    pub p_gen: f64,
    /// MVAr
    pub q_gen: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub status: bool,
}

impl Generator {
    pub fn new(bus: u32, p_gen: f64, v_set: f64) -> Generator {
        Generator {
            bus,
            p_gen,
            q_gen: 0.0,
            v_set,
            q_min: -9999.0,
            q_max: 9999.0,
            p_min: 0.0,
            p_max: 9999.0,
            status: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkData {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    gens: Vec<Generator>,
}

/// Immutable per-unit network.
///
/// Construction checks the structural invariants (unique ids, resolvable
/// references, positive taps and base). Slack count and connectivity are
/// checked separately by [`crate::caseparse::validate`] and by the solvers so
/// that malformed networks can still be inspected and diagnosed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkData", into = "NetworkData")]
pub struct Network {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    gens: Vec<Generator>,
    index: HashMap<u32, usize>,
}

impl TryFrom<NetworkData> for Network {
    type Error = NetworkError;
    fn try_from(d: NetworkData) -> Result<Self, Self::Error> {
        Network::new(d.base_mva, d.buses, d.branches, d.gens)
    }
}

impl From<Network> for NetworkData {
    fn from(n: Network) -> Self {
        NetworkData {
            base_mva: n.base_mva,
            buses: n.buses,
            branches: n.branches,
            gens: n.gens,
        }
    }
}

impl Network {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        gens: Vec<Generator>,
    ) -> Result<Network, NetworkError> {
        if !(base_mva > 0.0) {
            return Err(NetworkError::BadBaseMva(base_mva));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if !(bus.v_init > 0.0) {
                return Err(NetworkError::BadInitialVoltage(bus.id));
            }
            if bus.v_min > bus.v_max {
                return Err(NetworkError::BadVoltageBounds(bus.id));
            }
        }
        for (i, br) in branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(NetworkError::DanglingBus {
                        what: format!("branch {i}"),
                        bus: end,
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(NetworkError::SelfLoop {
                    index: i,
                    bus: br.from_bus,
                });
            }
            if !(br.tap > 0.0) {
                return Err(NetworkError::BadTap {
                    index: i,
                    tap: br.tap,
                });
            }
            if br.status && br.r == 0.0 && br.x == 0.0 {
                return Err(NetworkError::ZeroImpedanceBranch { index: i });
            }
        }
        for (i, g) in gens.iter().enumerate() {
            if !index.contains_key(&g.bus) {
                return Err(NetworkError::DanglingBus {
                    what: format!("generator {i}"),
                    bus: g.bus,
                });
            }
            if g.q_min > g.q_max || g.p_min > g.p_max {
                return Err(NetworkError::BadGenLimits { index: i });
            }
        }
        Ok(Network {
            base_mva,
            buses,
            branches,
            gens,
            index,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Internal index of an external bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Internal `(from, to)` indices of branch `k`.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        let br = &self.branches[k];
        (self.index[&br.from_bus], self.index[&br.to_bus])
    }

    pub fn slack_index(&self) -> Result<usize, NetworkError> {
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        match slacks.len() {
            0 => Err(NetworkError::NoSlack),
            1 => Ok(slacks[0]),
            n => Err(NetworkError::MultipleSlack(n)),
        }
    }

    pub fn kinds(&self) -> Vec<BusKind> {
        self.buses.iter().map(|b| b.kind).collect()
    }

    /// Regulated voltage magnitude per bus: the setpoint of the first
    /// in-service generator for PV and slack buses, `None` elsewhere.
    pub fn voltage_setpoints(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.buses.len()];
        for g in self.gens.iter().filter(|g| g.status) {
            let i = self.index[&g.bus];
            if self.buses[i].kind != BusKind::PQ && out[i].is_none() {
                out[i] = Some(g.v_set);
            }
        }
        out
    }

    /// Copy of this network with the per-bus and per-generator data replaced
    /// through the supplied closures. Topology is preserved.
    pub fn map_injections(
        &self,
        mut bus_fn: impl FnMut(usize, &mut Bus),
        mut gen_fn: impl FnMut(usize, &mut Generator),
    ) -> Network {
        let mut out = self.clone();
        for (i, b) in out.buses.iter_mut().enumerate() {
            bus_fn(i, b);
        }
        for (i, g) in out.gens.iter_mut().enumerate() {
            gen_fn(i, g);
        }
        out
    }

    /// Same network with branch `k`'s status replaced.
    pub fn with_branch_status(&self, k: usize, status: bool) -> Network {
        let mut out = self.clone();
        out.branches[k].status = status;
        out
    }
}

/// Dense nodal admittance matrix `Y = G + jB` in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: Array2<f64>,
    pub b: Array2<f64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        Complex64::new(self.g[[i, k]], self.b[[i, k]])
    }
}

pub fn build_ybus(net: &Network) -> AdmittanceMatrix {
    let n = net.n_buses();
    let mut g = Array2::<f64>::zeros((n, n));
    let mut b = Array2::<f64>::zeros((n, n));
    let mut add = |i: usize, k: usize, y: Complex64| {
        g[[i, k]] += y.re;
        b[[i, k]] += y.im;
    };
    for (k, br) in net.branches().iter().enumerate() {
        if !br.status {
            continue;
        }
        let (f, t) = net.branch_ends(k);
        let (yff, yft, ytf, ytt) = br.two_port();
        add(f, f, yff);
        add(f, t, yft);
        add(t, f, ytf);
        add(t, t, ytt);
    }
    for (i, bus) in net.buses().iter().enumerate() {
        add(
            i,
            i,
            Complex64::new(bus.shunt_g, bus.shunt_b) / net.base_mva(),
        );
    }
    AdmittanceMatrix { g, b }
}

/// Scheduled per-unit injections: net active power (generation minus
/// demand) and the load-only reactive injection. Generator reactive output
/// is a solver result and is not included.
pub fn net_injections(net: &Network) -> (Vec<f64>, Vec<f64>) {
    let base = net.base_mva();
    let mut p: Vec<f64> = net.buses().iter().map(|b| -b.p_demand).collect();
    for g in net.gens().iter().filter(|g| g.status) {
        p[net.bus_index(g.bus).expect("validated")] += g.p_gen;
    }
    let p = p.into_iter().map(|v| v / base).collect();
    let q = net.buses().iter().map(|b| -b.q_demand / base).collect();
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_bus(x: f64, b_charge: f64) -> Network {
        let mut br = Branch::line(1, 2, 0.0, x);
        br.b_charge = b_charge;
        Network::new(
            100.0,
            vec![Bus::new(1, BusKind::Slack), Bus::new(2, BusKind::PQ)],
            vec![br],
            vec![Generator::new(1, 0.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_reactance() {
        let y = build_ybus(&two_bus(0.1, 0.0));
        assert!((y.b[[0, 1]] - 10.0).abs() < 1e-12);
        assert!((y.b[[0, 0]] + 10.0).abs() < 1e-12);
        assert!(y.g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn half_charging_on_diagonals() {
        let y = build_ybus(&two_bus(0.1, 0.02));
        assert!((y.b[[0, 0]] + 9.99).abs() < 1e-12);
        assert!((y.b[[1, 1]] + 9.99).abs() < 1e-12);
    }

    #[test]
    fn shunts_scaled_by_base() {
        let mut buses = vec![Bus::new(1, BusKind::Slack), Bus::new(2, BusKind::PQ)];
        buses[1].shunt_b = 19.0;
        buses[1].shunt_g = 5.0;
        let net = Network::new(100.0, buses, vec![Branch::line(1, 2, 0.0, 0.1)], vec![]).unwrap();
        let y = build_ybus(&net);
        assert!((y.b[[1, 1]] - (-10.0 + 0.19)).abs() < 1e-12);
        assert!((y.g[[1, 1]] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn tap_and_shift_placement() {
        let mut br = Branch::line(1, 2, 0.0, 0.1);
        br.tap = 1.05;
        br.shift = 10.0;
        let net = Network::new(
            100.0,
            vec![Bus::new(1, BusKind::Slack), Bus::new(2, BusKind::PQ)],
            vec![br.clone()],
            vec![],
        )
        .unwrap();
        let y = build_ybus(&net);
        let ys = Complex64::new(0.0, -10.0);
        let tau = br.tap_complex();
        assert!((y.get(0, 0) - ys / (1.05 * 1.05)).norm() < 1e-12);
        assert!((y.get(1, 1) - ys).norm() < 1e-12);
        assert!((y.get(0, 1) + ys / tau.conj()).norm() < 1e-12);
        assert!((y.get(1, 0) + ys / tau).norm() < 1e-12);
        // shifters break symmetry
        assert!((y.get(0, 1) - y.get(1, 0)).norm() > 1e-3);
    }

    #[test]
    fn out_of_service_matches_removal() {
        let buses = vec![
            Bus::new(1, BusKind::Slack),
            Bus::new(2, BusKind::PQ),
            Bus::new(3, BusKind::PQ),
        ];
        let lines = vec![
            Branch::line(1, 2, 0.01, 0.1),
            Branch::line(2, 3, 0.02, 0.2),
            Branch::line(1, 3, 0.03, 0.15),
        ];
        let full = Network::new(100.0, buses.clone(), lines.clone(), vec![]).unwrap();
        let off = full.with_branch_status(1, false);
        let removed = Network::new(
            100.0,
            buses,
            vec![lines[0].clone(), lines[2].clone()],
            vec![],
        )
        .unwrap();
        assert_eq!(build_ybus(&off), build_ybus(&removed));
    }

    #[test]
    fn zero_impedance_rejected() {
        let err = Network::new(
            100.0,
            vec![Bus::new(1, BusKind::Slack), Bus::new(2, BusKind::PQ)],
            vec![Branch::line(1, 2, 0.0, 0.0)],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, NetworkError::ZeroImpedanceBranch { index: 0 });
    }

    #[test]
    fn dangling_reference_rejected() {
        let err = Network::new(
            100.0,
            vec![Bus::new(1, BusKind::Slack)],
            vec![Branch::line(1, 7, 0.0, 0.1)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::DanglingBus { bus: 7, .. }));
    }

    #[test]
    fn injections() {
        let mut buses = vec![
            Bus::new(1, BusKind::Slack),
            Bus::new(2, BusKind::PQ).with_load(100.0, 30.0),
            Bus::new(3, BusKind::PQ),
        ];
        buses[0].p_demand = 0.0;
        let net = Network::new(
            100.0,
            buses,
            vec![Branch::line(1, 2, 0.0, 0.1), Branch::line(2, 3, 0.0, 0.1)],
            vec![Generator::new(2, 50.0, 1.0)],
        )
        .unwrap();
        let (p, q) = net_injections(&net);
        assert!((p[1] + 0.5).abs() < 1e-15);
        assert!((q[1] + 0.3).abs() < 1e-15);
        assert_eq!((p[2], q[2]), (0.0, 0.0));
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let net = two_bus(0.1, 0.0);
        let s = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.bus_index(2), Some(1));
    }
}
