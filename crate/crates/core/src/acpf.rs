//! Full AC power flow.
//!
//! [`solve_nr`] is the production solver (polar Newton-Raphson on the
//! nodal power balance). [`solve_gs`] is a classic Gauss-Seidel sweep kept as
//! an independent cross-check; it shares nothing with the Newton path except
//! the admittance matrix and the mismatch definition.
//!
//! Generator reactive limits are not enforced: PV buses hold their setpoint
//! whatever reactive output that requires.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Lu};
use crate::netmodel::{
    build_ybus, net_injections, AdmittanceMatrix, BusKind, Network, NetworkError,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcpfError {
    #[error("no convergence after {iterations} iterations (max mismatch {residual:e} pu)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian: {0}")]
    SingularJacobian(LinalgError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub flat_start: bool,
}

impl SolverOptions {
    pub fn newton() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 30,
            flat_start: true,
        }
    }

    pub fn gauss_seidel() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 5000,
            flat_start: true,
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::newton()
    }
}

/// Bus voltages in polar form; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl PfState {
    pub fn flat(n: usize) -> Self {
        PfState {
            vm: vec![1.0; n],
            va: vec![0.0; n],
        }
    }

    fn phasors(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenBusOutput {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub state: PfState,
    /// Total generator output at each bus carrying an in-service generator.
    pub gen_output: Vec<GenBusOutput>,
    pub branch_p_from: Vec<f64>,
    pub branch_q_from: Vec<f64>,
    pub branch_p_to: Vec<f64>,
    pub branch_q_to: Vec<f64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Calculated injections `(P_i, Q_i)` at every bus for the given state.
pub fn bus_power(state: &PfState, y: &AdmittanceMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in 0..n {
            let (g, b) = (y.g[[i, k]], y.b[[i, k]]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let t = state.va[i] - state.va[k];
            let (s, c) = t.sin_cos();
            let vv = state.vm[i] * state.vm[k];
            pi += vv * (g * c + b * s);
            qi += vv * (g * s - b * c);
        }
        p[i] = pi;
        q[i] = qi;
    }
    (p, q)
}

/// Power-balance residual: `ΔP` for every non-slack bus followed by `ΔQ` for
/// every PQ bus, both in bus order.
pub fn mismatch(
    state: &PfState,
    y: &AdmittanceMatrix,
    p_sched: &[f64],
    q_sched: &[f64],
    kinds: &[BusKind],
) -> Vec<f64> {
    let (p, q) = bus_power(state, y);
    let mut out = Vec::with_capacity(2 * kinds.len());
    for (i, k) in kinds.iter().enumerate() {
        if *k != BusKind::Slack {
            out.push(p_sched[i] - p[i]);
        }
    }
    for (i, k) in kinds.iter().enumerate() {
        if *k == BusKind::PQ {
            out.push(q_sched[i] - q[i]);
        }
    }
    out
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(
        0.0_f64,
        |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) },
    )
}

struct Setup {
    y: AdmittanceMatrix,
    kinds: Vec<BusKind>,
    p_sched: Vec<f64>,
    q_sched: Vec<f64>,
    slack: usize,
    start: PfState,
}

fn setup(net: &Network, opts: &SolverOptions) -> Result<Setup, AcpfError> {
    let slack = net.slack_index()?;
    let setpoints = net.voltage_setpoints();
    let kinds: Vec<BusKind> = net
        .buses()
        .iter()
        .zip(&setpoints)
        .map(|(b, sp)| match (b.kind, sp) {
            (BusKind::PV, None) => BusKind::PQ,
            (k, _) => k,
        })
        .collect();
    let (p_sched, q_sched) = net_injections(net);
    let slack_angle = net.buses()[slack].a_init;
    let mut start = PfState::flat(net.n_buses());
    for (i, b) in net.buses().iter().enumerate() {
        if !opts.flat_start {
            start.vm[i] = b.v_init;
            start.va[i] = (b.a_init - slack_angle).to_radians();
        }
        if kinds[i] != BusKind::PQ {
            start.vm[i] = setpoints[i].unwrap_or(b.v_init);
        }
    }
    start.va[slack] = 0.0;
    Ok(Setup {
        y: build_ybus(net),
        kinds,
        p_sched,
        q_sched,
        slack,
        start,
    })
}

/// Jacobian of `[P(non-slack); Q(PQ)]` with respect to
/// `[θ(non-slack); |V|(PQ)]`.
fn jacobian(
    state: &PfState,
    y: &AdmittanceMatrix,
    p: &[f64],
    q: &[f64],
    angle_buses: &[usize],
    mag_buses: &[usize],
) -> Array2<f64> {
    let na = angle_buses.len();
    let dim = na + mag_buses.len();
    let mut jac = Array2::<f64>::zeros((dim, dim));
    let (vm, va) = (&state.vm, &state.va);

    // dP_i/dθ_k, dQ_i/dθ_k, dP_i/dV_k, dQ_i/dV_k for a single (i, k) pair.
    let partials = |i: usize, k: usize| -> [f64; 4] {
        let (g, b) = (y.g[[i, k]], y.b[[i, k]]);
        if i == k {
            return [
                -q[i] - b * vm[i] * vm[i],
                p[i] - g * vm[i] * vm[i],
                p[i] / vm[i] + g * vm[i],
                q[i] / vm[i] - b * vm[i],
            ];
        }
        let (s, c) = (va[i] - va[k]).sin_cos();
        let gs_bc = g * s - b * c;
        let gc_bs = g * c + b * s;
        [
            vm[i] * vm[k] * gs_bc,
            -vm[i] * vm[k] * gc_bs,
            vm[i] * gc_bs,
            vm[i] * gs_bc,
        ]
    };

    let rows = angle_buses
        .iter()
        .map(|&i| (i, false))
        .chain(mag_buses.iter().map(|&i| (i, true)));
    for (r, (i, is_q)) in rows.enumerate() {
        for (c, &k) in angle_buses.iter().enumerate() {
            let d = partials(i, k);
            jac[[r, c]] = if is_q { d[1] } else { d[0] };
        }
        for (c, &k) in mag_buses.iter().enumerate() {
            let d = partials(i, k);
            jac[[r, na + c]] = if is_q { d[3] } else { d[2] };
        }
    }
    jac
}

fn finish(
    net: &Network,
    s: &Setup,
    state: PfState,
    iterations: usize,
    max_mismatch: f64,
) -> PfSolution {
    let base = net.base_mva();
    let (p, q) = bus_power(&state, &s.y);
    let mut gen_output: Vec<GenBusOutput> = Vec::new();
    for g in net.gens().iter().filter(|g| g.status) {
        if gen_output.iter().any(|o| o.bus == g.bus) {
            continue;
        }
        let i = net.bus_index(g.bus).expect("validated");
        let bus = &net.buses()[i];
        let q_mvar = q[i] * base + bus.q_demand;
        let p_mw = if i == s.slack {
            p[i] * base + bus.p_demand
        } else {
            net.gens()
                .iter()
                .filter(|h| h.status && h.bus == g.bus)
                .map(|h| h.p_gen)
                .sum()
        };
        gen_output.push(GenBusOutput {
            bus: g.bus,
            p_mw,
            q_mvar,
        });
    }
    let flows = branch_flows_ac(&state, net);
    PfSolution {
        state,
        gen_output,
        branch_p_from: flows.p_from,
        branch_q_from: flows.q_from,
        branch_p_to: flows.p_to,
        branch_q_to: flows.q_to,
        iterations,
        max_mismatch,
    }
}

pub fn solve_nr(net: &Network, opts: &SolverOptions) -> Result<PfSolution, AcpfError> {
    let s = setup(net, opts)?;
    let angle_buses: Vec<usize> = (0..s.kinds.len()).filter(|&i| i != s.slack).collect();
    let mag_buses: Vec<usize> = (0..s.kinds.len())
        .filter(|&i| s.kinds[i] == BusKind::PQ)
        .collect();
    let na = angle_buses.len();

    let mut state = s.start.clone();
    let mut f = mismatch(&state, &s.y, &s.p_sched, &s.q_sched, &s.kinds);
    let mut norm = inf_norm(&f);
    let mut iterations = 0;
    while !(norm < opts.tol) {
        if iterations >= opts.max_iter || !norm.is_finite() {
            return Err(AcpfError::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        let (p, q) = bus_power(&state, &s.y);
        let jac = jacobian(&state, &s.y, &p, &q, &angle_buses, &mag_buses);
        let dx = Lu::factor(jac)
            .and_then(|lu| lu.solve(&f))
            .map_err(AcpfError::SingularJacobian)?;
        for (c, &i) in angle_buses.iter().enumerate() {
            state.va[i] += dx[c];
        }
        for (c, &i) in mag_buses.iter().enumerate() {
            state.vm[i] += dx[na + c];
        }
        iterations += 1;
        f = mismatch(&state, &s.y, &s.p_sched, &s.q_sched, &s.kinds);
        norm = inf_norm(&f);
    }
    Ok(finish(net, &s, state, iterations, norm))
}

pub fn solve_gs(net: &Network, opts: &SolverOptions) -> Result<PfSolution, AcpfError> {
    let s = setup(net, opts)?;
    let n = s.kinds.len();
    let y: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|k| s.y.get(i, k)).collect())
        .collect();
    let vset = s.start.vm.clone();
    let mut v = s.start.phasors();
    let mut q_sched = s.q_sched.clone();

    let residual = |v: &[Complex64]| {
        let state = PfState {
            vm: v.iter().map(|z| z.norm()).collect(),
            va: v.iter().map(|z| z.arg()).collect(),
        };
        let norm = inf_norm(&mismatch(&state, &s.y, &s.p_sched, &s.q_sched, &s.kinds));
        (state, norm)
    };

    let (mut state, mut norm) = residual(&v);
    let mut iterations = 0;
    while !(norm < opts.tol) {
        if iterations >= opts.max_iter || !norm.is_finite() {
            return Err(AcpfError::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        for i in 0..n {
            if s.kinds[i] == BusKind::Slack {
                continue;
            }
            let current: Complex64 = (0..n).map(|k| y[i][k] * v[k]).sum();
            if s.kinds[i] == BusKind::PV {
                q_sched[i] = (v[i] * current.conj()).im;
            }
            let others = current - y[i][i] * v[i];
            let s_conj = Complex64::new(s.p_sched[i], -q_sched[i]);
            let mut vi = (s_conj / v[i].conj() - others) / y[i][i];
            if s.kinds[i] == BusKind::PV {
                vi *= vset[i] / vi.norm();
            }
            v[i] = vi;
        }
        iterations += 1;
        (state, norm) = residual(&v);
    }
    state.va[s.slack] = 0.0;
    Ok(finish(net, &s, state, iterations, norm))
}

/// Terminal flows per branch; MW and MVAr.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlows {
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
}

pub fn branch_flows_ac(state: &PfState, net: &Network) -> BranchFlows {
    let v = state.phasors();
    let m = net.n_branches();
    let mut out = BranchFlows {
        p_from: vec![0.0; m],
        q_from: vec![0.0; m],
        p_to: vec![0.0; m],
        q_to: vec![0.0; m],
    };
    let base = net.base_mva();
    for (k, br) in net.branches().iter().enumerate() {
        if !br.status {
            continue;
        }
        let (f, t) = net.branch_ends(k);
        let (yff, yft, ytf, ytt) = br.two_port();
        let sf = v[f] * (yff * v[f] + yft * v[t]).conj() * base;
        let st = v[t] * (ytf * v[f] + ytt * v[t]).conj() * base;
        out.p_from[k] = sf.re;
        out.q_from[k] = sf.im;
        out.p_to[k] = st.re;
        out.q_to[k] = st.im;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRow {
    pub id: u32,
    pub vm_pu: f64,
    pub va_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    /// 1-based position in the case file.
    pub index: usize,
    pub from: u32,
    pub to: u32,
    pub in_service: bool,
    pub p_from_mw: f64,
    pub q_from_mvar: Option<f64>,
    pub p_to_mw: f64,
    pub q_to_mvar: Option<f64>,
}

/// JSON document shared by the AC and DC solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub format_version: u32,
    pub method: String,
    pub base_mva: f64,
    pub iterations: Option<usize>,
    pub max_mismatch_pu: Option<f64>,
    pub buses: Vec<BusRow>,
    pub branches: Vec<BranchRow>,
}

impl SolutionDoc {
    pub fn from_ac(net: &Network, sol: &PfSolution, method: &str) -> SolutionDoc {
        SolutionDoc {
            format_version: FORMAT_VERSION,
            method: method.to_string(),
            base_mva: net.base_mva(),
            iterations: Some(sol.iterations),
            max_mismatch_pu: Some(sol.max_mismatch),
            buses: net
                .buses()
                .iter()
                .enumerate()
                .map(|(i, b)| BusRow {
                    id: b.id,
                    vm_pu: sol.state.vm[i],
                    va_deg: sol.state.va[i].to_degrees(),
                })
                .collect(),
            branches: net
                .branches()
                .iter()
                .enumerate()
                .map(|(k, br)| BranchRow {
                    index: k + 1,
                    from: br.from_bus,
                    to: br.to_bus,
                    in_service: br.status,
                    p_from_mw: sol.branch_p_from[k],
                    q_from_mvar: Some(sol.branch_q_from[k]),
                    p_to_mw: sol.branch_p_to[k],
                    q_to_mvar: Some(sol.branch_q_to[k]),
                })
                .collect(),
        }
    }
}
