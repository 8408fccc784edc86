//! Linear DC power flow: unit voltage magnitudes, no reactive power, no
//! resistance. Branch weights are `1/(x·tap)`; phase shifters enter as
//! equivalent nodal injections.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acpf::{BranchRow, BusRow, SolutionDoc, FORMAT_VERSION};
use crate::linalg::{LinalgError, Lu};
use crate::netmodel::{net_injections, Network, NetworkError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcpfError {
    #[error("DC system is singular (disconnected network?): {0}")]
    SingularSystem(LinalgError),
    #[error("branch {0} is in service with zero reactance")]
    ZeroReactance(usize),
    #[error("injection vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcSolution {
    /// radians, slack exactly 0
    pub va: Vec<f64>,
    /// MW, from-side
    pub branch_p: Vec<f64>,
}

/// Factored reduced susceptance matrix for one topology. Reusable across
/// any number of injection vectors.
#[derive(Debug, Clone)]
pub struct DcModel {
    slack: usize,
    n: usize,
    base_mva: f64,
    /// per in-service branch: (index, from, to, 1/(x·tap), shift rad)
    branches: Vec<(usize, usize, usize, f64, f64)>,
    n_branches: usize,
    lu: Option<Lu>,
}

impl DcModel {
    pub fn new(net: &Network) -> Result<DcModel, DcpfError> {
        let slack = net.slack_index()?;
        let n = net.n_buses();
        let mut branches = Vec::new();
        for (k, br) in net.branches().iter().enumerate() {
            if !br.status {
                continue;
            }
            if br.x == 0.0 {
                return Err(DcpfError::ZeroReactance(k));
            }
            let (f, t) = net.branch_ends(k);
            branches.push((k, f, t, 1.0 / (br.x * br.tap), br.shift.to_radians()));
        }
        let reduced = |i: usize| {
            if i < slack {
                Some(i)
            } else if i > slack {
                Some(i - 1)
            } else {
                None
            }
        };
        let mut bp = Array2::<f64>::zeros((n - 1, n - 1));
        for &(_, f, t, w, _) in &branches {
            let (rf, rt) = (reduced(f), reduced(t));
            if let Some(a) = rf {
                bp[[a, a]] += w;
            }
            if let Some(b) = rt {
                bp[[b, b]] += w;
            }
            if let (Some(a), Some(b)) = (rf, rt) {
                bp[[a, b]] -= w;
                bp[[b, a]] -= w;
            }
        }
        let lu = if n > 1 {
            Some(Lu::factor(bp).map_err(DcpfError::SingularSystem)?)
        } else {
            None
        };
        Ok(DcModel {
            slack,
            n,
            base_mva: net.base_mva(),
            branches,
            n_branches: net.n_branches(),
            lu,
        })
    }

    /// Solves for per-unit net injections `p` (the slack entry is ignored).
    pub fn solve(&self, p: &[f64]) -> Result<DcSolution, DcpfError> {
        if p.len() != self.n {
            return Err(DcpfError::DimensionMismatch {
                expected: self.n,
                got: p.len(),
            });
        }
        let mut rhs = p.to_vec();
        for &(_, f, t, w, shift) in &self.branches {
            rhs[f] -= w * shift;
            rhs[t] += w * shift;
        }
        rhs.remove(self.slack);
        let mut va = vec![0.0; self.n];
        if let Some(lu) = &self.lu {
            let theta = lu.solve(&rhs).map_err(DcpfError::SingularSystem)?;
            for (r, th) in theta.iter().enumerate() {
                va[if r < self.slack { r } else { r + 1 }] = *th;
            }
        }
        let mut branch_p = vec![0.0; self.n_branches];
        for &(k, f, t, w, shift) in &self.branches {
            branch_p[k] = self.base_mva * w * (va[f] - va[t] + shift);
        }
        Ok(DcSolution { va, branch_p })
    }
}

pub fn solve_dc(net: &Network) -> Result<DcSolution, DcpfError> {
    let (p, _) = net_injections(net);
    DcModel::new(net)?.solve(&p)
}

pub fn solution_doc(net: &Network, sol: &DcSolution) -> SolutionDoc {
    SolutionDoc {
        format_version: FORMAT_VERSION,
        method: "dc".to_string(),
        base_mva: net.base_mva(),
        iterations: None,
        max_mismatch_pu: None,
        buses: net
            .buses()
            .iter()
            .enumerate()
            .map(|(i, b)| BusRow {
                id: b.id,
                vm_pu: 1.0,
                va_deg: sol.va[i].to_degrees(),
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
                p_from_mw: sol.branch_p[k],
                q_from_mvar: None,
                p_to_mw: -sol.branch_p[k],
                q_to_mvar: None,
            })
            .collect(),
    }
}

/// Net flow leaving each bus through its branches, per unit.
pub fn nodal_outflow(net: &Network, branch_p_mw: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; net.n_buses()];
    for (k, p) in branch_p_mw.iter().enumerate() {
        let (f, t) = net.branch_ends(k);
        out[f] += p / net.base_mva();
        out[t] -= p / net.base_mva();
    }
    out
}
