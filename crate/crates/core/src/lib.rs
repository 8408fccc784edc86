//! Power-flow toolkit: MATPOWER case parsing, Newton-Raphson and
//! Gauss-Seidel AC power flow, DC power flow, labelled dataset generation,
//! and a multilayer-perceptron surrogate scored against both solvers.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acpf;
pub mod caseparse;
pub mod dataset;
pub mod dcpf;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod netmodel;
pub mod pipeline;
pub mod seeds;

pub use acpf::{solve_gs, solve_nr, PfSolution, PfState, SolverOptions};
pub use caseparse::{parse_case, validate, ParseDiagnostic};
pub use dataset::{
    generate_samples, GenerateOptions, NormScaler, SampleSet, SampleSetFile, SplitRatios,
};
pub use dcpf::{solve_dc, DcSolution};
pub use metrics::{EvalReport, StatSummary};
pub use mlp::{MlpModel, TrainConfig, TrainTrace};
pub use netmodel::{build_ybus, AdmittanceMatrix, Branch, Bus, BusKind, Generator, Network};
pub use pipeline::{Checkpoint, ModelConfig};
