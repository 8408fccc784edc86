//! Labelled sample generation, min-max scaling and train/val/test splits.
//!
//! Sample layout (all buses and branches in case-file order):
//!
//! * input:  `[|V| setpoint per bus ∥ P per bus ∥ Q per bus]`, per unit.
//!   PQ buses report the flat-start magnitude 1.0; `P` is scheduled
//!   generation minus demand; `Q` is the load-only injection `-Qd`.
//! * output: `[|V| per bus (pu) ∥ from-side P per branch (MW)]` from the
//!   Newton-Raphson solution of the perturbed case.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acpf::{solve_nr, SolverOptions};
use crate::netmodel::{net_injections, BusKind, Network, NetworkError};
use crate::seeds;

pub const FORMAT_VERSION: u32 = 1;

/// Attempts per sample before the whole generation is abandoned.
const MAX_ATTEMPTS_PER_SAMPLE: usize = 100;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("too many rejected draws ({rejected} for {count} samples)")]
    TooManyRejections { rejected: usize, count: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty sample set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_buses: usize,
    pub n_branches: usize,
}

impl Layout {
    pub fn of(net: &Network) -> Layout {
        Layout {
            n_buses: net.n_buses(),
            n_branches: net.n_branches(),
        }
    }

    pub fn input_len(&self) -> usize {
        3 * self.n_buses
    }

    pub fn output_len(&self) -> usize {
        self.n_buses + self.n_branches
    }

    /// Output positions holding voltage magnitudes.
    pub fn vm_range(&self) -> std::ops::Range<usize> {
        0..self.n_buses
    }

    /// Output positions holding branch flows.
    pub fn flow_range(&self) -> std::ops::Range<usize> {
        self.n_buses..self.output_len()
    }

    /// Input positions holding net active injections.
    pub fn p_input_range(&self) -> std::ops::Range<usize> {
        self.n_buses..2 * self.n_buses
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub count: usize,
    /// Half-width of the uniform perturbation factor, e.g. 0.1 for ±10%.
    pub perturb: f64,
    pub seed: u64,
    /// Also perturb PV/slack voltage setpoints; otherwise only demand moves.
    pub perturb_voltage: bool,
    pub solver: SolverOptions,
}

impl GenerateOptions {
    pub fn new(count: usize, perturb: f64, seed: u64) -> Self {
        GenerateOptions {
            count,
            perturb,
            seed,
            perturb_voltage: true,
            solver: SolverOptions::newton(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub system_tag: String,
    pub seed: u64,
    pub base_case_hash: String,
    pub layout: Layout,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> SampleSet {
        SampleSet {
            system_tag: self.system_tag.clone(),
            seed: self.seed,
            base_case_hash: self.base_case_hash.clone(),
            layout: self.layout,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.input.as_slice())
    }

    pub fn outputs(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.output.as_slice())
    }
}

/// SHA-256 of the network's canonical JSON form.
pub fn network_hash(net: &Network) -> String {
    let bytes = serde_json::to_vec(net).expect("network serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Input features of a (possibly perturbed) network.
pub fn input_features(net: &Network) -> Vec<f64> {
    let (p, q) = net_injections(net);
    let vm = net
        .voltage_setpoints()
        .into_iter()
        .map(|sp| sp.unwrap_or(1.0));
    vm.chain(p).chain(q).collect()
}

/// Applies one draw of demand and setpoint factors to `base`.
fn perturbed(base: &Network, rng: &mut impl Rng, perturb: f64, voltage: bool) -> Network {
    let mut factor = || 1.0 + perturb * (2.0 * rng.random::<f64>() - 1.0);
    let n = base.n_buses();
    let mut load = Vec::with_capacity(n);
    for _ in 0..n {
        let fp = factor();
        let fq = factor();
        load.push((fp, fq));
    }
    let vfac: Vec<f64> = base
        .buses()
        .iter()
        .map(|b| {
            if voltage && b.kind != BusKind::PQ {
                factor()
            } else {
                1.0
            }
        })
        .collect();

    let base_demand: f64 = base.buses().iter().map(|b| b.p_demand).sum();
    let new_demand: f64 = base
        .buses()
        .iter()
        .zip(&load)
        .map(|(b, (fp, _))| b.p_demand * fp)
        .sum();
    let gen_scale = if base_demand != 0.0 {
        new_demand / base_demand
    } else {
        1.0
    };
    base.map_injections(
        |i, b| {
            b.p_demand *= load[i].0;
            b.q_demand *= load[i].1;
        },
        |_, g| {
            g.p_gen *= gen_scale;
            g.v_set *= vfac[base.bus_index(g.bus).expect("validated")];
        },
    )
}

pub fn generate_samples(
    net: &Network,
    system_tag: &str,
    opts: &GenerateOptions,
) -> Result<SampleSet, DatasetError> {
    if opts.count == 0 {
        return Err(DatasetError::InvalidArgument(
            "count must be at least 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&opts.perturb) {
        return Err(DatasetError::InvalidArgument(format!(
            "perturb must lie in [0, 1), got {}",
            opts.perturb
        )));
    }
    net.slack_index()?;
    let layout = Layout::of(net);

    let results: Vec<Option<(Sample, usize)>> = (0..opts.count)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds::sample_rng(opts.seed, j);
            for attempt in 0..MAX_ATTEMPTS_PER_SAMPLE {
                let case = perturbed(net, &mut rng, opts.perturb, opts.perturb_voltage);
                match solve_nr(&case, &opts.solver) {
                    Ok(sol) => {
                        let output = sol
                            .state
                            .vm
                            .iter()
                            .chain(&sol.branch_p_from)
                            .copied()
                            .collect();
                        let input = input_features(&case);
                        return Some((Sample { input, output }, attempt));
                    }
                    Err(e) => log::warn!(
                        "rejected draw: seed {} sample {j} attempt {attempt}: {e}",
                        opts.seed
                    ),
                }
            }
            None
        })
        .collect();

    let mut rejected = 0;
    let mut samples = Vec::with_capacity(opts.count);
    for r in results {
        match r {
            Some((s, rej)) => {
                rejected += rej;
                samples.push(s);
            }
            None => rejected += MAX_ATTEMPTS_PER_SAMPLE,
        }
    }
    if samples.len() < opts.count || rejected > 10 * opts.count {
        return Err(DatasetError::TooManyRejections {
            rejected,
            count: opts.count,
        });
    }
    if rejected > 0 {
        log::info!("{rejected} draws rejected for {} samples", opts.count);
    }
    Ok(SampleSet {
        system_tag: system_tag.to_string(),
        seed: opts.seed,
        base_case_hash: network_hash(net),
        layout,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

/// Seeded shuffle followed by a contiguous train/val/test partition. The
/// validation and test sizes are floored; the remainder goes to training.
pub fn split(set: &SampleSet, ratios: SplitRatios, seed: u64) -> Result<SplitSet, DatasetError> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|v| !(*v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {r:?}"
        )));
    }
    if set.is_empty() {
        return Err(DatasetError::EmptySet);
    }
    let n = set.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::stream_rng(seed, seeds::SPLIT));
    let take = |ratio: f64| (n as f64 * ratio + 1e-9).floor() as usize;
    let n_val = take(ratios.val);
    let n_test = take(ratios.test);
    let n_train = n - n_val - n_test;
    Ok(SplitSet {
        train: set.subset(&idx[..n_train]),
        val: set.subset(&idx[n_train..n_train + n_val]),
        test: set.subset(&idx[n_train + n_val..]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Inputs,
    Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScaler {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

impl NormScaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<NormScaler, DatasetError> {
        let mut rows = rows.into_iter();
        let first = rows.next().ok_or(DatasetError::EmptySet)?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for row in rows {
            if row.len() != lo.len() {
                return Err(DatasetError::DimensionMismatch {
                    expected: lo.len(),
                    got: row.len(),
                });
            }
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        Ok(NormScaler {
            feature_min: lo,
            feature_max: hi,
        })
    }

    pub fn dim(&self) -> usize {
        self.feature_min.len()
    }

    fn check(&self, v: &[f64]) -> Result<(), DatasetError> {
        if v.len() != self.dim() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Maps each feature to `(v - min)/(max - min)`; degenerate features map
    /// to 0. Values outside the fitted range extrapolate linearly.
    pub fn normalize(&self, v: &[f64]) -> Result<Vec<f64>, DatasetError> {
        self.check(v)?;
        Ok(v.iter()
            .zip(self.feature_min.iter().zip(&self.feature_max))
            .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    /// Inverse of [`normalize`](Self::normalize); degenerate features return
    /// their minimum.
    pub fn denormalize(&self, v: &[f64]) -> Result<Vec<f64>, DatasetError> {
        self.check(v)?;
        Ok(v.iter()
            .zip(self.feature_min.iter().zip(&self.feature_max))
            .map(|(&x, (&lo, &hi))| if hi > lo { lo + x * (hi - lo) } else { lo })
            .collect())
    }
}

/// Fits a scaler to one side of a (training) set.
pub fn fit_scaler(set: &SampleSet, which: Which) -> Result<NormScaler, DatasetError> {
    match which {
        Which::Inputs => NormScaler::fit(set.inputs()),
        Which::Outputs => NormScaler::fit(set.outputs()),
    }
}

/// On-disk form of a [`SampleSet`] (`.pfds.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSetFile {
    pub format_version: u32,
    pub system_tag: String,
    pub seed: u64,
    pub base_case_hash: String,
    pub count: usize,
    pub layout: Layout,
    pub input_len: usize,
    pub output_len: usize,
    pub generate: GenerateOptions,
    /// Base network, so downstream commands can rebuild the DC model.
    pub network: Network,
    /// row-major, `count × input_len`
    pub inputs: Vec<f64>,
    /// row-major, `count × output_len`
    pub outputs: Vec<f64>,
}

impl SampleSetFile {
    pub fn new(set: &SampleSet, net: &Network, generate: GenerateOptions) -> Self {
        SampleSetFile {
            format_version: FORMAT_VERSION,
            system_tag: set.system_tag.clone(),
            seed: set.seed,
            base_case_hash: set.base_case_hash.clone(),
            count: set.len(),
            layout: set.layout,
            input_len: set.layout.input_len(),
            output_len: set.layout.output_len(),
            generate,
            network: net.clone(),
            inputs: set.inputs().flatten().copied().collect(),
            outputs: set.outputs().flatten().copied().collect(),
        }
    }

    pub fn write(&self, w: impl Write) -> Result<(), DatasetError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self, DatasetError> {
        let file: SampleSetFile = serde_json::from_reader(r)?;
        if file.format_version != FORMAT_VERSION {
            return Err(DatasetError::FormatVersion(file.format_version));
        }
        let expect_in = file.count * file.layout.input_len();
        let expect_out = file.count * file.layout.output_len();
        if file.inputs.len() != expect_in {
            return Err(DatasetError::DimensionMismatch {
                expected: expect_in,
                got: file.inputs.len(),
            });
        }
        if file.outputs.len() != expect_out {
            return Err(DatasetError::DimensionMismatch {
                expected: expect_out,
                got: file.outputs.len(),
            });
        }
        Ok(file)
    }

    pub fn sample_set(&self) -> SampleSet {
        let (di, dout) = (self.layout.input_len(), self.layout.output_len());
        SampleSet {
            system_tag: self.system_tag.clone(),
            seed: self.seed,
            base_case_hash: self.base_case_hash.clone(),
            layout: self.layout,
            samples: (0..self.count)
                .map(|j| Sample {
                    input: self.inputs[j * di..(j + 1) * di].to_vec(),
                    output: self.outputs[j * dout..(j + 1) * dout].to_vec(),
                })
                .collect(),
        }
    }
}
