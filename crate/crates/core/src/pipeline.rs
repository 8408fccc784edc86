//! End-to-end orchestration: train a surrogate on a sample file, persist it
//! as a checkpoint, and score it against the AC reference and the DC
//! baseline on the held-out test split.

use std::io::{Read, Write};
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, DatasetError, Layout, NormScaler, SampleSet, SampleSetFile, SplitRatios, SplitSet,
};
use crate::dcpf::{DcModel, DcpfError};
use crate::metrics::{self, CompareInput, EvalReport, MetricsError};
use crate::mlp::{self, EpochRecord, MlpError, MlpModel, TrainConfig, TrainTrace};

pub const FORMAT_VERSION: u32 = 1;

/// Default loading thresholds for the flow PRD table, MW.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [50.0, 100.0, 150.0, 200.0];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Dcpf(#[from] DcpfError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("checkpoint was trained on case {checkpoint}, dataset is for case {dataset}")]
    HashMismatch { checkpoint: String, dataset: String },
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub leak: f64,
    /// Train one network for voltages and another for flows.
    pub separate_heads: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64; 5],
            leak: 0.01,
            separate_heads: false,
        }
    }
}

/// A network responsible for the output positions `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub start: usize,
    pub end: usize,
    pub model: MlpModel,
    pub trace: TrainTrace,
}

impl Head {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// normalized units, mean over heads weighted by output width
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

/// Trained surrogate with everything needed to map raw inputs to raw
/// outputs (`.pfnn.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub system_tag: String,
    pub base_case_hash: String,
    pub dataset_seed: u64,
    pub split: SplitRatios,
    pub layout: Layout,
    pub in_scaler: NormScaler,
    pub out_scaler: NormScaler,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub heads: Vec<Head>,
    pub final_metrics: FinalMetrics,
}

fn normalized(
    set: &SampleSet,
    scaler: &NormScaler,
    inputs: bool,
) -> Result<Array2<f64>, PipelineError> {
    let width = scaler.dim();
    let mut rows = Vec::with_capacity(set.len() * width);
    for s in &set.samples {
        let raw = if inputs { &s.input } else { &s.output };
        rows.extend(scaler.normalize(raw)?);
    }
    Ok(Array2::from_shape_vec((set.len(), width), rows).expect("row widths checked"))
}

/// Splits a sample file the way training did.
pub fn split_for(file: &SampleSetFile, ratios: SplitRatios) -> Result<SplitSet, PipelineError> {
    Ok(dataset::split(&file.sample_set(), ratios, file.seed)?)
}

pub fn train_surrogate(
    file: &SampleSetFile,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    ratios: SplitRatios,
    mut on_epoch: impl FnMut(usize, &EpochRecord),
) -> Result<Checkpoint, PipelineError> {
    let parts = split_for(file, ratios)?;
    let in_scaler = dataset::fit_scaler(&parts.train, dataset::Which::Inputs)?;
    let out_scaler = dataset::fit_scaler(&parts.train, dataset::Which::Outputs)?;
    let tx = normalized(&parts.train, &in_scaler, true)?;
    let ty = normalized(&parts.train, &out_scaler, false)?;
    let vx = normalized(&parts.val, &in_scaler, true)?;
    let vy = normalized(&parts.val, &out_scaler, false)?;

    let layout = file.layout;
    let ranges = if model_cfg.separate_heads {
        vec![layout.vm_range(), layout.flow_range()]
    } else {
        vec![Range {
            start: 0,
            end: layout.output_len(),
        }]
    };
    let mut heads = Vec::with_capacity(ranges.len());
    for (h, range) in ranges.into_iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let mut dims = vec![layout.input_len()];
        dims.extend(&model_cfg.hidden);
        dims.push(range.len());
        let model = mlp::init_model(&dims, model_cfg.leak, train_cfg.seed)?;
        let (model, trace) = mlp::train(
            model,
            tx.view(),
            mlp::columns(&ty, range.clone()).view(),
            vx.view(),
            mlp::columns(&vy, range.clone()).view(),
            train_cfg,
            |rec| on_epoch(h, rec),
        )?;
        heads.push(Head {
            start: range.start,
            end: range.end,
            model,
            trace,
        });
    }

    let total: usize = heads.iter().map(|h| h.end - h.start).sum();
    let weighted = |f: &dyn Fn(&EpochRecord) -> Option<f64>| -> Option<f64> {
        heads
            .iter()
            .map(|h| {
                h.trace
                    .last()
                    .and_then(f)
                    .map(|v| v * (h.end - h.start) as f64)
            })
            .sum::<Option<f64>>()
            .map(|s| s / total as f64)
    };
    let final_metrics = FinalMetrics {
        train_mse: weighted(&|r| Some(r.train_mse)).unwrap_or(f64::NAN),
        val_mse: weighted(&|r| r.val_mse),
        val_mae: weighted(&|r| r.val_mae),
    };

    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        system_tag: file.system_tag.clone(),
        base_case_hash: file.base_case_hash.clone(),
        dataset_seed: file.seed,
        split: ratios,
        layout,
        in_scaler,
        out_scaler,
        model_config: model_cfg.clone(),
        train_config: *train_cfg,
        heads,
        final_metrics,
    })
}

/// Voltage magnitudes (pu) and branch flows (MW) predicted for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub vm: Vec<f64>,
    pub p_k: Vec<f64>,
}

impl Checkpoint {
    pub fn write(&self, w: impl Write) -> Result<(), PipelineError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Checkpoint, PipelineError> {
        let ck: Checkpoint = serde_json::from_reader(r)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(PipelineError::FormatVersion(ck.format_version));
        }
        Ok(ck)
    }

    /// Normalized-space outputs for a batch of normalized inputs.
    fn forward_normalized(&self, x: &Array2<f64>) -> Result<Array2<f64>, PipelineError> {
        let mut out = Array2::zeros((x.nrows(), self.layout.output_len()));
        for head in &self.heads {
            let y = head.model.forward_batch(x.view())?;
            out.slice_mut(ndarray::s![.., head.range()]).assign(&y);
        }
        Ok(out)
    }

    /// Raw outputs `[vm ∥ p_k]` for each raw input row.
    pub fn predict_rows(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>, PipelineError> {
        let mut flat = Vec::with_capacity(inputs.len() * self.layout.input_len());
        for x in inputs {
            flat.extend(self.in_scaler.normalize(x)?);
        }
        let x = Array2::from_shape_vec((inputs.len(), self.layout.input_len()), flat)
            .expect("normalize checked widths");
        let y = self.forward_normalized(&x)?;
        y.rows()
            .into_iter()
            .map(|r| {
                Ok(self
                    .out_scaler
                    .denormalize(r.as_slice().expect("standard layout"))?)
            })
            .collect()
    }

    pub fn predict_pf(&self, raw_input: &[f64]) -> Result<Prediction, PipelineError> {
        let y = self.predict_rows(&[raw_input])?.remove(0);
        Ok(Prediction {
            vm: y[self.layout.vm_range()].to_vec(),
            p_k: y[self.layout.flow_range()].to_vec(),
        })
    }

    fn check_dataset(&self, file: &SampleSetFile) -> Result<(), PipelineError> {
        if file.base_case_hash != self.base_case_hash {
            return Err(PipelineError::HashMismatch {
                checkpoint: self.base_case_hash.clone(),
                dataset: file.base_case_hash.clone(),
            });
        }
        Ok(())
    }

    fn test_split(&self, file: &SampleSetFile) -> Result<SampleSet, PipelineError> {
        self.check_dataset(file)?;
        let test = split_for(file, self.split)?.test;
        if test.is_empty() {
            return Err(PipelineError::EmptyTestSplit);
        }
        Ok(test)
    }
}

/// Accuracy of a checkpoint on the test split of its dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: usize,
    /// normalized units, as during training
    pub mse_normalized: f64,
    pub vm_mae_pu: f64,
    pub flow_mae_mw: f64,
}

pub fn evaluate(ck: &Checkpoint, file: &SampleSetFile) -> Result<EvalSummary, PipelineError> {
    let test = ck.test_split(file)?;
    let inputs: Vec<&[f64]> = test.inputs().collect();
    let preds = ck.predict_rows(&inputs)?;
    let layout = ck.layout;
    let mut se = 0.0;
    let mut vm_pairs = Vec::new();
    let mut flow_pairs = Vec::new();
    for (p, s) in preds.iter().zip(&test.samples) {
        let pn = ck.out_scaler.normalize(p)?;
        let tn = ck.out_scaler.normalize(&s.output)?;
        se += pn
            .iter()
            .zip(&tn)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        vm_pairs.extend(metrics::pairs(
            &p[layout.vm_range()],
            &s.output[layout.vm_range()],
        ));
        flow_pairs.extend(metrics::pairs(
            &p[layout.flow_range()],
            &s.output[layout.flow_range()],
        ));
    }
    Ok(EvalSummary {
        samples: test.len(),
        mse_normalized: se / (test.len() * layout.output_len()) as f64,
        vm_mae_pu: metrics::mae(&vm_pairs).unwrap_or(0.0),
        flow_mae_mw: metrics::mae(&flow_pairs).unwrap_or(0.0),
    })
}

/// Scores network predictions and DC flows against the AC labels of the
/// test split.
pub fn compare(
    ck: &Checkpoint,
    file: &SampleSetFile,
    thresholds: &[f64],
) -> Result<EvalReport, PipelineError> {
    let test = ck.test_split(file)?;
    let layout = ck.layout;
    let dc = DcModel::new(&file.network)?;
    let inputs: Vec<&[f64]> = test.inputs().collect();
    let preds = ck.predict_rows(&inputs)?;

    let mut nn_flows = Vec::with_capacity(test.len());
    let mut nn_vm = Vec::with_capacity(test.len());
    let mut dc_flows = Vec::with_capacity(test.len());
    let mut ac_flows = Vec::with_capacity(test.len());
    let mut ac_vm = Vec::with_capacity(test.len());
    for (p, s) in preds.iter().zip(&test.samples) {
        nn_vm.push(p[layout.vm_range()].to_vec());
        nn_flows.push(p[layout.flow_range()].to_vec());
        dc_flows.push(dc.solve(&s.input[layout.p_input_range()])?.branch_p);
        ac_vm.push(s.output[layout.vm_range()].to_vec());
        ac_flows.push(s.output[layout.flow_range()].to_vec());
    }
    Ok(metrics::compare(
        &CompareInput {
            system_tag: &ck.system_tag,
            nn_flows: &nn_flows,
            dc_flows: &dc_flows,
            ac_flows: &ac_flows,
            nn_vm: &nn_vm,
            ac_vm: &ac_vm,
        },
        thresholds,
    )?)
}
