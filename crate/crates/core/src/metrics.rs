//! Error metrics and comparative reports.
//!
//! `target` is the estimate under test (network prediction or DC flow) and
//! `reference` the AC power flow value. Absolute differences use the mean
//! absolute error; relative differences use the percent relative difference
//! `2|x - y| / |x + y| · 100`, which is undefined when `x + y` vanishes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Pairs whose `|target + reference|` falls below this are left out of the
/// percent relative difference.
pub const PRD_DENOM_GUARD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("all {0} pairs have a degenerate relative-difference denominator")]
    AllPairsDegenerate(usize),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("threshold levels must be non-negative and strictly increasing: {0:?}")]
    BadThresholds(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "MW")]
    Mw,
    #[serde(rename = "pu")]
    Pu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub target: f64,
    pub reference: f64,
}

pub fn pairs(targets: &[f64], references: &[f64]) -> Vec<EvalPair> {
    targets
        .iter()
        .zip(references)
        .map(|(&target, &reference)| EvalPair { target, reference })
        .collect()
}

pub fn mae(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(pairs
        .iter()
        .map(|p| (p.target - p.reference).abs())
        .sum::<f64>()
        / pairs.len() as f64)
}

/// Per-pair relative differences in percent, skipping degenerate pairs.
/// Returns the values and the number of pairs skipped.
pub fn prd_values(pairs: &[EvalPair]) -> (Vec<f64>, usize) {
    let mut excluded = 0;
    let values = pairs
        .iter()
        .filter_map(|p| {
            let denom = (p.target + p.reference).abs();
            if denom < PRD_DENOM_GUARD {
                excluded += 1;
                None
            } else {
                Some(200.0 * (p.target - p.reference).abs() / denom)
            }
        })
        .collect();
    (values, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prd {
    pub percent: f64,
    pub excluded: usize,
}

pub fn prd(pairs: &[EvalPair]) -> Result<Prd, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (values, excluded) = prd_values(pairs);
    if values.is_empty() {
        return Err(MetricsError::AllPairsDegenerate(excluded));
    }
    Ok(Prd {
        percent: values.iter().sum::<f64>() / values.len() as f64,
        excluded,
    })
}

/// Keeps the pairs whose reference magnitude is at least `level`.
pub fn threshold_filter(pairs: &[EvalPair], level: f64) -> Vec<EvalPair> {
    pairs
        .iter()
        .filter(|p| p.reference.abs() >= level)
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub median: f64,
    /// population standard deviation
    pub std_dev: f64,
}

pub fn summarize(values: &[f64]) -> Result<StatSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(StatSummary {
        mean,
        max: sorted[sorted.len() - 1],
        min: sorted[0],
        median,
        std_dev: var.sqrt(),
    })
}

/// Relative difference summary over a pair set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrdSummary {
    pub unit: Unit,
    pub pairs: usize,
    pub excluded: usize,
    /// `None` when no pair survived the denominator guard
    pub stats: Option<StatSummary>,
}

fn prd_summary(pairs: &[EvalPair], unit: Unit) -> PrdSummary {
    let (values, excluded) = prd_values(pairs);
    PrdSummary {
        unit,
        pairs: pairs.len(),
        excluded,
        stats: summarize(&values).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub level_mw: f64,
    pub nn: PrdSummary,
    pub dcpf: PrdSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMae {
    /// 1-based branch position
    pub branch: usize,
    pub nn_mw: f64,
    pub dcpf_mw: f64,
}

/// Flattened `(sample, branch)` absolute errors, for box plots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawErrors {
    pub branch: Vec<usize>,
    pub nn_abs_mw: Vec<f64>,
    pub dcpf_abs_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub system_tag: String,
    pub samples: usize,
    pub branches: usize,
    pub buses: usize,
    pub nn_flow_abs_mw: StatSummary,
    pub dcpf_flow_abs_mw: StatSummary,
    pub nn_vm_prd: PrdSummary,
    pub nn_flow_prd: PrdSummary,
    pub dcpf_flow_prd: PrdSummary,
    pub thresholds: Vec<ThresholdRow>,
    pub per_branch: Vec<BranchMae>,
    #[serde(skip)]
    pub raw: RawErrors,
}

/// Row-per-sample inputs to [`compare`]. Flows in MW, magnitudes in pu.
#[derive(Debug, Clone, Copy)]
pub struct CompareInput<'a> {
    pub system_tag: &'a str,
    pub nn_flows: &'a [Vec<f64>],
    pub dc_flows: &'a [Vec<f64>],
    pub ac_flows: &'a [Vec<f64>],
    pub nn_vm: &'a [Vec<f64>],
    pub ac_vm: &'a [Vec<f64>],
}

fn check_rows(
    what: &'static str,
    rows: &[Vec<f64>],
    n: usize,
    width: usize,
) -> Result<(), MetricsError> {
    if rows.len() != n {
        return Err(MetricsError::DimensionMismatch {
            what,
            expected: n,
            got: rows.len(),
        });
    }
    for r in rows {
        if r.len() != width {
            return Err(MetricsError::DimensionMismatch {
                what,
                expected: width,
                got: r.len(),
            });
        }
    }
    Ok(())
}

pub fn compare(input: &CompareInput<'_>, thresholds: &[f64]) -> Result<EvalReport, MetricsError> {
    if thresholds.iter().any(|t| !(*t >= 0.0)) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricsError::BadThresholds(thresholds.to_vec()));
    }
    let n = input.ac_flows.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let m = input.ac_flows[0].len();
    let nb = input.ac_vm.first().map_or(0, |r| r.len());
    check_rows("ac_flows", input.ac_flows, n, m)?;
    check_rows("nn_flows", input.nn_flows, n, m)?;
    check_rows("dc_flows", input.dc_flows, n, m)?;
    check_rows("ac_vm", input.ac_vm, n, nb)?;
    check_rows("nn_vm", input.nn_vm, n, nb)?;

    let flat = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().flatten().copied().collect() };
    let ac = flat(input.ac_flows);
    let nn_pairs = pairs(&flat(input.nn_flows), &ac);
    let dc_pairs = pairs(&flat(input.dc_flows), &ac);
    let vm_pairs = pairs(&flat(input.nn_vm), &flat(input.ac_vm));

    let abs = |ps: &[EvalPair]| -> Vec<f64> {
        ps.iter().map(|p| (p.target - p.reference).abs()).collect()
    };
    let nn_abs = abs(&nn_pairs);
    let dc_abs = abs(&dc_pairs);

    let mut per_branch: Vec<BranchMae> = (0..m)
        .map(|k| BranchMae {
            branch: k + 1,
            nn_mw: 0.0,
            dcpf_mw: 0.0,
        })
        .collect();
    for (idx, (a, b)) in nn_abs.iter().zip(&dc_abs).enumerate() {
        per_branch[idx % m].nn_mw += a / n as f64;
        per_branch[idx % m].dcpf_mw += b / n as f64;
    }

    let rows = thresholds
        .iter()
        .map(|&level| ThresholdRow {
            level_mw: level,
            nn: prd_summary(&threshold_filter(&nn_pairs, level), Unit::Mw),
            dcpf: prd_summary(&threshold_filter(&dc_pairs, level), Unit::Mw),
        })
        .collect();

    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        system_tag: input.system_tag.to_string(),
        samples: n,
        branches: m,
        buses: nb,
        nn_flow_abs_mw: summarize(&nn_abs)?,
        dcpf_flow_abs_mw: summarize(&dc_abs)?,
        nn_vm_prd: prd_summary(&vm_pairs, Unit::Pu),
        nn_flow_prd: prd_summary(&nn_pairs, Unit::Mw),
        dcpf_flow_prd: prd_summary(&dc_pairs, Unit::Mw),
        thresholds: rows,
        per_branch,
        raw: RawErrors {
            branch: (0..n * m).map(|i| i % m + 1).collect(),
            nn_abs_mw: nn_abs,
            dcpf_abs_mw: dc_abs,
        },
    })
}

fn stat_cells(s: Option<&StatSummary>) -> String {
    match s {
        Some(s) => format!(
            "{:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            s.mean, s.max, s.min, s.median, s.std_dev
        ),
        None => format!("{:>9} {:>9} {:>9} {:>9} {:>9}", "-", "-", "-", "-", "-"),
    }
}

impl EvalReport {
    /// Plain-text tables: voltage PRD, absolute flow error, and flow PRD by
    /// loading threshold, followed by per-branch mean absolute errors.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header = format!(
            "{:>9} {:>9} {:>9} {:>9} {:>9}",
            "Mean", "Max", "Min", "Median", "Std.Dev."
        );
        let _ = writeln!(
            out,
            "System: {}  ({} test samples, {} buses, {} branches)\n",
            self.system_tag, self.samples, self.buses, self.branches
        );
        let _ = writeln!(out, "Voltage magnitude, mean PRD of NN (%)");
        let vm = self.nn_vm_prd.stats.map(|s| s.mean);
        let _ = writeln!(
            out,
            "  {:<10} {}\n",
            self.system_tag,
            vm.map_or("-".to_string(), |v| format!("{v:.2}"))
        );
        let _ = writeln!(out, "Branch active flow, absolute difference (MW)");
        let _ = writeln!(out, "  {:<10} {:<6} {header}", "System", "Model");
        let _ = writeln!(
            out,
            "  {:<10} {:<6} {}",
            self.system_tag,
            "NN",
            stat_cells(Some(&self.nn_flow_abs_mw))
        );
        let _ = writeln!(
            out,
            "  {:<10} {:<6} {}\n",
            "",
            "DCPF",
            stat_cells(Some(&self.dcpf_flow_abs_mw))
        );
        let _ = writeln!(out, "Branch active flow, PRD (%) by threshold on |P_ac|");
        let _ = writeln!(
            out,
            "  {:<10} {:<6} {header} {:>8}",
            "Level", "Model", "pairs"
        );
        for row in &self.thresholds {
            let level = format!("{} MW", row.level_mw);
            let _ = writeln!(
                out,
                "  {:<10} {:<6} {} {:>8}",
                level,
                "NN",
                stat_cells(row.nn.stats.as_ref()),
                row.nn.pairs - row.nn.excluded
            );
            let _ = writeln!(
                out,
                "  {:<10} {:<6} {} {:>8}",
                "",
                "DCPF",
                stat_cells(row.dcpf.stats.as_ref()),
                row.dcpf.pairs - row.dcpf.excluded
            );
        }
        let _ = writeln!(out, "\nPer-branch mean absolute difference (MW)");
        let _ = writeln!(out, "  {:>6} {:>9} {:>9}", "branch", "NN", "DCPF");
        for b in &self.per_branch {
            let _ = writeln!(out, "  {:>6} {:>9.3} {:>9.3}", b.branch, b.nn_mw, b.dcpf_mw);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are plain data")
    }

    /// `branch_id,nn_abs_err_mw,dcpf_abs_err_mw`, one row per sample and branch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch_id,nn_abs_err_mw,dcpf_abs_err_mw\n");
        for ((b, nn), dc) in self
            .raw
            .branch
            .iter()
            .zip(&self.raw.nn_abs_mw)
            .zip(&self.raw.dcpf_abs_mw)
        {
            let _ = writeln!(out, "{b},{nn},{dc}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&pairs(&[1.0, 2.0], &[1.5, 2.5])).unwrap(), 0.5);
        assert_eq!(mae(&pairs(&[4.0, -1.0], &[4.0, -1.0])).unwrap(), 0.0);
        assert_eq!(mae(&pairs(&[0.0], &[3.0])).unwrap(), 3.0);
        assert_eq!(mae(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn prd_examples() {
        assert_eq!(prd(&pairs(&[3.0], &[1.0])).unwrap().percent, 100.0);
        assert_eq!(prd(&pairs(&[2.5], &[2.5])).unwrap().percent, 0.0);
        let r = prd(&pairs(&[1.0, 3.0], &[-1.0, 1.0])).unwrap();
        assert_eq!(
            r,
            Prd {
                percent: 100.0,
                excluded: 1
            }
        );
        assert_eq!(
            prd(&pairs(&[1.0], &[-1.0])),
            Err(MetricsError::AllPairsDegenerate(1))
        );
    }

    #[test]
    fn filter_examples() {
        let ps = pairs(&[0.0; 3], &[50.0, 150.0, 250.0]);
        assert_eq!(threshold_filter(&ps, 100.0).len(), 2);
        assert_eq!(threshold_filter(&ps, 0.0), ps);
        assert!(threshold_filter(&ps, 251.0).is_empty());
        // magnitude of the reference, not its sign
        assert_eq!(threshold_filter(&pairs(&[0.0], &[-120.0]), 100.0).len(), 1);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 3.0]).unwrap();
        assert_eq!(
            s,
            StatSummary {
                mean: 2.0,
                max: 3.0,
                min: 1.0,
                median: 2.0,
                std_dev: 1.0
            }
        );
        let s = summarize(&[5.0]).unwrap();
        assert_eq!(
            s,
            StatSummary {
                mean: 5.0,
                max: 5.0,
                min: 5.0,
                median: 5.0,
                std_dev: 0.0
            }
        );
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert_eq!(summarize(&[]), Err(MetricsError::EmptyInput));
    }

    fn rows(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn compare_perfect_nn() {
        let ac = rows(&[&[100.0, -20.0], &[250.0, 0.0]]);
        let dc = rows(&[&[110.0, -25.0], &[240.0, 1.0]]);
        let vm = rows(&[&[1.0, 0.98], &[1.02, 0.97]]);
        let rep = compare(
            &CompareInput {
                system_tag: "t",
                nn_flows: &ac,
                dc_flows: &dc,
                ac_flows: &ac,
                nn_vm: &vm,
                ac_vm: &vm,
            },
            &[0.0, 200.0],
        )
        .unwrap();
        let zero = StatSummary {
            mean: 0.0,
            max: 0.0,
            min: 0.0,
            median: 0.0,
            std_dev: 0.0,
        };
        assert_eq!(rep.nn_flow_abs_mw, zero);
        assert_eq!(rep.dcpf_flow_abs_mw.max, 10.0);
        assert_eq!(rep.dcpf_flow_abs_mw.mean, (10.0 + 5.0 + 10.0 + 1.0) / 4.0);
        assert_eq!(rep.nn_vm_prd.stats.unwrap().mean, 0.0);
        // the (0, 0) NN pair is excluded from the unfiltered PRD
        assert_eq!(rep.nn_flow_prd.excluded, 1);
        assert_eq!(rep.thresholds[1].dcpf.pairs, 1);
        assert_eq!(rep.per_branch[0].dcpf_mw, 10.0);
        assert_eq!(rep.raw.branch, vec![1, 2, 1, 2]);
        let csv = rep.to_csv();
        assert!(csv.starts_with("branch_id,nn_abs_err_mw,dcpf_abs_err_mw\n1,0,10\n"));
        assert!(rep.to_text().contains("DCPF"));
    }

    #[test]
    fn compare_rejects_bad_input() {
        let a = rows(&[&[1.0, 2.0]]);
        let b = rows(&[&[1.0]]);
        let inp = CompareInput {
            system_tag: "t",
            nn_flows: &b,
            dc_flows: &a,
            ac_flows: &a,
            nn_vm: &a,
            ac_vm: &a,
        };
        assert!(matches!(
            compare(&inp, &[]),
            Err(MetricsError::DimensionMismatch { .. })
        ));
        let ok = CompareInput {
            nn_flows: &a,
            ..inp
        };
        assert!(matches!(
            compare(&ok, &[100.0, 50.0]),
            Err(MetricsError::BadThresholds(_))
        ));
        assert!(compare(&ok, &[50.0, 100.0]).is_ok());
    }
}
