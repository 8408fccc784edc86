use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use pfnn_core::acpf::{AcpfError, SolutionDoc};
use pfnn_core::caseparse::{parse_case_with_diagnostics, Severity};
use pfnn_core::dataset::{
    generate_samples, DatasetError, GenerateOptions, SampleSetFile, SplitRatios,
};
use pfnn_core::dcpf;
use pfnn_core::mlp::MlpError;
use pfnn_core::netmodel::Network;
use pfnn_core::pipeline::{self, Checkpoint, ModelConfig, PipelineError, DEFAULT_THRESHOLDS};
use pfnn_core::{solve_gs, solve_nr, validate, SolverOptions, TrainConfig};
use serde::Serialize;

use crate::config::{echo, pick, RunConfig};
use crate::{CompareArgs, EvalArgs, GenDataArgs, SolveAcArgs, SolveDcArgs, TrainArgs};

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(AcpfError::NonConvergence { .. }) = cause.downcast_ref() {
            return 2;
        }
        if let Some(MlpError::DivergedLoss { .. }) = cause.downcast_ref() {
            return 3;
        }
        if let Some(DatasetError::TooManyRejections { .. }) = cause.downcast_ref() {
            return 3;
        }
        match cause.downcast_ref() {
            Some(PipelineError::Mlp(MlpError::DivergedLoss { .. })) => return 3,
            Some(PipelineError::Dataset(DatasetError::TooManyRejections { .. })) => return 3,
            _ => {}
        }
    }
    1
}

fn timing(phase: &str, start: Instant) {
    eprintln!("timing: {phase} {:.3}s", start.elapsed().as_secs_f64());
}

fn file_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in [".pfds.json", ".pfnn.json", ".json", ".m"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name
}

fn sibling(path: &Path, name: String) -> PathBuf {
    path.with_file_name(name)
}

fn load_network(path: &Path) -> anyhow::Result<Network> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (net, warnings) = parse_case_with_diagnostics(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    for w in &warnings {
        eprintln!("{}: {w}", path.display());
    }
    let diags = validate(&net);
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        bail!("{} failed validation", path.display());
    }
    Ok(net)
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_dataset(path: &Path) -> anyhow::Result<SampleSetFile> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    SampleSetFile::read(BufReader::new(f))
        .with_context(|| format!("loading dataset {}", path.display()))
}

fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Checkpoint::read(BufReader::new(f)).with_context(|| format!("loading model {}", path.display()))
}

pub fn solve_ac(args: SolveAcArgs) -> anyhow::Result<()> {
    let file = RunConfig::load(args.config.config.as_deref())?;
    let base = if args.gs {
        SolverOptions::gauss_seidel()
    } else {
        SolverOptions::newton()
    };
    let opts = SolverOptions {
        tol: pick(args.tol, file.tol, base.tol),
        max_iter: pick(args.max_iter, file.max_iter, base.max_iter),
        ..base
    };
    let method = if args.gs {
        "gauss-seidel"
    } else {
        "newton-raphson"
    };
    echo(
        "solve-ac",
        &serde_json::json!({ "case": args.case, "method": method, "solver": opts }),
    );

    let start = Instant::now();
    let net = load_network(&args.case)?;
    timing("parse", start);
    let start = Instant::now();
    let sol = if args.gs {
        solve_gs(&net, &opts)
    } else {
        solve_nr(&net, &opts)
    };
    let sol = sol.with_context(|| format!("solving {}", args.case.display()))?;
    timing("solve", start);
    write_json(
        args.out.as_deref(),
        &SolutionDoc::from_ac(&net, &sol, method),
    )
}

pub fn solve_dc(args: SolveDcArgs) -> anyhow::Result<()> {
    echo("solve-dc", &serde_json::json!({ "case": args.case }));
    let start = Instant::now();
    let net = load_network(&args.case)?;
    timing("parse", start);
    let start = Instant::now();
    let sol = dcpf::solve_dc(&net).with_context(|| format!("solving {}", args.case.display()))?;
    timing("solve", start);
    write_json(args.out.as_deref(), &dcpf::solution_doc(&net, &sol))
}

pub fn gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    let file = RunConfig::load(args.config.config.as_deref())?;
    let defaults = GenerateOptions::new(10_000, 0.1, 7);
    let voltage = if args.no_voltage_perturb {
        Some(false)
    } else {
        None
    };
    let opts = GenerateOptions {
        count: pick(args.count, file.count, defaults.count),
        perturb: pick(args.perturb, file.perturb, defaults.perturb),
        seed: pick(args.seed, file.seed, defaults.seed),
        perturb_voltage: pick(voltage, file.perturb_voltage, defaults.perturb_voltage),
        solver: SolverOptions {
            tol: file.tol.unwrap_or(defaults.solver.tol),
            max_iter: file.max_iter.unwrap_or(defaults.solver.max_iter),
            ..defaults.solver
        },
    };
    let tag = file_stem(&args.case);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| sibling(&args.case, format!("{tag}.pfds.json")));
    echo(
        "gen-data",
        &serde_json::json!({ "case": args.case, "out": out, "generate": opts }),
    );

    let net = load_network(&args.case)?;
    let start = Instant::now();
    let set = generate_samples(&net, &tag, &opts)?;
    timing("generate", start);
    let start = Instant::now();
    let f = File::create(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut w = BufWriter::new(f);
    SampleSetFile::new(&set, &net, opts).write(&mut w)?;
    w.flush()?;
    timing("write", start);
    eprintln!("wrote {} samples to {}", set.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSettings<'a> {
    dataset: &'a Path,
    out: &'a Path,
    trace: &'a Path,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    split: SplitRatios,
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let file = RunConfig::load(args.config.config.as_deref())?;
    let dm = ModelConfig::default();
    let dt = TrainConfig::default();
    let ds = SplitRatios::default();
    let heads = if args.separate_heads {
        Some(true)
    } else {
        None
    };
    let model_cfg = ModelConfig {
        hidden: pick(args.hidden.clone(), file.hidden.clone(), dm.hidden),
        leak: pick(args.leak, file.leak, dm.leak),
        separate_heads: pick(heads, file.separate_heads, dm.separate_heads),
    };
    let train_cfg = TrainConfig {
        learning_rate: pick(args.lr, file.learning_rate, dt.learning_rate),
        batch_size: pick(args.batch, file.batch_size, dt.batch_size),
        epochs: pick(args.epochs, file.epochs, dt.epochs),
        seed: pick(args.seed, file.seed, dt.seed),
    };
    let val = pick(args.val_ratio, file.val_ratio, ds.val);
    let test = pick(args.test_ratio, file.test_ratio, ds.test);
    if !(val >= 0.0 && test >= 0.0 && val + test < 1.0) {
        bail!("val and test ratios must be non-negative and sum below 1, got {val} and {test}");
    }
    let split = SplitRatios {
        train: 1.0 - val - test,
        val,
        test,
    };
    let stem = file_stem(&args.dataset);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| sibling(&args.dataset, format!("{stem}.pfnn.json")));
    let trace_path = sibling(&out, format!("{}.trace.csv", file_stem(&out)));
    echo(
        "train",
        &TrainSettings {
            dataset: &args.dataset,
            out: &out,
            trace: &trace_path,
            model: &model_cfg,
            train: &train_cfg,
            split,
        },
    );

    let start = Instant::now();
    let data = read_dataset(&args.dataset)?;
    timing("load", start);
    let start = Instant::now();
    let every = args.progress_every;
    let ck = pipeline::train_surrogate(&data, &model_cfg, &train_cfg, split, |head, rec| {
        if every > 0 && (rec.epoch % every == 0 || rec.epoch == train_cfg.epochs) {
            let val = rec.val_mse.map_or("-".to_string(), |v| format!("{v:.6}"));
            eprintln!(
                "head {head} epoch {:>5} train_mse {:.6} val_mse {val}",
                rec.epoch, rec.train_mse
            );
        }
    })?;
    timing("train", start);

    let f = File::create(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut w = BufWriter::new(f);
    ck.write(&mut w)?;
    w.flush()?;
    let mut trace = String::new();
    for (i, head) in ck.heads.iter().enumerate() {
        if ck.heads.len() > 1 {
            trace.push_str(&format!(
                "# head {i}: outputs {}..{}\n",
                head.start, head.end
            ));
        }
        trace.push_str(&head.trace.to_csv());
    }
    std::fs::write(&trace_path, trace)
        .with_context(|| format!("writing {}", trace_path.display()))?;
    eprintln!("wrote {} and {}", out.display(), trace_path.display());
    write_json(None, &ck.final_metrics)
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    echo(
        "eval",
        &serde_json::json!({ "model": args.model, "dataset": args.dataset }),
    );
    let ck = read_checkpoint(&args.model)?;
    let data = read_dataset(&args.dataset)?;
    let start = Instant::now();
    let summary = pipeline::evaluate(&ck, &data)?;
    timing("evaluate", start);
    write_json(None, &summary)
}

pub fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let file = RunConfig::load(args.config.config.as_deref())?;
    let thresholds = pick(
        args.thresholds.clone(),
        file.thresholds,
        DEFAULT_THRESHOLDS.to_vec(),
    );
    let prefix = args
        .out
        .clone()
        .unwrap_or_else(|| sibling(&args.model, format!("{}.report", file_stem(&args.model))));
    echo(
        "compare",
        &serde_json::json!({
            "model": args.model,
            "dataset": args.dataset,
            "thresholds": thresholds,
            "out": prefix,
        }),
    );
    let ck = read_checkpoint(&args.model)?;
    let data = read_dataset(&args.dataset)?;
    let start = Instant::now();
    let report = pipeline::compare(&ck, &data, &thresholds)?;
    timing("compare", start);

    let text = report.to_text();
    let with_ext = |ext: &str| {
        let mut p = prefix.clone().into_os_string();
        p.push(format!(".{ext}"));
        PathBuf::from(p)
    };
    for (ext, body) in [
        ("txt", &text),
        ("json", &report.to_json()),
        ("csv", &report.to_csv()),
    ] {
        let path = with_ext(ext);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}
