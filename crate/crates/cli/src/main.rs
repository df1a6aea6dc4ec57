use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use xtasc_core::data::{write_dataset, Dataset, DepthMode, GenConfig, Layout};
use xtasc_core::model::Variant;
use xtasc_core::train::{
    evaluate_checkpoint, gradcheck, read_report, train, GradcheckConfig, Precision, TrainConfig,
};
use xtasc_core::weighting::WeightingKind;
use xtasc_core::CoreError;
use xtasc_prop::{run_sweep, SweepConfig};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::CheckFailed(_) => "check_failed",
        }
    }
}

#[derive(Parser)]
#[command(name = "xtasc", version, about = "Cross-task consistency training for segmentation and depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    GenData(GenDataArgs),
    /// Train a model; prints the run summary as JSON.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset; prints the report as JSON.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of a tiny network.
    Gradcheck(GradcheckArgs),
    /// Check the predictor-gap inequalities on random discrete models.
    VerifyProp(VerifyPropArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    count: usize,
    /// Generator stream; 0 is train, 1 the default held-out split.
    #[arg(long, default_value_t = 0)]
    split: u32,
    /// JSON generator config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// `raw` or `inverse_disparity`.
    #[arg(long)]
    depth_mode: Option<DepthMode>,
    /// `scene` or `balanced`.
    #[arg(long, value_parser = parse_layout)]
    layout: Option<Layout>,
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// ST, MT, ALIGN or XTC.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_halve_every: Option<usize>,
    #[arg(long)]
    lambda_seg: Option<f64>,
    #[arg(long)]
    lambda_depth: Option<f64>,
    /// equal, uncertainty or gradnorm.
    #[arg(long)]
    weighting: Option<WeightingKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// f32 or f64.
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Report of a baseline run; adds Δ_m to the output.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct VerifyPropArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    max_support: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = xtasc_prop::DEFAULT_GROUP_TOL)]
    group_tol: f64,
    /// Write one JSON record per trial here.
    #[arg(long)]
    ndjson: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => Ok(serde_json::from_reader(File::open(p)?)?),
        None => Ok(T::default()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let mut gen: GenConfig = read_json(&a.config)?;
    gen.seed = a.seed.unwrap_or(gen.seed);
    gen.height = a.height.unwrap_or(gen.height);
    gen.width = a.width.unwrap_or(gen.width);
    gen.num_classes = a.classes.unwrap_or(gen.num_classes);
    gen.depth_mode = a.depth_mode.unwrap_or(gen.depth_mode);
    gen.layout = a.layout.unwrap_or(gen.layout);
    let dataset = Dataset::from_generator(&gen, a.split, a.count)?;
    write_dataset(&a.out, &dataset)?;
    print_json(&dataset.manifest)
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainConfig = read_json(&a.config)?;
    if a.data.is_some() {
        cfg.data_dir = a.data;
    }
    if a.eval_data.is_some() {
        cfg.eval_dir = a.eval_data;
    }
    if a.out.is_some() {
        cfg.out_dir = a.out;
    }
    cfg.variant = a.variant.unwrap_or(cfg.variant);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.lr_halve_every = a.lr_halve_every.unwrap_or(cfg.lr_halve_every);
    cfg.loss.lambda_seg = a.lambda_seg.unwrap_or(cfg.loss.lambda_seg);
    cfg.loss.lambda_depth = a.lambda_depth.unwrap_or(cfg.loss.lambda_depth);
    cfg.loss.weighting = a.weighting.unwrap_or(cfg.loss.weighting);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.precision = a.precision.unwrap_or(cfg.precision);
    cfg.eval_every = a.eval_every.unwrap_or(cfg.eval_every);
    cfg.augment &= !a.no_augment;
    let summary = train(&cfg)?;
    print_json(&summary)
}

fn eval_cmd(a: EvalArgs) -> Result<(), CliError> {
    let baseline = a.baseline.as_ref().map(read_report).transpose()?;
    let report = evaluate_checkpoint(&a.checkpoint, &a.data, baseline.as_ref(), a.batch_size)?;
    if let Some(p) = &a.out {
        serde_json::to_writer_pretty(BufWriter::new(File::create(p)?), &report)?;
    }
    print_json(&report)
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<(), CliError> {
    let mut cfg: GradcheckConfig = read_json(&a.config)?;
    cfg.variant = a.variant.unwrap_or(cfg.variant);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.tolerance = a.tolerance.unwrap_or(cfg.tolerance);
    let report = gradcheck(&cfg)?;
    print_json(&report)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "max relative error {:.3e} exceeds {:.3e}",
            report.max_rel_err, report.tolerance
        )))
    }
}

fn verify_prop(a: VerifyPropArgs) -> Result<(), CliError> {
    let cfg = SweepConfig {
        trials: a.trials,
        max_support: a.max_support,
        seed: a.seed,
        tol: a.tol,
        group_tol: a.group_tol,
    };
    let mut dump = a.ndjson.as_ref().map(File::create).transpose()?.map(BufWriter::new);
    let mut write_err = None;
    let summary = run_sweep(&cfg, |t| {
        if let (Some(w), None) = (dump.as_mut(), &write_err) {
            if let Err(e) = serde_json::to_writer(&mut *w, t).map_err(CliError::from).and_then(|_| Ok(writeln!(w)?)) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(mut w) = dump {
        w.flush()?;
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<28} {:>12}", "trials", summary.trials)?;
    writeln!(out, "{:<28} {:>12}", "violations", summary.violations.len())?;
    let rows = [
        ("max xtc_gap", summary.max_xtc_gap),
        ("max align_gap", summary.max_align_gap),
        ("max tower residual", summary.max_tower_residual),
        ("max rewrite residual", summary.max_rewrite_residual),
        ("max total-variance residual", summary.max_variance_identity_residual),
        ("min jensen slack", summary.min_jensen_slack),
        ("xi min", summary.xi_min),
        ("xi mean", summary.xi_mean),
        ("xi max", summary.xi_max),
    ];
    for (name, v) in rows {
        writeln!(out, "{name:<28} {v:>12.4e}")?;
    }
    match summary.violations.first() {
        None => Ok(()),
        Some(v) => Err(CliError::CheckFailed(format!(
            "{} violations; first: trial {} `{}` exceeded by {:.3e}",
            summary.violations.len(),
            v.trial,
            v.check,
            v.excess
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::VerifyProp(a) => verify_prop(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(if matches!(e, CliError::CheckFailed(_)) { 1 } else { 2 })
        }
    }
}
