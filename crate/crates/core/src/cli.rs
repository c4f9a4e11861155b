// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `fdrseg` command-line tool.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, unknown
//! experiment), 1 when the command itself fails. Diagnostics go to stderr.
//! Every run writes a manifest `<output>.manifest.json` (or
//! `<name>_manifest.json` inside an experiment directory) recording the
//! resolved configuration and the files it produced.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::evaluation::{score, SigmaConstant};
use crate::experiments::{self, ExperimentConfig, TableCache};
use crate::quantiles::{self, GridKind, QuantileTable};
use crate::segmenter::{self, Segmentation};
use crate::signal::{LowpassKernel, StepFunction};

#[derive(Debug, Parser)]
#[command(name = "fdrseg", version, about = "Multiscale change-point segmentation with FDR control")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a table of local null quantiles.
    Quantiles(QuantilesArgs),
    /// Segment a data file.
    Segment(SegmentArgs),
    /// Score an estimate against a true step function.
    Evaluate(EvaluateArgs),
    /// Run a simulation study.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct QuantilesArgs {
    #[arg(long, value_parser = probability)]
    pub alpha: f64,
    /// Largest segment length covered.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = quantiles::DEFAULT_REPS, value_parser = mc_reps)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "geometric", value_parser = ["exact", "geometric"])]
    pub grid: String,
    /// Low-pass kernel, one tap per line (normalised on load).
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Subsampling factor after the kernel.
    #[arg(long, default_value_t = 1, requires = "kernel", value_parser = clap::value_parser!(u64).range(1..))]
    pub factor: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// One value per line, or a CSV file with `--column`.
    pub input: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, default_value = "fdrseg", value_parser = ["fdrseg", "smuce", "dfdrseg"])]
    pub method: String,
    /// Local level (global level for smuce). Defaults to the table's level.
    #[arg(long, value_parser = probability, conflicts_with = "beta")]
    pub alpha: Option<f64>,
    /// Target FDR; sets `alpha = beta / (2 + beta)`.
    #[arg(long, value_parser = probability)]
    pub beta: Option<f64>,
    /// Noise level, or `auto` for the difference-based estimate.
    #[arg(long, default_value = "auto", value_parser = sigma)]
    pub sigma: SigmaArg,
    /// IQR normalisation for `--sigma auto`: `consistent` divides by
    /// 1.349·√2, `verbatim` multiplies by 1.349/√2.
    #[arg(long, default_value = "consistent", value_parser = ["consistent", "verbatim"])]
    pub sigma_constant: String,
    /// Quantile table (fdrseg, dfdrseg).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Leading samples of every segment excluded from its tests (dfdrseg).
    #[arg(long)]
    pub trim: Option<usize>,
    /// Monte-Carlo draws for the smuce threshold.
    #[arg(long, default_value_t = quantiles::DEFAULT_REPS, value_parser = mc_reps)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the fitted step function as TSV `start end level`.
    #[arg(long)]
    pub steps: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON step function `{"boundaries": [...], "levels": [...]}`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Segmentation JSON as written by `segment`.
    #[arg(long)]
    pub estimate: PathBuf,
    /// CSV output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_parser = experiments::NAMES)]
    pub name: String,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte-Carlo draws per quantile table.
    #[arg(long)]
    pub mc_reps: Option<usize>,
    /// Published repetition counts instead of the desk-scale defaults.
    #[arg(long)]
    pub full: bool,
    /// Record per-fit wall-clock times (outputs then differ between runs).
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug)]
pub enum SigmaArg {
    Auto,
    Value(f64),
}

fn probability(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn mc_reps(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if v >= 100 {
        Ok(v)
    } else {
        Err("at least 100 Monte-Carlo draws are required".into())
    }
}

fn sigma(s: &str) -> std::result::Result<SigmaArg, String> {
    if s == "auto" {
        return Ok(SigmaArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaArg::Value(v)),
        _ => Err(format!("`{s}` is neither `auto` nor a positive number")),
    }
}

/// Provenance of one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub quantile_tables: Vec<String>,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_owned(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            quantile_tables: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Errors the command reports with exit code 2.
fn usage(msg: impl Into<String>) -> Error {
    Error::Config(format!("usage: {}", msg.into()))
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::Config(m) if m.starts_with("usage: "))
}

/// Reads one float per line, or the named column of a CSV file.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse(format!("{}:{line}: `{s}` is not a finite number", path.display())))
    };
    let values = match column {
        None => {
            let text = std::fs::read_to_string(path)?;
            let mut v = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if !line.trim().is_empty() {
                    v.push(parse(line, i + 1)?);
                }
            }
            v
        }
        Some(col) => {
            let mut rdr = csv::Reader::from_path(path)?;
            let idx = rdr
                .headers()?
                .iter()
                .position(|h| h.trim() == col)
                .ok_or_else(|| Error::Parse(format!("{}: no column `{col}`", path.display())))?;
            let mut v = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                v.push(parse(rec.get(idx).unwrap_or(""), i + 2)?);
            }
            v
        }
    };
    if values.is_empty() {
        return Err(Error::Parse(format!("{}: no observations", path.display())));
    }
    Ok(values)
}

fn read_kernel(path: &Path, factor: usize) -> Result<LowpassKernel> {
    let taps = read_series(path, None)?;
    LowpassKernel::normalized(taps, factor)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_quantiles(a: &QuantilesArgs) -> Result<()> {
    let n = usize::try_from(a.n).map_err(|_| usage("--n too large"))?;
    let kernel = match &a.kernel {
        Some(p) => read_kernel(p, a.factor as usize)?,
        None => LowpassKernel::identity(),
    };
    let grid = quantiles::make_grid(a.grid.parse::<GridKind>()?, n);
    let table = quantiles::simulate_local_quantiles(a.alpha, n, &grid, a.reps, a.seed, &kernel)?;
    table.save(&a.out)?;
    let mut m = RunManifest::new(
        "quantiles",
        serde_json::json!({
            "alpha": a.alpha, "n": n, "reps": a.reps, "grid": a.grid,
            "factor": a.factor, "noise": table.noise_descriptor().to_string(),
        }),
    );
    m.inputs.extend(a.kernel.clone());
    m.outputs.push(a.out.clone());
    m.seed = Some(a.seed);
    m.write(&manifest_path(&a.out))
}

fn resolve_sigma(arg: SigmaArg, constant: &str, y: &[f64], trim: usize) -> Result<f64> {
    match arg {
        SigmaArg::Value(v) => Ok(v),
        SigmaArg::Auto => {
            // Filtered data are thinned by the kernel support first so that
            // neighbouring differences are close to independent.
            let thinned: Vec<f64> = y.iter().step_by(trim.max(1)).copied().collect();
            let constant = if constant == "verbatim" { SigmaConstant::Verbatim } else { SigmaConstant::Consistent };
            let s = crate::evaluation::estimate_sigma(&thinned, constant)?;
            if s > 0.0 {
                Ok(s)
            } else {
                Err(config("estimated noise level is zero; pass --sigma"))
            }
        }
    }
}

fn load_table(path: Option<&PathBuf>, method: &str) -> Result<QuantileTable> {
    let p = path.ok_or_else(|| usage(format!("--table is required for --method {method}")))?;
    QuantileTable::load(p)
}

fn write_steps(path: &Path, s: &Segmentation) -> Result<()> {
    let mut text = String::from("start\tend\tlevel\n");
    for (w, c) in s.boundaries().windows(2).zip(&s.levels) {
        text.push_str(&format!("{}\t{}\t{}\n", w[0], w[1], c));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let y = read_series(&a.input, a.column.as_deref())?;
    let alpha = a.alpha.or(a.beta.map(crate::alpha_for_fdr));
    let mut m = RunManifest::new("segment", serde_json::Value::Null);
    let (seg, sigma) = match a.method.as_str() {
        "smuce" => {
            if a.trim.is_some() {
                return Err(usage("--trim only applies to --method dfdrseg"));
            }
            let alpha = alpha.ok_or_else(|| usage("--method smuce needs --alpha or --beta"))?;
            let sigma = resolve_sigma(a.sigma, &a.sigma_constant, &y, 0)?;
            let q = quantiles::simulate_global_quantile(alpha, y.len(), a.reps, a.seed)?;
            m.seed = Some(a.seed);
            m.quantile_tables.push(format!("global/n{}/r{}/s{}/q{q}", y.len(), a.reps, a.seed));
            (segmenter::smuce(&y, alpha, sigma, q)?, sigma)
        }
        method => {
            let table = load_table(a.table.as_ref(), method)?;
            let alpha = alpha.unwrap_or(table.alpha());
            m.inputs.extend(a.table.clone());
            m.quantile_tables.push(format!("{}/n{}/r{}/s{}", table.noise_descriptor(), table.n_max(), table.mc_reps(), table.seed()));
            if method == "fdrseg" {
                if a.trim.is_some_and(|t| t > 0) {
                    return Err(usage("--trim only applies to --method dfdrseg"));
                }
                let sigma = resolve_sigma(a.sigma, &a.sigma_constant, &y, 0)?;
                (segmenter::fdrseg(&y, alpha, sigma, &table)?, sigma)
            } else {
                let trim = a.trim.ok_or_else(|| usage("--method dfdrseg needs --trim"))?;
                let sigma = resolve_sigma(a.sigma, &a.sigma_constant, &y, trim)?;
                let noise = table.noise_descriptor().clone();
                (segmenter::dfdrseg_with_trim(&y, alpha, sigma, trim, &table, &noise)?, sigma)
            }
        }
    };
    m.config = serde_json::json!({
        "method": a.method, "alpha": seg.alpha, "beta": a.beta, "sigma": sigma,
        "sigma_estimated": matches!(a.sigma, SigmaArg::Auto), "sigma_constant": a.sigma_constant, "column": a.column, "trim": a.trim,
    });
    m.inputs.insert(0, a.input.clone());
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&seg)? + "\n"))?;
    m.outputs.extend(a.out.clone());
    if let Some(p) = &a.steps {
        write_steps(p, &seg)?;
        m.outputs.push(p.clone());
    }
    // Without a file output the manifest sits next to the input.
    let anchor = a.out.clone().or(a.steps.clone()).unwrap_or_else(|| a.input.with_extension("segment"));
    m.write(&manifest_path(&anchor))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth: StepFunction = serde_json::from_str(&std::fs::read_to_string(&a.truth)?)?;
    let est: Segmentation = serde_json::from_str(&std::fs::read_to_string(&a.estimate)?)?;
    if est.change_indices.len() != est.k_hat || est.levels.len() != est.k_hat + 1 || est.change_indices.iter().any(|&i| i == 0 || i >= est.n) {
        return Err(Error::Parse(format!("{}: inconsistent segmentation", a.estimate.display())));
    }
    let s = score(&truth, &est)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K_true", "K_hat", "FD", "TD", "fdr_term", "d", "ise", "v_measure"])?;
    w.write_record([
        s.k_true.to_string(),
        s.k_hat.to_string(),
        s.fd.to_string(),
        s.td.to_string(),
        s.fdr_term.to_string(),
        s.d.to_string(),
        s.ise.to_string(),
        s.v_measure.to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_output(a.out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    let mut m = RunManifest::new("evaluate", serde_json::Value::Null);
    m.inputs = vec![a.truth.clone(), a.estimate.clone()];
    m.outputs.extend(a.out.clone());
    m.write(&manifest_path(a.out.as_deref().unwrap_or(&a.estimate.with_extension("evaluate"))))
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::defaults(&a.name)?;
    if a.full {
        cfg = cfg.full_scale();
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(r) = a.mc_reps {
        cfg.mc_reps = r;
    }
    cfg.timing = a.timing;
    cfg.output = a.out.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let out = experiments::run(&cfg, &TableCache::from_env())?;
    let mut m = RunManifest::new("experiment", serde_json::to_value(&cfg)?);
    m.config["config_hash"] = cfg.hash().into();
    // Paths relative to the manifest keep reruns in other directories identical.
    m.outputs = out.files.iter().map(|f| f.strip_prefix(&a.out).map(Path::to_path_buf).unwrap_or_else(|_| f.clone())).collect();
    m.seed = Some(cfg.seed);
    m.quantile_tables = out.tables;
    m.write(&a.out.join(format!("{}_manifest.json", cfg.name)))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global() {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let result = match &cli.command {
        Command::Quantiles(a) => cmd_quantiles(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) if is_usage(&e) => {
            eprintln!("error: {}", e.to_string().replacen("configuration error: usage: ", "", 1));
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    run(Cli::parse())
}
