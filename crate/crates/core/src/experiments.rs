// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation studies at configurable scale.
//!
//! Every experiment draws its data from streams keyed by the configuration
//! seed, the sweep position and the repetition, so the output files depend
//! on the configuration alone (thread count included). All methods of one
//! repetition see the same data. Quantile tables come from a separate stream
//! and may be cached on disk, see [`TableCache`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, Error, Result};
use crate::evaluation::{self, Scores};
use crate::quantiles::{self, GridKind, QuantileTable};
use crate::segmenter::{self, Method, Segmentation};
use crate::signal::{self, LowpassKernel, NoiseModel, StepFunction};
use crate::{alpha_for_fdr, fdr_bound, rng, stats};

/// Experiment names accepted by [`ExperimentConfig::defaults`] and [`run`].
pub const NAMES: [&str; 7] = [
    "fdr-bound",
    "teeth-frequency",
    "mix-noise",
    "constant",
    "ion-channel",
    "quantile-comparison",
    "blocks-demo",
];

/// Environment variable naming the quantile table cache directory.
pub const CACHE_ENV: &str = "FDRSEG_TABLE_CACHE";

/// Teeth amplitude used by the teeth experiments, in units of the noise level.
pub const TEETH_DELTA: f64 = 2.0;

/// Recording rate of the ion-channel simulation (Hz).
pub const ION_SAMPLING_RATE: f64 = 10_000.0;

const TAG_DATA: u64 = 0xDA7A;
const TAG_TABLES: u64 = 0x7AB1E;
const TAG_PATH: u64 = 0x9A7;
const TAG_FILTER: u64 = 0xF117;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub reps: usize,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Swept parameter: number of teeth change-points (fdr-bound), exponent
    /// θ with `K = round(n^θ)` (teeth-frequency), transition rate per second
    /// (ion-channel) or sample size (quantile-comparison). Empty for the
    /// experiments that only sweep `sigmas`.
    pub sweep: Vec<f64>,
    /// Teeth amplitude.
    pub delta: f64,
    /// Low-pass kernel support on the fine grid and subsampling factor
    /// (ion-channel only).
    pub kernel_taps: usize,
    pub factor: usize,
    pub mc_reps: usize,
    pub seed: u64,
    /// Record wall-clock runtimes. Off by default so that reruns produce
    /// identical files.
    pub timing: bool,
    #[serde(skip)]
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale defaults for the named experiment.
    pub fn defaults(name: &str) -> Result<Self> {
        let base = Self {
            name: name.to_owned(),
            reps: 200,
            n: 600,
            alphas: vec![0.1],
            sigmas: vec![1.0],
            sweep: Vec::new(),
            delta: TEETH_DELTA,
            kernel_taps: 30,
            factor: 10,
            mc_reps: quantiles::DEFAULT_REPS,
            seed: 1,
            timing: false,
            output: PathBuf::from("."),
        };
        let cfg = match name {
            "fdr-bound" => Self { alphas: vec![0.05, 0.1, 0.2, 0.3], sweep: vec![50.0], ..base },
            "teeth-frequency" => Self {
                n: 3000,
                reps: 100,
                sweep: (1..=9).map(|k| k as f64 / 10.0).collect(),
                ..base
            },
            "mix-noise" => Self {
                n: signal::MIX_LENGTH,
                alphas: vec![0.15],
                sigmas: (1..=8).map(f64::from).collect(),
                ..base
            },
            "constant" => Self { n: 500, alphas: vec![0.15], ..base },
            "ion-channel" => Self {
                n: 10_000,
                reps: 20,
                alphas: vec![alpha_for_fdr(0.05)],
                sigmas: vec![1.0 / 3.0],
                sweep: (0..4).map(|k| 10f64.powf(2.0 * k as f64 / 3.0)).collect(),
                ..base
            },
            "quantile-comparison" => Self {
                n: 10_000,
                reps: 1,
                alphas: vec![0.05, 0.1, 0.3, 0.5],
                sweep: vec![10.0, 100.0, 1000.0, 10_000.0],
                ..base
            },
            "blocks-demo" => Self {
                n: 2048,
                reps: 20,
                alphas: vec![alpha_for_fdr(0.1), alpha_for_fdr(0.5)],
                sigmas: vec![10.0],
                ..base
            },
            other => return Err(unknown(other)),
        };
        Ok(cfg)
    }

    /// Scales repetitions up to the published study sizes.
    pub fn full_scale(mut self) -> Self {
        match self.name.as_str() {
            "ion-channel" => self.reps = 100,
            "quantile-comparison" => self.mc_reps = 100_000,
            _ => self.reps = 1000,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !NAMES.contains(&self.name.as_str()) {
            return Err(unknown(&self.name));
        }
        if self.reps == 0 || self.n == 0 {
            return Err(config("reps and n must be at least 1"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(config("alpha grid must be nonempty with values in (0, 1)"));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(config("sigma grid must be nonempty with positive values"));
        }
        let needs_sweep = matches!(self.name.as_str(), "fdr-bound" | "teeth-frequency" | "ion-channel" | "quantile-comparison");
        if needs_sweep && self.sweep.is_empty() {
            return Err(config(format!("experiment `{}` needs a nonempty sweep grid", self.name)));
        }
        if self.sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(config("sweep values must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(config("teeth amplitude must be positive"));
        }
        if self.kernel_taps == 0 || self.factor == 0 {
            return Err(config("kernel support and subsampling factor must be at least 1"));
        }
        if self.mc_reps < 100 {
            return Err(config("at least 100 Monte-Carlo draws are required"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration (output location excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn table_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[TAG_TABLES])
    }

    fn kernel(&self) -> Result<LowpassKernel> {
        LowpassKernel::truncated_gaussian(self.kernel_taps, self.factor)
    }
}

fn unknown(name: &str) -> Error {
    config(format!("unknown experiment `{name}` (valid: {})", NAMES.join(", ")))
}

/// One method applied to one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(rename = "K_true")]
    pub k_true: usize,
    #[serde(rename = "K_hat")]
    pub k_hat: usize,
    #[serde(rename = "FD")]
    pub fd: usize,
    #[serde(rename = "TD")]
    pub td: usize,
    pub fdr_term: f64,
    pub d: f64,
    pub ise: f64,
    pub v_measure: f64,
    pub runtime_ms: Option<f64>,
    pub setting: Option<f64>,
    pub config_hash: String,
}

/// Aggregate over the repetitions of one (setting, sigma, method, alpha).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: Option<f64>,
    pub method: Method,
    pub alpha: f64,
    pub sigma: f64,
    pub reps: usize,
    pub mean_k_true: f64,
    pub mean_k_hat: f64,
    pub median_k_hat: f64,
    pub mode_k_hat: usize,
    pub p_k_correct: f64,
    /// Mean of `K̂ - K`.
    pub mean_bias: f64,
    pub fdr: f64,
    pub fdr_se: f64,
    pub fdr_bound: f64,
    pub mean_d: f64,
    pub median_d: f64,
    /// Median of `d` over the repetitions with `K̂ = K`.
    pub median_d_correct: Option<f64>,
    pub mise: f64,
    pub mean_v_measure: f64,
    pub mean_runtime_ms: Option<f64>,
    pub config_hash: String,
}

/// Row of the quantile-comparison output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub n: usize,
    pub alpha: f64,
    pub q_local: f64,
    pub q_global: f64,
    pub mc_reps: usize,
    pub config_hash: String,
}

/// Results and written files of one experiment run.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RepRecord>,
    pub summary: Vec<SummaryRow>,
    pub quantiles: Vec<QuantileRow>,
    pub files: Vec<PathBuf>,
    /// Quantile tables used, as `descriptor/n_max/alpha/mc_reps/seed`.
    pub tables: Vec<String>,
}

/// Quantile tables, optionally persisted in a cache directory.
#[derive(Clone, Debug)]
pub struct TableCache {
    dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct GlobalQuantiles {
    n: usize,
    mc_reps: usize,
    seed: u64,
    alphas: Vec<f64>,
    values: Vec<f64>,
}

impl TableCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    /// Cache directory from [`CACHE_ENV`], if set.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    fn file(&self, name: String) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    /// Local tables on the geometric grid up to `n_max`, one per alpha.
    pub fn local(&self, alphas: &[f64], n_max: usize, mc_reps: usize, seed: u64, kernel: &LowpassKernel) -> Result<Vec<QuantileTable>> {
        let descriptor = kernel.descriptor().to_string().replace(':', "-");
        let paths: Vec<Option<PathBuf>> = alphas
            .iter()
            .map(|a| self.file(format!("local_{descriptor}_n{n_max}_r{mc_reps}_s{seed}_a{:016x}.json", a.to_bits())))
            .collect();
        let cached: Vec<Option<QuantileTable>> = paths
            .iter()
            .map(|p| p.as_deref().and_then(|p| QuantileTable::load(p).ok()))
            .collect();
        if cached.iter().all(Option::is_some) {
            return Ok(cached.into_iter().flatten().collect());
        }
        let grid = quantiles::make_grid(GridKind::Geometric, n_max);
        let draws = quantiles::simulate_null_statistics(&grid, mc_reps, seed, kernel)?;
        let tables = alphas.iter().map(|&a| draws.table(a)).collect::<Result<Vec<_>>>()?;
        if let Some(dir) = &self.dir {
            std::fs::create_dir_all(dir)?;
            for (t, p) in tables.iter().zip(&paths) {
                t.save(p.as_ref().expect("cache path"))?;
            }
        }
        Ok(tables)
    }

    /// Global quantiles `q̃_α(n)`, one per alpha.
    pub fn global(&self, alphas: &[f64], n: usize, mc_reps: usize, seed: u64) -> Result<Vec<f64>> {
        let path = self.file(format!("global_n{n}_r{mc_reps}_s{seed}.json"));
        if let Some(p) = &path {
            if let Ok(text) = std::fs::read_to_string(p) {
                if let Ok(g) = serde_json::from_str::<GlobalQuantiles>(&text) {
                    if g.n == n && g.mc_reps == mc_reps && g.seed == seed {
                        let found: Option<Vec<f64>> = alphas
                            .iter()
                            .map(|a| g.alphas.iter().position(|b| b.to_bits() == a.to_bits()).map(|i| g.values[i]))
                            .collect();
                        if let Some(v) = found {
                            return Ok(v);
                        }
                    }
                }
            }
        }
        let values = quantiles::simulate_global_quantiles(alphas, n, mc_reps, seed)?;
        if let (Some(dir), Some(p)) = (&self.dir, &path) {
            std::fs::create_dir_all(dir)?;
            let g = GlobalQuantiles { n, mc_reps, seed, alphas: alphas.to_vec(), values: values.clone() };
            std::fs::write(p, serde_json::to_string_pretty(&g)? + "\n")?;
        }
        Ok(values)
    }
}

/// Estimator applied to every repetition of a scenario.
enum Job<'a> {
    Fdrseg(&'a QuantileTable),
    Smuce { alpha: f64, q_tilde: f64 },
    Dfdrseg { table: &'a QuantileTable, kernel: &'a LowpassKernel },
}

impl Job<'_> {
    fn alpha(&self) -> f64 {
        match self {
            Job::Fdrseg(t) | Job::Dfdrseg { table: t, .. } => t.alpha(),
            Job::Smuce { alpha, .. } => *alpha,
        }
    }

    fn method(&self) -> Method {
        match self {
            Job::Fdrseg(_) => Method::Fdrseg,
            Job::Smuce { .. } => Method::Smuce,
            Job::Dfdrseg { .. } => Method::Dfdrseg,
        }
    }

    fn run(&self, y: &[f64], sigma: f64) -> Result<Segmentation> {
        match self {
            Job::Fdrseg(t) => segmenter::fdrseg(y, t.alpha(), sigma, t),
            Job::Smuce { alpha, q_tilde } => segmenter::smuce(y, *alpha, sigma, *q_tilde),
            Job::Dfdrseg { table, kernel } => segmenter::dfdrseg(y, table.alpha(), sigma, kernel, table),
        }
    }
}

/// Data source of one scenario.
enum Truth {
    Step(StepFunction),
    Markov { rate: f64, kernel: LowpassKernel },
}

impl Truth {
    /// Observations and the signal they are scored against.
    fn draw(&self, n: usize, sigma: f64, seed: u64) -> Result<(Vec<f64>, StepFunction)> {
        match self {
            Truth::Step(f) => Ok((signal::sample(f, n, &NoiseModel::iid(sigma)?, seed)?, f.clone())),
            Truth::Markov { rate, kernel } => {
                let factor = kernel.factor();
                let duration = n as f64 / ION_SAMPLING_RATE;
                let path = signal::simulate_markov_path(
                    *rate,
                    *rate,
                    duration,
                    ION_SAMPLING_RATE * factor as f64,
                    (0.0, 1.0),
                    rng::derive_seed(seed, &[TAG_PATH]),
                )?;
                let y = signal::lowpass_subsample(&path.values, kernel, sigma, rng::derive_seed(seed, &[TAG_FILTER]))?;
                let recorded: Vec<f64> = path.values.iter().step_by(factor).take(n).copied().collect();
                Ok((y, StepFunction::from_grid(&recorded)?))
            }
        }
    }
}

struct Scenario<'a> {
    setting: Option<f64>,
    sigma_index: usize,
    setting_index: usize,
    sigma: f64,
    truth: Truth,
    jobs: Vec<Job<'a>>,
}

fn run_scenario(cfg: &ExperimentConfig, hash: &str, s: &Scenario<'_>) -> Result<Vec<RepRecord>> {
    let per_rep: Vec<Result<Vec<RepRecord>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = rng::derive_seed(cfg.seed, &[TAG_DATA, s.setting_index as u64, s.sigma_index as u64, rep as u64]);
            let (y, truth) = s.truth.draw(cfg.n, s.sigma, seed)?;
            s.jobs
                .iter()
                .map(|job| {
                    let start = Instant::now();
                    let seg = job.run(&y, s.sigma)?;
                    let runtime_ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                    let sc: Scores = evaluation::score(&truth, &seg)?;
                    Ok(RepRecord {
                        rep,
                        method: job.method(),
                        alpha: job.alpha(),
                        sigma: s.sigma,
                        k_true: sc.k_true,
                        k_hat: sc.k_hat,
                        fd: sc.fd,
                        td: sc.td,
                        fdr_term: sc.fdr_term,
                        d: sc.d,
                        ise: sc.ise,
                        v_measure: sc.v_measure,
                        runtime_ms,
                        setting: s.setting,
                        config_hash: hash.to_owned(),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.reps * s.jobs.len());
    for r in per_rep {
        out.extend(r?);
    }
    // Group by method and level, repetitions in order.
    out.sort_by_key(|r| (s.jobs.iter().position(|j| j.method() == r.method && j.alpha() == r.alpha), r.rep));
    Ok(out)
}

/// Aggregates records that share (setting, sigma, method, alpha), in order of
/// first appearance.
pub fn summarize(records: &[RepRecord]) -> Vec<SummaryRow> {
    let key = |r: &RepRecord| (r.setting.map(f64::to_bits), r.sigma.to_bits(), r.method, r.alpha.to_bits());
    let mut keys = Vec::new();
    for r in records {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&RepRecord> = records.iter().filter(|r| key(r) == k).collect();
            let first = group[0];
            let col = |f: fn(&RepRecord) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let k_hat: Vec<usize> = group.iter().map(|r| r.k_hat).collect();
            let fdr_terms = col(|r| r.fdr_term);
            let correct_d: Vec<f64> = group.iter().filter(|r| r.k_hat == r.k_true).map(|r| r.d).collect();
            let runtimes: Option<Vec<f64>> = group.iter().map(|r| r.runtime_ms).collect();
            SummaryRow {
                setting: first.setting,
                method: first.method,
                alpha: first.alpha,
                sigma: first.sigma,
                reps: group.len(),
                mean_k_true: stats::mean(&col(|r| r.k_true as f64)),
                mean_k_hat: stats::mean(&col(|r| r.k_hat as f64)),
                median_k_hat: stats::median(&col(|r| r.k_hat as f64)),
                mode_k_hat: stats::mode(&k_hat).unwrap_or(0),
                p_k_correct: group.iter().filter(|r| r.k_hat == r.k_true).count() as f64 / group.len() as f64,
                mean_bias: stats::mean(&col(|r| r.k_hat as f64 - r.k_true as f64)),
                fdr: stats::mean(&fdr_terms),
                fdr_se: stats::std_error(&fdr_terms),
                fdr_bound: fdr_bound(first.alpha),
                mean_d: stats::mean(&col(|r| r.d)),
                median_d: stats::median(&col(|r| r.d)),
                median_d_correct: (!correct_d.is_empty()).then(|| stats::median(&correct_d)),
                mise: stats::mean(&col(|r| r.ise)),
                mean_v_measure: stats::mean(&col(|r| r.v_measure)),
                mean_runtime_ms: runtimes.map(|v| stats::mean(&v)),
                config_hash: first.config_hash.clone(),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn table_ref(t: &QuantileTable) -> String {
    format!("{}/{}/{}/{}/{}", t.noise_descriptor(), t.n_max(), t.alpha(), t.mc_reps(), t.seed())
}

/// Runs the configured experiment and writes `<name>.csv` (one row per
/// repetition and method) and `<name>_summary.csv` into `cfg.output`; the
/// quantile comparison writes a single `<name>.csv`, and the blocks
/// demonstration adds `<name>_fit.tsv` with the first repetition's fits.
pub fn run(cfg: &ExperimentConfig, cache: &TableCache) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    if cfg.name == "quantile-comparison" {
        return run_quantile_comparison(cfg, cache);
    }
    let hash = cfg.hash();
    let iid = LowpassKernel::identity();
    let tseed = cfg.table_seed();
    let mut out = ExperimentOutput::default();

    let locals = cache.local(&cfg.alphas, cfg.n, cfg.mc_reps, tseed, &iid)?;
    out.tables.extend(locals.iter().map(table_ref));
    let with_smuce = matches!(cfg.name.as_str(), "teeth-frequency" | "mix-noise" | "constant" | "blocks-demo");
    let globals = if with_smuce { cache.global(&cfg.alphas, cfg.n, cfg.mc_reps, tseed)? } else { Vec::new() };
    let kernel = cfg.kernel()?;
    let dependent = if cfg.name == "ion-channel" {
        let t = cache.local(&cfg.alphas, cfg.n, cfg.mc_reps, tseed, &kernel)?;
        out.tables.extend(t.iter().map(table_ref));
        t
    } else {
        Vec::new()
    };

    let jobs = || -> Vec<Job<'_>> {
        let mut jobs: Vec<Job<'_>> = locals.iter().map(Job::Fdrseg).collect();
        jobs.extend(cfg.alphas.iter().zip(&globals).map(|(&alpha, &q_tilde)| Job::Smuce { alpha, q_tilde }));
        jobs.extend(dependent.iter().map(|table| Job::Dfdrseg { table, kernel: &kernel }));
        jobs
    };

    let mut scenarios = Vec::new();
    let settings: Vec<Option<f64>> = if cfg.sweep.is_empty() { vec![None] } else { cfg.sweep.iter().map(|&v| Some(v)).collect() };
    for (si, &setting) in settings.iter().enumerate() {
        for (gi, &sigma) in cfg.sigmas.iter().enumerate() {
            let truth = match cfg.name.as_str() {
                "fdr-bound" => Truth::Step(signal::make_teeth(teeth_count(setting)?, cfg.delta * sigma)?),
                "teeth-frequency" => {
                    let theta = setting.expect("sweep is nonempty");
                    Truth::Step(signal::make_teeth((cfg.n as f64).powf(theta).round() as usize, cfg.delta * sigma)?)
                }
                "mix-noise" => Truth::Step(signal::make_mix()),
                "constant" => Truth::Step(signal::make_constant(0.0)),
                "blocks-demo" => Truth::Step(signal::make_blocks()),
                "ion-channel" => Truth::Markov { rate: setting.expect("sweep is nonempty"), kernel: kernel.clone() },
                other => return Err(unknown(other)),
            };
            scenarios.push(Scenario { setting, setting_index: si, sigma_index: gi, sigma, truth, jobs: jobs() });
        }
    }

    for s in &scenarios {
        out.records.extend(run_scenario(cfg, &hash, s)?);
    }
    out.summary = summarize(&out.records);

    let per_rep = cfg.output.join(format!("{}.csv", cfg.name));
    write_csv(&per_rep, &out.records)?;
    let summary = cfg.output.join(format!("{}_summary.csv", cfg.name));
    write_csv(&summary, &out.summary)?;
    out.files.extend([per_rep, summary]);

    if cfg.name == "blocks-demo" {
        let path = cfg.output.join(format!("{}_fit.tsv", cfg.name));
        write_blocks_fit(cfg, &scenarios[0], &path)?;
        out.files.push(path);
    }
    Ok(out)
}

fn teeth_count(setting: Option<f64>) -> Result<usize> {
    let k = setting.expect("sweep is nonempty");
    if k.fract() != 0.0 || k < 1.0 {
        return Err(config(format!("teeth change-point count must be a positive integer, got {k}")));
    }
    Ok(k as usize)
}

fn write_blocks_fit(cfg: &ExperimentConfig, s: &Scenario<'_>, path: &Path) -> Result<()> {
    let seed = rng::derive_seed(cfg.seed, &[TAG_DATA, 0, 0, 0]);
    let (y, truth) = s.truth.draw(cfg.n, s.sigma, seed)?;
    let fits = s
        .jobs
        .iter()
        .map(|j| j.run(&y, s.sigma).map(|seg| seg.fitted()))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path)?;
    let mut header = vec!["i".to_owned(), "y".to_owned(), "truth".to_owned()];
    header.extend(s.jobs.iter().map(|j| format!("{}_{}", j.method(), j.alpha())));
    w.write_record(&header)?;
    let truth = truth.grid_values(cfg.n);
    for i in 0..cfg.n {
        let mut row = vec![i.to_string(), y[i].to_string(), truth[i].to_string()];
        row.extend(fits.iter().map(|f| f[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_quantile_comparison(cfg: &ExperimentConfig, _cache: &TableCache) -> Result<ExperimentOutput> {
    let hash = cfg.hash();
    let seed = cfg.table_seed();
    let mut ns: Vec<usize> = cfg.sweep.iter().map(|&v| v.round() as usize).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut grid = vec![1];
    grid.extend(ns.iter().copied().filter(|&m| m > 1));
    // Local and global draws for the same n share their noise vectors.
    let local = quantiles::simulate_null_statistics(&grid, cfg.mc_reps, seed, &LowpassKernel::identity())?;
    let mut out = ExperimentOutput::default();
    for &n in &ns {
        let g = quantiles::simulate_global_statistics(n, cfg.mc_reps, seed)?;
        let draws = &local.draws[grid.iter().position(|&m| m == n).expect("n on grid")];
        for &alpha in &cfg.alphas {
            out.quantiles.push(QuantileRow {
                n,
                alpha,
                q_local: stats::quantile_sorted(draws, 1.0 - alpha),
                q_global: stats::quantile_sorted(&g, 1.0 - alpha),
                mc_reps: cfg.mc_reps,
                config_hash: hash.clone(),
            });
        }
    }
    let path = cfg.output.join(format!("{}.csv", cfg.name));
    write_csv(&path, &out.quantiles)?;
    out.files.push(path);
    Ok(out)
}
