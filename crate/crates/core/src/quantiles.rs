// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte-Carlo null quantiles of the multiscale statistic.
//!
//! A [`QuantileTable`] holds the local quantiles `q_α(m)`, the upper-α
//! quantiles of `T_I(ε, ε̄_I)` over `m` samples of unit-variance noise, on a
//! grid of segment lengths. Lengths between grid points are served by linear
//! interpolation in `log m`.
//!
//! Draw `r` at length `m` always comes from the stream `(seed, m, r)`, so
//! tables for different levels share their Monte-Carlo draws and the local
//! and global quantiles at `m = n` are computed from the same noise.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, domain, Error, Result};
use crate::multiscale;
use crate::rng;
use crate::signal::LowpassKernel;
use crate::stats;

pub const FORMAT_VERSION: u32 = 1;

/// Recommended number of Monte-Carlo draws per grid point.
pub const DEFAULT_REPS: usize = 5000;

/// Lengths up to this value are always tabulated exactly.
pub const EXACT_UP_TO: usize = 64;

/// Noise process a table was simulated under.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NoiseDescriptor {
    Iid,
    /// Filtered Gaussian noise, identified by a hash of the kernel.
    Kernel(String),
}

impl fmt::Display for NoiseDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseDescriptor::Iid => f.write_str("iid"),
            NoiseDescriptor::Kernel(h) => write!(f, "kernel:{h}"),
        }
    }
}

impl FromStr for NoiseDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "iid" {
            return Ok(NoiseDescriptor::Iid);
        }
        match s.strip_prefix("kernel:") {
            Some(h) if !h.is_empty() && h.chars().all(|c| c.is_ascii_hexdigit()) => Ok(NoiseDescriptor::Kernel(h.to_owned())),
            _ => Err(Error::Parse(format!("unknown noise descriptor `{s}`"))),
        }
    }
}

impl From<NoiseDescriptor> for String {
    fn from(d: NoiseDescriptor) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for NoiseDescriptor {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Layout of the segment lengths a table is simulated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GridKind {
    /// Every length `1..=n_max`.
    Exact,
    /// Every length up to 64, then a geometric progression with ratio √2,
    /// closed by `n_max`.
    #[default]
    Geometric,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GridKind::Exact),
            "geometric" => Ok(GridKind::Geometric),
            _ => Err(Error::Parse(format!("unknown grid kind `{s}` (expected exact or geometric)"))),
        }
    }
}

/// Segment lengths for a table covering `1..=n_max`.
pub fn make_grid(kind: GridKind, n_max: usize) -> Vec<usize> {
    match kind {
        GridKind::Exact => (1..=n_max).collect(),
        GridKind::Geometric => {
            let mut grid: Vec<usize> = (1..=n_max.min(EXACT_UP_TO)).collect();
            let mut x = EXACT_UP_TO as f64;
            loop {
                x *= std::f64::consts::SQRT_2;
                let m = x.round() as usize;
                if m >= n_max {
                    break;
                }
                grid.push(m);
            }
            if *grid.last().unwrap_or(&0) < n_max {
                grid.push(n_max);
            }
            grid
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_grid(grid: &[usize], n_max: usize) -> Result<()> {
    if grid.first() != Some(&1) || grid.last() != Some(&n_max) {
        return Err(config(format!("grid must start at 1 and end at n_max = {n_max}")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config("grid must be strictly increasing"));
    }
    Ok(())
}

fn check_reps(mc_reps: usize) -> Result<()> {
    if mc_reps < 100 {
        return Err(domain(format!("at least 100 Monte-Carlo draws are required, got {mc_reps}")));
    }
    Ok(())
}

/// Sorted null draws of `T_I(ε, ε̄_I)` for each grid length.
#[derive(Clone, Debug)]
pub struct NullDraws {
    pub grid: Vec<usize>,
    pub draws: Vec<Vec<f64>>,
    pub mc_reps: usize,
    pub seed: u64,
    pub noise: NoiseDescriptor,
}

impl NullDraws {
    /// Local quantile table at level `alpha`.
    pub fn table(&self, alpha: f64) -> Result<QuantileTable> {
        check_alpha(alpha)?;
        let values = self.draws.iter().map(|d| upper_quantile(d, alpha)).collect();
        QuantileTable::new(alpha, self.grid.clone(), values, self.mc_reps, self.seed, self.noise.clone())
    }
}

fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    stats::quantile_sorted(sorted, 1.0 - alpha)
}

fn noise_draw(kernel: &LowpassKernel, m: usize, seed: u64, rep: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[m as u64, rep as u64]);
    kernel.filtered_noise(m, &mut r)
}

/// Simulates `mc_reps` null statistics per grid length. `kernel` selects the
/// noise process; the identity kernel gives iid noise.
pub fn simulate_null_statistics(grid: &[usize], mc_reps: usize, seed: u64, kernel: &LowpassKernel) -> Result<NullDraws> {
    check_reps(mc_reps)?;
    let n_max = *grid.last().ok_or_else(|| config("empty grid"))?;
    check_grid(grid, n_max)?;
    let jobs: Vec<(usize, usize)> = grid.iter().enumerate().flat_map(|(g, _)| (0..mc_reps).map(move |r| (g, r))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .with_min_len(16)
        .map(|&(g, r)| {
            let m = grid[g];
            if m == 1 {
                return -std::f64::consts::SQRT_2;
            }
            multiscale::centered_null_statistic(&noise_draw(kernel, m, seed, r))
        })
        .collect();
    let draws = values
        .chunks(mc_reps)
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    Ok(NullDraws { grid: grid.to_vec(), draws, mc_reps, seed, noise: kernel.descriptor() })
}

/// Local quantile table `q_α(m)` for `m ∈ grid`.
pub fn simulate_local_quantiles(
    alpha: f64,
    n_max: usize,
    grid: &[usize],
    mc_reps: usize,
    seed: u64,
    kernel: &LowpassKernel,
) -> Result<QuantileTable> {
    check_alpha(alpha)?;
    check_grid(grid, n_max)?;
    simulate_null_statistics(grid, mc_reps, seed, kernel)?.table(alpha)
}

/// Sorted draws of the global statistic `T⁰(ε, 0)` over `n` iid samples.
pub fn simulate_global_statistics(n: usize, mc_reps: usize, seed: u64) -> Result<Vec<f64>> {
    check_reps(mc_reps)?;
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    let iid = LowpassKernel::identity();
    let mut values: Vec<f64> = (0..mc_reps)
        .into_par_iter()
        .with_min_len(4)
        .map(|r| {
            let e = noise_draw(&iid, n, seed, r);
            multiscale::statistic_global(&e, 0, n, 0.0, 1.0, n).expect("valid segment")
        })
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Global quantile `q̃_α(n)`: the upper-`alpha_s` quantile of `T⁰(ε, 0)`.
pub fn simulate_global_quantile(alpha_s: f64, n: usize, mc_reps: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha_s)?;
    Ok(upper_quantile(&simulate_global_statistics(n, mc_reps, seed)?, alpha_s))
}

/// Global quantiles for several levels from one set of draws.
pub fn simulate_global_quantiles(alphas: &[f64], n: usize, mc_reps: usize, seed: u64) -> Result<Vec<f64>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let draws = simulate_global_statistics(n, mc_reps, seed)?;
    Ok(alphas.iter().map(|&a| upper_quantile(&draws, a)).collect())
}

/// Local null quantiles on a grid of segment lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    alpha: f64,
    n_max: usize,
    grid: Vec<usize>,
    values: Vec<f64>,
    mc_reps: usize,
    seed: u64,
    noise: NoiseDescriptor,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format_version: u32,
    alpha: f64,
    n_max: usize,
    grid: Vec<usize>,
    values: Vec<f64>,
    mc_reps: usize,
    seed: u64,
    noise_descriptor: NoiseDescriptor,
    checksum: String,
}

impl QuantileTable {
    pub fn new(alpha: f64, grid: Vec<usize>, values: Vec<f64>, mc_reps: usize, seed: u64, noise: NoiseDescriptor) -> Result<Self> {
        check_alpha(alpha)?;
        let n_max = *grid.last().ok_or_else(|| config("empty grid"))?;
        check_grid(&grid, n_max)?;
        if values.len() != grid.len() {
            return Err(config(format!("{} values for {} grid points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config("quantile values must be finite"));
        }
        Ok(Self { alpha, n_max, grid, values, mc_reps, seed, noise })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mc_reps(&self) -> usize {
        self.mc_reps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_descriptor(&self) -> &NoiseDescriptor {
        &self.noise
    }

    /// `q_α(m)`: the stored value on grid points, log-linear interpolation
    /// between them.
    pub fn lookup(&self, m: usize) -> Result<f64> {
        if m == 0 || m > self.n_max {
            return Err(domain(format!("segment length {m} outside [1, {}]", self.n_max)));
        }
        Ok(self.lookup_unchecked(m))
    }

    #[inline]
    pub(crate) fn lookup_unchecked(&self, m: usize) -> f64 {
        match self.grid.binary_search(&m) {
            Ok(i) => self.values[i],
            Err(i) => {
                let (m0, m1) = (self.grid[i - 1] as f64, self.grid[i] as f64);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                if v0 == v1 {
                    return v0;
                }
                let t = ((m as f64).ln() - m0.ln()) / (m1.ln() - m0.ln());
                v0 + t * (v1 - v0)
            }
        }
    }

    /// `max_{1<=m<=n} q_α(m)`.
    pub fn max_up_to(&self, n: usize) -> Result<f64> {
        let end = self.lookup(n)?;
        Ok(self.grid.iter().zip(&self.values).take_while(|(&g, _)| g <= n).fold(end, |acc, (_, &v)| acc.max(v)))
    }

    /// Fails unless the table was simulated under `expected`.
    pub fn ensure_descriptor(&self, expected: &NoiseDescriptor) -> Result<()> {
        if &self.noise != expected {
            return Err(config(format!("quantile table was simulated for {} noise, but {} is required", self.noise, expected)));
        }
        Ok(())
    }

    fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(FORMAT_VERSION.to_le_bytes());
        h.update(self.alpha.to_bits().to_le_bytes());
        h.update((self.n_max as u64).to_le_bytes());
        h.update((self.grid.len() as u64).to_le_bytes());
        for &g in &self.grid {
            h.update((g as u64).to_le_bytes());
        }
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update((self.mc_reps as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.noise.to_string().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TableFile {
            format_version: FORMAT_VERSION,
            alpha: self.alpha,
            n_max: self.n_max,
            grid: self.grid.clone(),
            values: self.values.clone(),
            mc_reps: self.mc_reps,
            seed: self.seed,
            noise_descriptor: self.noise.clone(),
            checksum: self.checksum(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Load(format!("unsupported format version {} (expected {FORMAT_VERSION})", file.format_version)));
        }
        if file.mc_reps == 0 {
            return Err(Error::Load("table records no Monte-Carlo draws".into()));
        }
        let table = Self::new(file.alpha, file.grid, file.values, file.mc_reps, file.seed, file.noise_descriptor)
            .map_err(|e| Error::Load(e.to_string()))?;
        if table.n_max != file.n_max {
            return Err(Error::Load(format!("n_max {} does not match the grid", file.n_max)));
        }
        if table.checksum() != file.checksum {
            return Err(Error::Load("checksum mismatch".into()));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
