// SPDX-License-Identifier: MIT OR Apache-2.0

//! Piecewise-constant signals, the standard test signals, and the noise
//! models used to sample observations from them.

use rand::RngExt;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Result};
use crate::quantiles::NoiseDescriptor;
use crate::rng;

/// Right-continuous step function on `[0, 1)`.
///
/// `levels[k]` holds on `[boundaries[k-1], boundaries[k])` with the
/// conventions `boundaries[-1] = 0` and `boundaries[K] = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStep")]
pub struct StepFunction {
    boundaries: Vec<f64>,
    levels: Vec<f64>,
}

#[derive(Deserialize)]
struct RawStep {
    boundaries: Vec<f64>,
    levels: Vec<f64>,
}

impl TryFrom<RawStep> for StepFunction {
    type Error = crate::Error;

    fn try_from(raw: RawStep) -> Result<Self> {
        StepFunction::new(raw.boundaries, raw.levels)
    }
}

impl StepFunction {
    pub fn new(boundaries: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != boundaries.len() + 1 {
            return Err(domain(format!(
                "{} boundaries need {} levels, got {}",
                boundaries.len(),
                boundaries.len() + 1,
                levels.len()
            )));
        }
        if levels.iter().any(|c| !c.is_finite()) {
            return Err(domain("levels must be finite"));
        }
        if boundaries.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(domain("boundaries must lie in the open interval (0, 1)"));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("boundaries must be strictly increasing"));
        }
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(domain("adjacent levels must differ"));
        }
        Ok(Self { boundaries, levels })
    }

    pub fn constant(level: f64) -> Self {
        Self { boundaries: Vec::new(), levels: vec![level] }
    }

    /// Step function whose value at `i/n` is `values[i]`; a boundary is placed
    /// at `i/n` wherever consecutive values differ.
    pub fn from_grid(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("grid values must be nonempty"));
        }
        let n = values.len() as f64;
        let mut boundaries = Vec::new();
        let mut levels = vec![values[0]];
        for i in 1..values.len() {
            if values[i] != values[i - 1] {
                boundaries.push(i as f64 / n);
                levels.push(values[i]);
            }
        }
        Self::new(boundaries, levels)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_changes(&self) -> usize {
        self.boundaries.len()
    }

    pub fn eval_at(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(domain(format!("x = {x} outside [0, 1)")));
        }
        Ok(self.value(x))
    }

    fn value(&self, x: f64) -> f64 {
        self.levels[self.boundaries.partition_point(|&t| t <= x)]
    }

    /// Index of the segment containing `x`.
    pub fn segment_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&t| t <= x)
    }

    /// Values `f(i/n)` for `i = 0..n`.
    pub fn grid_values(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.value(i as f64 / n as f64)).collect()
    }

    /// Segment index of every grid point `i/n`.
    pub fn grid_labels(&self, n: usize) -> Vec<usize> {
        (0..n).map(|i| self.segment_of(i as f64 / n as f64)).collect()
    }

    /// Shortest segment length `λ_μ` (as a fraction of `[0, 1)`).
    pub fn min_segment_length(&self) -> f64 {
        let mut prev = 0.0;
        let mut best: f64 = 1.0;
        for &t in self.boundaries.iter().chain(std::iter::once(&1.0)) {
            best = best.min(t - prev);
            prev = t;
        }
        best
    }

    /// Smallest absolute jump `Δ_μ`; `None` for a constant signal.
    pub fn min_jump(&self) -> Option<f64> {
        self.levels.windows(2).map(|w| (w[1] - w[0]).abs()).reduce(f64::min)
    }

    /// Largest absolute jump; `None` for a constant signal.
    pub fn max_jump(&self) -> Option<f64> {
        self.levels.windows(2).map(|w| (w[1] - w[0]).abs()).reduce(f64::max)
    }

    /// Snaps every boundary to the first grid point `k/n` it governs, i.e.
    /// `k = ⌈τ n⌉`, so that `grid_values(n)` is unchanged and boundaries are
    /// exact sample indices.
    pub fn aligned_to(&self, n: usize) -> Result<Self> {
        let mut boundaries = Vec::with_capacity(self.boundaries.len());
        for &t in &self.boundaries {
            let k = first_grid_index_at_or_after(t, n);
            boundaries.push(k as f64 / n as f64);
        }
        if boundaries.iter().any(|&t| t <= 0.0 || t >= 1.0)
            || boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(domain(format!("signal cannot be resolved on a grid of {n} points")));
        }
        Self::new(boundaries, self.levels.clone())
    }

    /// Boundaries as sample indices on a grid of `n` points.
    pub fn change_indices(&self, n: usize) -> Vec<usize> {
        self.boundaries.iter().map(|&t| first_grid_index_at_or_after(t, n)).collect()
    }
}

/// Smallest `k` with `k/n >= t`, evaluated the same way as grid points.
fn first_grid_index_at_or_after(t: f64, n: usize) -> usize {
    let mut k = (t * n as f64).ceil() as usize;
    while k > 0 && (k - 1) as f64 / n as f64 >= t {
        k -= 1;
    }
    while (k as f64 / n as f64) < t {
        k += 1;
    }
    k
}

/// Constant signal with no change-point.
pub fn make_constant(level: f64) -> StepFunction {
    StepFunction::constant(level)
}

/// Teeth signal: `K+1` equal-length segments alternating between `0` and `delta`.
pub fn make_teeth(num_changes: usize, delta: f64) -> Result<StepFunction> {
    if num_changes == 0 {
        return Err(domain("teeth needs at least one change-point"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(domain("teeth amplitude must be positive"));
    }
    let segments = (num_changes + 1) as f64;
    let boundaries = (1..=num_changes).map(|k| k as f64 / segments).collect();
    let levels = (0..=num_changes).map(|k| if k % 2 == 0 { 0.0 } else { delta }).collect();
    StepFunction::new(boundaries, levels)
}

// Donoho & Johnstone (1994), "Ideal spatial adaptation by wavelet shrinkage":
// jump positions and heights of the blocks signal, rescaled by the customary
// factor giving a standard deviation of 7.
const BLOCKS_POSITIONS: [f64; 11] = [0.10, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCKS_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BLOCKS_SCALE: f64 = 3.655_606;

/// Blocks signal (11 change-points).
pub fn make_blocks() -> StepFunction {
    let mut levels = vec![0.0];
    let mut acc = 0.0;
    for h in BLOCKS_HEIGHTS {
        acc += h;
        levels.push(acc * BLOCKS_SCALE);
    }
    // The heights cancel on the last segment.
    *levels.last_mut().unwrap() = 0.0;
    StepFunction::new(BLOCKS_POSITIONS.to_vec(), levels).expect("blocks table is valid")
}

// Fryzlewicz (2014), "Wild binary segmentation for multiple change-point
// detection", test signal "mix": (level, run length) on n = 560 samples.
const MIX_RUNS: [(f64, usize); 14] = [
    (7.0, 11),
    (-7.0, 10),
    (6.0, 20),
    (-6.0, 20),
    (5.0, 30),
    (-5.0, 30),
    (4.0, 40),
    (-4.0, 40),
    (3.0, 50),
    (-3.0, 50),
    (2.0, 60),
    (-2.0, 60),
    (1.0, 70),
    (-1.0, 69),
];

/// Number of samples the mix signal is defined on.
pub const MIX_LENGTH: usize = 560;

/// Mix signal (13 change-points), aligned to a grid of [`MIX_LENGTH`] points.
pub fn make_mix() -> StepFunction {
    let mut boundaries = Vec::new();
    let mut levels = Vec::new();
    let mut pos = 0usize;
    for (i, &(level, len)) in MIX_RUNS.iter().enumerate() {
        if i > 0 {
            boundaries.push(pos as f64 / MIX_LENGTH as f64);
        }
        levels.push(level);
        pos += len;
    }
    debug_assert_eq!(pos, MIX_LENGTH);
    StepFunction::new(boundaries, levels).expect("mix table is valid")
}

/// Normalized FIR low-pass kernel applied on a grid `factor` times finer
/// than the recorded samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowpassKernel {
    taps: Vec<f64>,
    factor: usize,
}

impl LowpassKernel {
    pub fn new(taps: Vec<f64>, factor: usize) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(domain("kernel taps must be finite and nonempty"));
        }
        if factor == 0 {
            return Err(domain("subsampling factor must be at least 1"));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(domain(format!("kernel taps must sum to 1 (sum = {sum})")));
        }
        Ok(Self { taps, factor })
    }

    /// Divides `taps` by their sum.
    pub fn normalized(taps: Vec<f64>, factor: usize) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if !(sum.is_finite() && sum != 0.0) {
            return Err(domain("kernel taps must have a finite nonzero sum"));
        }
        Self::new(taps.into_iter().map(|t| t / sum).collect(), factor)
    }

    /// Gaussian bump truncated to `support` taps (±3 standard deviations).
    pub fn truncated_gaussian(support: usize, factor: usize) -> Result<Self> {
        if support == 0 {
            return Err(domain("kernel support must be at least 1"));
        }
        let centre = (support as f64 - 1.0) / 2.0;
        let sd = (support as f64 / 6.0).max(f64::MIN_POSITIVE);
        let taps = (0..support).map(|k| (-0.5 * ((k as f64 - centre) / sd).powi(2)).exp()).collect();
        Self::normalized(taps, factor)
    }

    /// Identity filter (iid noise, no subsampling).
    pub fn identity() -> Self {
        Self { taps: vec![1.0], factor: 1 }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Support length `L` in fine-grid samples.
    pub fn support(&self) -> usize {
        self.taps.len()
    }

    /// Number of recorded samples after a jump over which the filtered
    /// signal is still in transition: `⌈(L-1)/factor⌉`.
    pub fn support_in_samples(&self) -> usize {
        (self.taps.len() - 1).div_ceil(self.factor)
    }

    pub fn is_identity(&self) -> bool {
        self.taps.len() == 1 && self.factor == 1
    }

    /// `Σ ρ_k²`, the variance of unit white noise after filtering.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Correlation of the recorded noise at `lag` recorded samples.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        let shift = lag * self.factor;
        let cov: f64 = self.taps.iter().zip(self.taps.iter().skip(shift)).map(|(a, b)| a * b).sum();
        cov / self.energy()
    }

    /// Stable identifier of the noise process this kernel induces.
    pub fn descriptor(&self) -> NoiseDescriptor {
        if self.is_identity() {
            return NoiseDescriptor::Iid;
        }
        let mut h = Sha256::new();
        h.update(b"fdrseg-kernel-v1");
        h.update((self.factor as u64).to_le_bytes());
        for t in &self.taps {
            h.update(t.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        NoiseDescriptor::Kernel(hex)
    }

    /// `n` recorded samples of filtered unit-marginal-variance noise: fine
    /// grid white noise is convolved with the taps and every `factor`-th value
    /// is kept.
    pub fn filtered_noise<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        let l = self.taps.len();
        let fine = self.factor * (n - 1) + l;
        let white: Vec<f64> = (0..fine).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scale = 1.0 / self.energy().sqrt();
        (0..n)
            .map(|i| {
                let t = self.factor * i + l - 1;
                let acc: f64 = self.taps.iter().enumerate().map(|(k, &r)| r * white[t - k]).sum();
                acc * scale
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    IidGaussian,
    FilteredGaussian,
}

/// Additive observation noise with marginal standard deviation `sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: f64,
    kernel: Option<LowpassKernel>,
}

impl NoiseModel {
    /// Independent Gaussian noise. `sigma = 0` gives noiseless samples.
    pub fn iid(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { kind: NoiseKind::IidGaussian, sigma, kernel: None })
    }

    pub fn filtered(sigma: f64, kernel: LowpassKernel) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { kind: NoiseKind::FilteredGaussian, sigma, kernel: Some(kernel) })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> Option<&LowpassKernel> {
        self.kernel.as_ref()
    }

    /// Unit-variance noise vector of length `n`.
    pub fn unit_noise<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match &self.kernel {
            None => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            Some(k) => k.filtered_noise(n, rng),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(domain(format!("noise level must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// Observations `Y_i = f(i/n) + σ e_i`, `i = 0..n`, deterministic in `seed`.
pub fn sample(f: &StepFunction, n: usize, noise: &NoiseModel, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("sample size must be at least 1"));
    }
    let mut y = f.grid_values(n);
    if noise.sigma > 0.0 {
        let mut rng = rng::stream(seed, &[0x5A3D_1E]);
        let e = noise.unit_noise(n, &mut rng);
        for (yi, ei) in y.iter_mut().zip(e) {
            *yi += noise.sigma * ei;
        }
    }
    Ok(y)
}

/// Dense sample path of a continuous-time two-state Markov chain.
#[derive(Clone, Debug)]
pub struct MarkovPath {
    /// Chain value at `k / oversample_rate`.
    pub values: Vec<f64>,
    /// Times (seconds) at which the chain switched state.
    pub jump_times: Vec<f64>,
}

impl MarkovPath {
    /// Number of state changes visible on the dense grid.
    pub fn grid_changes(&self) -> usize {
        self.values.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Simulates the two-state chain that leaves `levels[0]` at `rate_up` and
/// `levels[1]` at `rate_down` (events per second), started from its
/// stationary distribution, and samples it at `oversample_rate` Hz.
pub fn simulate_markov_path(
    rate_up: f64,
    rate_down: f64,
    duration: f64,
    oversample_rate: f64,
    levels: (f64, f64),
    seed: u64,
) -> Result<MarkovPath> {
    if !(rate_up > 0.0 && rate_down > 0.0 && rate_up.is_finite() && rate_down.is_finite()) {
        return Err(domain("transition rates must be positive and finite"));
    }
    if !(duration > 0.0 && oversample_rate > 0.0) {
        return Err(domain("duration and sampling rate must be positive"));
    }
    if levels.0 == levels.1 {
        return Err(domain("the two levels must differ"));
    }
    let mut rng = rng::stream(seed, &[0x3A2C_0F]);
    let leave_low = Exp::new(rate_up).map_err(|e| domain(e.to_string()))?;
    let leave_high = Exp::new(rate_down).map_err(|e| domain(e.to_string()))?;
    let p_high = rate_up / (rate_up + rate_down);
    let mut high = rng.random::<f64>() < p_high;

    let mut jump_times = Vec::new();
    let mut t = 0.0;
    loop {
        let hold: f64 = if high { rng.sample(leave_high) } else { rng.sample(leave_low) };
        t += hold;
        if t >= duration {
            break;
        }
        jump_times.push(t);
        high = !high;
    }

    let samples = (duration * oversample_rate).round() as usize;
    let start_high = if jump_times.len() % 2 == 0 { high } else { !high };
    let mut values = Vec::with_capacity(samples);
    let mut state = start_high;
    let mut next = 0usize;
    for k in 0..samples {
        let tk = k as f64 / oversample_rate;
        while next < jump_times.len() && jump_times[next] <= tk {
            state = !state;
            next += 1;
        }
        values.push(if state { levels.1 } else { levels.0 });
    }
    Ok(MarkovPath { values, jump_times })
}

/// Filters a dense `path` with the kernel, adds filtered noise of marginal
/// standard deviation `sigma` and keeps every `factor`-th sample.
///
/// The signal is extended to the left by its first value, so a constant path
/// stays constant and the output is constant from `L-1` fine samples after
/// each jump on.
pub fn lowpass_subsample(path: &[f64], kernel: &LowpassKernel, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let l = kernel.support();
    if l > path.len() {
        return Err(domain(format!("kernel of {l} taps is longer than the path ({})", path.len())));
    }
    check_sigma(sigma)?;
    let f = kernel.factor();
    let n = path.len() / f;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = f * i;
            kernel
                .taps()
                .iter()
                .enumerate()
                .map(|(k, &r)| r * path[t.saturating_sub(k)])
                .sum()
        })
        .collect();
    if sigma > 0.0 {
        let mut rng = rng::stream(seed, &[0x1F17_E2]);
        let e = kernel.filtered_noise(n, &mut rng);
        for (o, ei) in out.iter_mut().zip(e) {
            *o += sigma * ei;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_right_continuous() {
        let f = StepFunction::new(vec![0.5], vec![0.0, 1.0]).unwrap();
        assert_eq!(f.eval_at(0.5).unwrap(), 1.0);
        assert_eq!(f.eval_at(0.499_999).unwrap(), 0.0);
        assert_eq!(make_constant(3.0).eval_at(0.5).unwrap(), 3.0);
        assert!(f.eval_at(1.0).is_err());
        assert!(f.eval_at(-0.1).is_err());
        let teeth = make_teeth(7, 2.0).unwrap();
        for (k, &t) in teeth.boundaries().iter().enumerate() {
            assert_eq!(teeth.eval_at(t).unwrap(), teeth.levels()[k + 1]);
        }
    }

    #[test]
    fn rejects_invalid_signals() {
        assert!(StepFunction::new(vec![0.5], vec![1.0, 1.0]).is_err());
        assert!(StepFunction::new(vec![0.6, 0.5], vec![0.0, 1.0, 0.0]).is_err());
        assert!(StepFunction::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(StepFunction::new(vec![0.5], vec![0.0]).is_err());
        let bad: std::result::Result<StepFunction, _> =
            serde_json::from_str(r#"{"boundaries":[0.5],"levels":[2,2]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn teeth_layout() {
        let f = make_teeth(50, 1.0).unwrap();
        assert_eq!(f.num_changes(), 50);
        for (k, &t) in f.boundaries().iter().enumerate() {
            assert_eq!(t, (k + 1) as f64 / 51.0);
        }
        let x = 1.0 / 51.0 - 1e-9;
        assert_eq!(f.eval_at(x).unwrap(), f.levels()[0]);
        assert!((f.min_segment_length() - 1.0 / 51.0).abs() < 1e-12);
        assert_eq!(f.min_jump(), Some(1.0));
    }

    #[test]
    fn blocks_and_mix_tables() {
        let b = make_blocks();
        assert_eq!(b.num_changes(), 11);
        assert_eq!(b.levels()[0], 0.0);
        assert_eq!(*b.levels().last().unwrap(), 0.0);
        let m = make_mix();
        assert_eq!(m.num_changes(), 13);
        assert_eq!(m.boundaries()[0], 11.0 / 560.0);
        assert_eq!(m.change_indices(MIX_LENGTH)[12], 491);
        assert_eq!(m.aligned_to(MIX_LENGTH).unwrap(), m);
    }

    #[test]
    fn alignment_preserves_grid_values() {
        let f = make_teeth(50, 1.0).unwrap();
        let g = f.aligned_to(900).unwrap();
        assert_eq!(f.grid_values(900), g.grid_values(900));
        assert!(g.boundaries().iter().all(|&t| (t * 900.0 - (t * 900.0).round()).abs() < 1e-9));
        assert!(make_teeth(50, 1.0).unwrap().aligned_to(20).is_err());
    }

    #[test]
    fn from_grid_roundtrip() {
        let v = vec![1.0, 1.0, 3.0, 3.0, 3.0, 0.0];
        let f = StepFunction::from_grid(&v).unwrap();
        assert_eq!(f.num_changes(), 2);
        assert_eq!(f.grid_values(v.len()), v);
        assert_eq!(f.change_indices(v.len()), vec![2, 5]);
    }

    #[test]
    fn zero_noise_sampling_is_exact() {
        let f = make_mix();
        let y = sample(&f, 560, &NoiseModel::iid(0.0).unwrap(), 1).unwrap();
        assert_eq!(y, f.grid_values(560));
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = make_teeth(5, 1.0).unwrap();
        let noise = NoiseModel::iid(0.7).unwrap();
        assert_eq!(sample(&f, 100, &noise, 11).unwrap(), sample(&f, 100, &noise, 11).unwrap());
        assert_ne!(sample(&f, 100, &noise, 11).unwrap(), sample(&f, 100, &noise, 12).unwrap());
        let k = LowpassKernel::truncated_gaussian(9, 1).unwrap();
        let fnoise = NoiseModel::filtered(0.7, k).unwrap();
        assert_eq!(sample(&f, 100, &fnoise, 3).unwrap(), sample(&f, 100, &fnoise, 3).unwrap());
    }

    #[test]
    fn iid_noise_moments() {
        let sigma = 2.5;
        let n = 100_000;
        let y = sample(&make_constant(0.0), n, &NoiseModel::iid(sigma).unwrap(), 2024).unwrap();
        let m = crate::stats::mean(&y);
        let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05);
    }

    #[test]
    fn filtered_noise_autocovariance_matches_kernel() {
        let k = LowpassKernel::truncated_gaussian(30, 10).unwrap();
        let n = 100_000;
        let e = k.filtered_noise(n, &mut rng::stream(5, &[]));
        let m = crate::stats::mean(&e);
        let var = e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.03, "marginal variance {var}");
        for lag in 1..=3 {
            let cov = e.iter().zip(e.iter().skip(lag)).map(|(a, b)| (a - m) * (b - m)).sum::<f64>()
                / (n - lag) as f64;
            assert!((cov - k.autocorrelation(lag)).abs() < 0.02, "lag {lag}: {cov} vs {}", k.autocorrelation(lag));
        }
        let same = LowpassKernel::truncated_gaussian(9, 1).unwrap();
        let e = same.filtered_noise(n, &mut rng::stream(6, &[]));
        let cov1 = e.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64;
        assert!((cov1 - same.autocorrelation(1)).abs() < 0.02);
    }

    #[test]
    fn kernel_validation_and_descriptor() {
        assert!(LowpassKernel::new(vec![0.5, 0.6], 1).is_err());
        assert!(LowpassKernel::new(vec![1.0], 0).is_err());
        let k = LowpassKernel::truncated_gaussian(30, 10).unwrap();
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.support_in_samples(), 3);
        assert_eq!(LowpassKernel::identity().descriptor(), NoiseDescriptor::Iid);
        assert_ne!(k.descriptor(), LowpassKernel::truncated_gaussian(31, 10).unwrap().descriptor());
        assert_eq!(k.descriptor(), k.clone().descriptor());
    }

    #[test]
    fn markov_path_basics() {
        assert!(simulate_markov_path(0.0, 0.0, 1.0, 1000.0, (0.0, 1.0), 1).is_err());
        let p = simulate_markov_path(20.0, 30.0, 1.0, 10_000.0, (0.0, 1.0), 4).unwrap();
        assert_eq!(p.values.len(), 10_000);
        assert!(p.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(p.grid_changes() <= p.jump_times.len());
        assert_eq!(p.grid_changes() % 2, p.jump_times.len() % 2);
    }

    #[test]
    fn markov_switching_rate() {
        let (up, down, duration) = (40.0, 60.0, 1.0);
        let reps = 400;
        let total: usize = (0..reps)
            .map(|s| simulate_markov_path(up, down, duration, 1000.0, (0.0, 1.0), s).unwrap().jump_times.len())
            .sum();
        let observed = total as f64 / reps as f64;
        let expected = duration * 2.0 * up * down / (up + down);
        assert!((observed / expected - 1.0).abs() < 0.1, "{observed} vs {expected}");
    }

    #[test]
    fn lowpass_preserves_constants_and_settles_after_jumps() {
        let k = LowpassKernel::truncated_gaussian(30, 1).unwrap();
        let flat = vec![2.5; 200];
        let out = lowpass_subsample(&flat, &k, 0.0, 1).unwrap();
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let mut step = vec![0.0; 100];
        step.extend(vec![1.0; 100]);
        let out = lowpass_subsample(&step, &k, 0.0, 1).unwrap();
        for (i, v) in out.iter().enumerate() {
            if i < 100 {
                assert!(v.abs() < 1e-12);
            } else if i >= 100 + k.support() - 1 {
                assert!((v - 1.0).abs() < 1e-12, "sample {i} = {v}");
            }
        }
        assert!(out[100] > 0.0 && out[100] < 1.0);

        let ident = LowpassKernel::identity();
        let long: Vec<f64> = (0..20_000).map(|i| if i < 10_000 { 0.0 } else { 1.0 }).collect();
        let out = lowpass_subsample(&long, &ident, 0.5, 9).unwrap();
        assert_eq!(out.len(), long.len());
        let resid: Vec<f64> = out.iter().zip(&long).map(|(o, s)| o - s).collect();
        let lag1 = resid.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.05);
        assert!(lag1.abs() < 0.02);
        assert!(lowpass_subsample(&step[..10], &k, 0.0, 1).is_err());
    }
}
