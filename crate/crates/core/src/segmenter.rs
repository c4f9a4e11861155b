// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal-complexity segmentation under the multiscale side-constraint.
//!
//! The estimator first finds the smallest number of segments `K̂+1` such
//! that every segment admits a constant passing its multiscale test, then
//! among those segmentations picks the one with the smallest residual sum of
//! squares, each level being the segment mean clamped to its band.
//!
//! A forward pass assigns index `i` to stage `k` when the prefix `[0, i)`
//! needs exactly `k` segments. Stage `k` only looks at predecessors `j` from
//! stage `k-1`, only at `i` up to the horizon `r_k`, and for each `i` only at
//! predecessors not excluded by a relaxed check that uses the global penalty
//! `pen(len/n)` and the largest tabulated quantile. The relaxed band contains
//! the exact band and shrinks when a segment is extended in either
//! direction, so both limits are found by bisection and never exclude a
//! feasible segment. One feasible predecessor settles an index.
//!
//! An index lies on a minimal segmentation iff its prefix and suffix counts
//! add up to `K̂+1`. A backward pass over the stages finds these split
//! points, and the residual sums of squares are minimised over them alone.
//! Ties go to the smallest predecessor.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::multiscale::{band_hinted, fit, Band, PrefixSums, Witness};
use crate::quantiles::{NoiseDescriptor, QuantileTable};
use crate::signal::LowpassKernel;

/// Largest input accepted by [`brute_force_segment`].
pub const BRUTE_FORCE_MAX_N: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fdrseg,
    Smuce,
    Dfdrseg,
    Oracle,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Fdrseg => "fdrseg",
            Method::Smuce => "smuce",
            Method::Dfdrseg => "dfdrseg",
            Method::Oracle => "oracle",
        })
    }
}

/// Thresholds for the per-segment multiscale test.
#[derive(Clone, Copy, Debug)]
pub enum Calibration<'a> {
    /// Local quantiles `q_α(#I)` with the local penalty. `trim` leading
    /// samples of every segment are excluded from its subinterval system.
    Local { table: &'a QuantileTable, trim: usize },
    /// One global threshold with the penalty `pen(len/n)`.
    Global { alpha: f64, q_tilde: f64 },
}

impl Calibration<'_> {
    fn alpha(&self) -> f64 {
        match self {
            Calibration::Local { table, .. } => table.alpha(),
            Calibration::Global { alpha, .. } => *alpha,
        }
    }

    fn method(&self) -> Method {
        match self {
            Calibration::Local { trim: 0, table } if table.noise_descriptor() == &NoiseDescriptor::Iid => Method::Fdrseg,
            Calibration::Local { .. } => Method::Dfdrseg,
            Calibration::Global { .. } => Method::Smuce,
        }
    }
}

/// Piecewise-constant fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub n: usize,
    pub method: Method,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: usize,
    /// Index `i` separates samples `i-1` and `i`.
    pub change_indices: Vec<usize>,
    pub change_fractions: Vec<f64>,
    pub levels: Vec<f64>,
    pub rss: f64,
}

impl Segmentation {
    /// Segment boundaries `0 = t_0 < ... < t_{K̂+1} = n`.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.change_indices.len() + 2);
        b.push(0);
        b.extend_from_slice(&self.change_indices);
        b.push(self.n);
        b
    }

    /// Fitted value at every sample.
    pub fn fitted(&self) -> Vec<f64> {
        let b = self.boundaries();
        let mut out = Vec::with_capacity(self.n);
        for (w, &c) in b.windows(2).zip(&self.levels) {
            out.extend(std::iter::repeat_n(c, w[1] - w[0]));
        }
        out
    }

    /// Segment id of every sample.
    pub fn labels(&self) -> Vec<usize> {
        let b = self.boundaries();
        let mut out = Vec::with_capacity(self.n);
        for (k, w) in b.windows(2).enumerate() {
            out.extend(std::iter::repeat_n(k, w[1] - w[0]));
        }
        out
    }

    fn from_path(path: &[usize], levels: Vec<f64>, rss: f64, method: Method, alpha: f64, sigma: f64) -> Self {
        let n = *path.last().expect("path ends at n");
        let change_indices: Vec<usize> = path[1..path.len() - 1].to_vec();
        let change_fractions = change_indices.iter().map(|&i| i as f64 / n as f64).collect();
        Self { n, method, alpha, sigma, k_hat: change_indices.len(), change_indices, change_fractions, levels, rss }
    }
}

/// Reachable indices per stage and the horizon each stage searched up to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneTrace {
    /// `stages[k]` lists the indices whose prefix needs exactly `k` segments
    /// (`stages[0] = [0]`).
    pub stages: Vec<Vec<usize>>,
    /// `horizons[k-1]` is the rightmost index searched at stage `k`.
    pub horizons: Vec<usize>,
    /// `split_points[k]` lists the indices of `stages[k]` that lie on some
    /// segmentation with the minimal number of segments.
    pub split_points: Vec<Vec<usize>>,
    /// Number of exact band evaluations.
    pub band_evaluations: usize,
}

struct Problem<'a> {
    ps: PrefixSums,
    n: usize,
    sigma: f64,
    cal: Calibration<'a>,
    q_relaxed: f64,
}

impl<'a> Problem<'a> {
    fn new(y: &[f64], sigma: f64, cal: Calibration<'a>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(domain("cannot segment an empty series"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("observations must be finite, found {bad}")));
        }
        let q_relaxed = match cal {
            Calibration::Local { table, .. } => {
                if table.n_max() < n {
                    return Err(config(format!("quantile table covers lengths up to {}, series has {n} samples", table.n_max())));
                }
                table.max_up_to(n)?
            }
            Calibration::Global { alpha, q_tilde } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
                }
                if !q_tilde.is_finite() {
                    return Err(config("global quantile must be finite"));
                }
                let floor = -crate::multiscale::pen(1.0 / n as f64);
                if q_tilde < floor {
                    return Err(config(format!("global quantile {q_tilde} is below {floor}; no segmentation is feasible")));
                }
                q_tilde
            }
        };
        Ok(Self { ps: PrefixSums::new(y), n, sigma, cal, q_relaxed })
    }

    /// Exact band of segment `[j, i)`. `hint` carries the pair of
    /// subintervals that emptied a neighbouring segment's band.
    fn band(&self, j: usize, i: usize, hint: &mut Option<Witness>) -> Band {
        let len = i - j;
        match self.cal {
            Calibration::Local { table, trim } => {
                band_hinted(&self.ps, j, i, self.sigma, table.lookup_unchecked(len), trim, len as f64, hint)
            }
            Calibration::Global { q_tilde, .. } => band_hinted(&self.ps, j, i, self.sigma, q_tilde, 0, self.n as f64, hint),
        }
    }

    /// Necessary condition for `[j, i)` to be feasible, monotone under
    /// extension of the segment.
    fn relaxed(&self, j: usize, i: usize, hint: &mut Option<Witness>) -> bool {
        let trim = match self.cal {
            Calibration::Local { trim, .. } => trim,
            Calibration::Global { .. } => 0,
        };
        !band_hinted(&self.ps, j, i, self.sigma, self.q_relaxed, trim, self.n as f64, hint).is_empty()
    }

    fn finish(&self, path: Vec<usize>, levels: Vec<f64>, rss: f64, method: Method) -> Segmentation {
        Segmentation::from_path(&path, levels, rss, method, self.cal.alpha(), self.sigma)
    }
}

fn infeasible() -> crate::Error {
    config("no segmentation satisfies the multiscale constraint")
}

const UNSET: usize = usize::MAX;

/// Smallest position in the sorted `starts[..upper]` whose segment to `end`
/// passes the relaxed check. Later starts pass too.
fn relaxed_start(problem: &Problem<'_>, starts: &[usize], upper: usize, end: usize) -> usize {
    let (mut lo, mut hi) = (0usize, upper);
    let mut hint = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if problem.relaxed(starts[mid], end, &mut hint) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Whether some `j` in `current` (sorted) makes `[j, i)` feasible.
fn reachable(problem: &Problem<'_>, current: &[usize], i: usize, evaluations: &mut usize) -> bool {
    let upper = current.partition_point(|&j| j < i);
    if upper == 0 {
        return false;
    }
    // The shortest candidate segment is the most likely to pass; the
    // bisection is only paid for when it does not.
    let mut hint = None;
    *evaluations += 1;
    if !problem.band(current[upper - 1], i, &mut hint).is_empty() {
        return true;
    }
    let lo = relaxed_start(problem, current, upper - 1, i);
    for &j in current[lo..upper - 1].iter().rev() {
        *evaluations += 1;
        if !problem.band(j, i, &mut hint).is_empty() {
            return true;
        }
    }
    false
}

fn pruned(problem: &Problem<'_>) -> Result<(Segmentation, PruneTrace)> {
    let n = problem.n;
    let mut stage = vec![UNSET; n + 1];
    stage[0] = 0;
    let mut trace = PruneTrace { stages: vec![vec![0]], ..Default::default() };
    let mut evaluations = 0usize;

    // Forward pass: the minimal segment count of every prefix.
    loop {
        let k = trace.stages.len();
        let current = trace.stages.last().expect("stage list is never empty");
        let first = current[0];
        let last = *current.last().expect("stages are nonempty");

        // Horizon: largest i with [last, i) passing the relaxed check.
        let (mut lo, mut hi) = (last + 1, n);
        let mut hint = None;
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if problem.relaxed(last, mid, &mut hint) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let horizon = lo;
        trace.horizons.push(horizon);

        // The other indices of the final stage are never needed.
        if horizon == n && reachable(problem, current, n, &mut evaluations) {
            stage[n] = k;
            trace.stages.push(vec![n]);
            break;
        }
        let mut next = Vec::new();
        for i in first + 1..=horizon.min(n - 1) {
            if stage[i] == UNSET && reachable(problem, current, i, &mut evaluations) {
                stage[i] = k;
                next.push(i);
            }
        }
        if next.is_empty() {
            return Err(infeasible());
        }
        trace.stages.push(next);
    }

    // Backward pass: keep the indices of each stage that start a feasible
    // segment ending at a kept index of the next stage. These are exactly
    // the indices on some minimal segmentation.
    let segments = trace.stages.len() - 1;
    let mut split = vec![Vec::new(); segments + 1];
    split[segments] = vec![n];
    for k in (0..segments).rev() {
        let cands = &trace.stages[k];
        let mut keep = vec![false; cands.len()];
        for &j in &split[k + 1] {
            let upper = cands.partition_point(|&i| i < j);
            let lo = relaxed_start(problem, cands, upper, j);
            let mut hint = None;
            for pos in lo..upper {
                if !keep[pos] {
                    evaluations += 1;
                    keep[pos] = !problem.band(cands[pos], j, &mut hint).is_empty();
                }
            }
        }
        split[k] = cands.iter().zip(&keep).filter(|(_, &kept)| kept).map(|(&i, _)| i).collect();
    }
    debug_assert_eq!(split[0], vec![0]);

    // Least squares over the kept indices, smallest predecessor on ties.
    let mut rss = vec![0.0f64; n + 1];
    let mut prev = vec![0usize; n + 1];
    let mut level = vec![0.0f64; n + 1];
    for k in 1..=segments {
        for &i in &split[k] {
            let mut best: Option<(f64, usize, f64)> = None;
            let mut hint = None;
            for &j in split[k - 1].iter().take_while(|&&j| j < i) {
                evaluations += 1;
                let band = problem.band(j, i, &mut hint);
                if band.is_empty() {
                    continue;
                }
                let f = fit(&problem.ps, j, i, &band);
                let total = rss[j] + f.rss;
                if best.is_none_or(|(b, _, _)| total < b) {
                    best = Some((total, j, f.level));
                }
            }
            let (total, j, c) = best.expect("kept indices have a kept predecessor");
            rss[i] = total;
            prev[i] = j;
            level[i] = c;
        }
    }
    trace.split_points = split;
    trace.band_evaluations = evaluations;

    let mut path = vec![n];
    let mut levels = Vec::new();
    let mut i = n;
    while i > 0 {
        levels.push(level[i]);
        i = prev[i];
        path.push(i);
    }
    path.reverse();
    levels.reverse();
    let method = problem.cal.method();
    Ok((problem.finish(path, levels, rss[n], method), trace))
}

/// Segments `y` under an arbitrary calibration, returning the pruning trace.
pub fn segment_traced(y: &[f64], sigma: f64, calibration: Calibration<'_>) -> Result<(Segmentation, PruneTrace)> {
    pruned(&Problem::new(y, sigma, calibration)?)
}

/// Segments `y` under an arbitrary calibration.
pub fn segment(y: &[f64], sigma: f64, calibration: Calibration<'_>) -> Result<Segmentation> {
    segment_traced(y, sigma, calibration).map(|(s, _)| s)
}

fn check_table_alpha(table: &QuantileTable, alpha: f64) -> Result<()> {
    if (table.alpha() - alpha).abs() > 1e-12 {
        return Err(config(format!("quantile table is for alpha = {}, requested {alpha}", table.alpha())));
    }
    Ok(())
}

/// FDR-controlling multiscale segmentation at local level `alpha` with iid
/// noise of standard deviation `sigma`.
pub fn fdrseg(y: &[f64], alpha: f64, sigma: f64, table: &QuantileTable) -> Result<Segmentation> {
    check_table_alpha(table, alpha)?;
    table.ensure_descriptor(&NoiseDescriptor::Iid)?;
    let mut s = segment(y, sigma, Calibration::Local { table, trim: 0 })?;
    s.method = Method::Fdrseg;
    Ok(s)
}

/// Simultaneous multiscale segmentation with the global threshold `q_tilde`
/// simulated at level `alpha_s` for `y.len()` samples.
pub fn smuce(y: &[f64], alpha_s: f64, sigma: f64, q_tilde: f64) -> Result<Segmentation> {
    segment(y, sigma, Calibration::Global { alpha: alpha_s, q_tilde })
}

/// Dependence-adjusted segmentation for observations filtered by `kernel`:
/// quantiles from a table simulated under the same kernel, and subintervals
/// trimmed by the kernel support.
pub fn dfdrseg(y: &[f64], alpha: f64, sigma: f64, kernel: &LowpassKernel, table: &QuantileTable) -> Result<Segmentation> {
    dfdrseg_with_trim(y, alpha, sigma, kernel.support_in_samples(), table, &kernel.descriptor())
}

/// [`dfdrseg`] with an explicit trim length and noise descriptor.
pub fn dfdrseg_with_trim(
    y: &[f64],
    alpha: f64,
    sigma: f64,
    trim: usize,
    table: &QuantileTable,
    noise: &NoiseDescriptor,
) -> Result<Segmentation> {
    check_table_alpha(table, alpha)?;
    table.ensure_descriptor(noise)?;
    let mut s = segment(y, sigma, Calibration::Local { table, trim })?;
    s.method = Method::Dfdrseg;
    Ok(s)
}

/// Unpruned reference implementation: all `O(n²)` segments for the minimal
/// count, then a full dynamic program over (segment count, end index) for
/// the levels.
pub fn brute_force_segment(y: &[f64], sigma: f64, calibration: Calibration<'_>) -> Result<Segmentation> {
    let n = y.len();
    if n > BRUTE_FORCE_MAX_N {
        return Err(domain(format!("brute force is limited to {BRUTE_FORCE_MAX_N} samples, got {n}")));
    }
    let problem = Problem::new(y, sigma, calibration)?;
    let bands: Vec<Vec<Band>> = (0..n).map(|j| (j + 1..=n).map(|i| problem.band(j, i, &mut None)).collect()).collect();
    let band = |j: usize, i: usize| &bands[j][i - j - 1];

    let mut count = vec![usize::MAX; n + 1];
    count[0] = 0;
    for i in 1..=n {
        for j in 0..i {
            if count[j] != usize::MAX && !band(j, i).is_empty() {
                count[i] = count[i].min(count[j] + 1);
            }
        }
    }
    let segments = count[n];
    if segments == usize::MAX {
        return Err(infeasible());
    }

    let mut cost = vec![vec![f64::INFINITY; n + 1]; segments + 1];
    let mut back = vec![vec![0usize; n + 1]; segments + 1];
    let mut lev = vec![vec![0.0f64; n + 1]; segments + 1];
    cost[0][0] = 0.0;
    for k in 1..=segments {
        for i in 1..=n {
            for j in 0..i {
                if cost[k - 1][j].is_infinite() || band(j, i).is_empty() {
                    continue;
                }
                let f = fit(&problem.ps, j, i, band(j, i));
                let total = cost[k - 1][j] + f.rss;
                if total < cost[k][i] {
                    cost[k][i] = total;
                    back[k][i] = j;
                    lev[k][i] = f.level;
                }
            }
        }
    }

    let mut path = vec![n];
    let mut levels = Vec::new();
    let mut i = n;
    for k in (1..=segments).rev() {
        levels.push(lev[k][i]);
        i = back[k][i];
        path.push(i);
    }
    path.reverse();
    levels.reverse();
    Ok(problem.finish(path, levels, cost[segments][n], Method::Oracle))
}
