// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scores for estimated segmentations and a robust noise-level estimate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::segmenter::Segmentation;
use crate::signal::StepFunction;
use crate::stats;

/// `⌈x⌉`, treating values within 1e-9 of an integer as that integer.
fn grid_ceil(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.ceil() as i64
    }
}

fn grid_position(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub tau_hat: f64,
    pub is_true: bool,
    /// Half-open window `[start, end)` of fractions attributed to this
    /// estimate.
    pub window: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub per_estimate: Vec<Discovery>,
    pub fd: usize,
    pub td: usize,
    pub k_hat: usize,
}

impl DiscoveryReport {
    /// `FD / (K̂ + 1)`.
    pub fn fdr_term(&self) -> f64 {
        self.fd as f64 / (self.k_hat as f64 + 1.0)
    }
}

fn check_sorted_fractions(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| !(x > 0.0 && x < 1.0)) || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain(format!("{name} must be strictly increasing fractions in (0, 1)")));
    }
    Ok(())
}

/// Labels each estimated change-point true or false.
///
/// `τ̂_i` owns the grid-aligned window between the midpoints to its
/// neighbours (`τ̂_0 = 0`, `τ̂_{K̂+1} = 1`), rounded up to the sampling grid,
/// and is a true discovery when a true change-point lies in that window.
pub fn classify_discoveries(true_cps: &[f64], est_cps: &[f64], n: usize) -> Result<DiscoveryReport> {
    check_sorted_fractions("true change-points", true_cps)?;
    check_sorted_fractions("estimated change-points", est_cps)?;
    if n == 0 {
        return Err(domain("n must be positive"));
    }
    let nf = n as f64;
    let mut ext = Vec::with_capacity(est_cps.len() + 2);
    ext.push(0.0);
    ext.extend_from_slice(est_cps);
    ext.push(1.0);
    let cut = |a: f64, b: f64| grid_ceil(nf * (a + b) / 2.0);
    let truth: Vec<f64> = true_cps.iter().map(|&t| grid_position(nf * t)).collect();

    let mut per_estimate = Vec::with_capacity(est_cps.len());
    let mut td = 0;
    for i in 1..ext.len() - 1 {
        let start = cut(ext[i - 1], ext[i]);
        let end = cut(ext[i], ext[i + 1]);
        let hit = truth.iter().any(|&t| start as f64 <= t && t < end as f64);
        td += hit as usize;
        per_estimate.push(Discovery { tau_hat: ext[i], is_true: hit, window: (start as f64 / nf, end as f64 / nf) });
    }
    let k_hat = est_cps.len();
    Ok(DiscoveryReport { per_estimate, fd: k_hat - td, td, k_hat })
}

/// Mean of `FD/(K̂+1)` over runs.
pub fn empirical_fdr(reports: &[DiscoveryReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(domain("no reports to average"));
    }
    Ok(reports.iter().map(DiscoveryReport::fdr_term).sum::<f64>() / reports.len() as f64)
}

/// `max_τ min_τ̂ |τ - τ̂|` over true boundaries `{0, τ_1.., 1}` and estimated
/// boundaries `{0, τ̂_1.., 1}`.
pub fn location_error_fractions(true_cps: &[f64], est_cps: &[f64]) -> f64 {
    let est: Vec<f64> = std::iter::once(0.0).chain(est_cps.iter().copied()).chain(std::iter::once(1.0)).collect();
    std::iter::once(0.0)
        .chain(true_cps.iter().copied())
        .chain(std::iter::once(1.0))
        .map(|t| est.iter().map(|e| (t - e).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Location error `d(μ, μ̂)` of a segmentation.
pub fn location_error(mu: &StepFunction, mu_hat: &Segmentation) -> f64 {
    location_error_fractions(mu.boundaries(), &mu_hat.change_fractions)
}

/// `(1/n) Σ_i (μ̂(i/n) - μ(i/n))²`.
pub fn mise_contribution(mu: &StepFunction, mu_hat: &Segmentation) -> f64 {
    let n = mu_hat.n;
    let truth = mu.grid_values(n);
    truth.iter().zip(mu_hat.fitted()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v: f64,
}

pub fn v_measure_parts(true_labels: &[usize], est_labels: &[usize]) -> Result<VMeasure> {
    if true_labels.len() != est_labels.len() || true_labels.is_empty() {
        return Err(domain("label sequences must be nonempty and of equal length"));
    }
    let total = true_labels.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut clusters: BTreeMap<usize, usize> = BTreeMap::new();
    for (&c, &k) in true_labels.iter().zip(est_labels) {
        *joint.entry((c, k)).or_default() += 1;
        *classes.entry(c).or_default() += 1;
        *clusters.entry(k).or_default() += 1;
    }
    let h_c = entropy(classes.values().copied(), total);
    let h_k = entropy(clusters.values().copied(), total);
    let h_ck = entropy(joint.values().copied(), total);
    // H(C|K) = H(C,K) - H(K).
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - (h_ck - h_k) / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - (h_ck - h_c) / h_k };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure { homogeneity, completeness, v: v.clamp(0.0, 1.0) })
}

/// V-measure of two per-sample labelings.
pub fn v_measure(true_labels: &[usize], est_labels: &[usize]) -> Result<f64> {
    v_measure_parts(true_labels, est_labels).map(|p| p.v)
}

/// Normalising constant of [`estimate_sigma`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaConstant {
    /// `IQR / (1.349 √2)`, consistent for Gaussian noise.
    #[default]
    Consistent,
    /// `IQR · 1.349 / √2`.
    Verbatim,
}

/// Noise level from the interquartile range of first differences.
pub fn estimate_sigma(y: &[f64], constant: SigmaConstant) -> Result<f64> {
    if y.len() < 3 {
        return Err(domain(format!("need at least 3 observations, got {}", y.len())));
    }
    let mut d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    let iqr = stats::quantile_sorted(&d, 0.75) - stats::quantile_sorted(&d, 0.25);
    Ok(match constant {
        SigmaConstant::Consistent => iqr / (1.349 * std::f64::consts::SQRT_2),
        SigmaConstant::Verbatim => iqr * 1.349 / std::f64::consts::SQRT_2,
    })
}

/// Scores of one segmentation against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub k_true: usize,
    pub k_hat: usize,
    pub fd: usize,
    pub td: usize,
    pub fdr_term: f64,
    pub d: f64,
    pub ise: f64,
    pub v_measure: f64,
}

pub fn score(mu: &StepFunction, mu_hat: &Segmentation) -> Result<Scores> {
    let n = mu_hat.n;
    let aligned = mu.aligned_to(n)?;
    let report = classify_discoveries(aligned.boundaries(), &mu_hat.change_fractions, n)?;
    Ok(Scores {
        k_true: aligned.num_changes(),
        k_hat: mu_hat.k_hat,
        fd: report.fd,
        td: report.td,
        fdr_term: report.fdr_term(),
        d: location_error(&aligned, mu_hat),
        ise: mise_contribution(&aligned, mu_hat),
        v_measure: v_measure(&aligned.grid_labels(n), &mu_hat.labels())?,
    })
}
