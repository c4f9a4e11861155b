// SPDX-License-Identifier: MIT OR Apache-2.0

//! The scale-calibrated multiscale statistic
//!
//! ```text
//! T_I(Y, c) = max_{[i, j] ⊆ I} |Σ_{l=i..j} (Y_l - c)| / (σ √(j-i+1)) - pen((j-i+1) / #I)
//! pen(x)    = √(2 log(e / x))
//! ```
//!
//! and the two derived quantities the segmenter needs: the band of constants
//! `c` with `T_I(Y, c) <= q`, and the least-squares fit of a segment
//! restricted to that band.
//!
//! All subintervals are considered. Maximisation runs over a box tree with
//! range bounds (see `search`), which returns the exhaustive result.

mod search;

use crate::error::{domain, Result};

use search::HalfWidth;
pub(crate) use search::Witness;

/// Scale penalty without argument checks.
#[inline]
pub(crate) fn pen(x: f64) -> f64 {
    // log(e/x) = 1 - log(x); exact at x = 1.
    (2.0 * (1.0 - x.ln())).sqrt()
}

/// Per-length constants: `ln l`, `1/l` and `1/√l` for `l = 1..=n`.
#[derive(Clone, Debug)]
pub(crate) struct Lengths {
    ln: Vec<f64>,
    pub inv: Vec<f64>,
    pub inv_sqrt: Vec<f64>,
}

impl Lengths {
    pub(crate) fn new(n: usize) -> Self {
        let mut ln = Vec::with_capacity(n + 1);
        let mut inv = Vec::with_capacity(n + 1);
        let mut inv_sqrt = Vec::with_capacity(n + 1);
        ln.push(f64::NAN);
        inv.push(f64::NAN);
        inv_sqrt.push(f64::NAN);
        for l in 1..=n {
            let x = l as f64;
            ln.push(x.ln());
            inv.push(1.0 / x);
            inv_sqrt.push(1.0 / x.sqrt());
        }
        Self { ln, inv, inv_sqrt }
    }

    /// `pen(len / scale)` given `ln(scale)`.
    #[inline]
    pub(crate) fn pen(&self, len: usize, log_scale: f64) -> f64 {
        (2.0 * (1.0 + (log_scale - self.ln[len]))).sqrt()
    }
}

/// `pen(x) = √(2 log(e/x))` for `0 < x <= 1`.
pub fn penalty(x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(domain(format!("penalty argument {x} outside (0, 1]")));
    }
    Ok(pen(x))
}

/// Prefix sums of a series, with the supporting structures every segment
/// query needs.
///
/// `cum[i] = Σ_{l<i} Y_l` is accumulated with Neumaier compensation. Squares
/// are accumulated around the series mean to keep residual sums of squares
/// accurate for long segments.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    cum: Vec<f64>,
    sq: Vec<f64>,
    shift: f64,
    lengths: Lengths,
}

fn compensated_prefix(values: impl Iterator<Item = f64>, capacity: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(capacity + 1);
    out.push(0.0);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}

impl PrefixSums {
    pub fn new(y: &[f64]) -> Self {
        let cum = compensated_prefix(y.iter().copied(), y.len());
        let shift = if y.is_empty() { 0.0 } else { cum[y.len()] / y.len() as f64 };
        let sq = compensated_prefix(y.iter().map(|v| (v - shift) * (v - shift)), y.len());
        let lengths = Lengths::new(y.len());
        Self { cum, sq, shift, lengths }
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `cum[0..=n]`.
    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// `Σ Y_l` over `[a, b)`.
    #[inline]
    pub fn sum(&self, a: usize, b: usize) -> f64 {
        self.cum[b] - self.cum[a]
    }

    #[inline]
    pub fn mean(&self, a: usize, b: usize) -> f64 {
        self.sum(a, b) / (b - a) as f64
    }

    /// `Σ (Y_l - Ȳ_{[a,b)})²`.
    #[inline]
    fn centered_ss(&self, a: usize, b: usize) -> f64 {
        let m = (b - a) as f64;
        let s = self.sum(a, b) - m * self.shift;
        let q = self.sq[b] - self.sq[a];
        (q - s * s / m).max(0.0)
    }
}

/// Interval of constants compatible with the multiscale constraint on one
/// segment. Empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn unbounded() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn empty() -> Self {
        Self { lo: f64::INFINITY, hi: f64::NEG_INFINITY }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, c: f64) -> bool {
        self.lo <= c && c <= self.hi
    }

    /// Set inclusion `self ⊆ other` (the empty band is contained in all).
    pub fn is_subset_of(&self, other: &Band) -> bool {
        self.is_empty() || (other.lo <= self.lo && self.hi <= other.hi)
    }

    pub fn clamp(&self, c: f64) -> f64 {
        c.max(self.lo).min(self.hi)
    }
}

fn check_segment(len: usize, a: usize, b: usize) -> Result<()> {
    if a >= b || b > len {
        return Err(domain(format!("segment [{a}, {b}) is empty or exceeds {len} observations")));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(())
}

fn residual_statistic(y: &[f64], a: usize, b: usize, c: f64, sigma: f64, scale: f64) -> f64 {
    let t = compensated_prefix(y[a..b].iter().map(|v| v - c), b - a);
    search::max_statistic(&t, sigma, scale.ln(), &Lengths::new(b - a))
}

/// `T_{[a,b)}(Y, c)` with the local penalty `pen(len / (b-a))`.
pub fn statistic(y: &[f64], a: usize, b: usize, c: f64, sigma: f64) -> Result<f64> {
    check_segment(y.len(), a, b)?;
    check_sigma(sigma)?;
    Ok(residual_statistic(y, a, b, c, sigma, (b - a) as f64))
}

/// `T⁰_{[a,b)}(Y, c)` with the global penalty `pen(len / n)`.
pub fn statistic_global(y: &[f64], a: usize, b: usize, c: f64, sigma: f64, n: usize) -> Result<f64> {
    check_segment(y.len(), a, b)?;
    check_sigma(sigma)?;
    if n < b - a {
        return Err(domain(format!("global scale {n} shorter than the segment ({})", b - a)));
    }
    Ok(residual_statistic(y, a, b, c, sigma, n as f64))
}

/// Null statistic `T_I(ε, ε̄_I)` of a noise vector with unit variance.
pub(crate) fn centered_null_statistic(e: &[f64]) -> f64 {
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    residual_statistic(e, 0, e.len(), mean, 1.0, e.len() as f64)
}

/// Band with an explicit penalty scale. `trim` leading samples are excluded
/// from the subinterval system; a segment with no samples left is
/// unconstrained.
pub(crate) fn band_with_scale(ps: &PrefixSums, a: usize, b: usize, sigma: f64, q: f64, trim: usize, scale: f64) -> Band {
    band_hinted(ps, a, b, sigma, q, trim, scale, &mut None)
}

/// [`band_with_scale`] that first re-tests the pair of subintervals which
/// emptied an earlier band. When that pair alone is clearly incompatible the
/// band is empty without a search; otherwise the full search runs and, if it
/// finds the band empty, leaves its own pair in `hint`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn band_hinted(
    ps: &PrefixSums,
    a: usize,
    b: usize,
    sigma: f64,
    q: f64,
    trim: usize,
    scale: f64,
    hint: &mut Option<Witness>,
) -> Band {
    let start = a + trim;
    if start >= b {
        return Band::unbounded();
    }
    let width = HalfWidth { sigma, q, log_scale: scale.ln(), lengths: &ps.lengths };
    if width.at(b - start) < 0.0 {
        return Band::empty();
    }
    if let Some(w) = *hint {
        let inside = |(p, r): (usize, usize)| start <= p && r <= b;
        if inside(w.lo) && inside(w.hi) {
            let mean = |(p, r): (usize, usize)| (ps.cum[r] - ps.cum[p]) * ps.lengths.inv[r - p];
            let lo = mean(w.lo) - width.at(w.lo.1 - w.lo.0);
            let hi = mean(w.hi) + width.at(w.hi.1 - w.hi.0);
            // The search works on detrended sums, so only a gap well above
            // rounding is trusted.
            if lo - hi > 1e-9 * (lo.abs() + hi.abs() + sigma) {
                return Band::empty();
            }
        }
    }
    match search::band(&ps.cum, start, b, width) {
        Ok((lo, hi)) => Band { lo, hi },
        Err(w) => {
            *hint = Some(w);
            Band::empty()
        }
    }
}

/// `{c : T_{[a,b)}(Y, c) <= q}`, restricted to subintervals of `[a+trim, b)`
/// when `trim > 0`.
pub fn feasible_band(ps: &PrefixSums, a: usize, b: usize, sigma: f64, q: f64, trim: usize) -> Result<Band> {
    check_segment(ps.len(), a, b)?;
    check_sigma(sigma)?;
    Ok(band_with_scale(ps, a, b, sigma, q, trim, (b - a) as f64))
}

/// `{c : T⁰_{[a,b)}(Y, c) <= q}` with the global penalty scale `n`.
pub fn feasible_band_global(ps: &PrefixSums, a: usize, b: usize, sigma: f64, q: f64, n: usize) -> Result<Band> {
    check_segment(ps.len(), a, b)?;
    check_sigma(sigma)?;
    if n < b - a {
        return Err(domain(format!("global scale {n} shorter than the segment ({})", b - a)));
    }
    Ok(band_with_scale(ps, a, b, sigma, q, 0, n as f64))
}

/// Constrained least-squares level of a segment and its residual sum of squares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentFit {
    pub level: f64,
    pub rss: f64,
}

#[inline]
pub(crate) fn fit(ps: &PrefixSums, a: usize, b: usize, band: &Band) -> SegmentFit {
    let mean = ps.mean(a, b);
    let level = band.clamp(mean);
    let d = level - mean;
    let rss = ps.centered_ss(a, b) + (b - a) as f64 * d * d;
    SegmentFit { level, rss }
}

/// Minimises `Σ_{[a,b)} (Y_l - c)²` over `c` in `band`: the segment mean
/// clamped to the band.
pub fn segment_cost(ps: &PrefixSums, a: usize, b: usize, band: &Band) -> Result<SegmentFit> {
    check_segment(ps.len(), a, b)?;
    if band.is_empty() {
        return Err(domain(format!("empty band for segment [{a}, {b})")));
    }
    Ok(fit(ps, a, b, band))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[]);
        (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Direct double loop over all subintervals.
    fn brute_statistic(y: &[f64], a: usize, b: usize, c: f64, sigma: f64, scale: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in a..b {
            let mut s = 0.0;
            for j in i..b {
                s += y[j] - c;
                let len = (j - i + 1) as f64;
                let v = s.abs() / (sigma * len.sqrt()) - (2.0 * (1.0 + (scale / len).ln())).sqrt();
                best = best.max(v);
            }
        }
        best
    }

    fn brute_band(y: &[f64], a: usize, b: usize, sigma: f64, q: f64, trim: usize) -> Band {
        let m = (b - a) as f64;
        let mut band = Band::unbounded();
        for i in a + trim..b {
            let mut s = 0.0;
            for j in i..b {
                s += y[j];
                let len = (j - i + 1) as f64;
                let w = sigma * ((2.0 * (1.0 + (m / len).ln())).sqrt() + q) / len.sqrt();
                band.lo = band.lo.max(s / len - w);
                band.hi = band.hi.min(s / len + w);
            }
        }
        band
    }

    #[test]
    fn penalty_values() {
        assert_eq!(penalty(1.0).unwrap(), std::f64::consts::SQRT_2);
        assert!((penalty((-1.0f64).exp()).unwrap() - 2.0).abs() < 1e-15);
        assert!((penalty(0.5).unwrap() - 1.840_188_675_413_445_4).abs() < 1e-14);
        assert!(penalty(0.0).is_err());
        assert!(penalty(1.5).is_err());
        assert!(penalty(0.2).unwrap() > penalty(0.3).unwrap());
    }

    #[test]
    fn statistic_trivial_cases() {
        let y = vec![2.0; 9];
        assert_eq!(statistic(&y, 0, 9, 2.0, 1.0).unwrap(), -std::f64::consts::SQRT_2);
        let y = vec![1.0, 3.5, 2.0];
        let v = statistic(&y, 1, 2, 2.5, 1.0).unwrap();
        assert!((v - (1.0 - std::f64::consts::SQRT_2)).abs() < 1e-15);
        assert!(statistic(&y, 1, 1, 0.0, 1.0).is_err());
        assert!(statistic(&y, 0, 3, 0.0, 0.0).is_err());
        let g = statistic_global(&vec![5.0; 4], 0, 4, 5.0, 1.0, 40).unwrap();
        assert!((g + pen(0.1)).abs() < 1e-15);
    }

    #[test]
    fn statistic_matches_brute_force() {
        for (k, len) in [1usize, 2, 5, 8, 17, 40, 130, 301].into_iter().enumerate() {
            let y = gaussian(len + 6, k as u64);
            for c in [-0.4, 0.0, 0.3] {
                let fast = statistic(&y, 3, 3 + len, c, 0.8).unwrap();
                let slow = brute_statistic(&y, 3, 3 + len, c, 0.8, len as f64);
                assert!((fast - slow).abs() < 1e-10, "len {len}: {fast} vs {slow}");
                let fast = statistic_global(&y, 3, 3 + len, c, 0.8, 1000).unwrap();
                let slow = brute_statistic(&y, 3, 3 + len, c, 0.8, 1000.0);
                assert!((fast - slow).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn statistic_global_on_whole_series_equals_local() {
        let y = gaussian(50, 3);
        let a = statistic(&y, 0, 50, 0.1, 1.0).unwrap();
        let b = statistic_global(&y, 0, 50, 0.1, 1.0, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_matches_brute_force() {
        for (k, len) in [1usize, 3, 10, 16, 17, 64, 200, 513].into_iter().enumerate() {
            let mut y = gaussian(len + 4, 100 + k as u64);
            if k % 2 == 1 {
                for v in y.iter_mut().skip(len / 2) {
                    *v += 1.5;
                }
            }
            let ps = PrefixSums::new(&y);
            for q in [-1.2, 0.0, 0.8, 2.5] {
                for trim in [0usize, 2] {
                    let fast = feasible_band(&ps, 2, 2 + len, 1.0, q, trim).unwrap();
                    let slow = brute_band(&y, 2, 2 + len, 1.0, q, trim);
                    if slow.is_empty() {
                        assert!(fast.is_empty(), "len {len} q {q}: {fast:?} vs {slow:?}");
                    } else if trim >= len {
                        assert_eq!(fast, Band::unbounded());
                    } else {
                        assert!((fast.lo - slow.lo).abs() < 1e-10 && (fast.hi - slow.hi).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn band_of_constant_segment_contains_value() {
        let ps = PrefixSums::new(&[5.0; 12]);
        for q in [0.0, 0.5, 3.0] {
            assert!(feasible_band(&ps, 0, 12, 1.0, q, 0).unwrap().contains(5.0));
        }
        // pen(1) + q < 0 on the full segment.
        assert!(feasible_band(&ps, 0, 12, 1.0, -1.5, 0).unwrap().is_empty());
        // A singleton at its own quantile collapses to a point.
        let b = feasible_band(&ps, 3, 4, 1.0, -std::f64::consts::SQRT_2, 0).unwrap();
        assert_eq!((b.lo, b.hi), (5.0, 5.0));
        // Fully trimmed segments are unconstrained.
        assert_eq!(feasible_band(&ps, 3, 6, 1.0, 0.0, 3).unwrap(), Band::unbounded());
    }

    #[test]
    fn band_membership_agrees_with_statistic() {
        for seed in 0..20u64 {
            let y = gaussian(10, 500 + seed);
            let ps = PrefixSums::new(&y);
            let q = 0.3 + 0.1 * seed as f64;
            let band = feasible_band(&ps, 0, 10, 1.0, q, 0).unwrap();
            for k in 0..100 {
                let c = -2.0 + 4.0 * k as f64 / 99.0;
                let t = statistic(&y, 0, 10, c, 1.0).unwrap();
                if (t - q).abs() > 1e-9 {
                    assert_eq!(band.contains(c), t <= q, "seed {seed} c {c} t {t} q {q}");
                }
            }
        }
    }

    #[test]
    fn segment_cost_clamps_and_minimises() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let ps = PrefixSums::new(&y);
        let fit = segment_cost(&ps, 0, 4, &Band::unbounded()).unwrap();
        assert_eq!(fit.level, 3.0);
        assert!((fit.rss - 14.0).abs() < 1e-12);
        let fit = segment_cost(&ps, 0, 4, &Band { lo: 0.0, hi: 2.0 }).unwrap();
        assert_eq!(fit.level, 2.0);
        assert!((fit.rss - 18.0).abs() < 1e-12);
        assert!(segment_cost(&ps, 0, 4, &Band::empty()).is_err());

        // Grid-search oracle.
        let y = gaussian(25, 77);
        let ps = PrefixSums::new(&y);
        let band = Band { lo: 0.2, hi: 0.9 };
        let fit = segment_cost(&ps, 0, 25, &band).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=70_000 {
            let c = band.lo + (band.hi - band.lo) * k as f64 / 70_000.0;
            best = best.min(y.iter().map(|v| (v - c).powi(2)).sum::<f64>());
        }
        assert!((fit.rss - best).abs() < 1e-6);
    }

    #[test]
    fn prefix_sums_are_accurate_with_offsets() {
        let y: Vec<f64> = gaussian(2000, 9).into_iter().map(|v| 1e6 + v).collect();
        let ps = PrefixSums::new(&y);
        let direct: f64 = y[100..1900].iter().map(|v| v - 1e6).sum();
        assert!((ps.sum(100, 1900) - 1800.0 * 1e6 - direct).abs() < 1e-5);
        let fit = segment_cost(&ps, 100, 1900, &Band::unbounded()).unwrap();
        let mean = y[100..1900].iter().sum::<f64>() / 1800.0;
        let rss: f64 = y[100..1900].iter().map(|v| (v - mean).powi(2)).sum();
        assert!((fit.rss - rss).abs() / rss < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn band_iff_statistic(seed in 0u64..10_000, len in 1usize..40, q in -1.0f64..3.0, c in -2.0f64..2.0) {
            let y = gaussian(len, seed);
            let ps = PrefixSums::new(&y);
            let band = feasible_band(&ps, 0, len, 1.0, q, 0).unwrap();
            let t = statistic(&y, 0, len, c, 1.0).unwrap();
            prop_assume!((t - q).abs() > 1e-9);
            prop_assert_eq!(band.contains(c), t <= q);
        }

        #[test]
        fn statistic_shift_and_scale_invariant(seed in 0u64..10_000, len in 1usize..30, shift in -50.0f64..50.0, scale_exp in -3i32..4) {
            let y = gaussian(len, seed);
            let lambda = 2f64.powi(scale_exp);
            let base = statistic(&y, 0, len, 0.2, 1.0).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let moved = statistic(&shifted, 0, len, 0.2 + shift, 1.0).unwrap();
            prop_assert!((base - moved).abs() < 1e-9);
            let scaled: Vec<f64> = y.iter().map(|v| v * lambda).collect();
            let rescaled = statistic(&scaled, 0, len, 0.2 * lambda, lambda).unwrap();
            prop_assert!((base - rescaled).abs() < 1e-12);
        }

        #[test]
        fn band_shrinks_with_quantile(seed in 0u64..10_000, len in 1usize..60, q in -1.0f64..3.0, dq in 0.0f64..2.0) {
            let y = gaussian(len, seed);
            let ps = PrefixSums::new(&y);
            let wide = feasible_band(&ps, 0, len, 1.0, q + dq, 0).unwrap();
            let narrow = feasible_band(&ps, 0, len, 1.0, q, 0).unwrap();
            prop_assert!(narrow.is_subset_of(&wide));
        }

        #[test]
        fn global_statistic_is_smaller(seed in 0u64..10_000, len in 1usize..40, extra in 1usize..100) {
            let y = gaussian(len, seed);
            let local = statistic(&y, 0, len, 0.0, 1.0).unwrap();
            let global = statistic_global(&y, 0, len, 0.0, 1.0, len + extra).unwrap();
            prop_assert!(global <= local);
        }

        #[test]
        fn constrained_rss_dominates(seed in 0u64..10_000, len in 1usize..50, lo in -1.0f64..1.0, width in 0.0f64..1.0) {
            let y = gaussian(len, seed);
            let ps = PrefixSums::new(&y);
            let free = segment_cost(&ps, 0, len, &Band::unbounded()).unwrap();
            let band = Band { lo, hi: lo + width };
            let fit = segment_cost(&ps, 0, len, &band).unwrap();
            prop_assert!(fit.rss >= free.rss);
            if band.contains(free.level) {
                prop_assert_eq!(fit.rss, free.rss);
            } else {
                prop_assert!(fit.rss > free.rss);
            }
        }
    }
}
