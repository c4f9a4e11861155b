// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small descriptive statistics shared across the crate.
//!
//! Empirical quantiles use the median-unbiased convention (Hyndman & Fan
//! type 8) everywhere, including the Monte-Carlo quantile tables.

/// Type-8 empirical quantile of an ascending `sorted` sample at probability `p`.
///
/// Panics if `sorted` is empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (n as f64 + 1.0 / 3.0) * p + 1.0 / 3.0;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let frac = h - lo;
    let i = lo as usize - 1;
    let (a, b) = (sorted[i], sorted[i + 1]);
    if a == b {
        return a;
    }
    a + frac * (b - a)
}

/// Type-8 quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean (sample standard deviation over √n).
pub fn std_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    quantile(values, 0.5)
}

/// Most frequent value; ties go to the smallest value.
pub fn mode(values: &[usize]) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (v, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((v, c)),
        })
        .map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type8_matches_reference_values() {
        // Reference: R quantile(1:10, type = 8)
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((quantile_sorted(&x, 0.25) - 2.916_666_666_666_667).abs() < 1e-12);
        assert!((quantile_sorted(&x, 0.5) - 5.5).abs() < 1e-12);
        assert!((quantile_sorted(&x, 0.75) - 8.083_333_333_333_334).abs() < 1e-12);
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 10.0);
    }

    #[test]
    fn constant_sample_is_exact() {
        let v = vec![-std::f64::consts::SQRT_2; 17];
        for p in [0.05, 0.5, 0.9, 0.95] {
            assert_eq!(quantile_sorted(&v, p), -std::f64::consts::SQRT_2);
        }
    }

    #[test]
    fn mode_prefers_smallest_on_ties() {
        assert_eq!(mode(&[3, 1, 3, 1, 2]), Some(1));
        assert_eq!(mode(&[5, 5, 2]), Some(5));
        assert_eq!(mode(&[]), None);
    }
}
