// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact maximisation over all subintervals of a window.
//!
//! A subinterval is a pair `(p, r)` of prefix-sum indices with `p < r`; its
//! sum is `cum[r] - cum[p]` and its length `r - p`. The pairs form a triangle
//! that is explored as a tree of rectangular boxes `p ∈ [p0, p1], r ∈ [r0, r1]`.
//! For every box the extrema of the prefix sums over its two index ranges
//! bound the best value any pair inside can reach; boxes that cannot improve the running optimum are
//! skipped and small boxes are enumerated directly. The result is the same
//! maximum (or intersection) an exhaustive double loop produces.

use super::Lengths;

/// Boxes with at most this many cells are enumerated pair by pair.
const LEAF_CELLS: usize = 48;
/// Windows of at most this length skip the tree entirely.
const DIRECT_LEN: usize = 16;

/// Minima and maxima over the ranges produced by repeated halving of
/// `[0, len)`: node 1 covers everything, node `k` covering `[lo, hi]` has
/// children `2k` over `[lo, mid]` and `2k+1` over `[mid+1, hi]` with
/// `mid = (lo+hi)/2`. Box splits follow the same rule, so every range a box
/// spans is a node.
struct Halving {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Halving {
    fn new(v: &[f64]) -> Self {
        let size = 4 * v.len().max(1);
        let mut h = Self { min: vec![0.0; size], max: vec![0.0; size] };
        h.build(v, 1, 0, v.len() - 1);
        h
    }

    fn build(&mut self, v: &[f64], node: usize, lo: usize, hi: usize) {
        if lo == hi {
            self.min[node] = v[lo];
            self.max[node] = v[lo];
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(v, 2 * node, lo, mid);
        self.build(v, 2 * node + 1, mid + 1, hi);
        self.min[node] = self.min[2 * node].min(self.min[2 * node + 1]);
        self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]);
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    p0: usize,
    p1: usize,
    pn: usize,
    r0: usize,
    r1: usize,
    rn: usize,
}

impl Cell {
    fn root(last: usize) -> Self {
        Cell { p0: 0, p1: last, pn: 1, r0: 0, r1: last, rn: 1 }
    }

    #[inline]
    fn area(&self) -> usize {
        (self.p1 - self.p0 + 1) * (self.r1 - self.r0 + 1)
    }

    #[inline]
    fn len_range(&self) -> (usize, usize) {
        let lmin = if self.r0 > self.p1 { self.r0 - self.p1 } else { 1 };
        (lmin, self.r1 - self.p0)
    }

    /// Children in preference order (longer subintervals first), with parts
    /// holding no pair `p < r` dropped.
    fn split(&self) -> [Option<Cell>; 2] {
        let keep = |c: Cell| if c.p0 < c.r1 { Some(c) } else { None };
        if self.p1 - self.p0 >= self.r1 - self.r0 {
            let mid = (self.p0 + self.p1) / 2;
            [
                keep(Cell { p1: mid, pn: 2 * self.pn, ..*self }),
                keep(Cell { p0: mid + 1, pn: 2 * self.pn + 1, ..*self }),
            ]
        } else {
            let mid = (self.r0 + self.r1) / 2;
            [
                keep(Cell { r0: mid + 1, rn: 2 * self.rn + 1, ..*self }),
                keep(Cell { r1: mid, rn: 2 * self.rn, ..*self }),
            ]
        }
    }

    /// Bounds on `v[r] - v[p]` over the box.
    #[inline]
    fn difference_range(&self, h: &Halving) -> (f64, f64) {
        (h.min[self.rn] - h.max[self.pn], h.max[self.rn] - h.min[self.pn])
    }
}

#[inline]
fn slack(x: f64) -> f64 {
    1e-12 * (x.abs() + 1.0)
}

/// Half-width `σ (pen(l/scale) + q) / √l` of the admissible interval around a
/// subinterval mean.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HalfWidth<'a> {
    pub sigma: f64,
    pub q: f64,
    pub log_scale: f64,
    pub lengths: &'a Lengths,
}

impl HalfWidth<'_> {
    #[inline]
    pub(crate) fn at(&self, len: usize) -> f64 {
        self.sigma * (self.lengths.pen(len, self.log_scale) + self.q) * self.lengths.inv_sqrt[len]
    }
}

/// Two subintervals whose admissible intervals do not overlap, proving a
/// band empty. Indices are absolute prefix positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Witness {
    /// Subinterval setting the lower end.
    pub lo: (usize, usize),
    /// Subinterval setting the upper end.
    pub hi: (usize, usize),
}

/// Intersection over all subintervals `[p, r)` with `start <= p < r <= end`
/// of `[mean - w(len), mean + w(len)]`, or a witness of emptiness.
///
/// The caller guarantees `w(end - start) >= 0`, which makes `w` decreasing in
/// the length.
pub(crate) fn band(cum: &[f64], start: usize, end: usize, width: HalfWidth<'_>) -> Result<(f64, f64), Witness> {
    debug_assert!(start < end);
    let full = end - start;
    let inv = &width.lengths.inv;
    let mean = (cum[end] - cum[start]) * inv[full];
    let w = width.at(full);
    let mut lo = mean - w;
    let mut hi = mean + w;
    // Sums relative to the window mean keep the box bounds tight whatever
    // the level of the data.
    let d: Vec<f64> = (0..=full).map(|i| (cum[start + i] - cum[start]) - mean * i as f64).collect();

    let mut arg = Witness { lo: (0, full), hi: (0, full) };
    let visit = |c: &Cell, lo: &mut f64, hi: &mut f64, arg: &mut Witness| -> bool {
        for p in c.p0..=c.p1 {
            let base = d[p];
            for r in c.r0.max(p + 1)..=c.r1 {
                let len = r - p;
                let m = mean + (d[r] - base) * inv[len];
                let w = width.at(len);
                if m - w > *lo {
                    *lo = m - w;
                    arg.lo = (p, r);
                }
                if m + w < *hi {
                    *hi = m + w;
                    arg.hi = (p, r);
                }
            }
            if *lo > *hi {
                return false;
            }
        }
        true
    };
    let absolute = |w: Witness| Witness { lo: (start + w.lo.0, start + w.lo.1), hi: (start + w.hi.0, start + w.hi.1) };

    let root = Cell::root(full);
    if full <= DIRECT_LEN {
        return if visit(&root, &mut lo, &mut hi, &mut arg) { Ok((lo, hi)) } else { Err(absolute(arg)) };
    }

    let tree = Halving::new(&d);
    let mut stack = vec![root];
    while let Some(c) = stack.pop() {
        let (lmin, lmax) = c.len_range();
        let (num_lb, num_ub) = c.difference_range(&tree);
        // With h = σ(pen(lmax/scale) + q) >= 0 and x = 1/√len, every pair in
        // the box has m - w <= mean + num_ub x² - h x, convex in x, so the
        // larger endpoint value bounds it (and symmetrically for m + w).
        let h = width.sigma * (width.lengths.pen(lmax, width.log_scale) + width.q);
        let (xs, xl) = (width.lengths.inv_sqrt[lmin], width.lengths.inv_sqrt[lmax]);
        let lo_ub = mean + if num_ub >= 0.0 { (num_ub * xs * xs - h * xs).max(num_ub * xl * xl - h * xl) } else { num_ub * xl * xl - h * xl };
        let hi_lb = mean + if num_lb <= 0.0 { (num_lb * xs * xs + h * xs).min(num_lb * xl * xl + h * xl) } else { num_lb * xl * xl + h * xl };
        if lo_ub + slack(lo_ub) <= lo && hi_lb - slack(hi_lb) >= hi {
            continue;
        }
        if c.area() <= LEAF_CELLS {
            if !visit(&c, &mut lo, &mut hi, &mut arg) {
                return Err(absolute(arg));
            }
            continue;
        }
        let [first, second] = c.split();
        // LIFO: push the preferred child last.
        if let Some(s) = second {
            stack.push(s);
        }
        if let Some(f) = first {
            stack.push(f);
        }
    }
    if lo <= hi {
        Ok((lo, hi))
    } else {
        Err(absolute(arg))
    }
}

/// `max_{p<r} |t[r] - t[p]| / (σ √(r-p)) - pen((r-p)/scale)` over the whole
/// prefix array `t` of residual sums.
pub(crate) fn max_statistic(t: &[f64], sigma: f64, log_scale: f64, lengths: &Lengths) -> f64 {
    let m = t.len() - 1;
    debug_assert!(m >= 1);
    let inv_sigma = 1.0 / sigma;
    let value = |p: usize, r: usize| -> f64 {
        let len = r - p;
        (t[r] - t[p]).abs() * inv_sigma * lengths.inv_sqrt[len] - lengths.pen(len, log_scale)
    };
    let mut best = value(0, m);

    let visit = |c: &Cell, best: &mut f64| {
        for p in c.p0..=c.p1 {
            for r in c.r0.max(p + 1)..=c.r1 {
                let v = value(p, r);
                if v > *best {
                    *best = v;
                }
            }
        }
    };

    let root = Cell::root(m);
    if m <= DIRECT_LEN {
        visit(&root, &mut best);
        return best;
    }
    let tree = Halving::new(t);
    let mut stack = vec![root];
    while let Some(c) = stack.pop() {
        let (lmin, lmax) = c.len_range();
        let (num_lb, num_ub) = c.difference_range(&tree);
        let abs_ub = num_ub.abs().max(num_lb.abs());
        let bound = abs_ub * inv_sigma * lengths.inv_sqrt[lmin] - lengths.pen(lmax, log_scale);
        if bound + slack(bound) <= best {
            continue;
        }
        if c.area() <= LEAF_CELLS {
            visit(&c, &mut best);
            continue;
        }
        let [first, second] = c.split();
        if let Some(s) = second {
            stack.push(s);
        }
        if let Some(f) = first {
            stack.push(f);
        }
    }
    best
}
