// SPDX-License-Identifier: MIT OR Apache-2.0

//! C interface to the `fdrseg` crate.
//!
//! Quantile tables and segmentations live behind opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`FdrsegStatus`]; on failure the message is available from
//! [`fdrseg_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary and are reported as
//! `FDRSEG_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fdrseg::quantiles::{self, GridKind};
use fdrseg::{Error, LowpassKernel, QuantileTable, Segmentation};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdrsegStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument lies outside the domain of the operation.
    Domain = 2,
    /// Inconsistent configuration or no feasible segmentation.
    Config = 3,
    /// A quantile table failed validation.
    Load = 4,
    /// Malformed input such as a non UTF-8 path or bad JSON.
    Parse = 5,
    Io = 6,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 7,
    /// A bug in the library (caught panic).
    Internal = 8,
}

/// Local quantile table.
pub struct FdrsegTable(QuantileTable);

/// Result of a segmentation.
pub struct FdrsegSegmentation(Segmentation);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FdrsegStatus {
    match e {
        Error::Domain(_) => FdrsegStatus::Domain,
        Error::Config(_) => FdrsegStatus::Config,
        Error::Load(_) => FdrsegStatus::Load,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => FdrsegStatus::Parse,
        Error::Io(_) => FdrsegStatus::Io,
    }
}

struct Fail(FdrsegStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(FdrsegStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FdrsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdrsegStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            FdrsegStatus::Internal
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or a nul-terminated string.
unsafe fn path<'a>(ptr: *const c_char) -> Result<&'a Path, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr).to_str().map_err(|_| Fail(FdrsegStatus::Parse, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

fn out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller passes null or a valid, writable pointer.
    unsafe { ptr.as_mut() }.ok_or_else(|| null(name))
}

fn handle<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes null or a live handle from this library.
    unsafe { ptr.as_ref() }.ok_or_else(|| null(name))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fdrseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Local level `beta / (2 + beta)` whose FDR bound is `beta`.
#[no_mangle]
pub extern "C" fn fdrseg_alpha_for_fdr(beta: f64) -> f64 {
    fdrseg::alpha_for_fdr(beta)
}

/// FDR bound `2 alpha / (1 - alpha)`.
#[no_mangle]
pub extern "C" fn fdrseg_fdr_bound(alpha: f64) -> f64 {
    fdrseg::fdr_bound(alpha)
}

/// Simulates a local quantile table for iid noise on the geometric grid
/// up to `n_max`.
///
/// # Safety
/// `table_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_simulate(alpha: f64, n_max: usize, mc_reps: usize, seed: u64, table_out: *mut *mut FdrsegTable) -> FdrsegStatus {
    guard(|| {
        let dst = out(table_out, "table_out")?;
        let grid = quantiles::make_grid(GridKind::Geometric, n_max);
        let t = quantiles::simulate_local_quantiles(alpha, n_max, &grid, mc_reps, seed, &LowpassKernel::identity())?;
        *dst = Box::into_raw(Box::new(FdrsegTable(t)));
        Ok(())
    })
}

/// Like [`fdrseg_table_simulate`] for noise filtered by `taps` (normalised
/// to sum 1) and subsampled by `factor`.
///
/// # Safety
/// `taps` must point to `num_taps` values; `table_out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_simulate_filtered(
    alpha: f64,
    n_max: usize,
    mc_reps: usize,
    seed: u64,
    taps: *const f64,
    num_taps: usize,
    factor: usize,
    table_out: *mut *mut FdrsegTable,
) -> FdrsegStatus {
    guard(|| {
        let dst = out(table_out, "table_out")?;
        let kernel = LowpassKernel::normalized(slice(taps, num_taps, "taps")?.to_vec(), factor)?;
        let grid = quantiles::make_grid(GridKind::Geometric, n_max);
        let t = quantiles::simulate_local_quantiles(alpha, n_max, &grid, mc_reps, seed, &kernel)?;
        *dst = Box::into_raw(Box::new(FdrsegTable(t)));
        Ok(())
    })
}

/// Loads a table written by [`fdrseg_table_save`] or the command-line tool.
///
/// # Safety
/// `file` must be a nul-terminated string; `table_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_load(file: *const c_char, table_out: *mut *mut FdrsegTable) -> FdrsegStatus {
    guard(|| {
        let dst = out(table_out, "table_out")?;
        let t = QuantileTable::load(path(file)?)?;
        *dst = Box::into_raw(Box::new(FdrsegTable(t)));
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle; `file` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_save(table: *const FdrsegTable, file: *const c_char) -> FdrsegStatus {
    guard(|| {
        handle(table, "table")?.0.save(path(file)?)?;
        Ok(())
    })
}

/// Quantile `q_alpha(m)` for a segment of `m` samples.
///
/// # Safety
/// `table` must be a live handle; `value_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_lookup(table: *const FdrsegTable, m: usize, value_out: *mut f64) -> FdrsegStatus {
    guard(|| {
        *out(value_out, "value_out")? = handle(table, "table")?.0.lookup(m)?;
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_alpha(table: *const FdrsegTable) -> f64 {
    table.as_ref().map_or(f64::NAN, |t| t.0.alpha())
}

/// Releases a table. Null is ignored.
///
/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_table_free(table: *mut FdrsegTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Global threshold for the simultaneous method at level `alpha_s`.
///
/// # Safety
/// `value_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_global_quantile(alpha_s: f64, n: usize, mc_reps: usize, seed: u64, value_out: *mut f64) -> FdrsegStatus {
    guard(|| {
        *out(value_out, "value_out")? = quantiles::simulate_global_quantile(alpha_s, n, mc_reps, seed)?;
        Ok(())
    })
}

/// Noise level from the interquartile range of first differences.
///
/// # Safety
/// `y` must point to `n` values; `value_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_estimate_sigma(y: *const f64, n: usize, value_out: *mut f64) -> FdrsegStatus {
    guard(|| {
        let dst = out(value_out, "value_out")?;
        *dst = fdrseg::evaluation::estimate_sigma(slice(y, n, "y")?, fdrseg::evaluation::SigmaConstant::Consistent)?;
        Ok(())
    })
}

fn store(dst: *mut *mut FdrsegSegmentation, s: Segmentation) -> Result<(), Fail> {
    *out(dst, "segmentation_out")? = Box::into_raw(Box::new(FdrsegSegmentation(s)));
    Ok(())
}

/// FDR-controlling segmentation of `y` with an iid table at level `alpha`.
///
/// # Safety
/// `y` must point to `n` values, `table` be a live handle and
/// `segmentation_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segment(
    y: *const f64,
    n: usize,
    alpha: f64,
    sigma: f64,
    table: *const FdrsegTable,
    segmentation_out: *mut *mut FdrsegSegmentation,
) -> FdrsegStatus {
    guard(|| {
        out(segmentation_out, "segmentation_out")?;
        let s = fdrseg::fdrseg(slice(y, n, "y")?, alpha, sigma, &handle(table, "table")?.0)?;
        store(segmentation_out, s)
    })
}

/// Dependence-adjusted segmentation: the table's noise model is used as is
/// and the first `trim` samples of every segment are left out of its tests.
///
/// # Safety
/// As for [`fdrseg_segment`].
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segment_dependent(
    y: *const f64,
    n: usize,
    alpha: f64,
    sigma: f64,
    trim: usize,
    table: *const FdrsegTable,
    segmentation_out: *mut *mut FdrsegSegmentation,
) -> FdrsegStatus {
    guard(|| {
        out(segmentation_out, "segmentation_out")?;
        let t = &handle(table, "table")?.0;
        let s = fdrseg::segmenter::dfdrseg_with_trim(slice(y, n, "y")?, alpha, sigma, trim, t, t.noise_descriptor())?;
        store(segmentation_out, s)
    })
}

/// Simultaneous segmentation with global threshold `q_tilde`.
///
/// # Safety
/// `y` must point to `n` values and `segmentation_out` be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segment_smuce(
    y: *const f64,
    n: usize,
    alpha_s: f64,
    sigma: f64,
    q_tilde: f64,
    segmentation_out: *mut *mut FdrsegSegmentation,
) -> FdrsegStatus {
    guard(|| {
        out(segmentation_out, "segmentation_out")?;
        let s = fdrseg::smuce(slice(y, n, "y")?, alpha_s, sigma, q_tilde)?;
        store(segmentation_out, s)
    })
}

/// Number of change-points, or 0 for a null handle.
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segmentation_num_changes(seg: *const FdrsegSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.0.k_hat)
}

/// Residual sum of squares of the fit, NaN for a null handle.
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segmentation_rss(seg: *const FdrsegSegmentation) -> f64 {
    seg.as_ref().map_or(f64::NAN, |s| s.0.rss)
}

fn copy_out<T: Copy>(src: &[T], buf: *mut T, capacity: usize, written: *mut usize) -> Result<(), Fail> {
    *out(written, "written")? = src.len();
    if src.len() > capacity {
        return Err(Fail(FdrsegStatus::BufferTooSmall, format!("buffer holds {capacity}, need {}", src.len())));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        // SAFETY: `buf` holds at least `capacity >= src.len()` elements.
        unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    }
    Ok(())
}

/// Copies the change indices (index `i` separates samples `i-1` and `i`)
/// into `buf`. `written` receives the count, also when the buffer is too
/// small.
///
/// # Safety
/// `buf` must hold `capacity` elements; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segmentation_change_indices(
    seg: *const FdrsegSegmentation,
    buf: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> FdrsegStatus {
    guard(|| copy_out(&handle(seg, "seg")?.0.change_indices, buf, capacity, written))
}

/// Copies the segment levels (one more than the change-points).
///
/// # Safety
/// As for [`fdrseg_segmentation_change_indices`].
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segmentation_levels(
    seg: *const FdrsegSegmentation,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> FdrsegStatus {
    guard(|| copy_out(&handle(seg, "seg")?.0.levels, buf, capacity, written))
}

/// Releases a segmentation. Null is ignored.
///
/// # Safety
/// `seg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdrseg_segmentation_free(seg: *mut FdrsegSegmentation) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}
