//! C ABI over the dualscale core: win matrices, Bradley–Terry fits, rank
//! similarities and Krippendorff's alpha.
//!
//! Objects are opaque handles created by `ds_win_matrix_from_dense` and `ds_fit_bt`, and
//! released with the matching `ds_*_free`. Fallible calls return a [`DsStatus`]
//! and write results through out-pointers; the message for the most recent
//! failure on the calling thread is available from [`ds_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualscale::btrank::{fit_bt_ilsr, IlsrOptions, LatentScale};
use dualscale::comparisons::{win, WinMatrix};
use dualscale::rank_eval::{footrule_similarity, kendall_similarity, ordinal_alpha_rankings, Ranking};
use dualscale::reliability::{krippendorff_alpha, Level, ReliabilityGrid};
use dualscale::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// No expected disagreement, or an entry with no comparisons.
    Undefined = 3,
    Disconnected = 4,
    NonFinite = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsLevel {
    Nominal = 0,
    Ordinal = 1,
}

/// Opaque win matrix handle.
pub struct DsWinMatrix(WinMatrix);

/// Opaque fitted-scale handle.
pub struct DsScale(LatentScale);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DsStatus {
    match err {
        Error::Stage { source, .. } => status_of(source),
        Error::AlphaUndefined | Error::Undefined(_) => DsStatus::Undefined,
        Error::Disconnected { .. } => DsStatus::Disconnected,
        Error::NonFinite(_) => DsStatus::NonFinite,
        _ => DsStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into a status plus a stored message.
fn guard<F>(f: F) -> DsStatus
where
    F: FnOnce() -> Result<(), DsFailure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(DsFailure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DsStatus::Internal
        }
    }
}

struct DsFailure(DsStatus, String);

impl From<Error> for DsFailure {
    fn from(e: Error) -> Self {
        DsFailure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> DsFailure {
    DsFailure(DsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> DsFailure {
    DsFailure(DsStatus::InvalidInput, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], DsFailure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), DsFailure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn index_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Message for the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Single comparison outcome: 1 if `x > y`, 0.5 if equal, 0 otherwise.
#[no_mangle]
pub extern "C" fn ds_win(x: f64, y: f64) -> f64 {
    win(x, y)
}

/// Builds a matrix over items `0..n` from row-major `values` (`n * n` entries).
///
/// # Safety
/// `values` must point to `n * n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_win_matrix_from_dense(
    n: usize,
    values: *const f64,
    out: *mut *mut DsWinMatrix,
) -> DsStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or_else(|| invalid("matrix size overflows"))?;
        let v = slice(values, len, "values")?.to_vec();
        let wm = WinMatrix::from_dense(index_ids(n), v)?;
        write_out(out, Box::into_raw(Box::new(DsWinMatrix(wm))), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_win_matrix_free(m: *mut DsWinMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ds_win_matrix_size(m: *const DsWinMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_win_matrix_get(m: *const DsWinMatrix, i: usize, j: usize, out: *mut f64) -> DsStatus {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("matrix"))?.0;
        if i >= m.n() || j >= m.n() {
            return Err(invalid(format!("index ({i}, {j}) outside {0}x{0}", m.n())));
        }
        write_out(out, m.get(i, j), "out")
    })
}

/// Fits strengths with I-LSR.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_fit_bt(
    m: *const DsWinMatrix,
    reg: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut DsScale,
) -> DsStatus {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("matrix"))?.0;
        let scale = fit_bt_ilsr(m, &IlsrOptions { reg, tol, max_iter })?;
        write_out(out, Box::into_raw(Box::new(DsScale(scale))), "out")
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_free(s: *mut DsScale) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_len(s: *const DsScale) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_converged(s: *const DsScale) -> bool {
    s.as_ref().is_some_and(|s| s.0.converged)
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_iterations(s: *const DsScale) -> usize {
    s.as_ref().map_or(0, |s| s.0.iterations)
}

/// Copies the zero-mean strengths into `out` (`len` must equal the item count).
///
/// # Safety
/// `s` must be a live handle and `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_theta(s: *const DsScale, out: *mut f64, len: usize) -> DsStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(|| null("scale"))?.0;
        if len != s.len() {
            return Err(invalid(format!("buffer length {len}, scale has {} items", s.len())));
        }
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(s.theta.as_ptr(), out, len);
        }
        Ok(())
    })
}

/// Writes item indices from strongest to weakest into `out`.
///
/// # Safety
/// `s` must be a live handle and `out` must have room for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_ranking(s: *const DsScale, out: *mut usize, len: usize) -> DsStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(|| null("scale"))?.0;
        if len != s.len() {
            return Err(invalid(format!("buffer length {len}, scale has {} items", s.len())));
        }
        if len > 0 && out.is_null() {
            return Err(null("out"));
        }
        for (k, id) in s.ranking.iter().enumerate() {
            let idx = s.ids.iter().position(|x| x == id).expect("ranking ids come from ids");
            out.add(k).write(idx);
        }
        Ok(())
    })
}

/// Probability that item `i` beats item `j`.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_scale_probability(s: *const DsScale, i: usize, j: usize, out: *mut f64) -> DsStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(|| null("scale"))?.0;
        if i >= s.len() || j >= s.len() {
            return Err(invalid(format!("index ({i}, {j}) outside {} items", s.len())));
        }
        let p = if i == j { 0.5 } else { s.win_probability(i, j) };
        write_out(out, p, "out")
    })
}

unsafe fn ranking(order: *const usize, n: usize, what: &str) -> Result<Ranking, DsFailure> {
    let ids = slice(order, n, what)?
        .iter()
        .map(|i| {
            if *i < n {
                Ok(i.to_string())
            } else {
                Err(invalid(format!("{what}: index {i} >= {n}")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ranking::from_order(ids)?)
}

type RankMetric = fn(&Ranking, &Ranking) -> dualscale::Result<f64>;

unsafe fn rank_metric(f: RankMetric, r1: *const usize, r2: *const usize, n: usize, out: *mut f64) -> DsStatus {
    guard(|| {
        let a = ranking(r1, n, "r1")?;
        let b = ranking(r2, n, "r2")?;
        write_out(out, f(&a, &b)?, "out")
    })
}

/// Rankings are permutations of `0..n`, listed from first to last place.
///
/// # Safety
/// `r1` and `r2` must each hold `n` entries and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_footrule_similarity(
    r1: *const usize,
    r2: *const usize,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    rank_metric(footrule_similarity, r1, r2, n, out)
}

/// # Safety
/// As for [`ds_footrule_similarity`].
#[no_mangle]
pub unsafe extern "C" fn ds_kendall_similarity(
    r1: *const usize,
    r2: *const usize,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    rank_metric(kendall_similarity, r1, r2, n, out)
}

/// # Safety
/// As for [`ds_footrule_similarity`].
#[no_mangle]
pub unsafe extern "C" fn ds_ordinal_alpha_rankings(
    r1: *const usize,
    r2: *const usize,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    rank_metric(ordinal_alpha_rankings, r1, r2, n, out)
}

/// Alpha over a row-major `n_units × n_raters` grid; cells with `mask == 0` are missing.
///
/// # Safety
/// `values` and `mask` must each hold `n_units * n_raters` entries and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_krippendorff_alpha(
    values: *const i64,
    mask: *const u8,
    n_units: usize,
    n_raters: usize,
    level: DsLevel,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let len = n_units
            .checked_mul(n_raters)
            .ok_or_else(|| invalid("grid size overflows"))?;
        let v = slice(values, len, "values")?;
        let m = slice(mask, len, "mask")?;
        let mut grid = ReliabilityGrid::new(match level {
            DsLevel::Nominal => Level::Nominal,
            DsLevel::Ordinal => Level::Ordinal,
        });
        for u in 0..n_units {
            for r in 0..n_raters {
                let k = u * n_raters + r;
                if m[k] != 0 {
                    grid.insert(&u.to_string(), &r.to_string(), v[k]);
                }
            }
        }
        write_out(out, krippendorff_alpha(&grid)?, "out")
    })
}
