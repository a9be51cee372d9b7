//! C ABI over `mdrate`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `_free`. Every fallible call returns an [`MdrStatus`]
//! and leaves a message for [`mdr_last_error_message`] on the calling
//! thread. Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mdrate::kkt::{self, KktCase, SumRateResult};
use mdrate::scalar::{ScalarCase, ScalarInstance};
use mdrate::{Error, MdInstance, SymMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInstance = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Numerical = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdrCase {
    Interior = 0,
    ZeroEigs = 1,
    OneEigs = 2,
    Both = 3,
}

impl From<KktCase> for MdrCase {
    fn from(c: KktCase) -> Self {
        match c {
            KktCase::Interior => MdrCase::Interior,
            KktCase::ZeroEigs => MdrCase::ZeroEigs,
            KktCase::OneEigs => MdrCase::OneEigs,
            KktCase::Both => MdrCase::Both,
        }
    }
}

/// Opaque problem instance.
pub struct MdrInstance(MdInstance);

/// Opaque sum-rate result.
pub struct MdrSumRate(SumRateResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MdrStatus {
    match e {
        Error::Parse(_) => MdrStatus::Parse,
        Error::InvalidInstance(_) | Error::OrderingViolation(_) => MdrStatus::InvalidInstance,
        Error::InvalidMatrix(_) | Error::Dimension(_) | Error::InvalidArgument(_) | Error::Unsupported(_) => {
            MdrStatus::InvalidArgument
        }
        Error::NotPsd { .. }
        | Error::NotPd { .. }
        | Error::Singular(_)
        | Error::DidNotConverge { .. }
        | Error::KktViolation(_) => MdrStatus::Numerical,
        Error::TheoryViolation(_) | Error::Internal(_) => MdrStatus::Internal,
    }
}

fn fail(status: MdrStatus, msg: impl Into<String>) -> MdrStatus {
    set_error(msg);
    status
}

fn lib_fail(e: Error) -> MdrStatus {
    set_error(format!("{}: {e}", e.kind()));
    status_of(&e)
}

/// Runs `f`, turning a panic into [`MdrStatus::Panic`].
fn guarded(f: impl FnOnce() -> MdrStatus) -> MdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == MdrStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(MdrStatus::Panic, "panic inside mdrate"),
    }
}

unsafe fn read_matrix(p: *const f64, n: usize) -> Result<SymMatrix, MdrStatus> {
    if p.is_null() {
        return Err(fail(MdrStatus::NullPointer, "matrix pointer is null"));
    }
    let data = std::slice::from_raw_parts(p, n * n);
    SymMatrix::from_row_slice(n, data).map_err(lib_fail)
}

unsafe fn write_matrix(m: &SymMatrix, out: *mut f64, len: usize) -> MdrStatus {
    if out.is_null() {
        return fail(MdrStatus::NullPointer, "output buffer is null");
    }
    let n = m.dim();
    if len < n * n {
        return fail(MdrStatus::BufferTooSmall, format!("need {} doubles, got {len}", n * n));
    }
    let buf = std::slice::from_raw_parts_mut(out, n * n);
    for i in 0..n {
        for j in 0..n {
            buf[i * n + j] = m.get(i, j);
        }
    }
    MdrStatus::Ok
}

/// Message of the last failure on this thread, or null. Valid until the
/// next `mdr_` call on the same thread.
#[no_mangle]
pub extern "C" fn mdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn mdr_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Parses an instance document (NUL-terminated UTF-8).
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdr_instance_parse(text: *const c_char, out: *mut *mut MdrInstance) -> MdrStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return fail(MdrStatus::NullPointer, "null argument");
        }
        let Ok(s) = CStr::from_ptr(text).to_str() else {
            return fail(MdrStatus::InvalidUtf8, "instance text is not UTF-8");
        };
        match mdrate::cli::parse_instance(s) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(MdrInstance(inst)));
                MdrStatus::Ok
            }
            Err(e) => lib_fail(Error::Parse(e)),
        }
    })
}

/// Builds and validates an instance from row-major buffers: `kx` and `d0`
/// hold `n·n` doubles, `d` holds `l` consecutive `n·n` matrices.
///
/// # Safety
/// Buffers must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdr_instance_new(
    n: usize,
    l: usize,
    kx: *const f64,
    d: *const f64,
    d0: *const f64,
    out: *mut *mut MdrInstance,
) -> MdrStatus {
    guarded(|| {
        if out.is_null() || d.is_null() {
            return fail(MdrStatus::NullPointer, "null argument");
        }
        if n == 0 || l == 0 {
            return fail(MdrStatus::InvalidArgument, "n and l must be positive");
        }
        let build = || -> Result<MdInstance, MdrStatus> {
            let kx = read_matrix(kx, n)?;
            let d0 = read_matrix(d0, n)?;
            let dl = (0..l).map(|i| read_matrix(d.add(i * n * n), n)).collect::<Result<Vec<_>, _>>()?;
            MdInstance::validated(kx, dl, d0).map_err(lib_fail)
        };
        match build() {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(MdrInstance(inst)));
                MdrStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `inst` must come from `mdr_instance_parse`/`mdr_instance_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn mdr_instance_free(inst: *mut MdrInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Source dimension `N`, 0 for a null handle.
///
/// # Safety
/// `inst` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mdr_instance_dim(inst: *const MdrInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.dim())
}

/// Number of descriptions `L`, 0 for a null handle.
///
/// # Safety
/// `inst` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mdr_instance_descriptions(inst: *const MdrInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.descriptions())
}

/// Solves for the exact sum rate.
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate(inst: *const MdrInstance, out: *mut *mut MdrSumRate) -> MdrStatus {
    guarded(|| {
        let (Some(inst), false) = (inst.as_ref(), out.is_null()) else {
            return fail(MdrStatus::NullPointer, "null argument");
        };
        match kkt::sum_rate(&inst.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(MdrSumRate(r)));
                MdrStatus::Ok
            }
            Err(e) => lib_fail(e),
        }
    })
}

/// # Safety
/// `res` must come from `mdr_sum_rate` or be null.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_free(res: *mut MdrSumRate) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Sum rate in nats, NaN for a null handle.
///
/// # Safety
/// `res` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_nats(res: *const MdrSumRate) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.0.sum_rate.0)
}

/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_case(res: *const MdrSumRate, out: *mut MdrCase) -> MdrStatus {
    let (Some(r), false) = (res.as_ref(), out.is_null()) else {
        return fail(MdrStatus::NullPointer, "null argument");
    };
    *out = r.0.case.into();
    MdrStatus::Ok
}

/// Optimal coupling `A*` (original frame) into `out[0..n·n]`.
///
/// # Safety
/// `res` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_a_star(res: *const MdrSumRate, out: *mut f64, len: usize) -> MdrStatus {
    match res.as_ref() {
        Some(r) => write_matrix(&r.0.a_star, out, len),
        None => fail(MdrStatus::NullPointer, "null handle"),
    }
}

/// Noise block `Kw_l` of the optimal channel, `l` 0-based.
///
/// # Safety
/// `res` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_kw_block(
    res: *const MdrSumRate,
    l: usize,
    out: *mut f64,
    len: usize,
) -> MdrStatus {
    let Some(r) = res.as_ref() else {
        return fail(MdrStatus::NullPointer, "null handle");
    };
    match r.0.channel.kw_blocks.get(l) {
        Some(m) => write_matrix(m, out, len),
        None => fail(MdrStatus::InvalidArgument, format!("description {l} out of range")),
    }
}

/// Achieved distortion of receiver `l` (0-based); `l = L` selects the
/// central receiver.
///
/// # Safety
/// `res` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdr_sum_rate_achieved(
    res: *const MdrSumRate,
    l: usize,
    out: *mut f64,
    len: usize,
) -> MdrStatus {
    let Some(r) = res.as_ref() else {
        return fail(MdrStatus::NullPointer, "null handle");
    };
    let a = &r.0.achieved;
    let m = if l == a.individual.len() { Some(&a.central) } else { a.individual.get(l) };
    match m {
        Some(m) => write_matrix(m, out, len),
        None => fail(MdrStatus::InvalidArgument, format!("receiver {l} out of range")),
    }
}

/// Closed-form scalar solution. `case_out` receives 1, 2 or 3.
///
/// # Safety
/// `d` must hold `l` doubles; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdr_scalar_solve(
    sigma_x2: f64,
    d: *const f64,
    l: usize,
    d0: f64,
    case_out: *mut i32,
    a_star_out: *mut f64,
    rate_out: *mut f64,
) -> MdrStatus {
    guarded(|| {
        if d.is_null() || case_out.is_null() || a_star_out.is_null() || rate_out.is_null() {
            return fail(MdrStatus::NullPointer, "null argument");
        }
        let dl = std::slice::from_raw_parts(d, l).to_vec();
        match ScalarInstance::new(sigma_x2, dl, d0).and_then(|s| s.solve()) {
            Ok(sol) => {
                *case_out = match sol.case {
                    ScalarCase::Case1 => 1,
                    ScalarCase::Case2 => 2,
                    ScalarCase::Case3 => 3,
                };
                *a_star_out = sol.a_star;
                *rate_out = sol.sum_rate.0;
                MdrStatus::Ok
            }
            Err(e) => lib_fail(e),
        }
    })
}

/// Corner points `B1 = (out[0], out[1])`, `B2 = (out[2], out[3])` of a
/// two-description instance, nats.
///
/// # Safety
/// `inst` must be a live handle and `out` hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn mdr_two_description_corners(inst: *const MdrInstance, out: *mut f64) -> MdrStatus {
    guarded(|| {
        let (Some(inst), false) = (inst.as_ref(), out.is_null()) else {
            return fail(MdrStatus::NullPointer, "null argument");
        };
        match mdrate::riccati::two_description_solve(&inst.0) {
            Ok(sol) => {
                let buf = std::slice::from_raw_parts_mut(out, 4);
                buf.copy_from_slice(&[sol.corners[0][0], sol.corners[0][1], sol.corners[1][0], sol.corners[1][1]]);
                MdrStatus::Ok
            }
            Err(e) => lib_fail(e),
        }
    })
}

/// Monte Carlo check of the optimal channel. `tol <= 0` selects the default
/// band. A completed run returns `Ok` whatever the verdict in `pass_out`.
///
/// # Safety
/// `inst` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdr_verify(
    inst: *const MdrInstance,
    samples: usize,
    seed: u64,
    tol: f64,
    max_rel_err_out: *mut f64,
    pass_out: *mut bool,
) -> MdrStatus {
    guarded(|| {
        let Some(inst) = inst.as_ref() else {
            return fail(MdrStatus::NullPointer, "null handle");
        };
        if max_rel_err_out.is_null() || pass_out.is_null() {
            return fail(MdrStatus::NullPointer, "null argument");
        }
        let tol = (tol > 0.0).then_some(tol);
        let run = kkt::sum_rate(&inst.0)
            .and_then(|r| mdrate::mc::sample_verify(&inst.0.kx, &r.channel, samples, seed, tol));
        match run {
            Ok(rep) => {
                *max_rel_err_out = rep.max_rel_frobenius_error;
                *pass_out = rep.pass;
                MdrStatus::Ok
            }
            Err(e) => lib_fail(e),
        }
    })
}
