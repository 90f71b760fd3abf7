//! C ABI for the `vcsd` detector.
//!
//! Matrices cross the boundary as column-major `double` arrays (`n` rows, `d`
//! columns). Every fallible function returns a [`VcsdStatus`]; on failure a
//! description is available from [`vcsd_last_error_message`] on the same
//! thread. Detector handles are opaque and must be released with
//! [`vcsd_detector_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use vcsd::detector::{Detector, DetectorConfig};
use vcsd::geometry::{volume_correlation, SubspaceBasis};
use vcsd::io::BASIS_FILE_TOL;
use vcsd::theory::{sample_bound_target_absent, sample_bound_target_present, BoundInputs};
use vcsd::{DecisionKind, VcError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcsdStatus {
    Ok = 0,
    InvalidInput = 1,
    DimensionMismatch = 2,
    NonFinite = 3,
    Usage = 4,
    SingularInput = 5,
    DegenerateGeometry = 6,
    NullPointer = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcsdDecision {
    Undecided = 0,
    TargetPresent = 1,
    TargetAbsent = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcsdHypothesis {
    Present = 0,
    Absent = 1,
}

/// Detector settings. Obtain defaults from [`vcsd_detector_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct VcsdDetectorParams {
    /// Non-zero if `noise_variance` should be used by the rank rule.
    pub has_noise_variance: i32,
    pub noise_variance: f64,
    pub rank_gap_factor: f64,
    pub divergence_threshold: f64,
    pub stall_epsilon: f64,
    pub stall_patience: usize,
    pub max_samples: usize,
    pub zero_volume_tol: f64,
}

/// Opaque streaming detector.
pub struct VcsdDetector {
    inner: Detector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &VcError) -> VcsdStatus {
    match e {
        VcError::InvalidInput(_) | VcError::Json(_) => VcsdStatus::InvalidInput,
        VcError::DimensionMismatch { .. } => VcsdStatus::DimensionMismatch,
        VcError::NonFinite { .. } => VcsdStatus::NonFinite,
        VcError::Usage(_) => VcsdStatus::Usage,
        VcError::SingularInput(_) => VcsdStatus::SingularInput,
        VcError::DegenerateGeometry(_) => VcsdStatus::DegenerateGeometry,
        VcError::Io(_) => VcsdStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<(), VcsdStatus>>(f: F) -> VcsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VcsdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            VcsdStatus::Internal
        }
    }
}

fn fail(e: VcError) -> VcsdStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> VcsdStatus {
    set_error(format!("null pointer: {what}"));
    VcsdStatus::NullPointer
}

unsafe fn matrix_arg(data: *const f64, n: usize, d: usize, what: &str) -> Result<DMatrix<f64>, VcsdStatus> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| fail(VcError::InvalidInput(format!("{what}: size overflow"))))?;
    // SAFETY: caller guarantees `data` points to n * d readable doubles.
    let slice = unsafe { std::slice::from_raw_parts(data, len) };
    Ok(DMatrix::from_column_slice(n, d, slice))
}

unsafe fn basis_arg(data: *const f64, n: usize, d: usize, what: &str) -> Result<SubspaceBasis, VcsdStatus> {
    let m = unsafe { matrix_arg(data, n, d, what) }?;
    SubspaceBasis::new(m, BASIS_FILE_TOL).map_err(fail)
}

/// Default detector settings (no noise variance, `max_samples = 512`).
#[no_mangle]
pub extern "C" fn vcsd_detector_params_default() -> VcsdDetectorParams {
    let d = DetectorConfig::new(SubspaceBasis::coordinate(1, &[0]).expect("unit basis"));
    VcsdDetectorParams {
        has_noise_variance: 0,
        noise_variance: 0.0,
        rank_gap_factor: d.rank_gap_factor,
        divergence_threshold: d.divergence_threshold,
        stall_epsilon: d.stall_epsilon,
        stall_patience: d.stall_patience,
        max_samples: d.max_samples,
        zero_volume_tol: d.zero_volume_tol,
    }
}

/// Creates a detector for the `n x d2` target basis (column-major,
/// orthonormal within 1e-8). `params` may be null for defaults.
///
/// # Safety
/// `basis` must point to `n * d2` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_new(
    basis: *const f64,
    n: usize,
    d2: usize,
    params: *const VcsdDetectorParams,
    out: *mut *mut VcsdDetector,
) -> VcsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null above.
        unsafe { *out = ptr::null_mut() };
        let basis = unsafe { basis_arg(basis, n, d2, "basis") }?;
        let p = if params.is_null() {
            vcsd_detector_params_default()
        } else {
            // SAFETY: non-null, caller guarantees validity.
            unsafe { *params }
        };
        let cfg = DetectorConfig {
            noise_variance_hint: (p.has_noise_variance != 0).then_some(p.noise_variance),
            rank_gap_factor: p.rank_gap_factor,
            divergence_threshold: p.divergence_threshold,
            stall_epsilon: p.stall_epsilon,
            stall_patience: p.stall_patience,
            max_samples: p.max_samples,
            zero_volume_tol: p.zero_volume_tol,
            ..DetectorConfig::new(basis)
        };
        let inner = Detector::new(cfg).map_err(fail)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(VcsdDetector { inner })) };
        Ok(())
    })
}

/// Releases a detector. Null is ignored.
///
/// # Safety
/// `det` must come from [`vcsd_detector_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_free(det: *mut VcsdDetector) {
    if !det.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(det) });
    }
}

fn decision_code(kind: DecisionKind) -> VcsdDecision {
    match kind {
        DecisionKind::TargetPresent => VcsdDecision::TargetPresent,
        DecisionKind::TargetAbsent => VcsdDecision::TargetAbsent,
        DecisionKind::Undecided => VcsdDecision::Undecided,
    }
}

/// Feeds one length-`n` sample. `decision` (nullable) receives the decision
/// after this sample.
///
/// # Safety
/// `det` must be a live handle and `y` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_ingest(
    det: *mut VcsdDetector,
    y: *const f64,
    n: usize,
    decision: *mut VcsdDecision,
) -> VcsdStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let det = unsafe { det.as_mut() }.ok_or_else(|| null("detector"))?;
        let y = unsafe { matrix_arg(y, n, 1, "sample") }?;
        let d = det
            .inner
            .ingest(&DVector::from_column_slice(y.as_slice()))
            .map_err(fail)?;
        if !decision.is_null() {
            // SAFETY: non-null, caller guarantees validity.
            unsafe { *decision = decision_code(d.kind) };
        }
        Ok(())
    })
}

/// Number of samples ingested so far (0 for a null handle).
///
/// # Safety
/// `det` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_sample_count(det: *const VcsdDetector) -> usize {
    unsafe { det.as_ref() }.map_or(0, |d| d.inner.sample_count())
}

/// Current decision; `decided_at` (nullable) receives the deciding sample
/// index, or 0 while undecided.
///
/// # Safety
/// `det` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_decision(det: *const VcsdDetector, decided_at: *mut usize) -> VcsdDecision {
    let Some(det) = (unsafe { det.as_ref() }) else {
        return VcsdDecision::Undecided;
    };
    let d = det.inner.decision();
    if !decided_at.is_null() {
        // SAFETY: non-null, caller guarantees validity.
        unsafe { *decided_at = d.decided_at.unwrap_or(0) };
    }
    decision_code(d.kind)
}

/// Statistic after the latest sample. Any output pointer may be null.
/// Fails with `Usage` before the first sample.
///
/// # Safety
/// `det` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn vcsd_detector_latest(
    det: *const VcsdDetector,
    t: *mut f64,
    inv_t: *mut f64,
    rank: *mut usize,
) -> VcsdStatus {
    guard(|| {
        let det = unsafe { det.as_ref() }.ok_or_else(|| null("detector"))?;
        let p = det
            .inner
            .trajectory()
            .last()
            .ok_or_else(|| fail(VcError::Usage("no samples ingested".into())))?;
        // SAFETY: each output is checked for null; caller guarantees validity.
        unsafe {
            if !t.is_null() {
                *t = p.t;
            }
            if !inv_t.is_null() {
                *inv_t = p.inv_t;
            }
            if !rank.is_null() {
                *rank = p.rank;
            }
        }
        Ok(())
    })
}

/// Volume correlation of two subspaces given by column-major orthonormal
/// bases `a` (`n x da`) and `b` (`n x db`).
///
/// # Safety
/// `a`, `b` must point to `n * da` and `n * db` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vcsd_volume_correlation(
    a: *const f64,
    da: usize,
    b: *const f64,
    db: usize,
    n: usize,
    out: *mut f64,
) -> VcsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = unsafe { basis_arg(a, n, da, "a") }?;
        let b = unsafe { basis_arg(b, n, db, "b") }?;
        let v = volume_correlation(&a, &b).map_err(fail)?;
        // SAFETY: checked non-null above.
        unsafe { *out = v };
        Ok(())
    })
}

/// Sample-size bound for one hypothesis. `eigs` holds `len` population
/// eigenvalues in descending order. Either output may be null.
///
/// # Safety
/// `eigs` must point to `len` doubles; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn vcsd_sample_bound(
    hypothesis: VcsdHypothesis,
    eigs: *const f64,
    len: usize,
    noise_variance: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
    m_required: *mut u64,
    exponent_argument: *mut f64,
) -> VcsdStatus {
    guard(|| {
        let eigs = unsafe { matrix_arg(eigs, len, 1, "eigs") }?;
        let inputs = BoundInputs::new(eigs.as_slice().to_vec(), noise_variance, n, delta, epsilon).map_err(fail)?;
        let report = match hypothesis {
            VcsdHypothesis::Present => sample_bound_target_present(&inputs),
            VcsdHypothesis::Absent => sample_bound_target_absent(&inputs),
        }
        .map_err(fail)?;
        // SAFETY: each output is checked for null; caller guarantees validity.
        unsafe {
            if !m_required.is_null() {
                *m_required = report.m_required;
            }
            if !exponent_argument.is_null() {
                *exponent_argument = report.exponent_argument;
            }
        }
        Ok(())
    })
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vcsd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
