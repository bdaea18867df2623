//! C ABI for the omniloc localization engine.
//!
//! Every fallible function returns an `OmnilocStatus`; on failure a message
//! for the calling thread is available from `omniloc_last_error`. Databases
//! are opaque handles owned by the caller and released with `omniloc_db_free`.
//! A handle may be shared between threads for concurrent `omniloc_locate`
//! calls.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use omniloc::aggregation::AggregationParams;
use omniloc::geodb::{load_database, FeatureDatabase};
use omniloc::locsvc::{locate, LocateParams};
use omniloc::retrieval::{QueryBundle, RetrievalParams};
use omniloc::{extract_feature, CircularProfile, Error, OmniFeature};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmnilocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadDatabase = 4,
    DimensionMismatch = 5,
    NoCandidates = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque database handle.
pub struct OmnilocDb {
    db: FeatureDatabase,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmnilocParams {
    /// Candidates per (frame, subspace).
    pub top_n: u32,
    /// Ranked tiles examined.
    pub top_c: u32,
    pub toler_per: f64,
    pub radius_m: f64,
    /// Retrieval threads; 0 uses the global pool.
    pub workers: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OmnilocEstimate {
    pub x: i32,
    pub y: i32,
    /// Tile center in meters.
    pub x_m: f64,
    pub y_m: f64,
    pub confidence: f64,
    /// Nonzero when no ranked tile had enough support.
    pub low_confidence: u8,
    pub candidate_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: OmnilocStatus, msg: impl Into<String>) -> OmnilocStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> OmnilocStatus {
    match e {
        Error::Io { .. } => OmnilocStatus::Io,
        Error::MagicMismatch | Error::VersionMismatch { .. } | Error::Truncated | Error::InvalidDatabase(_) => {
            OmnilocStatus::BadDatabase
        }
        Error::DimensionMismatch { .. } => OmnilocStatus::DimensionMismatch,
        Error::NoCandidates => OmnilocStatus::NoCandidates,
        _ => OmnilocStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), OmnilocStatus>) -> OmnilocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OmnilocStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(OmnilocStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: omniloc::Result<T>) -> Result<T, OmnilocStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next omniloc call on the same thread.
#[no_mangle]
pub extern "C" fn omniloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Pipeline defaults: N = 15, C = 10, 20 %, 3 m, all cores.
#[no_mangle]
pub extern "C" fn omniloc_default_params() -> OmnilocParams {
    let p = LocateParams::default();
    OmnilocParams {
        top_n: p.retrieval.top_n as u32,
        top_c: p.aggregation.top_c as u32,
        toler_per: p.aggregation.toler_per,
        radius_m: p.aggregation.radius_m,
        workers: p.retrieval.worker_budget as u32,
    }
}

/// Loads a database file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omniloc_db_open(path: *const c_char, out: *mut *mut OmnilocDb) -> OmnilocStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return Err(fail(OmnilocStatus::NullPointer, "null argument"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(OmnilocStatus::InvalidArgument, "path is not UTF-8"))?;
        let db = lift(load_database(Path::new(path)))?;
        *out = Box::into_raw(Box::new(OmnilocDb { db }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `db` must come from `omniloc_db_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn omniloc_db_free(db: *mut OmnilocDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Descriptor length K, or 0 for NULL.
///
/// # Safety
/// `db` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn omniloc_db_dim(db: *const OmnilocDb) -> usize {
    db.as_ref().map_or(0, |h| h.db.dim())
}

/// Total frames over all subspaces, or 0 for NULL.
///
/// # Safety
/// `db` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn omniloc_db_frames(db: *const OmnilocDb) -> usize {
    db.as_ref().map_or(0, |h| h.db.total_frames())
}

/// Computes the descriptor of a circular profile of `len` samples into
/// `out[0..out_len]`; `out_len` must be at least 64.
///
/// # Safety
/// `profile` must point to `len` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn omniloc_extract_feature(
    profile: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> OmnilocStatus {
    guarded(|| {
        if profile.is_null() || out.is_null() {
            return Err(fail(OmnilocStatus::NullPointer, "null argument"));
        }
        let values = std::slice::from_raw_parts(profile, len).to_vec();
        let feature = lift(CircularProfile::new(values).and_then(|p| extract_feature(&p)))?;
        let coeffs = feature.coeffs();
        if out_len < coeffs.len() {
            return Err(fail(
                OmnilocStatus::BufferTooSmall,
                format!("output holds {out_len} values, {} needed", coeffs.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, coeffs.len()).copy_from_slice(coeffs);
        Ok(())
    })
}

/// Localizes a bundle of `m` descriptors of `k` values each (row-major); the
/// center frame is `m / 2`. `params` may be NULL for the defaults.
///
/// # Safety
/// `db` must be a live handle, `features` must point to `m * k` doubles and
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn omniloc_locate(
    db: *const OmnilocDb,
    features: *const f64,
    m: usize,
    k: usize,
    params: *const OmnilocParams,
    out: *mut OmnilocEstimate,
) -> OmnilocStatus {
    guarded(|| {
        if db.is_null() || features.is_null() || out.is_null() {
            return Err(fail(OmnilocStatus::NullPointer, "null argument"));
        }
        if m == 0 || k == 0 {
            return Err(fail(OmnilocStatus::InvalidArgument, "empty bundle"));
        }
        let total = m
            .checked_mul(k)
            .ok_or_else(|| fail(OmnilocStatus::InvalidArgument, "bundle size overflows"))?;
        let values = std::slice::from_raw_parts(features, total);
        let frames = values
            .chunks_exact(k)
            .map(|row| OmniFeature::from_coeffs(row.to_vec()))
            .collect::<omniloc::Result<Vec<_>>>();
        let bundle = lift(frames.and_then(|f| QueryBundle::new(f, m / 2)))?;
        let p = params.as_ref().copied().unwrap_or_else(|| omniloc_default_params());
        let params = LocateParams {
            retrieval: RetrievalParams {
                top_n: p.top_n as usize,
                worker_budget: p.workers as usize,
            },
            aggregation: AggregationParams {
                top_c: p.top_c as usize,
                toler_per: p.toler_per,
                radius_m: p.radius_m,
                ..AggregationParams::default()
            },
        };
        let loc = lift(locate(&(*db).db, &bundle, &params))?;
        let r = loc.report();
        *out = OmnilocEstimate {
            x: r.x,
            y: r.y,
            x_m: r.x_m,
            y_m: r.y_m,
            confidence: r.confidence,
            low_confidence: r.low_confidence as u8,
            candidate_count: r.candidate_count as u32,
        };
        Ok(())
    })
}
