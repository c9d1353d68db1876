//! C ABI over voyagecast model bundles.
//!
//! A bundle is loaded into an opaque [`VcBundle`] handle and released with
//! [`vc_bundle_free`]. Every fallible call returns a [`VcStatus`]; the message
//! of the last failure on the calling thread is available from
//! [`vc_last_error`]. Strings cross the boundary as NUL-terminated UTF-8 and
//! are copied into caller buffers, so the library never hands out memory the
//! caller must free except the bundle handle itself.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use voyagecast::{AisRecord, Error, ModelBundle};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    VersionMismatch = 4,
    CorruptBundle = 5,
    InvalidInput = 6,
    UnknownPort = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Internal = 10,
}

/// Loaded model bundle. Opaque to C.
pub struct VcBundle {
    inner: ModelBundle,
}

/// One AIS report at inference time. `reported_draught` may be NaN when
/// unknown; `heading` 511 means unavailable.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VcRecord {
    pub ship_type: u32,
    /// Knots.
    pub speed: f64,
    pub lon: f64,
    pub lat: f64,
    pub course: f64,
    pub heading: f64,
    /// Epoch seconds.
    pub timestamp: i64,
    pub departure_port: *const c_char,
    pub reported_draught: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VcPrediction {
    /// Index into the bundle's port registry, see [`vc_bundle_port_name`].
    pub port_index: u32,
    /// Epoch seconds.
    pub eta: i64,
    /// Remaining minutes.
    pub delta_minutes: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> VcStatus {
    match err {
        Error::Io { .. } => VcStatus::Io,
        Error::VersionMismatch { .. } => VcStatus::VersionMismatch,
        Error::CorruptBundle { .. } | Error::Json(_) => VcStatus::CorruptBundle,
        Error::UnknownPortCode(_) | Error::Registry(_) => VcStatus::UnknownPort,
        Error::InvalidInput(_) | Error::Header(_) | Error::Csv(_) | Error::DimensionMismatch { .. } => {
            VcStatus::InvalidInput
        }
        _ => VcStatus::Internal,
    }
}

struct Fail(VcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic for [`vc_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(VcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bundle_arg<'a>(p: *const VcBundle) -> Result<&'a ModelBundle, Fail> {
    p.as_ref()
        .map(|b| &b.inner)
        .ok_or_else(|| Fail(VcStatus::NullPointer, "bundle is null".into()))
}

/// Copies `s` plus a NUL into `buf`. `written` (if non-null) receives the
/// byte length without the NUL, also when the buffer is too small.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, written: *mut usize) -> Result<(), Fail> {
    if !written.is_null() {
        *written = s.len();
    }
    if buf.is_null() {
        return Err(Fail(VcStatus::NullPointer, "output buffer is null".into()));
    }
    if s.len() + 1 > len {
        return Err(Fail(
            VcStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {len}", s.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf` and returns its
/// length without the NUL (0 if the last call succeeded). Truncates to fit.
#[no_mangle]
pub unsafe extern "C" fn vc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads the bundle directory at `path` into `*out`. On failure `*out` is set
/// to null.
#[no_mangle]
pub unsafe extern "C" fn vc_bundle_load(path: *const c_char, out: *mut *mut VcBundle) -> VcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(VcStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = ModelBundle::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(VcBundle { inner }));
        Ok(())
    })
}

/// Releases a handle from [`vc_bundle_load`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vc_bundle_free(bundle: *mut VcBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Number of ports in the registry, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn vc_bundle_port_count(bundle: *const VcBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.registry.len())
}

#[no_mangle]
pub unsafe extern "C" fn vc_bundle_port_name(
    bundle: *const VcBundle,
    index: u32,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> VcStatus {
    guard(|| {
        let b = bundle_arg(bundle)?;
        let name = b.registry.decode(index as i64)?;
        copy_out(name, buf, len, written)
    })
}

/// Predicts the destination and ETA for one report.
#[no_mangle]
pub unsafe extern "C" fn vc_predict(
    bundle: *const VcBundle,
    record: *const VcRecord,
    out: *mut VcPrediction,
) -> VcStatus {
    guard(|| {
        let b = bundle_arg(bundle)?;
        let r = record
            .as_ref()
            .ok_or_else(|| Fail(VcStatus::NullPointer, "record is null".into()))?;
        if out.is_null() {
            return Err(Fail(VcStatus::NullPointer, "out is null".into()));
        }
        let rec = AisRecord {
            ship_id: String::new(),
            ship_type: r.ship_type,
            speed: r.speed,
            lon: r.lon,
            lat: r.lat,
            course: r.course,
            heading: r.heading,
            timestamp: r.timestamp,
            departure_port: str_arg(r.departure_port, "departure_port")?.to_string(),
            reported_draught: (!r.reported_draught.is_nan()).then_some(r.reported_draught),
            arrival_time: None,
            arrival_port: None,
            trip_id: None,
        };
        let p = voyagecast::predict_tuple(b, &rec)?;
        let code = b.registry.encode(&p.port_name);
        *out = VcPrediction {
            port_index: u32::try_from(code).map_err(|_| Fail(VcStatus::Internal, "unencodable port".into()))?,
            eta: p.eta,
            delta_minutes: p.time_delta,
        };
        Ok(())
    })
}

/// Answers one canonical CSV data line with `PORT,ETA,DELTA`, the same text
/// the `serve` command prints.
#[no_mangle]
pub unsafe extern "C" fn vc_serve_line(
    bundle: *const VcBundle,
    line: *const c_char,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> VcStatus {
    guard(|| {
        let b = bundle_arg(bundle)?;
        let line = str_arg(line, "line")?;
        let rec = voyagecast::ingest::parse_line(line.trim_end_matches(['\r', '\n']))
            .map_err(|reason| Fail(VcStatus::InvalidInput, reason))?;
        let p = voyagecast::predict_tuple(b, &rec)?;
        copy_out(&p.to_protocol_line(), buf, len, written)
    })
}
