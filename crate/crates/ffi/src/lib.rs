//! C ABI over the `ecgloc` crate.
//!
//! Every function returns an [`EcglocStatus`]; on failure the message is kept
//! per thread and can be copied out with [`ecgloc_last_error`]. Models are
//! opaque handles created by [`ecgloc_model_load`] and released with
//! [`ecgloc_model_free`]. Points are passed as packed `x, y, z` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ecgloc::ecg::dtw;
use ecgloc::geometry::{chamfer, fps_indices};
use ecgloc::model::Tim;
use ecgloc::{Error, Point3, PointCloud};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcglocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numeric = 5,
    Panic = 6,
}

/// Opaque trained model.
pub struct EcglocModel {
    model: Tim,
}

/// Number of doubles written by [`ecgloc_model_infer`]: ten electrodes in
/// the order LA, RA, LL, RL, V1..V6, three coordinates each.
pub const ECGLOC_ELECTRODE_VALUES: usize = 30;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> EcglocStatus {
    match e {
        Error::Io { .. } => EcglocStatus::Io,
        Error::Parse { .. } => EcglocStatus::Parse,
        Error::NonFinite { .. } | Error::Numeric(_) => EcglocStatus::Numeric,
        Error::Subject { source, .. } => status_of(source),
        _ => EcglocStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EcglocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EcglocStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            EcglocStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            EcglocStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn cloud(p: *const f64, n: usize, what: &'static str) -> Result<PointCloud, Fail> {
    let v = slice(p, n.checked_mul(3).ok_or(Fail::Null(what))?, what)?;
    Ok(PointCloud::new(v.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ecgloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a model from a training state or inference checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_model_load(path: *const c_char, out: *mut *mut EcglocModel) -> EcglocStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Invalid("path is not UTF-8".into()))?;
        let (_, model) = ecgloc::train::load_model(Path::new(p))?;
        *out = Box::into_raw(Box::new(EcglocModel { model }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`ecgloc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_model_free(model: *mut EcglocModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input points the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_model_input_points(model: *const EcglocModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.n_in)
}

/// Predicts the ten electrodes from `n_points` contour points given in
/// subject coordinates. Writes [`ECGLOC_ELECTRODE_VALUES`] doubles.
///
/// # Safety
/// `points` must hold `3 * n_points` doubles and `out` room for 30.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_model_infer(
    model: *const EcglocModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> EcglocStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let input = cloud(points, n_points, "points")?;
        let pred = m.model.predict(&input)?;
        let dst = std::slice::from_raw_parts_mut(out, ECGLOC_ELECTRODE_VALUES);
        for (chunk, p) in dst.chunks_exact_mut(3).zip(&pred.electrodes.positions) {
            chunk.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// Symmetric Chamfer distance (mean Euclidean nearest-neighbour distance).
///
/// # Safety
/// `a` and `b` must hold `3 * na` and `3 * nb` doubles.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_chamfer(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> EcglocStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = chamfer(&cloud(a, na, "a")?, &cloud(b, nb, "b")?)?;
        Ok(())
    })
}

/// Farthest point sampling of `k` indices starting at `start`.
///
/// # Safety
/// `points` must hold `3 * n` doubles and `out` room for `k` indices.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_fps(
    points: *const f64,
    n: usize,
    k: usize,
    start: usize,
    out: *mut usize,
) -> EcglocStatus {
    guard(|| {
        if out.is_null() && k > 0 {
            return Err(Fail::Null("out"));
        }
        let idx = fps_indices(&cloud(points, n, "points")?, k, start)?;
        std::ptr::copy_nonoverlapping(idx.as_ptr(), out, idx.len());
        Ok(())
    })
}

/// Path-length normalized DTW between z-scored series. `flagged` (optional)
/// receives 1 when either series had zero variance.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles; `flagged` may be null.
#[no_mangle]
pub unsafe extern "C" fn ecgloc_dtw(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
    flagged: *mut i32,
) -> EcglocStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let d = dtw(slice(a, na, "a")?, slice(b, nb, "b")?)?;
        *out = d.distance;
        if !flagged.is_null() {
            *flagged = i32::from(d.flagged);
        }
        Ok(())
    })
}
