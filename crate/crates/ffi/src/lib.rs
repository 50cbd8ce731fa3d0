//! C ABI over the feature extractors and saved classifiers.
//!
//! Every fallible call returns a [`CateqStatus`]. On failure a message is
//! stored per thread and can be read with [`cateq_last_error_message`].
//! Signal blocks are passed as `3 * window_len` doubles laid out axis-major:
//! all x samples, then all y, then all z.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use cateq::features::{FeatureSpec, MultiSensorWindow, RepresentationKind};
use cateq::learn::Classifier;
use cateq::signal::{rfft_magnitude, TriAxialWindow};
use cateq::Error;

/// Result codes. `CATEQ_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CateqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Format = 5,
    Numeric = 6,
    Panic = 7,
}

/// Representation selector, numbered as in the command-line tool.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CateqKind {
    BaselineRaw = 0,
    GroupOnly = 1,
    PosetOnly = 2,
    GroupPoset = 3,
}

impl From<CateqKind> for RepresentationKind {
    fn from(k: CateqKind) -> Self {
        match k {
            CateqKind::BaselineRaw => RepresentationKind::BaselineRaw,
            CateqKind::GroupOnly => RepresentationKind::GroupOnly,
            CateqKind::PosetOnly => RepresentationKind::PosetOnly,
            CateqKind::GroupPoset => RepresentationKind::GroupPoset,
        }
    }
}

/// Opaque handle to a loaded classifier.
pub struct CateqModel {
    inner: Classifier,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CateqStatus {
    match e.root_cause() {
        Error::Dimension { .. } | Error::LengthMismatch { .. } => CateqStatus::DimensionMismatch,
        Error::Io { .. } | Error::MissingFile(_) | Error::EmptyFile(_) => CateqStatus::Io,
        Error::ModelFormat(_) | Error::Json(_) | Error::Parse { .. } => CateqStatus::Format,
        Error::NonFinite(_) | Error::NonFiniteObjective { .. } => CateqStatus::Numeric,
        _ => CateqStatus::InvalidArgument,
    }
}

fn fail(status: CateqStatus, message: impl Into<String>) -> CateqStatus {
    set_error(message.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), CateqStatus>) -> CateqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CateqStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(CateqStatus::Panic, "internal panic"),
    }
}

fn check(e: Error) -> CateqStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], CateqStatus> {
    if p.is_null() {
        return Err(fail(CateqStatus::NullPointer, format!("{what} is null")));
    }
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], CateqStatus> {
    if p.is_null() {
        return Err(fail(CateqStatus::NullPointer, format!("{what} is null")));
    }
    Ok(unsafe { slice::from_raw_parts_mut(p, len) })
}

fn block(samples: &[f64], len: usize) -> Result<TriAxialWindow, CateqStatus> {
    TriAxialWindow::from_axes(
        samples[..len].to_vec(),
        samples[len..2 * len].to_vec(),
        samples[2 * len..].to_vec(),
    )
    .map_err(check)
}

unsafe fn window(
    acc: *const f64,
    gyro: *const f64,
    window_len: usize,
) -> Result<MultiSensorWindow, CateqStatus> {
    if window_len == 0 {
        return Err(fail(
            CateqStatus::InvalidArgument,
            "window_len must be positive",
        ));
    }
    let acc = block(unsafe { input(acc, 3 * window_len, "acc") }?, window_len)?;
    let gyro = block(unsafe { input(gyro, 3 * window_len, "gyro") }?, window_len)?;
    MultiSensorWindow::new(acc, gyro, None).map_err(check)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cateq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cateq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Feature length for `kind` with `k` bins on windows of `window_len` samples.
///
/// # Safety
/// `out_dim` must be NULL or point to writable memory for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn cateq_feature_dim(
    kind: CateqKind,
    k: usize,
    window_len: usize,
    out_dim: *mut usize,
) -> CateqStatus {
    guard(|| {
        let spec = FeatureSpec::new(kind.into(), k, window_len).map_err(check)?;
        unsafe { output(out_dim, 1, "out_dim") }?[0] = spec.dim();
        Ok(())
    })
}

/// Extracts one feature vector into `out`, which must hold exactly the
/// length reported by [`cateq_feature_dim`].
///
/// # Safety
/// `acc` and `gyro` must each point to `3 * window_len` readable doubles and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cateq_extract(
    kind: CateqKind,
    k: usize,
    acc: *const f64,
    gyro: *const f64,
    window_len: usize,
    out: *mut f64,
    out_len: usize,
) -> CateqStatus {
    guard(|| {
        let spec = FeatureSpec::new(kind.into(), k, window_len).map_err(check)?;
        if out_len != spec.dim() {
            return Err(fail(
                CateqStatus::DimensionMismatch,
                format!("out_len {out_len} but the feature length is {}", spec.dim()),
            ));
        }
        let w = unsafe { window(acc, gyro, window_len) }?;
        let values = spec.extract(&w).map_err(check)?;
        unsafe { output(out, out_len, "out") }?.copy_from_slice(&values);
        Ok(())
    })
}

/// Magnitudes of DFT bins `1..=k` of a real signal.
///
/// # Safety
/// `x` must point to `len` readable doubles and `out` to `k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cateq_rfft_magnitude(
    x: *const f64,
    len: usize,
    k: usize,
    out: *mut f64,
) -> CateqStatus {
    guard(|| {
        let x = unsafe { input(x, len, "x") }?;
        let spectrum = rfft_magnitude(x, k).map_err(check)?;
        unsafe { output(out, k, "out") }?.copy_from_slice(&spectrum);
        Ok(())
    })
}

/// Loads a model file written by `cateq train`. Free with [`cateq_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_load(
    path: *const c_char,
    out_model: *mut *mut CateqModel,
) -> CateqStatus {
    guard(|| {
        if path.is_null() {
            return Err(fail(CateqStatus::NullPointer, "path is null"));
        }
        let out = unsafe { output(out_model, 1, "out_model") }?;
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(CateqStatus::InvalidArgument, "path is not UTF-8"))?;
        let inner = Classifier::load(Path::new(path)).map_err(check)?;
        out[0] = Box::into_raw(Box::new(CateqModel { inner }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from [`cateq_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_free(model: *mut CateqModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

unsafe fn model_ref<'a>(model: *const CateqModel) -> Result<&'a Classifier, CateqStatus> {
    if model.is_null() {
        return Err(fail(CateqStatus::NullPointer, "model is null"));
    }
    Ok(unsafe { &(*model).inner })
}

/// Window length, feature length, and class count of a model.
///
/// # Safety
/// `model` must be a live handle; each output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_info(
    model: *const CateqModel,
    out_window_len: *mut usize,
    out_dim: *mut usize,
    out_num_classes: *mut usize,
) -> CateqStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        for (p, v) in [
            (out_window_len, m.spec.window_len),
            (out_dim, m.spec.dim()),
            (out_num_classes, m.model.classes.len()),
        ] {
            if !p.is_null() {
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// Class labels in the column order used by [`cateq_model_predict_proba`].
///
/// # Safety
/// `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_classes(
    model: *const CateqModel,
    out: *mut u8,
    len: usize,
) -> CateqStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let classes = &m.model.classes;
        if len != classes.len() {
            return Err(fail(
                CateqStatus::DimensionMismatch,
                format!("len {len} but the model has {} classes", classes.len()),
            ));
        }
        unsafe { output(out, len, "out") }?.copy_from_slice(classes);
        Ok(())
    })
}

/// Predicted label for one window.
///
/// # Safety
/// `acc` and `gyro` must each point to `3 * window_len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_predict(
    model: *const CateqModel,
    acc: *const f64,
    gyro: *const f64,
    window_len: usize,
    out_label: *mut u8,
) -> CateqStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let w = unsafe { window(acc, gyro, window_len) }?;
        let label = m.predict_windows(std::slice::from_ref(&w)).map_err(check)?[0];
        unsafe { output(out_label, 1, "out_label") }?[0] = label;
        Ok(())
    })
}

/// Class probabilities for one window, ordered as [`cateq_model_classes`].
///
/// # Safety
/// `acc` and `gyro` must each point to `3 * window_len` readable doubles and
/// `out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cateq_model_predict_proba(
    model: *const CateqModel,
    acc: *const f64,
    gyro: *const f64,
    window_len: usize,
    out: *mut f64,
    len: usize,
) -> CateqStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if len != m.model.classes.len() {
            return Err(fail(
                CateqStatus::DimensionMismatch,
                format!(
                    "len {len} but the model has {} classes",
                    m.model.classes.len()
                ),
            ));
        }
        let w = unsafe { window(acc, gyro, window_len) }?;
        let raw = m
            .spec
            .extract_matrix(std::slice::from_ref(&w))
            .map_err(check)?;
        let p = m.predict_proba_features(&raw).map_err(check)?;
        unsafe { output(out, len, "out") }?
            .copy_from_slice(p.row(0).as_slice().expect("contiguous row"));
        Ok(())
    })
}
