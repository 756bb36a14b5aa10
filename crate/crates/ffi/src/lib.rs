//! C ABI over the aeromap library.
//!
//! Datasets and trained models cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. Every fallible call
//! returns an [`AeromapStatus`]; on failure the message is kept per thread and
//! can be copied out with [`aeromap_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use aeromap::models::{ModelSpec, ModelFile, TrainedModel, MODEL_NAMES};
use aeromap::preprocess::read_dataset_csv;
use aeromap::{Dataset, Error, MetricSet};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeromapStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Contract = 3,
    EmptyTraining = 4,
    RankDeficient = 5,
    OutOfCoverage = 6,
    InsufficientSensors = 7,
    NoConvergence = 8,
    Diverged = 9,
    Singular = 10,
    SceneTooLarge = 11,
    UnknownModel = 12,
    Parse = 13,
    Io = 14,
    BufferTooSmall = 15,
    Panic = 16,
}

impl From<&Error> for AeromapStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Contract(_) => Self::Contract,
            Error::EmptyTraining => Self::EmptyTraining,
            Error::RankDeficient { .. } => Self::RankDeficient,
            Error::OutOfCoverage { .. } => Self::OutOfCoverage,
            Error::InsufficientSensors(_) => Self::InsufficientSensors,
            Error::NoConvergence { .. } => Self::NoConvergence,
            Error::Diverged(_) => Self::Diverged,
            Error::Singular => Self::Singular,
            Error::SceneTooLarge { .. } => Self::SceneTooLarge,
            Error::UnknownModel { .. } => Self::UnknownModel,
            Error::Csv(e) if e.is_io_error() => Self::Io,
            Error::Parse(_) | Error::Csv(_) | Error::Json(_) => Self::Parse,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Opaque dataset handle.
pub struct AeromapDataset(Dataset);

/// Opaque trained-model handle.
pub struct AeromapModel(ModelFile);

/// The four indicators plus the sample size.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AeromapMetrics {
    pub rmse: f64,
    pub bias: f64,
    /// NaN when either series is constant.
    pub corr: f64,
    /// Maximum absolute error.
    pub mae: f64,
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(AeromapStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AeromapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AeromapStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AeromapStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AeromapStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AeromapStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copies `src` into a caller buffer of `len` elements, failing when it
/// does not fit.
unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err(Fail(AeromapStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len())));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Byte length of the last error message on this thread, including the
/// terminating nul; 0 when there is none.
#[no_mangle]
pub extern "C" fn aeromap_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message into `buf` (nul-terminated, truncated to
/// `len` bytes). Returns the number of bytes written including the nul.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n + 1
    })
}

/// Number of registered models.
#[no_mangle]
pub extern "C" fn aeromap_model_count() -> usize {
    MODEL_NAMES.len()
}

static NAME_STRINGS: [&CStr; 10] = [c"idw", c"lr", c"nr", c"gam", c"gp_vg", c"gp_ml", c"rf", c"xgboost", c"svr", c"ann"];

/// Registered model name at `index` as a static string, or null when out
/// of range.
#[no_mangle]
pub extern "C" fn aeromap_model_name_at(index: usize) -> *const c_char {
    NAME_STRINGS.get(index).map_or(std::ptr::null(), |s| s.as_ptr())
}

/// Reads a preprocessed dataset CSV.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_dataset_read_csv(path: *const c_char, out: *mut *mut AeromapDataset) -> AeromapStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = read_dataset_csv(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(AeromapDataset(ds)));
        Ok(())
    })
}

/// Number of observations, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aeromap_dataset_len(ds: *const AeromapDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Copies the observed (log-space) values into `out`.
///
/// # Safety
/// `ds` must be a live handle; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_dataset_values(ds: *const AeromapDataset, out: *mut f64, len: usize) -> AeromapStatus {
    guard(|| copy_out(&ref_arg(ds, "ds")?.0.values(), out, len))
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aeromap_dataset_free(ds: *mut AeromapDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits the named model with its default settings.
///
/// # Safety
/// `ds` must be a live handle, `model` a nul-terminated string and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_fit(
    ds: *const AeromapDataset,
    model: *const c_char,
    seed: u64,
    out: *mut *mut AeromapModel,
) -> AeromapStatus {
    guard(|| {
        let ds = ref_arg(ds, "ds")?;
        let name = str_arg(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let trained: TrainedModel = ModelSpec::default_for(name)?.with_seed(seed).fit(&ds.0)?;
        *out = Box::into_raw(Box::new(AeromapModel(ModelFile::new(ds.0.schema.clone(), trained))));
        Ok(())
    })
}

/// Predicts at every observation of `ds`, writing `aeromap_dataset_len(ds)`
/// values into `out`.
///
/// # Safety
/// Handles must be live; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_predict(
    model: *const AeromapModel,
    ds: *const AeromapDataset,
    out: *mut f64,
    len: usize,
) -> AeromapStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "ds")?;
        if ds.0.schema != m.0.schema {
            return Err(Fail(AeromapStatus::Contract, "dataset covariate schema differs from the model's".into()));
        }
        let p = m.0.model.predict(&ds.0.as_query())?;
        copy_out(&p.mean, out, len)
    })
}

/// Registered name of a trained model as a static string.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_name(model: *const AeromapModel) -> *const c_char {
    model.as_ref().map_or(std::ptr::null(), |m| {
        let i = MODEL_NAMES.iter().position(|n| *n == m.0.model.name()).expect("registered");
        NAME_STRINGS[i].as_ptr()
    })
}

/// Writes a trained model as JSON.
///
/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_save(model: *const AeromapModel, path: *const c_char) -> AeromapStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        m.0.save(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Reads a model written by `aeromap_model_save` or the command line tool.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_load(path: *const c_char, out: *mut *mut AeromapModel) -> AeromapStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = ModelFile::load(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(AeromapModel(m)));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aeromap_model_free(model: *mut AeromapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Computes RMSE, bias, correlation and maximum absolute error of
/// `predicted` against `actual`, both of length `n`.
///
/// # Safety
/// Both arrays must be valid for `n` reads; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn aeromap_metrics(
    predicted: *const f64,
    actual: *const f64,
    n: usize,
    out: *mut AeromapMetrics,
) -> AeromapStatus {
    guard(|| {
        if predicted.is_null() || actual.is_null() || out.is_null() {
            return Err(null("predicted, actual or out"));
        }
        let p = std::slice::from_raw_parts(predicted, n);
        let a = std::slice::from_raw_parts(actual, n);
        let m = MetricSet::compute(p, a)?;
        *out = AeromapMetrics { rmse: m.rmse, bias: m.bias, corr: m.corr.unwrap_or(f64::NAN), mae: m.mae, n: m.n };
        Ok(())
    })
}
