//! C ABI over the neucube pipeline.
//!
//! Every fallible function returns an [`NcStatus`]; on failure the message is
//! available from [`nc_last_error`] on the same thread. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use neucube::dataset::{generate_synthetic, load_samples, CsvSchema, SampleSet, SyntheticConfig};
use neucube::io::{read_json, write_json};
use neucube::pipeline::{evaluate, fit, ModelFile, PipelineParams, TrainedModel};
use neucube::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    IoError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque dataset handle.
pub struct NcDataset(SampleSet);

/// Opaque trained model handle.
pub struct NcModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NcStatus {
    match e {
        Error::InvalidArgument(_) => NcStatus::InvalidArgument,
        Error::Io { .. } => NcStatus::IoError,
        _ => NcStatus::DataError,
    }
}

/// Runs `f`, recording errors and trapping panics so they never cross the
/// boundary.
fn guard(f: impl FnOnce() -> Result<(), NcStatus>) -> NcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NcStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            NcStatus::Panic
        }
    }
}

fn lib<T>(r: neucube::Result<T>) -> Result<T, NcStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> NcStatus {
    set_error(format!("{what} is null"));
    NcStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, NcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        NcStatus::InvalidArgument
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, NcStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, NcStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the default synthetic dataset with the given seed.
/// `samples_per_class` of 0 keeps the default.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_synthetic(seed: u64, samples_per_class: usize, out: *mut *mut NcDataset) -> NcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mut cfg = SyntheticConfig { seed, ..SyntheticConfig::default() };
        if samples_per_class > 0 {
            cfg.samples_per_class = samples_per_class;
        }
        let set = lib(generate_synthetic(&cfg))?;
        *out = Box::into_raw(Box::new(NcDataset(set)));
        Ok(())
    })
}

/// Loads a long-format CSV file with the default column names
/// (`sample_id`, `tick`, `label`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_load_csv(path: *const c_char, out: *mut *mut NcDataset) -> NcStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let set = lib(load_samples(path, &CsvSchema::default()))?;
        *out = Box::into_raw(Box::new(NcDataset(set)));
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_len(ds: *const NcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_variables(ds: *const NcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.variables())
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_ticks(ds: *const NcDataset) -> usize {
    ds.as_ref().map_or(0, |d| if d.0.is_empty() { 0 } else { d.0.ticks() })
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_class_count(ds: *const NcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.class_count())
}

/// Copies the label indices into `labels`, which must hold `len` entries
/// where `len` equals [`nc_dataset_len`].
///
/// # Safety
/// `labels` must point to `len` writable `size_t` values.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_labels(ds: *const NcDataset, labels: *mut usize, len: usize) -> NcStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let src = ds.0.labels();
        if len != src.len() {
            set_error(format!("labels buffer holds {len} entries, dataset has {}", src.len()));
            return Err(NcStatus::InvalidArgument);
        }
        std::slice::from_raw_parts_mut(labels, len).copy_from_slice(&src);
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_free(ds: *mut NcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model. `params_json` may be null for defaults, or a JSON object
/// with any subset of the pipeline parameters.
///
/// # Safety
/// `ds` must be a live dataset; `params_json` null or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nc_model_train(
    ds: *const NcDataset,
    params_json: *const c_char,
    out: *mut *mut NcModel,
) -> NcStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let out = out_arg(out, "out")?;
        let params = if params_json.is_null() {
            PipelineParams::default()
        } else {
            let text = str_arg(params_json, "params_json")?;
            serde_json::from_str::<PipelineParams>(text).map_err(|e| {
                set_error(format!("params_json: {e}"));
                NcStatus::InvalidArgument
            })?
        };
        lib(params.validate())?;
        let model = lib(fit(&ds.0, &params))?;
        *out = Box::into_raw(Box::new(NcModel(model)));
        Ok(())
    })
}

/// Predicts a label index for every sample of `ds` into `labels`
/// (`len` must equal the sample count).
///
/// # Safety
/// Handles must be live; `labels` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn nc_model_predict(
    model: *const NcModel,
    ds: *const NcDataset,
    labels: *mut usize,
    len: usize,
) -> NcStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let ds = handle(ds, "dataset")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if len != ds.0.len() {
            set_error(format!("labels buffer holds {len} entries, dataset has {}", ds.0.len()));
            return Err(NcStatus::InvalidArgument);
        }
        let eval = lib(evaluate(&model.0, &ds.0))?;
        let dst = std::slice::from_raw_parts_mut(labels, len);
        for (d, p) in dst.iter_mut().zip(&eval.predictions) {
            *d = p.label;
        }
        Ok(())
    })
}

/// Classification accuracy of `model` on `ds`.
///
/// # Safety
/// Handles must be live; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_model_accuracy(model: *const NcModel, ds: *const NcDataset, accuracy: *mut f64) -> NcStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let ds = handle(ds, "dataset")?;
        let accuracy = out_arg(accuracy, "accuracy")?;
        *accuracy = lib(evaluate(&model.0, &ds.0))?.accuracy;
        Ok(())
    })
}

/// Writes the model as JSON.
///
/// # Safety
/// `model` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nc_model_save(model: *const NcModel, path: *const c_char) -> NcStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        lib(write_json(&path, &model.0.to_file()))
    })
}

/// Reads a model written by [`nc_model_save`] or the command line tool.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nc_model_load(path: *const c_char, out: *mut *mut NcModel) -> NcStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let file: ModelFile = lib(read_json(&path))?;
        let model = lib(TrainedModel::from_file(file))?;
        *out = Box::into_raw(Box::new(NcModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn nc_model_free(model: *mut NcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
