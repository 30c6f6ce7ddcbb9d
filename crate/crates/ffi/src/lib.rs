//! C ABI over exlens.
//!
//! Models and engines are opaque handles. Requests and responses are the
//! same JSON documents the HTTP API exchanges. Every call returns an
//! [`ExlensStatus`]; on failure [`exlens_last_error`] describes the problem.
//! Strings handed out by the library must be released with
//! [`exlens_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use exlens::api::{self, AnalyzeRequest, SearchRequest};
use exlens::summarize::Explorer;
use exlens::{Error, Model};
use serde::Serialize;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExlensStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A request document was not valid JSON for its type.
    InvalidJson = 3,
    /// The request was well formed but cannot be served (length, mask,
    /// bounds, head selection, k).
    InvalidRequest = 4,
    /// The sentence was empty.
    EmptyInput = 5,
    /// The index was built with a different model.
    Incompatible = 6,
    /// A file could not be read or failed its integrity checks.
    Io = 7,
    /// The model or index files are malformed.
    Format = 8,
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn status_of(e: &Error) -> ExlensStatus {
    match e {
        Error::Length { .. }
        | Error::InvalidMask { .. }
        | Error::EmptySelection(_)
        | Error::Bounds { .. }
        | Error::Query(_)
        | Error::Dimension(_)
        | Error::DegenerateQuery
        | Error::NoCandidate => ExlensStatus::InvalidRequest,
        Error::EmptyInput(_) => ExlensStatus::EmptyInput,
        Error::Incompatible { .. } => ExlensStatus::Incompatible,
        Error::Io { .. } | Error::Integrity { .. } => ExlensStatus::Io,
        Error::Config(_)
        | Error::Vocab(_)
        | Error::Weights(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Consistency(_) => ExlensStatus::Format,
        _ => ExlensStatus::Internal,
    }
}

struct Failure(ExlensStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ExlensStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExlensStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside exlens".into());
            ExlensStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ExlensStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ExlensStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_json<T: Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    let text =
        serde_json::to_string(value).map_err(|e| Failure(ExlensStatus::Internal, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Failure(ExlensStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(ExlensStatus::InvalidJson, e.to_string()))
}

/// A loaded model.
pub struct ExlensModel {
    model: Arc<Model>,
}

/// A model bound to a built index, ready to search.
pub struct ExlensEngine {
    explorer: Explorer,
}

/// Message describing the last failed call on this thread, or null. Valid
/// until the next exlens call on the same thread.
#[no_mangle]
pub extern "C" fn exlens_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn exlens_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exlens_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a model directory. `vocab_path` may be null to use
/// `<model_dir>/vocab.txt`.
///
/// # Safety
/// String arguments must be null-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_model_open(
    model_dir: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut ExlensModel,
) -> ExlensStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = str_arg(model_dir, "model_dir")?;
        let vocab = if vocab_path.is_null() {
            None
        } else {
            Some(str_arg(vocab_path, "vocab_path")?)
        };
        let model = Model::load(Path::new(dir), vocab.map(Path::new))?;
        *out = Box::into_raw(Box::new(ExlensModel {
            model: Arc::new(model),
        }));
        Ok(())
    })
}

/// Releases a model. Engines opened from it stay valid. Null is ignored.
///
/// # Safety
/// `model` must come from [`exlens_model_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exlens_model_free(model: *mut ExlensModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes `{"config": ..., "fingerprint": ...}` to `out_json`.
///
/// # Safety
/// `model` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_model_info(
    model: *const ExlensModel,
    out_json: *mut *mut c_char,
) -> ExlensStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let info = serde_json::json!({
            "config": model.model.config(),
            "fingerprint": model.model.fingerprint(),
        });
        write_json(out_json, &info)
    })
}

/// Runs an analyze request (same JSON as `POST /api/analyze`).
///
/// # Safety
/// `model` must be a live handle, `request_json` null-terminated and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_analyze(
    model: *const ExlensModel,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ExlensStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let request: AnalyzeRequest = parse(str_arg(request_json, "request_json")?)?;
        let response = api::analyze(&model.model, &request)?;
        write_json(out_json, &response)
    })
}

/// Opens the index directory written by `exlens build-index` for `model`.
///
/// # Safety
/// `model` must be a live handle, `index_dir` null-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_engine_open(
    model: *const ExlensModel,
    index_dir: *const c_char,
    out: *mut *mut ExlensEngine,
) -> ExlensStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = str_arg(index_dir, "index_dir")?;
        let explorer = Explorer::open(Path::new(dir), model.model.clone())?;
        *out = Box::into_raw(Box::new(ExlensEngine { explorer }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`exlens_engine_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exlens_engine_free(engine: *mut ExlensEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Runs a search request (same JSON as `POST /api/search`). Engines may be
/// shared across threads.
///
/// # Safety
/// `engine` must be a live handle, `request_json` null-terminated and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_search(
    engine: *const ExlensEngine,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ExlensStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| null("engine"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let request: SearchRequest = parse(str_arg(request_json, "request_json")?)?;
        let response = api::search_request(&engine.explorer, &request)?;
        write_json(out_json, &response)
    })
}

/// Writes the `GET /api/info` document to `out_json`.
///
/// # Safety
/// `engine` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn exlens_engine_info(
    engine: *const ExlensEngine,
    out_json: *mut *mut c_char,
) -> ExlensStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| null("engine"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        write_json(out_json, &api::info(&engine.explorer))
    })
}
