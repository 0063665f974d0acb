//! C ABI over `stgt-core`.
//!
//! Every fallible function returns a [`StgtStatus`] and writes its result through an
//! out-pointer. On failure a description is kept per thread and can be read with
//! [`stgt_last_error`]. Handles are opaque; release them with the matching `_free`.
//! Strings returned by the library are owned by the caller and freed with
//! [`stgt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use stgt::estimation::Dataset;
use stgt::independence::{csi_holds, CsiStatement};
use stgt::inference::{query, sample, Query};
use stgt::io::{self, DotOptions, MissingPolicy};
use stgt::learning::{learn_bhc, learn_kparents, SearchConfig};
use stgt::model::{build_event_tree, Schema, StagedTreeModel};
use stgt::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StgtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    Data = 6,
    Config = 7,
    Model = 8,
    ZeroProbability = 9,
    Statistics = 10,
    Panic = 11,
}

/// Structure search used by [`stgt_learn`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StgtAlgorithm {
    Bhc = 0,
    KParents = 1,
}

/// A staged tree model.
pub struct StgtModel(StagedTreeModel);

/// A categorical dataset with its schema.
pub struct StgtDataset(Dataset);

struct Failure {
    status: StgtStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => StgtStatus::Io,
            Error::Parse(_) | Error::Version { .. } => StgtStatus::Parse,
            Error::Schema(_) | Error::Ordering(_) | Error::NotTopological(_) => StgtStatus::Schema,
            Error::DataConsistency { .. } | Error::EmptyData | Error::Csv { .. } => StgtStatus::Data,
            Error::Config(_) | Error::Bounds(_) => StgtStatus::Config,
            Error::Constraint(_) | Error::Invariant(_) => StgtStatus::Model,
            Error::UndefinedConditional => StgtStatus::ZeroProbability,
            Error::Statistics(_) => StgtStatus::Statistics,
        };
        Failure { status, message: e.to_string() }
    }
}

fn null(what: &str) -> Failure {
    Failure { status: StgtStatus::NullPointer, message: format!("{what} is null") }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> StgtStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure { status: StgtStatus::Panic, message: format!("panic: {message}") })
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            StgtStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for `'a`.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure { status: StgtStatus::InvalidUtf8, message: format!("{what} is not valid UTF-8") })
}

/// Like [`text`] but null means absent.
unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).expect("library output contains no NUL bytes").into_raw()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stgt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn stgt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn stgt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model document.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_from_json(json: *const c_char, out: *mut *mut StgtModel) -> StgtStatus {
    guard(|| {
        let model = io::parse_model(text(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(StgtModel(model))))
    })
}

/// Reads a model document from a file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_load(path: *const c_char, out: *mut *mut StgtModel) -> StgtStatus {
    guard(|| {
        let doc = std::fs::read_to_string(text(path, "path")?).map_err(Error::from)?;
        let model = io::parse_model(&doc)?;
        write_out(out, Box::into_raw(Box::new(StgtModel(model))))
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` comes from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_free(model: *mut StgtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Canonical JSON document of the model.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_to_json(model: *const StgtModel, out: *mut *mut c_char) -> StgtStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_out(out, owned_string(io::serialize_model(&m.0)))
    })
}

/// Graphviz rendering of the staged tree, with edge probabilities when `probabilities` is true.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_to_dot(
    model: *const StgtModel,
    probabilities: bool,
    out: *mut *mut c_char,
) -> StgtStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_out(out, owned_string(io::tree_dot(&m.0, DotOptions { probabilities })))
    })
}

/// Number of variables in the model.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_variable_count(model: *const StgtModel, out: *mut usize) -> StgtStatus {
    guard(|| write_out(out, handle(model, "model")?.0.schema().len()))
}

/// BIC recorded when the model was fitted. Fails with `Config` for unfitted models.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_bic(model: *const StgtModel, out: *mut f64) -> StgtStatus {
    guard(|| {
        let meta = handle(model, "model")?
            .0
            .fit_meta()
            .ok_or_else(|| Error::Config("model carries no fit statistics".into()))?;
        write_out(out, meta.bic)
    })
}

/// `P(target | given)` with assignments written as `A=x,B=y`. `given` may be null.
///
/// # Safety
/// `model` is a live handle; strings are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_query(
    model: *const StgtModel,
    target: *const c_char,
    given: *const c_char,
    out: *mut f64,
) -> StgtStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let target = io::parse_assignments(text(target, "target")?, m.schema())?;
        if target.is_empty() {
            return Err(Error::Config("target needs at least one VAR=level".into()).into());
        }
        let evidence = match optional_text(given, "given")? {
            Some(g) => io::parse_assignments(g, m.schema())?,
            None => Vec::new(),
        };
        write_out(out, query(m, &Query { target, evidence })?)
    })
}

/// Whether `target` is independent of the comma-separated `separated` variables
/// in the context `given` (`A=x,...`, may be null).
///
/// # Safety
/// `model` is a live handle; strings are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_csi(
    model: *const StgtModel,
    target: *const c_char,
    separated: *const c_char,
    given: *const c_char,
    out: *mut bool,
) -> StgtStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let schema = m.schema();
        let stmt = CsiStatement {
            target: schema.var_index(text(target, "target")?)?,
            separated: io::parse_order(text(separated, "separated")?)
                .iter()
                .map(|v| schema.var_index(v))
                .collect::<stgt::Result<_>>()?,
            context: match optional_text(given, "given")? {
                Some(g) => io::parse_assignments(g, schema)?,
                None => Vec::new(),
            },
        };
        write_out(out, csi_holds(m, &stmt)?)
    })
}

/// Draws `n` rows and returns them as CSV with a header line.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_model_sample_csv(
    model: *const StgtModel,
    n: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> StgtStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let batch = sample(m, n, seed);
        let mut buf = Vec::new();
        io::write_csv(&mut buf, m.schema(), &batch.rows)?;
        write_out(out, owned_string(String::from_utf8(buf).expect("level names are UTF-8")))
    })
}

/// Reads a CSV file, dropping rows with missing cells. `schema_text` (`name: l1, l2`
/// per line) fixes the levels and order; when null they are inferred.
///
/// # Safety
/// Strings are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_dataset_read_csv(
    path: *const c_char,
    schema_text: *const c_char,
    out: *mut *mut StgtDataset,
) -> StgtStatus {
    guard(|| {
        let path = text(path, "path")?;
        let declared = match optional_text(schema_text, "schema")? {
            Some(s) => Some(Schema::in_listed_order(io::parse_schema(s)?)?),
            None => None,
        };
        let csv = io::read_csv(Path::new(path), declared.as_ref(), MissingPolicy::DropRow)?;
        write_out(out, Box::into_raw(Box::new(StgtDataset(csv.dataset))))
    })
}

/// Number of rows in the dataset.
///
/// # Safety
/// `data` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_dataset_rows(data: *const StgtDataset, out: *mut u64) -> StgtStatus {
    guard(|| write_out(out, handle(data, "dataset")?.0.n()))
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` comes from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn stgt_dataset_free(data: *mut StgtDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Learns a staged tree. `k` is the in-degree bound for `KParents` and ignored
/// otherwise. `constraints` holds `IF A=x THEN B=y` lines and may be null.
///
/// # Safety
/// `data` is a live handle; `constraints` is null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stgt_learn(
    data: *const StgtDataset,
    algorithm: StgtAlgorithm,
    k: usize,
    alpha: f64,
    constraints: *const c_char,
    out: *mut *mut StgtModel,
) -> StgtStatus {
    guard(|| {
        let data = &handle(data, "dataset")?.0;
        let rules = match optional_text(constraints, "constraints")? {
            Some(c) => io::parse_constraints(c, data.schema())?,
            None => Vec::new(),
        };
        let tree = build_event_tree(data.schema().clone(), rules)?;
        let model = match algorithm {
            StgtAlgorithm::Bhc => learn_bhc(&tree, data, &SearchConfig { alpha, ..Default::default() })?,
            StgtAlgorithm::KParents => {
                learn_kparents(&tree, data, &SearchConfig { alpha, k: Some(k), ..Default::default() })?
            }
        };
        write_out(out, Box::into_raw(Box::new(StgtModel(model))))
    })
}
