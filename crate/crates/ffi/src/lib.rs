//! C ABI over the slicing engine.
//!
//! Every fallible function returns an [`AsStatus`]. On failure a message is
//! kept per thread and can be read with [`as_last_error`]. Strings handed out
//! by the library are NUL-terminated UTF-8 JSON and must be released with
//! [`as_string_free`]; workspace handles with [`as_workspace_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use agentslice::agents::{run_pipeline, SessionConfig};
use agentslice::eval::{score_instance, BenchmarkInstance};
use agentslice::llm::CassetteBackend;
use agentslice::protocol::PromptRenderer;
use agentslice::slice::SliceDocument;
use agentslice::workspace::{
    build_index, criterion_scope, extract_invocations, list_project_functions, load_workspace,
    CodeFragment, FileEntry, Language, SlicingCriterion, SyntaxIndex, Workspace,
};
use serde_json::json;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    Workspace = 4,
    Criterion = 5,
    Llm = 6,
    Pipeline = 7,
    Panic = 8,
}

/// A loaded workspace together with its syntax index.
pub struct AsWorkspace {
    workspace: Workspace,
    index: SyntaxIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NUL removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(AsStatus, String);

type FfiResult<T> = Result<T, Fail>;

/// Runs `body` with panics contained and errors recorded.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> AsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AsStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(AsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AsStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ws_arg<'a>(p: *const AsWorkspace) -> FfiResult<&'a AsWorkspace> {
    p.as_ref()
        .ok_or_else(|| Fail(AsStatus::NullArgument, "workspace handle is null".into()))
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> FfiResult<()> {
    if out.is_null() {
        return Err(Fail(AsStatus::NullArgument, "output pointer is null".into()));
    }
    let text = serde_json::to_string(value).expect("value serializes");
    *out = CString::new(text).expect("JSON has no NUL").into_raw();
    Ok(())
}

unsafe fn put_handle(out: *mut *mut AsWorkspace, workspace: Workspace) -> FfiResult<()> {
    if out.is_null() {
        return Err(Fail(AsStatus::NullArgument, "output pointer is null".into()));
    }
    let index = build_index(&workspace);
    *out = Box::into_raw(Box::new(AsWorkspace { workspace, index }));
    Ok(())
}

fn ws_fail(e: impl std::fmt::Display) -> Fail {
    Fail(AsStatus::Workspace, e.to_string())
}

fn criterion(ws: &AsWorkspace, file: &str, line: usize, vars: &str) -> FfiResult<SlicingCriterion> {
    let vars = vars
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    SlicingCriterion::new(&ws.workspace, file, line, vars)
        .map_err(|e| Fail(AsStatus::Criterion, e.to_string()))
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn as_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn as_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn as_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads every Java and Python file under `root`.
///
/// # Safety
/// `root` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_workspace_open_dir(
    root: *const c_char,
    out: *mut *mut AsWorkspace,
) -> AsStatus {
    guard(|| {
        let root = str_arg(root, "root")?;
        let ws = Workspace::from_dir(Path::new(root)).map_err(ws_fail)?;
        put_handle(out, ws)
    })
}

/// Loads a workspace from a JSON array of `{"path", "content", "language"?}`.
///
/// # Safety
/// `files_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_workspace_from_json(
    files_json: *const c_char,
    out: *mut *mut AsWorkspace,
) -> AsStatus {
    guard(|| {
        let text = str_arg(files_json, "files_json")?;
        let entries: Vec<FileEntry> =
            serde_json::from_str(text).map_err(|e| Fail(AsStatus::InvalidJson, e.to_string()))?;
        let ws = load_workspace(entries).map_err(ws_fail)?;
        put_handle(out, ws)
    })
}

/// Releases a workspace handle. NULL is ignored.
///
/// # Safety
/// `ws` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn as_workspace_free(ws: *mut AsWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Number of files in the workspace; 0 for NULL.
///
/// # Safety
/// `ws` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn as_workspace_file_count(ws: *const AsWorkspace) -> usize {
    ws.as_ref().map_or(0, |w| w.workspace.files().len())
}

/// Every function, method, constructor and lambda in the workspace, as a
/// JSON array.
///
/// # Safety
/// `ws` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_list_functions(
    ws: *const AsWorkspace,
    out: *mut *mut c_char,
) -> AsStatus {
    guard(|| {
        let ws = ws_arg(ws)?;
        put_json(out, &list_project_functions(&ws.index))
    })
}

/// The initial region for a criterion at `file:line`, as a JSON object.
///
/// # Safety
/// Pointers must be valid; `file` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_criterion_scope(
    ws: *const AsWorkspace,
    file: *const c_char,
    line: usize,
    out: *mut *mut c_char,
) -> AsStatus {
    guard(|| {
        let ws = ws_arg(ws)?;
        let c = criterion(ws, str_arg(file, "file")?, line, "")?;
        let region = criterion_scope(&ws.index, &c).map_err(|e| Fail(AsStatus::Criterion, e.to_string()))?;
        put_json(out, &region)
    })
}

/// Call sites in a code fragment (`language` is "java" or "python"), as a
/// JSON array. `file` names where the fragment came from.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_extract_invocations(
    ws: *const AsWorkspace,
    language: *const c_char,
    file: *const c_char,
    fragment: *const c_char,
    out: *mut *mut c_char,
) -> AsStatus {
    guard(|| {
        let ws = ws_arg(ws)?;
        let language: Language = str_arg(language, "language")?
            .parse()
            .map_err(|e: agentslice::workspace::WorkspaceError| ws_fail(e))?;
        let fragment = CodeFragment::from_text(language, str_arg(file, "file")?, str_arg(fragment, "fragment")?);
        let calls = extract_invocations(&ws.index, &fragment, &SessionConfig::default().exclusion);
        put_json(out, &calls)
    })
}

/// Runs the full pipeline answering every model call from the cassette at
/// `cassette_path`. `variables` is a comma-separated list and may be empty
/// or NULL. `config_json` may be NULL for the default configuration. On
/// success `out` receives the slice document; on `AS_STATUS_PIPELINE` it
/// receives `{"error", "last_valid_slice"}`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_slice_replay(
    ws: *const AsWorkspace,
    file: *const c_char,
    line: usize,
    variables: *const c_char,
    cassette_path: *const c_char,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> AsStatus {
    guard(|| {
        let ws = ws_arg(ws)?;
        let vars = if variables.is_null() { "" } else { str_arg(variables, "variables")? };
        let c = criterion(ws, str_arg(file, "file")?, line, vars)?;
        let config: SessionConfig = if config_json.is_null() {
            SessionConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Fail(AsStatus::InvalidJson, e.to_string()))?
        };
        let backend = CassetteBackend::replay(Path::new(str_arg(cassette_path, "cassette_path")?))
            .map_err(|e| Fail(AsStatus::Llm, e.to_string()))?;
        let renderer = PromptRenderer::new(Default::default(), config.char_budget);
        match run_pipeline(&ws.workspace, &ws.index, c, config, renderer, Arc::new(backend)) {
            Ok(o) => put_json(out, &o.slice.to_document(&o.hallucinated)),
            Err(e) => {
                let message = e.source.to_string();
                put_json(
                    out,
                    &json!({
                        "error": message,
                        "last_valid_slice": e.last_slice.as_ref().map(|s| s.to_document(&[])),
                    }),
                )?;
                Err(Fail(AsStatus::Pipeline, message))
            }
        }
    })
}

/// Scores a slice document against one benchmark instance (both JSON) and
/// returns `{"metrics", "counts"}`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_score(
    instance_json: *const c_char,
    slice_json: *const c_char,
    out: *mut *mut c_char,
) -> AsStatus {
    guard(|| {
        let bad = |e: serde_json::Error| Fail(AsStatus::InvalidJson, e.to_string());
        let inst: BenchmarkInstance = serde_json::from_str(str_arg(instance_json, "instance_json")?).map_err(bad)?;
        let doc: SliceDocument = serde_json::from_str(str_arg(slice_json, "slice_json")?).map_err(bad)?;
        let (metrics, counts) = score_instance(&doc.line_refs(), &inst);
        put_json(out, &json!({ "metrics": metrics, "counts": counts }))
    })
}
