use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use agentslice_ffi::*;
use serde_json::Value;

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = as_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Takes ownership of a library string and parses it.
fn take_json(p: *mut c_char) -> Value {
    assert!(!p.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(p) }.to_str().unwrap()).unwrap();
    unsafe { as_string_free(p) };
    v
}

fn open_running_max() -> *mut AsWorkspace {
    let root = c(core_fixtures().join("running_max").to_str().unwrap());
    let mut ws = ptr::null_mut();
    assert_eq!(unsafe { as_workspace_open_dir(root.as_ptr(), &mut ws) }, AsStatus::Ok);
    ws
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(as_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn workspace_queries() {
    let ws = open_running_max();
    assert_eq!(unsafe { as_workspace_file_count(ws) }, 1);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { as_list_functions(ws, &mut out) }, AsStatus::Ok);
    let functions = take_json(out);
    let names: Vec<&str> = functions.as_array().unwrap().iter().map(|f| f["qualified_name"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["Main.main", "Main.max"]);

    let file = c("Main.java");
    assert_eq!(unsafe { as_criterion_scope(ws, file.as_ptr(), 17, &mut out) }, AsStatus::Ok);
    let scope = take_json(out);
    assert_eq!(scope["file"], "Main.java");

    let lang = c("java");
    let fragment = c("best = max(best, v);\nSystem.out.println(best);");
    assert_eq!(
        unsafe { as_extract_invocations(ws, lang.as_ptr(), file.as_ptr(), fragment.as_ptr(), &mut out) },
        AsStatus::Ok
    );
    let calls = take_json(out);
    let names: Vec<&str> = calls.as_array().unwrap().iter().map(|c| c["callee_name"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["max"]);
    unsafe { as_workspace_free(ws) };
}

#[test]
fn replayed_slice_matches_the_core_run() {
    let ws = open_running_max();
    let file = c("Main.java");
    let cassette = c(core_fixtures().join("running_max/cassette.jsonl").to_str().unwrap());
    let mut out = ptr::null_mut();
    let status = unsafe {
        as_slice_replay(ws, file.as_ptr(), 17, ptr::null(), cassette.as_ptr(), ptr::null(), &mut out)
    };
    assert_eq!(status, AsStatus::Ok);
    let doc = take_json(out);
    let lines: Vec<u64> = doc["lines"].as_array().unwrap().iter().map(|l| l["line"].as_u64().unwrap()).collect();
    assert_eq!(lines, vec![1, 2, 3, 5, 6, 8, 9, 10, 11, 12, 13, 14, 16, 17, 23, 24, 25, 26, 28]);

    // A criterion the cassette has never seen fails with the last valid slice.
    let status = unsafe {
        as_slice_replay(ws, file.as_ptr(), 19, ptr::null(), cassette.as_ptr(), ptr::null(), &mut out)
    };
    assert_eq!(status, AsStatus::Pipeline);
    assert!(last_error().contains("no cassette entry"));
    let err = take_json(out);
    assert_eq!(err["last_valid_slice"]["lines"].as_array().unwrap().len(), 1);
    unsafe { as_workspace_free(ws) };
}

#[test]
fn error_codes() {
    let mut ws = ptr::null_mut();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { as_workspace_open_dir(ptr::null(), &mut ws) }, AsStatus::NullArgument);
    assert!(last_error().contains("root"));

    let bad = c("[{\"path\": 3}]");
    assert_eq!(unsafe { as_workspace_from_json(bad.as_ptr(), &mut ws) }, AsStatus::InvalidJson);

    let empty = c("[]");
    assert_eq!(unsafe { as_workspace_from_json(empty.as_ptr(), &mut ws) }, AsStatus::Workspace);

    let files = c(r#"[{"path": "a.py", "content": "x = 1\nprint(x)\n"}]"#);
    assert_eq!(unsafe { as_workspace_from_json(files.as_ptr(), &mut ws) }, AsStatus::Ok);
    assert!(as_last_error().is_null(), "success clears the error");

    let file = c("a.py");
    assert_eq!(unsafe { as_criterion_scope(ws, file.as_ptr(), 40, &mut out) }, AsStatus::Criterion);
    assert_eq!(unsafe { as_list_functions(ptr::null(), &mut out) }, AsStatus::NullArgument);
    assert_eq!(unsafe { as_list_functions(ws, ptr::null_mut()) }, AsStatus::NullArgument);

    let invalid = [0xffu8, 0xfe, 0];
    let status = unsafe { as_criterion_scope(ws, invalid.as_ptr().cast(), 1, &mut out) };
    assert_eq!(status, AsStatus::InvalidUtf8);

    let lang = c("cobol");
    let frag = c("x()");
    let status = unsafe { as_extract_invocations(ws, lang.as_ptr(), file.as_ptr(), frag.as_ptr(), &mut out) };
    assert_eq!(status, AsStatus::Workspace);

    let missing = c("/nonexistent/cassette.jsonl");
    let status = unsafe {
        as_slice_replay(ws, file.as_ptr(), 2, ptr::null(), missing.as_ptr(), ptr::null(), &mut out)
    };
    assert_eq!(status, AsStatus::Llm);
    unsafe {
        as_workspace_free(ws);
        as_workspace_free(ptr::null_mut());
        as_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { as_workspace_file_count(ptr::null()) }, 0);
}

#[test]
fn scoring() {
    let inst = c(r#"{"id":"a","language":"python","files":[{"path":"a.py","content":"x = 1\ny = 2\nprint(x)\n"}],
        "criterion":{"file":"a.py","line":3},"ground_truth":[{"file":"a.py","lines":[1,3]}],"source_tag":"codenet"}"#);
    let doc = c(r#"{"criterion":{"file":"a.py","line":3},"lines":[
        {"file":"a.py","line":1,"text":"x = 1"},{"file":"a.py","line":3,"text":"print(x)"}]}"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { as_score(inst.as_ptr(), doc.as_ptr(), &mut out) }, AsStatus::Ok);
    let v = take_json(out);
    assert_eq!(v["metrics"]["exact_match"], true);
    assert_eq!(v["counts"]["tn"], 1);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/agentslice.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "AGENTSLICE_H",
        "AS_STATUS_OK = 0",
        "AS_STATUS_PANIC = 8",
        "typedef struct AsWorkspace AsWorkspace",
        "as_version",
        "as_last_error",
        "as_string_free",
        "as_workspace_open_dir",
        "as_workspace_from_json",
        "as_workspace_free",
        "as_workspace_file_count",
        "as_list_functions",
        "as_criterion_scope",
        "as_extract_invocations",
        "as_slice_replay",
        "as_score",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"agentslice.h\"\n\
         int main(void) {\n\
           AsWorkspace *ws = 0;\n\
           enum AsStatus s = as_workspace_from_json(\"[]\", &ws);\n\
           return s == AS_STATUS_WORKSPACE ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
