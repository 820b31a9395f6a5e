use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dinidiff_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { dinidiff_string_free(s) };
    out
}

fn last_error() -> String {
    let p = dinidiff_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn martingale_round_trip() {
    let json = CString::new(r#"{"kind":"predictor","pattern":{"type":"alternate"},"fraction":"1/2","base":3}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_martingale_from_json(json.as_ptr(), &mut m) }, DinidiffStatus::Ok);
    let mut base = 0;
    assert_eq!(unsafe { dinidiff_martingale_base(m, &mut base) }, DinidiffStatus::Ok);
    assert_eq!(base, 3);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_martingale_eval(m, [0u8, 1].as_ptr(), 2, 0, &mut out) }, DinidiffStatus::Ok);
    assert_eq!(take(out), "4");
    assert_eq!(unsafe { dinidiff_martingale_eval(m, ptr::null(), 0, 0, &mut out) }, DinidiffStatus::Ok);
    assert_eq!(take(out), "1");
    assert_eq!(unsafe { dinidiff_martingale_eval(m, [7u8].as_ptr(), 1, 0, &mut out) }, DinidiffStatus::Parse);
    assert!(last_error().contains("digit 7"));
    let mut passed = -1;
    assert_eq!(unsafe { dinidiff_martingale_check_fairness(m, 5, 0, &mut passed) }, DinidiffStatus::Ok);
    assert_eq!(passed, 1);
    unsafe { dinidiff_martingale_free(m) };
}

#[test]
fn errors_are_codes_not_crashes() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_martingale_from_json(ptr::null(), &mut m) }, DinidiffStatus::NullPointer);
    let bad = CString::new(r#"{"kind":"constant","value":"x"}"#).unwrap();
    assert_eq!(unsafe { dinidiff_martingale_from_json(bad.as_ptr(), &mut m) }, DinidiffStatus::Parse);
    assert!(last_error().contains("/value"));
    let deep = CString::new(r#"{"kind":"doubler","digit":1}"#).unwrap();
    assert_eq!(unsafe { dinidiff_martingale_from_json(deep.as_ptr(), &mut m) }, DinidiffStatus::Ok);
    let mut passed = 0;
    assert_eq!(unsafe { dinidiff_martingale_check_fairness(m, 40, 0, &mut passed) }, DinidiffStatus::Budget);
    assert_eq!(unsafe { dinidiff_martingale_base(m, ptr::null_mut()) }, DinidiffStatus::NullPointer);
    unsafe { dinidiff_martingale_free(m) };
    unsafe { dinidiff_martingale_free(ptr::null_mut()) };
    let mut b = 0;
    assert_eq!(unsafe { dinidiff_martingale_base(ptr::null(), &mut b) }, DinidiffStatus::NullPointer);
}

#[test]
fn functions_and_sawtooth() {
    let json = CString::new(r#"{"kind":"polynomial","coeffs":["0","1/2","1"]}"#).unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_function_from_json(json.as_ptr(), &mut f) }, DinidiffStatus::Ok);
    let x = CString::new("1/3").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_function_value(f, x.as_ptr(), 0, &mut out) }, DinidiffStatus::Ok);
    assert_eq!(take(out), "5/18");
    unsafe { dinidiff_function_free(f) };

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dinidiff_sawtooth_new(ptr::null(), &mut s) }, DinidiffStatus::Ok);
    let mut levels = 0;
    assert_eq!(unsafe { dinidiff_sawtooth_levels(s, &mut levels) }, DinidiffStatus::Ok);
    assert_eq!(levels, 7);
    let zero = CString::new("0").unwrap();
    assert_eq!(unsafe { dinidiff_sawtooth_eval(s, zero.as_ptr(), &mut out) }, DinidiffStatus::Ok);
    assert_eq!(take(out), "0");
    unsafe { dinidiff_sawtooth_free(s) };

    let nested = CString::new(r#"{"levels":[[["1/4","1/2"]],[["1/2","9/16"]]]}"#).unwrap();
    assert_eq!(unsafe { dinidiff_sawtooth_new(nested.as_ptr(), &mut s) }, DinidiffStatus::Violation);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(dinidiff_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let lib = deps.parent()?.join("libdinidiff_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/dinidiff.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["dinidiff_martingale_from_json", "dinidiff_last_error", "DINIDIFF_STATUS_BUDGET", "typedef struct DinidiffMartingale"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let lib = static_lib().expect("static library built alongside the tests");
    let exe = std::env::temp_dir().join(format!("dinidiff-smoke-{}", std::process::id()));
    let status = Command::new("cc")
        .arg(root.join("tests/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("cc available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok 1");
    let _ = std::fs::remove_file(exe);
}
