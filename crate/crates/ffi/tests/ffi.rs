use std::ffi::{CStr, CString};
use std::ptr;

use tsnkit_ffi::*;

const NET: &str = include_str!("../../../data/line.json");
const FLOWS: &str = include_str!("../../../data/line_flows.json");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

struct Handles {
    net: *mut TsnNetwork,
    flows: *mut TsnFlowSet,
}

impl Handles {
    fn new() -> Self {
        let mut net = ptr::null_mut();
        let mut flows = ptr::null_mut();
        unsafe {
            assert_eq!(tsn_network_from_json(c(NET).as_ptr(), &mut net), TsnStatus::Ok);
            assert_eq!(tsn_flowset_from_json(c(FLOWS).as_ptr(), &mut flows), TsnStatus::Ok);
        }
        Handles { net, flows }
    }
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            tsn_network_free(self.net);
            tsn_flowset_free(self.flows);
        }
    }
}

fn take(s: *mut std::ffi::c_char) -> serde_json::Value {
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { tsn_string_free(s) };
    serde_json::from_str(&text).unwrap()
}

fn last_error() -> String {
    let p = tsn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn analyze_through_handles() {
    let h = Handles::new();
    assert_eq!(unsafe { tsn_flowset_len(h.flows) }, 4);
    let mut out = ptr::null_mut();
    let config = c(r#"{"level": 1, "entries": [0, 0, 0, 1]}"#);
    let status = unsafe { tsn_analyze_json(h.net, h.flows, config.as_ptr(), &mut out) };
    assert_eq!(status, TsnStatus::Ok);
    let report = take(out);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["schedulable"], true);
    assert_eq!(report["flows"].as_array().unwrap().len(), 4);
    assert!(tsn_last_error().is_null());
}

#[test]
fn synthesize_and_simulate() {
    let h = Handles::new();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tsn_synthesize_json(h.net, h.flows, &mut out) }, TsnStatus::Ok);
    let result = take(out);
    assert_eq!(result["outcome"], "found");
    assert_eq!(result["level"], 1);

    let mut out = ptr::null_mut();
    let status = unsafe { tsn_simulate_json(h.net, h.flows, ptr::null(), 0, 9, &mut out) };
    assert_eq!(status, TsnStatus::Ok);
    let report = take(out);
    assert_eq!(report["seed"], 9);
    assert!(report["flows"][0]["delivered"].as_u64().unwrap() > 0);
}

#[test]
fn errors_are_reported() {
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(tsn_network_from_json(ptr::null(), &mut net), TsnStatus::NullArgument);
        assert_eq!(tsn_network_from_json(c("{").as_ptr(), &mut net), TsnStatus::ParseError);
        assert!(net.is_null());
        let bad = c(r#"{"nodes": [{"id": "a", "kind": "EndPoint"}], "links": [{"from": "a", "to": "a", "rate_mbps": 100}]}"#);
        assert_eq!(tsn_network_from_json(bad.as_ptr(), &mut net), TsnStatus::ModelError);
        assert!(!last_error().is_empty());
        assert_eq!(tsn_network_from_json(c(NET).as_ptr(), ptr::null_mut()), TsnStatus::NullArgument);
    }

    let h = Handles::new();
    let mut out = ptr::null_mut();
    let wrong = c(r#"{"level": 1, "entries": [1, 0, 0, 1]}"#);
    let status = unsafe { tsn_analyze_json(h.net, h.flows, wrong.as_ptr(), &mut out) };
    assert_eq!(status, TsnStatus::ModelError);
    assert!(out.is_null());
    assert!(last_error().contains("R2") || last_error().contains("non-decreasing"), "{}", last_error());
    let status = unsafe { tsn_analyze_json(ptr::null(), h.flows, ptr::null(), &mut out) };
    assert_eq!(status, TsnStatus::NullArgument);
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        tsn_network_free(ptr::null_mut());
        tsn_flowset_free(ptr::null_mut());
        tsn_string_free(ptr::null_mut());
        assert_eq!(tsn_flowset_len(ptr::null()), 0);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tsnkit.h")).unwrap();
    for name in [
        "tsn_network_from_json",
        "tsn_network_free",
        "tsn_flowset_from_json",
        "tsn_flowset_free",
        "tsn_flowset_len",
        "tsn_analyze_json",
        "tsn_synthesize_json",
        "tsn_simulate_json",
        "tsn_last_error",
        "tsn_string_free",
        "TSN_STATUS_MODEL_ERROR",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = std::env::temp_dir().join(format!("tsnkit-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        "#include \"tsnkit.h\"\nint main(void) {\n  TsnNetwork *n = 0;\n  return tsn_network_from_json(\"{}\", &n) == TSN_STATUS_OK;\n}\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    std::fs::remove_dir_all(&dir).ok();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
