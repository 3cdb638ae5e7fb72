//! C interface to tsnkit.
//!
//! Networks and flow sets are opaque handles built from the same JSON the
//! command-line tool reads. Every operation returns a [`TsnStatus`]; on
//! failure [`tsn_last_error`] describes the cause. Strings handed out by the
//! library are released with [`tsn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsnkit::analysis::{analyze, AnalysisOptions};
use tsnkit::config::{PreemptionConfig, Scheme};
use tsnkit::network::{flows_from_json, network_from_json, route_all, validate_flows, Flow, Network, Routes};
use tsnkit::sim::{simulate, SimConfig};
use tsnkit::synthesis::{assign_preemption_class, SynthesisOptions};
use tsnkit::time::Duration;
use tsnkit::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a value of the wrong shape.
    ParseError = 3,
    /// The input parsed but describes an invalid network, flow set or configuration.
    ModelError = 4,
    Panic = 5,
}

/// Opaque network handle.
pub struct TsnNetwork(Network);

/// Opaque flow-set handle.
pub struct TsnFlowSet(Vec<Flow>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TsnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Json(_) | Error::Parse(_) => TsnStatus::ParseError,
            _ => TsnStatus::ModelError,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TsnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(TsnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TsnStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(TsnStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(out: *mut *mut T) -> Result<&'static mut *mut T, Failure> {
    // SAFETY: callers pass either null or a writable pointer slot.
    unsafe { out.as_mut() }.ok_or_else(|| Failure(TsnStatus::NullArgument, "output pointer is null".into()))
}

fn give_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let slot = out_ptr(out)?;
    let c = CString::new(s).map_err(|_| Failure(TsnStatus::Panic, "report contains a nul byte".into()))?;
    *slot = c.into_raw();
    Ok(())
}

fn prepare(net: &TsnNetwork, flows: &TsnFlowSet) -> Result<Routes, Failure> {
    validate_flows(&net.0, &flows.0)?;
    Ok(route_all(&net.0, &flows.0)?)
}

/// Null selects the classes stored on the flows when every flow has one,
/// and the non-preemptive configuration otherwise.
unsafe fn config(flows: &[Flow], config_json: *const c_char) -> Result<PreemptionConfig, Failure> {
    let scheme = if config_json.is_null() {
        if flows.iter().all(|f| f.class.is_some()) {
            Scheme::FromFlows
        } else {
            Scheme::NonPreemptive
        }
    } else {
        let c: PreemptionConfig = serde_json::from_str(text(config_json, "config")?).map_err(Error::from)?;
        Scheme::Config(c)
    };
    Ok(scheme.resolve(flows)?)
}

/// Parses a network. On success `*out` owns a handle for [`tsn_network_free`].
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tsn_network_from_json(json: *const c_char, out: *mut *mut TsnNetwork) -> TsnStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let n = network_from_json(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(TsnNetwork(n)));
        Ok(())
    })
}

/// # Safety
/// `network` must be null or a handle from [`tsn_network_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsn_network_free(network: *mut TsnNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Parses a flow list. On success `*out` owns a handle for [`tsn_flowset_free`].
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tsn_flowset_from_json(json: *const c_char, out: *mut *mut TsnFlowSet) -> TsnStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let f = flows_from_json(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(TsnFlowSet(f)));
        Ok(())
    })
}

/// # Safety
/// `flows` must be null or a handle from [`tsn_flowset_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsn_flowset_free(flows: *mut TsnFlowSet) {
    if !flows.is_null() {
        drop(Box::from_raw(flows));
    }
}

/// Number of flows in the set, or 0 for a null handle.
///
/// # Safety
/// `flows` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsn_flowset_len(flows: *const TsnFlowSet) -> usize {
    flows.as_ref().map_or(0, |f| f.0.len())
}

/// Runs the traversal-time analysis and writes the JSON report to `*out`.
/// `config_json` is null or `{"level": m, "entries": [..]}`.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or null; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tsn_analyze_json(
    network: *const TsnNetwork,
    flows: *const TsnFlowSet,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> TsnStatus {
    guard(|| {
        let (net, fs) = (handle(network, "network")?, handle(flows, "flows")?);
        let routes = prepare(net, fs)?;
        let c = config(&fs.0, config_json)?;
        let report = analyze(&net.0, &fs.0, &routes, &c, &AnalysisOptions::default())?;
        give_string(out, report.to_json())
    })
}

/// Searches for the lowest schedulable preemption level and writes the
/// result as JSON to `*out`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tsn_synthesize_json(
    network: *const TsnNetwork,
    flows: *const TsnFlowSet,
    out: *mut *mut c_char,
) -> TsnStatus {
    guard(|| {
        let (net, fs) = (handle(network, "network")?, handle(flows, "flows")?);
        let routes = prepare(net, fs)?;
        let opts = SynthesisOptions { parallel: true, ..SynthesisOptions::default() };
        let result = assign_preemption_class(&net.0, &fs.0, &routes, &opts)?;
        give_string(out, serde_json::to_string_pretty(&result).map_err(Error::from)?)
    })
}

/// Simulates with random phases drawn from `seed` up to `horizon_us`
/// microseconds (0 means 100 times the largest period) and writes the JSON
/// report to `*out`.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or null; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tsn_simulate_json(
    network: *const TsnNetwork,
    flows: *const TsnFlowSet,
    config_json: *const c_char,
    horizon_us: u64,
    seed: u64,
    out: *mut *mut c_char,
) -> TsnStatus {
    guard(|| {
        let (net, fs) = (handle(network, "network")?, handle(flows, "flows")?);
        let routes = prepare(net, fs)?;
        let c = config(&fs.0, config_json)?;
        let horizon = if horizon_us == 0 {
            fs.0.iter().map(|f| f.period).max().unwrap_or(Duration::ZERO) * 100u64
        } else {
            let us = i64::try_from(horizon_us).map_err(|_| Failure(TsnStatus::ModelError, "horizon too large".into()))?;
            Duration::from_micros(us)
        };
        let report = simulate(&net.0, &fs.0, &routes, &c, &SimConfig::new(horizon, seed))?;
        give_string(out, report.to_json())
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tsn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
