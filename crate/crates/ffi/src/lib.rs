//! C ABI over the streaming engine and the cost model.
//!
//! Objects are opaque handles created by `ds_*_new`/`ds_*_from_*` and
//! released by the matching `ds_*_free`. Every fallible call returns a
//! [`DsStatus`]; on failure [`ds_last_error_message`] describes the error
//! for the calling thread until its next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use deepshift::complexity::{count_normal_deepest_fixed, count_normal_input_fixed, speedup_factor, CostParams};
use deepshift::io::ModelFile;
use deepshift::{Error, NetworkSpec, ShiftEngine};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    WindowUnderflow = 3,
    StaleCache = 4,
    Parse = 5,
    Infeasible = 6,
    Panic = 7,
}

/// Immutable network weights.
pub struct DsNetwork {
    net: NetworkSpec,
}

/// Streaming engine with cached layer activations.
pub struct DsEngine {
    engine: ShiftEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into().into_bytes();
    msg.retain(|&b| b != 0);
    let msg = CString::new(msg).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DsStatus {
    match e {
        Error::WindowUnderflow { .. } => DsStatus::WindowUnderflow,
        Error::StaleCache { .. } => DsStatus::StaleCache,
        Error::InfeasibleStack { .. } => DsStatus::Infeasible,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => DsStatus::Parse,
        _ => DsStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DsStatus>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DsStatus::Panic
        }
    }
}

fn fail(e: Error) -> DsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> DsStatus {
    set_error(format!("{what} is null"));
    DsStatus::NullPointer
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], DsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message for the calling thread's most recent failure; empty if none.
/// The pointer stays valid until the thread's next failing call.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a model file (JSON text) into a network handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_network_from_json(json: *const c_char, out: *mut *mut DsNetwork) -> DsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(Error::Parse(format!("model is not UTF-8: {e}"))))?;
        let file = ModelFile::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(DsNetwork { net: file.network }));
        Ok(())
    })
}

/// Input channels of the first layer; 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_network_input_channels(net: *const DsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.c_in())
}

/// Output channels of the deepest layer; 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_network_output_channels(net: *const DsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.c_out())
}

/// Number of layers; 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_network_depth(net: *const DsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.depth())
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_network_free(net: *mut DsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Create an engine retaining `deepest_retained` frames of the deepest
/// layer. The engine copies the weights; `net` may be freed afterwards.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_new(
    net: *const DsNetwork,
    deepest_retained: usize,
    out: *mut *mut DsEngine,
) -> DsStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let engine = ShiftEngine::new(net.net.clone(), deepest_retained).map_err(fail)?;
        *out = Box::into_raw(Box::new(DsEngine { engine }));
        Ok(())
    })
}

/// Push one input frame of `len` values. When the deepest layer produced
/// a frame it is copied to `out` (`out_len` must equal the output channel
/// count) and `*produced` is set to true.
///
/// # Safety
/// `engine` must be live; `frame` must point to `len` doubles and `out` to
/// `out_len` doubles; `produced` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_push(
    engine: *mut DsEngine,
    frame: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
    produced: *mut bool,
) -> DsStatus {
    guard(|| {
        let e = engine.as_mut().ok_or_else(|| null("engine"))?;
        if produced.is_null() {
            return Err(null("produced"));
        }
        *produced = false;
        let c_out = e.engine.network().c_out();
        if out_len != c_out {
            return Err(fail(Error::InvalidInput(format!(
                "output buffer holds {out_len} values, network emits {c_out}"
            ))));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let frame = slice(frame, len, "frame")?;
        let res = e.engine.push_frame(frame).map_err(fail)?;
        if let Some(f) = res.deepest() {
            std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(f);
            *produced = true;
        }
        Ok(())
    })
}

/// Swap in new weights of identical shape, discarding every cached activation.
///
/// # Safety
/// `engine` and `net` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_invalidate(engine: *mut DsEngine, net: *const DsNetwork) -> DsStatus {
    guard(|| {
        let e = engine.as_mut().ok_or_else(|| null("engine"))?;
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        e.engine.invalidate(n.net.clone()).map_err(fail)
    })
}

/// Clear cached activations and the frame count, keeping the weights.
/// The operation total keeps accumulating.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_reset(engine: *mut DsEngine) -> DsStatus {
    guard(|| {
        engine.as_mut().ok_or_else(|| null("engine"))?.engine.reset();
        Ok(())
    })
}

/// Convolution operations performed over the engine's lifetime.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_ops_total(engine: *const DsEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.engine.counter().total())
}

/// Frames pushed since creation or the last reset.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_frames_seen(engine: *const DsEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.engine.frames_seen())
}

/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_free(engine: *mut DsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Naive operations with the deepest layer's length fixed at `t`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_count_normal_deepest_fixed(n: usize, t: usize, w: usize, out: *mut u64) -> DsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = count_normal_deepest_fixed(CostParams::new(n, t, w));
        Ok(())
    })
}

/// Naive operations with the input length fixed at `t`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_count_normal_input_fixed(n: usize, t: usize, w: usize, out: *mut u64) -> DsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = count_normal_input_fixed(CostParams::new(n, t, w)).map_err(fail)?;
        Ok(())
    })
}

/// Naive-to-cached operation ratio for an input of length `t`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_speedup_factor(n: usize, t: usize, w: usize, out: *mut f64) -> DsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = speedup_factor(CostParams::new(n, t, w)).map_err(fail)?;
        Ok(())
    })
}
