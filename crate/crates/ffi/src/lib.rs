//! C ABI over `power_packet`.
//!
//! Every function returns a [`PpStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free` function. Panics never cross the boundary.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use power_packet::config::parse_config;
use power_packet::protocol::{decode_header, encode_header, Bits, ProtocolError, ProtocolSpec};
use power_packet::quantizer::{quantizer_step, QuantizerParams, QuantizerState};
use power_packet::sim::{run_experiment, ExperimentConfig, SimError};
use power_packet::Trace;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Framing = 4,
    ReservedIndex = 5,
    IndexOutOfRange = 6,
    Config = 7,
    Simulation = 8,
    Panic = 9,
}

/// One slot of a trace. `source_index` is 0 when no source conducted.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpSlot {
    pub k: u64,
    pub u: f64,
    pub v_selected: f64,
    pub source_index: u32,
    pub x: f64,
    pub y: f64,
    pub y_ref: f64,
    pub current_avg: f64,
    pub energy: f64,
    pub framing_ok: bool,
}

/// Dynamic quantizer with its running state.
pub struct PpQuantizer {
    params: QuantizerParams,
    state: QuantizerState,
}

/// Result of a completed run.
pub struct PpTrace {
    trace: Trace,
}

fn guard(f: impl FnOnce() -> PpStatus) -> PpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(PpStatus::Panic)
}

fn protocol_status(e: &ProtocolError) -> PpStatus {
    match e {
        ProtocolError::Framing { .. } => PpStatus::Framing,
        ProtocolError::ReservedIndex => PpStatus::ReservedIndex,
        ProtocolError::IndexOutOfRange { .. } => PpStatus::IndexOutOfRange,
        _ => PpStatus::InvalidArgument,
    }
}

fn sim_status(e: &SimError) -> PpStatus {
    match e {
        SimError::Config(_) => PpStatus::InvalidArgument,
        _ => PpStatus::Simulation,
    }
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn pp_status_message(status: PpStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PpStatus::Ok => c"ok",
        PpStatus::NullPointer => c"null pointer argument",
        PpStatus::InvalidArgument => c"invalid argument",
        PpStatus::BufferTooSmall => c"output buffer too small",
        PpStatus::Framing => c"start marker mismatch",
        PpStatus::ReservedIndex => c"source index 0 is reserved",
        PpStatus::IndexOutOfRange => c"source index does not fit the index field",
        PpStatus::Config => c"configuration could not be parsed",
        PpStatus::Simulation => c"simulation failed",
        PpStatus::Panic => c"internal error",
    };
    s.as_ptr()
}

/// Header length in bits for the default protocol.
#[no_mangle]
pub extern "C" fn pp_header_bit_length() -> usize {
    ProtocolSpec::default().header_bit_length()
}

/// Writes the header for `index` as 0/1 bytes into `out`, which holds `cap`
/// bytes.
///
/// # Safety
/// `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pp_header_encode(index: u32, out: *mut u8, cap: usize) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return PpStatus::NullPointer;
        }
        let bits = match encode_header(&ProtocolSpec::default(), index) {
            Ok(b) => b,
            Err(e) => return protocol_status(&e),
        };
        if cap < bits.len() {
            return PpStatus::BufferTooSmall;
        }
        for (i, b) in bits.iter().enumerate() {
            *out.add(i) = b as u8;
        }
        PpStatus::Ok
    })
}

/// Decodes `len` bytes of 0/1 (any nonzero byte reads as 1).
///
/// # Safety
/// `bits` must be valid for `len` reads and `index` for one write.
#[no_mangle]
pub unsafe extern "C" fn pp_header_decode(bits: *const u8, len: usize, index: *mut u32) -> PpStatus {
    guard(|| {
        if bits.is_null() || index.is_null() {
            return PpStatus::NullPointer;
        }
        let raw = std::slice::from_raw_parts(bits, len);
        let bits = Bits(raw.iter().map(|&b| b != 0).collect());
        match decode_header(&ProtocolSpec::default(), &bits) {
            Ok(h) => {
                *index = h.source_index;
                PpStatus::Ok
            }
            Err(e) => protocol_status(&e),
        }
    })
}

/// Quantizer designed for the built-in circuit, with zero initial state.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pp_quantizer_new_default(out: *mut *mut PpQuantizer) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return PpStatus::NullPointer;
        }
        let cfg = ExperimentConfig::default();
        let params = match cfg.plant().and_then(|p| cfg.quantizer_params(&p)) {
            Ok(p) => p,
            Err(e) => return sim_status(&e),
        };
        *out = Box::into_raw(Box::new(PpQuantizer { params, state: QuantizerState::default() }));
        PpStatus::Ok
    })
}

/// # Safety
/// `q` must be a live handle; each out pointer must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pp_quantizer_coefficients(
    q: *const PpQuantizer,
    a_q: *mut f64,
    b_q: *mut f64,
    c_q: *mut f64,
) -> PpStatus {
    let Some(q) = q.as_ref() else { return PpStatus::NullPointer };
    for (dst, v) in [(a_q, q.params.a_q), (b_q, q.params.b_q), (c_q, q.params.c_q)] {
        if !dst.is_null() {
            *dst = v;
        }
    }
    PpStatus::Ok
}

/// Advances the quantizer by one slot. `port` is the zero-based level index.
///
/// # Safety
/// `q` must be a live handle; `v` and `port` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_quantizer_step(q: *mut PpQuantizer, u: f64, v: *mut f64, port: *mut usize) -> PpStatus {
    guard(|| {
        let Some(q) = q.as_mut() else { return PpStatus::NullPointer };
        if v.is_null() || port.is_null() {
            return PpStatus::NullPointer;
        }
        match quantizer_step(&q.params, q.state, u) {
            Ok(o) => {
                q.state = o.next;
                *v = o.v;
                *port = o.port;
                PpStatus::Ok
            }
            Err(_) => PpStatus::InvalidArgument,
        }
    })
}

/// # Safety
/// `q` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_quantizer_free(q: *mut PpQuantizer) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

fn finish_run(cfg: &ExperimentConfig, out: *mut *mut PpTrace) -> PpStatus {
    match run_experiment(cfg) {
        Ok(trace) => {
            // SAFETY: callers check `out` for null.
            unsafe { *out = Box::into_raw(Box::new(PpTrace { trace })) };
            PpStatus::Ok
        }
        Err(e) => sim_status(&e),
    }
}

/// Runs the built-in experiment for `n_slots` slots.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pp_run_default(n_slots: u64, out: *mut *mut PpTrace) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return PpStatus::NullPointer;
        }
        *out = ptr::null_mut();
        finish_run(&ExperimentConfig { n_slots, ..Default::default() }, out)
    })
}

/// Runs the experiment described by a NUL-terminated TOML document.
///
/// # Safety
/// `toml` must be a valid C string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pp_run_toml(toml: *const c_char, out: *mut *mut PpTrace) -> PpStatus {
    guard(|| {
        if toml.is_null() || out.is_null() {
            return PpStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let Ok(text) = CStr::from_ptr(toml).to_str() else { return PpStatus::InvalidArgument };
        match parse_config(text) {
            Ok((cfg, _)) => finish_run(&cfg, out),
            Err(_) => PpStatus::Config,
        }
    })
}

/// Number of slots in the trace, 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_trace_len(t: *const PpTrace) -> usize {
    t.as_ref().map_or(0, |t| t.trace.records.len())
}

/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_trace_slot(t: *const PpTrace, k: usize, out: *mut PpSlot) -> PpStatus {
    let Some(t) = t.as_ref() else { return PpStatus::NullPointer };
    if out.is_null() {
        return PpStatus::NullPointer;
    }
    let Some(r) = t.trace.records.get(k) else { return PpStatus::InvalidArgument };
    *out = PpSlot {
        k: r.k,
        u: r.u,
        v_selected: r.v_selected,
        source_index: r.source_index.unwrap_or(0),
        x: r.x,
        y: r.y,
        y_ref: r.y_ref,
        current_avg: r.current_avg,
        energy: r.energy,
        framing_ok: r.framing_ok,
    };
    PpStatus::Ok
}

/// Maximum and RMS tracking error of the run.
///
/// # Safety
/// `t` must be a live handle; out pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pp_trace_errors(t: *const PpTrace, max_error: *mut f64, rms_error: *mut f64) -> PpStatus {
    let Some(t) = t.as_ref() else { return PpStatus::NullPointer };
    if !max_error.is_null() {
        *max_error = t.trace.max_error;
    }
    if !rms_error.is_null() {
        *rms_error = t.trace.rms_error;
    }
    PpStatus::Ok
}

/// Net energy drawn from source `index` (1-based).
///
/// # Safety
/// `t` must be a live handle and `energy` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_trace_source_energy(t: *const PpTrace, index: u32, energy: *mut f64) -> PpStatus {
    let Some(t) = t.as_ref() else { return PpStatus::NullPointer };
    if energy.is_null() {
        return PpStatus::NullPointer;
    }
    match (index as usize).checked_sub(1).and_then(|i| t.trace.source_energy.get(i)) {
        Some(&e) => {
            *energy = e;
            PpStatus::Ok
        }
        None => PpStatus::IndexOutOfRange,
    }
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_trace_free(t: *mut PpTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
