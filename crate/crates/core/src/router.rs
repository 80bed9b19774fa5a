//! Per-slot router state machines.
//!
//! The load-side router owns the quantizer. Each slot it picks a source,
//! drives the header onto the line with its signal generator, closes `S_R1`
//! for the payload and pulls the line low for the footer. The source-side
//! router only listens: it reads the header through its comparator and
//! closes the named port for exactly the same payload window. Tags always
//! travel load to source, whatever the direction of power.

use std::time::Duration;

use thiserror::Error;

use crate::protocol::{
    bits_to_waveform, decode_header, encode_header, waveform_to_bits, Bits, Header, LogicWaveform, ProtocolError,
    ProtocolSpec,
};
use crate::quantizer::{quantizer_step, QuantizerError, QuantizerParams, QuantizerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("{0} V is not an available level")]
    NotALevel(f64),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Half-open interval `[start, end)` of absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Duration,
    pub end: Duration,
}

impl Window {
    pub fn contains(&self, t: Duration) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

/// Payload window of the slot starting at `slot_start`.
pub fn payload_window(spec: &ProtocolSpec, slot_start: Duration) -> Window {
    let start = slot_start + spec.header_duration();
    Window { start, end: start + spec.payload_duration() }
}

/// One-hot selection for level `v`.
pub fn comm_map(levels: &[f64], v: f64) -> Result<Vec<bool>, RouterError> {
    let idx = levels.iter().position(|&l| l == v).ok_or(RouterError::NotALevel(v))?;
    Ok((0..levels.len()).map(|i| i == idx).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadPhase {
    #[default]
    Idle,
    SendingHeader,
    Payload,
    Footer,
}

/// Switch drive of the load-side router during one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadSwitches {
    pub phase: LoadPhase,
    pub s_high: bool,
    pub s_low: bool,
    pub s_r1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadRouterState {
    pub quantizer_state: QuantizerState,
    pub switches: LoadSwitches,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSlot {
    /// Level chosen by the quantizer.
    pub v: f64,
    /// Index into the level vector.
    pub port: usize,
    pub header: Bits,
    /// Tag potential over the header window.
    pub header_line: LogicWaveform,
    /// Tag potential over the footer window.
    pub footer_line: LogicWaveform,
    /// `S_R1` closed exactly over this window.
    pub power_window: Window,
    /// Switch drive for every bit of the slot.
    pub timeline: Vec<LoadSwitches>,
    pub next: LoadRouterState,
}

/// Runs the quantizer for demand `u` and lays out one packet from
/// `slot_start`. Level `i` of the quantizer is advertised as source `i + 1`.
pub fn load_router_slot(
    state: &LoadRouterState,
    params: &QuantizerParams,
    u: f64,
    spec: &ProtocolSpec,
    slot_start: Duration,
) -> Result<LoadSlot, RouterError> {
    let q = quantizer_step(params, state.quantizer_state, u)?;
    let header = encode_header(spec, q.port as u32 + 1)?;
    let footer = spec.footer();
    let power_window = payload_window(spec, slot_start);

    let mut timeline = Vec::with_capacity(spec.packet_bit_length());
    timeline.extend(header.iter().map(|b| LoadSwitches {
        phase: LoadPhase::SendingHeader,
        s_high: b,
        s_low: !b,
        s_r1: false,
    }));
    timeline.extend(std::iter::repeat_n(
        LoadSwitches { phase: LoadPhase::Payload, s_high: false, s_low: false, s_r1: true },
        spec.payload_bits as usize,
    ));
    timeline.extend(footer.iter().map(|b| LoadSwitches {
        phase: LoadPhase::Footer,
        s_high: b,
        s_low: !b,
        s_r1: false,
    }));

    Ok(LoadSlot {
        v: q.v,
        port: q.port,
        header_line: bits_to_waveform(spec, &header, slot_start),
        footer_line: bits_to_waveform(spec, &footer, power_window.end),
        header,
        power_window,
        timeline,
        next: LoadRouterState { quantizer_state: q.next, switches: LoadSwitches::default() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourcePhase {
    #[default]
    Listening,
    Conducting,
    Idle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRouterState {
    /// Source index served by each local port.
    pub ports: Vec<u32>,
    pub phase: SourcePhase,
    pub switches: Vec<bool>,
    pub last_header: Option<Header>,
}

impl SourceRouterState {
    pub fn new(ports: Vec<u32>) -> Self {
        let n = ports.len();
        SourceRouterState { ports, phase: SourcePhase::Listening, switches: vec![false; n], last_header: None }
    }

    /// Router serving sources `1..=n` on ports `0..n`.
    pub fn with_sources(n: usize) -> Self {
        Self::new((1..=n as u32).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSlot {
    pub decoded: Result<Header, ProtocolError>,
    /// Local port closed this slot, if any.
    pub port: Option<usize>,
    pub power_window: Option<Window>,
    /// Closed port for every bit of the slot.
    pub timeline: Vec<Option<usize>>,
    pub next: SourceRouterState,
}

impl SourceSlot {
    pub fn switch_vector(&self, bit: usize, n_ports: usize) -> Vec<bool> {
        (0..n_ports).map(|p| self.timeline[bit] == Some(p)).collect()
    }
}

/// Reads the header from the observed line and closes the named local port
/// for the payload window. A header that fails to decode, or names a source
/// not attached here, leaves every switch open for the whole slot.
pub fn source_router_slot(
    state: &SourceRouterState,
    line: &LogicWaveform,
    spec: &ProtocolSpec,
    slot_start: Duration,
) -> SourceSlot {
    let header_len = spec.header_bit_length();
    let decoded = waveform_to_bits(spec, line, slot_start, header_len).and_then(|b| decode_header(spec, &b));
    let port = decoded.as_ref().ok().and_then(|h| state.ports.iter().position(|&s| s == h.source_index));

    let mut timeline = vec![None; spec.packet_bit_length()];
    if let Some(p) = port {
        timeline[header_len..header_len + spec.payload_bits as usize].fill(Some(p));
    }
    let mut next = state.clone();
    next.last_header = decoded.as_ref().ok().copied();
    next.phase = SourcePhase::Listening;
    next.switches.fill(false);

    SourceSlot { decoded, port, power_window: port.map(|_| payload_window(spec, slot_start)), timeline, next }
}
