//! Power packet tag protocol.
//!
//! A packet is `start marker | source index | payload | footer`, every field a
//! whole number of fixed-duration bits. Tags travel as line potential: logic
//! high is `signal_high_voltage`, logic low pulls the line to zero. Receivers
//! recover bits with a threshold comparator sampled at each bit midpoint.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("source index {index} outside 1..={max}")]
    IndexOutOfRange { index: u32, max: u32 },
    #[error("header must be {expected} bits, got {got}")]
    HeaderLength { expected: usize, got: usize },
    #[error("framing error: header starts with {got}, expected {expected}")]
    Framing { expected: Bits, got: Bits },
    #[error("source index 0 is reserved")]
    ReservedIndex,
    #[error("waveform does not cover [{start_s}, {end_s}] s")]
    Coverage { start_s: f64, end_s: f64 },
    #[error("invalid bit character {0:?}")]
    BitChar(char),
    #[error("invalid protocol spec: {0}")]
    InvalidSpec(String),
}

/// Ordered logic bits, serialized as an ASCII `0`/`1` string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Bits(pub Vec<bool>);

impl Bits {
    pub fn zeros(n: usize) -> Self {
        Bits(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn concat(&self, other: &Bits) -> Bits {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Bits(v)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bits {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ProtocolError::BitChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bits)
    }
}

impl From<Vec<bool>> for Bits {
    fn from(v: Vec<bool>) -> Self {
        Bits(v)
    }
}

/// Network-wide bit timing and field layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub bit_duration: Duration,
    pub start_marker: Bits,
    pub index_bits: u32,
    pub payload_bits: u32,
    pub footer_bits: u32,
    pub signal_high_voltage: f64,
    pub comparator_threshold: f64,
}

impl Default for ProtocolSpec {
    /// 4 µs bits, `101` marker, 3 index bits, 240 payload bits, 4 footer bits.
    fn default() -> Self {
        ProtocolSpec {
            bit_duration: Duration::from_nanos(4_000),
            start_marker: Bits(vec![true, false, true]),
            index_bits: 3,
            payload_bits: 240,
            footer_bits: 4,
            signal_high_voltage: 5.0,
            comparator_threshold: 2.5,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::InvalidSpec(m.to_owned()));
        if self.bit_duration.is_zero() {
            return bad("bit_duration must be positive");
        }
        if self.start_marker.is_empty() {
            return bad("start_marker must not be empty");
        }
        if self.index_bits == 0 || self.index_bits > 16 {
            return bad("index_bits must be in 1..=16");
        }
        if self.payload_bits == 0 || self.footer_bits == 0 {
            return bad("payload_bits and footer_bits must be >= 1");
        }
        if !(self.signal_high_voltage.is_finite() && self.comparator_threshold.is_finite())
            || self.comparator_threshold <= 0.0
            || self.comparator_threshold >= self.signal_high_voltage
        {
            return bad("need 0 < comparator_threshold < signal_high_voltage");
        }
        Ok(())
    }

    pub fn header_bit_length(&self) -> usize {
        self.start_marker.len() + self.index_bits as usize
    }

    pub fn packet_bit_length(&self) -> usize {
        self.header_bit_length() + self.payload_bits as usize + self.footer_bits as usize
    }

    /// Largest encodable source index; 0 is reserved.
    pub fn max_source_index(&self) -> u32 {
        (1u32 << self.index_bits) - 1
    }

    fn bits_duration(&self, n: usize) -> Duration {
        self.bit_duration * n as u32
    }

    pub fn header_duration(&self) -> Duration {
        self.bits_duration(self.header_bit_length())
    }

    pub fn payload_duration(&self) -> Duration {
        self.bits_duration(self.payload_bits as usize)
    }

    pub fn footer_duration(&self) -> Duration {
        self.bits_duration(self.footer_bits as usize)
    }

    /// Length of one time slot.
    pub fn packet_duration(&self) -> Duration {
        self.bits_duration(self.packet_bit_length())
    }

    /// Footer content: line held low.
    pub fn footer(&self) -> Bits {
        Bits::zeros(self.footer_bits as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Header {
    pub source_index: u32,
}

/// Start marker followed by the big-endian index.
pub fn encode_header(spec: &ProtocolSpec, source_index: u32) -> Result<Bits, ProtocolError> {
    let max = spec.max_source_index();
    if source_index == 0 || source_index > max {
        return Err(ProtocolError::IndexOutOfRange { index: source_index, max });
    }
    let mut bits = spec.start_marker.0.clone();
    bits.extend((0..spec.index_bits).rev().map(|i| (source_index >> i) & 1 == 1));
    Ok(Bits(bits))
}

pub fn decode_header(spec: &ProtocolSpec, bits: &Bits) -> Result<Header, ProtocolError> {
    let expected = spec.header_bit_length();
    if bits.len() != expected {
        return Err(ProtocolError::HeaderLength { expected, got: bits.len() });
    }
    let (marker, index) = bits.0.split_at(spec.start_marker.len());
    if marker != spec.start_marker.as_slice() {
        return Err(ProtocolError::Framing { expected: spec.start_marker.clone(), got: Bits(marker.to_vec()) });
    }
    let source_index = index.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
    if source_index == 0 {
        return Err(ProtocolError::ReservedIndex);
    }
    Ok(Header { source_index })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSample {
    pub time: f64,
    pub potential: f64,
}

/// Zero-order-hold line potential: each sample holds until the next one. The
/// last sample only closes the covered interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogicWaveform {
    pub samples: Vec<WaveSample>,
}

impl LogicWaveform {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.time)
    }

    pub fn end(&self) -> Option<f64> {
        self.samples.last().map(|s| s.time)
    }

    /// Potential held at `t`, or `None` outside the covered interval.
    pub fn potential_at(&self, t: f64) -> Option<f64> {
        let (start, end) = (self.start()?, self.end()?);
        if t < start || t > end {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.time <= t);
        Some(self.samples[idx.saturating_sub(1)].potential)
    }

    /// Appends `other`, dropping our closing sample when it coincides with
    /// `other`'s first sample.
    pub fn extend(&mut self, other: &LogicWaveform) {
        if let (Some(end), Some(first)) = (self.end(), other.start()) {
            if end == first {
                self.samples.pop();
            }
        }
        self.samples.extend_from_slice(&other.samples);
    }
}

fn ns_to_s(ns: u128) -> f64 {
    ns as f64 / 1e9
}

pub fn bits_to_waveform(spec: &ProtocolSpec, bits: &Bits, t0: Duration) -> LogicWaveform {
    if bits.is_empty() {
        return LogicWaveform::default();
    }
    let (t0, bd) = (t0.as_nanos(), spec.bit_duration.as_nanos());
    let level = |b: bool| if b { spec.signal_high_voltage } else { 0.0 };
    let mut samples: Vec<WaveSample> = bits
        .iter()
        .enumerate()
        .map(|(i, b)| WaveSample { time: ns_to_s(t0 + i as u128 * bd), potential: level(b) })
        .collect();
    let last = samples[samples.len() - 1].potential;
    samples.push(WaveSample { time: ns_to_s(t0 + bits.len() as u128 * bd), potential: last });
    LogicWaveform { samples }
}

/// Comparator model: bit `i` is high iff the potential at the bit midpoint
/// exceeds `comparator_threshold`.
pub fn waveform_to_bits(
    spec: &ProtocolSpec,
    waveform: &LogicWaveform,
    t0: Duration,
    n_bits: usize,
) -> Result<Bits, ProtocolError> {
    if n_bits == 0 {
        return Ok(Bits::default());
    }
    let (t0, bd) = (t0.as_nanos(), spec.bit_duration.as_nanos());
    let start_s = ns_to_s(t0);
    let end_s = ns_to_s(t0 + n_bits as u128 * bd);
    let covered = matches!((waveform.start(), waveform.end()), (Some(a), Some(b)) if a <= start_s && b >= end_s);
    if !covered {
        return Err(ProtocolError::Coverage { start_s, end_s });
    }
    (0..n_bits)
        .map(|i| {
            let mid = (t0 as f64 + (i as f64 + 0.5) * bd as f64) / 1e9;
            waveform
                .potential_at(mid)
                .map(|p| p > spec.comparator_threshold)
                .ok_or(ProtocolError::Coverage { start_s, end_s })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Bits)
}
