//! TOML experiment configuration.
//!
//! Four optional sections mirror [`ExperimentConfig`]:
//!
//! ```toml
//! [circuit]
//! source_voltages = [12.0, 3.6]
//! r_eq = [3.3, 3.3]
//! r_load = 10.0
//! c_load = 0.0099
//!
//! [protocol]
//! bit_duration = 4.0e-6        # seconds
//! start_marker = "101"
//! index_bits = 3
//! payload_bits = 240
//! footer_bits = 4
//! signal_high_voltage = 5.0
//! comparator_threshold = 2.5
//!
//! [reference]
//! amplitude = 4.0
//! offset = 8.0
//! period_slots = 125
//! tri_range = "unit"           # or "signed"
//!
//! [run]
//! n_slots = 250
//! discretization = "euler"     # or "zoh"
//! mode = "coarse"              # or "fine"
//! x0 = 0.0
//! xi0 = 0.0
//! faults = [{ slot = 10, bits = "001010" }]
//! ```
//!
//! Unknown keys are rejected. Missing keys take the built-in `paper-2025`
//! values and are reported back to the caller.

use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::plant::{CircuitParams, Discretization};
use crate::protocol::{Bits, ProtocolSpec};
use crate::quantizer::{ReferenceSpec, TriRange};
use crate::sim::{ExperimentConfig, Fault, WaveformMode};

pub const BUILTIN_NAME: &str = "paper-2025";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    circuit: Option<CircuitSection>,
    protocol: Option<ProtocolSection>,
    reference: Option<ReferenceSection>,
    run: Option<RunSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitSection {
    source_voltages: Option<Vec<f64>>,
    r_eq: Option<Vec<f64>>,
    r_load: Option<f64>,
    c_load: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSection {
    bit_duration: Option<f64>,
    start_marker: Option<String>,
    index_bits: Option<u32>,
    payload_bits: Option<u32>,
    footer_bits: Option<u32>,
    signal_high_voltage: Option<f64>,
    comparator_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceSection {
    amplitude: Option<f64>,
    offset: Option<f64>,
    period_slots: Option<u32>,
    tri_range: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    n_slots: Option<u64>,
    discretization: Option<String>,
    mode: Option<String>,
    x0: Option<f64>,
    xi0: Option<f64>,
    faults: Option<Vec<FaultEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultEntry {
    slot: u64,
    bits: String,
}

pub fn parse_discretization(s: &str) -> Option<Discretization> {
    match s {
        "euler" | "forward_euler" => Some(Discretization::ForwardEuler),
        "zoh" => Some(Discretization::Zoh),
        _ => None,
    }
}

pub fn parse_mode(s: &str) -> Option<WaveformMode> {
    match s {
        "coarse" => Some(WaveformMode::Coarse),
        "fine" => Some(WaveformMode::Fine),
        _ => None,
    }
}

pub fn parse_tri_range(s: &str) -> Option<TriRange> {
    match s {
        "unit" => Some(TriRange::Unit),
        "signed" => Some(TriRange::Signed),
        _ => None,
    }
}

/// Records which keys fell back to defaults.
struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: std::fmt::Debug>(&mut self, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(format!("{key} = {default:?}"));
            default
        })
    }
}

fn value_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.to_owned(), message: message.into() }
}

fn keyword<T>(key: &str, raw: Option<String>, parse: fn(&str) -> Option<T>) -> Result<Option<T>, ConfigError> {
    raw.map(|s| parse(&s).ok_or_else(|| value_err(key, format!("unrecognized value {s:?}")))).transpose()
}

/// Parses a config document. Returns the config and the `section.key =
/// value` defaults that were filled in.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
        ConfigError::Parse { line, message: e.message().to_owned() }
    })?;
    let base = ExperimentConfig::default();
    let mut d = Defaults(Vec::new());

    let c = file.circuit.unwrap_or_default();
    let circuit = CircuitParams {
        source_voltages: d.take("circuit.source_voltages", c.source_voltages, base.circuit.source_voltages.clone()),
        r_eq: d.take("circuit.r_eq", c.r_eq, base.circuit.r_eq.clone()),
        r_load: d.take("circuit.r_load", c.r_load, base.circuit.r_load),
        c_load: d.take("circuit.c_load", c.c_load, base.circuit.c_load),
    };

    let p = file.protocol.unwrap_or_default();
    let bit_s = d.take("protocol.bit_duration", p.bit_duration, base.protocol.bit_duration.as_secs_f64());
    if !(bit_s.is_finite() && bit_s > 0.0) {
        return Err(value_err("protocol.bit_duration", "must be a positive number of seconds"));
    }
    let marker = match p.start_marker {
        Some(s) => s.parse::<Bits>().map_err(|e| value_err("protocol.start_marker", e.to_string()))?,
        None => d.take("protocol.start_marker", None, base.protocol.start_marker.clone()),
    };
    let protocol = ProtocolSpec {
        bit_duration: Duration::from_nanos((bit_s * 1e9).round() as u64),
        start_marker: marker,
        index_bits: d.take("protocol.index_bits", p.index_bits, base.protocol.index_bits),
        payload_bits: d.take("protocol.payload_bits", p.payload_bits, base.protocol.payload_bits),
        footer_bits: d.take("protocol.footer_bits", p.footer_bits, base.protocol.footer_bits),
        signal_high_voltage: d.take(
            "protocol.signal_high_voltage",
            p.signal_high_voltage,
            base.protocol.signal_high_voltage,
        ),
        comparator_threshold: d.take(
            "protocol.comparator_threshold",
            p.comparator_threshold,
            base.protocol.comparator_threshold,
        ),
    };

    let r = file.reference.unwrap_or_default();
    let tri = keyword("reference.tri_range", r.tri_range, parse_tri_range)?;
    let reference = ReferenceSpec {
        amplitude: d.take("reference.amplitude", r.amplitude, base.reference.amplitude),
        offset: d.take("reference.offset", r.offset, base.reference.offset),
        period_slots: d.take("reference.period_slots", r.period_slots, base.reference.period_slots),
        range: d.take("reference.tri_range", tri, base.reference.range),
    };

    let run = file.run.unwrap_or_default();
    let disc = keyword("run.discretization", run.discretization, parse_discretization)?;
    let mode = keyword("run.mode", run.mode, parse_mode)?;
    let faults = run
        .faults
        .unwrap_or_default()
        .into_iter()
        .map(|f| {
            let bits =
                f.bits.parse().map_err(|e: crate::protocol::ProtocolError| value_err("run.faults", e.to_string()))?;
            Ok(Fault { slot: f.slot, bits })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;

    let config = ExperimentConfig {
        circuit,
        protocol,
        reference,
        n_slots: d.take("run.n_slots", run.n_slots, base.n_slots),
        discretization: d.take("run.discretization", disc, base.discretization),
        waveform_mode: d.take("run.mode", mode, base.waveform_mode),
        x0: d.take("run.x0", run.x0, base.x0),
        xi0: d.take("run.xi0", run.xi0, base.xi0),
        faults,
        quantizer: base.quantizer,
    };
    Ok((config, d.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_builtin() {
        let (cfg, defaults) = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(defaults.iter().any(|d| d.starts_with("circuit.r_load")));
        assert!(defaults.iter().any(|d| d.starts_with("run.x0")));
    }

    #[test]
    fn module_docs_example_parses() {
        let doc = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! [circuit]"))
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let (cfg, defaults) = parse_config(&doc).unwrap();
        assert!(defaults.is_empty(), "{defaults:?}");
        assert_eq!(cfg.faults.len(), 1);
        assert_eq!(ExperimentConfig { faults: vec![], ..cfg }, ExperimentConfig::default());
    }

    #[test]
    fn overrides() {
        let (cfg, _) = parse_config(
            "[run]\nn_slots = 3\ndiscretization = \"zoh\"\nmode = \"fine\"\n[reference]\ntri_range = \"signed\"\n",
        )
        .unwrap();
        assert_eq!(cfg.n_slots, 3);
        assert_eq!(cfg.discretization, Discretization::Zoh);
        assert_eq!(cfg.waveform_mode, WaveformMode::Fine);
        assert_eq!(cfg.reference.range, TriRange::Signed);
    }

    #[test]
    fn unknown_key_named_with_line() {
        let err = parse_config("[circuit]\nr_load = 10.0\nr_lod = 3.0\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("r_lod"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("[nope]\n"), Err(ConfigError::Parse { line: 1, .. })));
    }

    #[test]
    fn syntax_error_line() {
        let err = parse_config("[run]\nn_slots = 5\nx0 = = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn bad_values() {
        assert!(matches!(parse_config("[run]\nmode = \"medium\"\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(parse_config("[protocol]\nstart_marker = \"1x1\"\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(parse_config("[protocol]\nbit_duration = -1.0\n"), Err(ConfigError::Value { .. })));
    }
}
