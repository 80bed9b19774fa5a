//! Upstream allocation of a bidirectional load demand over power packets.
//!
//! A load-side router quantizes a continuous demand into one source
//! selection per time slot, announces it with a physical header tag, and
//! closes the conduction path for the payload. Source-side routers read the
//! tag and connect the named source, which may sink current as well as
//! supply it.
//!
//! - [`protocol`]: packet layout, header codec and comparator model
//! - [`plant`]: RC load, discretization and bit-resolution slot solver
//! - [`quantizer`]: dynamic quantizer, reference system, triangular demand,
//!   exhaustive oracle
//! - [`router`]: load-side and source-side slot state machines
//! - [`sim`]: closed-loop experiment, energy statistics, baseline comparison
//! - [`config`], [`export`], [`cli`]: file formats and the command line

pub mod cli;
pub mod config;
pub mod export;
pub mod plant;
pub mod protocol;
pub mod quantizer;
pub mod router;
pub mod sim;

pub use plant::{CircuitParams, DiscretePlant, Discretization};
pub use protocol::{Bits, Header, ProtocolSpec};
pub use quantizer::{QuantizerParams, QuantizerState, ReferenceSpec, TriRange};
pub use sim::{ExperimentConfig, SlotRecord, Trace, WaveformMode};
