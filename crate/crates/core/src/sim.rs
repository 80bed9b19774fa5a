//! Closed-loop experiment: demand reference, load-side quantizer, tag on the
//! line, source-side decode, plant update, and the reference system running
//! alongside from the same initial state.

use std::time::Duration;

use log::warn;
use thiserror::Error;

use crate::plant::{discretize, fine_step, CircuitParams, DiscretePlant, Discretization, PlantError, SlotTiming};
use crate::protocol::{Bits, ProtocolError, ProtocolSpec};
use crate::quantizer::{
    brute_force_optimal, design_quantizer, quantizer_step, reference_step, sequence_cost, triangular_reference,
    OptimalSequence, QuantizerError, QuantizerParams, QuantizerState, ReferenceSpec, SequenceCost,
};
use crate::router::{load_router_slot, source_router_slot, LoadRouterState, RouterError, SourceRouterState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Router(#[from] RouterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveformMode {
    /// One plant update per slot with the source treated as connected for
    /// the whole slot.
    #[default]
    Coarse,
    /// Bit-resolution exact solution with switches open during tags.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantizerKind {
    #[default]
    Dynamic,
    /// Nearest level of `u(k)` with no error memory.
    Memoryless,
}

/// Header bits put on the line at `slot` in place of the real header.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub slot: u64,
    pub bits: Bits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub circuit: CircuitParams,
    pub protocol: ProtocolSpec,
    pub reference: ReferenceSpec,
    pub n_slots: u64,
    pub discretization: Discretization,
    pub waveform_mode: WaveformMode,
    pub x0: f64,
    pub xi0: f64,
    pub faults: Vec<Fault>,
    pub quantizer: QuantizerKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            circuit: CircuitParams::default(),
            protocol: ProtocolSpec::default(),
            reference: ReferenceSpec::default(),
            n_slots: 250,
            discretization: Discretization::ForwardEuler,
            waveform_mode: WaveformMode::Coarse,
            x0: 0.0,
            xi0: 0.0,
            faults: Vec::new(),
            quantizer: QuantizerKind::Dynamic,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.circuit.validate()?;
        self.protocol.validate()?;
        if self.n_slots == 0 {
            return bad("n_slots must be >= 1".into());
        }
        if !self.x0.is_finite() || !self.xi0.is_finite() {
            return bad("x0 and xi0 must be finite".into());
        }
        let n = self.circuit.n_sources();
        if n as u64 > self.protocol.max_source_index() as u64 {
            return bad(format!("{n} sources need more than {} index bits", self.protocol.index_bits));
        }
        if self.reference.period_slots < 2 {
            return bad("reference period must be >= 2 slots".into());
        }
        if !(self.reference.amplitude.is_finite() && self.reference.offset.is_finite()) {
            return bad("reference amplitude and offset must be finite".into());
        }
        let header_len = self.protocol.header_bit_length();
        if let Some(f) = self.faults.iter().find(|f| f.bits.len() != header_len) {
            return bad(format!("fault at slot {} has {} bits, header is {header_len}", f.slot, f.bits.len()));
        }
        let lo = self.circuit.source_voltages.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.circuit.source_voltages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (r, a) = (self.reference.offset, self.reference.amplitude.abs());
        if r - a < lo || r + a > hi {
            warn!("reference range [{}, {}] V leaves the level range [{lo}, {hi}] V", r - a, r + a);
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<DiscretePlant, SimError> {
        Ok(discretize(&self.circuit, self.protocol.packet_duration(), self.discretization)?)
    }

    pub fn quantizer_params(&self, plant: &DiscretePlant) -> Result<QuantizerParams, SimError> {
        Ok(match self.quantizer {
            QuantizerKind::Dynamic => design_quantizer(plant)?,
            QuantizerKind::Memoryless => QuantizerParams::memoryless(plant.levels.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub k: u64,
    pub t_start: Duration,
    pub u: f64,
    pub v_selected: f64,
    /// Source that actually conducted.
    pub source_index: Option<u32>,
    /// Bits that were on the line.
    pub header: Bits,
    /// Load voltage at slot start.
    pub x: f64,
    pub y: f64,
    pub y_ref: f64,
    /// Mean path current over the payload window, positive into the load.
    pub current_avg: f64,
    /// Energy delivered into the load terminals through the conduction path
    /// over the payload window.
    pub energy: f64,
    pub framing_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineRow {
    pub time: f64,
    pub load_voltage: f64,
    pub line_potential: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<SlotRecord>,
    /// Net energy per source, indexed like the level vector.
    pub source_energy: Vec<f64>,
    /// `max |y - y_ref|` over `k >= 1`.
    pub max_error: f64,
    /// RMS of `y - y_ref` over `k >= 1`.
    pub rms_error: f64,
    /// Load voltage after the last slot.
    pub x_final: f64,
    pub plant: DiscretePlant,
    pub quantizer: QuantizerParams,
    /// Bit-resolution waveform, fine mode only.
    pub waveform: Option<Vec<FineRow>>,
    /// `∫ x²/R_L dt` over the run, fine mode only.
    pub load_dissipation: Option<f64>,
}

/// Coarse-mode payload accounting with the trapezoid mean of the slot's end
/// states standing in for the load voltage.
fn coarse_payload(params: &CircuitParams, port: usize, x0: f64, x1: f64, payload_s: f64) -> (f64, f64) {
    let x_mid = 0.5 * (x0 + x1);
    let i = (params.source_voltages[port] - x_mid) / params.r_eq[port];
    (i, i * x_mid * payload_s)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let plant = config.plant()?;
    let qparams = config.quantizer_params(&plant)?;
    let spec = &config.protocol;
    let timing = SlotTiming::from(spec);
    let payload_s = spec.payload_duration().as_secs_f64();
    let n_src = config.circuit.n_sources();

    let mut load = LoadRouterState { quantizer_state: QuantizerState { xi: config.xi0 }, ..Default::default() };
    let mut source = SourceRouterState::with_sources(n_src);
    let (mut x, mut x_ref) = (config.x0, config.x0);
    let mut records = Vec::with_capacity(config.n_slots as usize);
    let mut source_energy = vec![0.0; n_src];
    let fine = config.waveform_mode == WaveformMode::Fine;
    let mut waveform = fine.then(Vec::new);
    let mut dissipation = 0.0;

    for k in 0..config.n_slots {
        let t_start = spec.packet_duration() * k as u32;
        let u = triangular_reference(&config.reference, k);
        let slot = load_router_slot(&load, &qparams, u, spec, t_start)?;

        let (header, line) = match config.faults.iter().find(|f| f.slot == k) {
            Some(f) => (f.bits.clone(), crate::protocol::bits_to_waveform(spec, &f.bits, t_start)),
            None => (slot.header.clone(), slot.header_line.clone()),
        };
        let src = source_router_slot(&source, &line, spec, t_start);
        let port = src.port.map(|p| src.next.ports[p] as usize - 1);

        let (x_next, current_avg, energy) = if fine {
            let f = fine_step(&config.circuit, timing, x, port, t_start)?;
            dissipation += f.load_dissipation;
            if let Some(rows) = waveform.as_mut() {
                let header_len = timing.header_bits;
                let footer_start = header_len + timing.payload_bits;
                rows.extend(f.samples.iter().enumerate().map(|(i, s)| {
                    let line_potential = if i < header_len {
                        spec.signal_high_voltage * header.as_slice()[i] as u8 as f64
                    } else if i >= footer_start {
                        slot.footer_line.potential_at(s.time).unwrap_or(0.0)
                    } else {
                        s.load_voltage
                    };
                    FineRow { time: s.time, load_voltage: s.load_voltage, line_potential, current: s.current }
                }));
            }
            (f.x_end, f.payload_charge / payload_s, f.payload_energy)
        } else {
            let x_next = plant.advance(x, port);
            match port {
                Some(p) => {
                    let (i, e) = coarse_payload(&config.circuit, p, x, x_next, payload_s);
                    (x_next, i, e)
                }
                None => (x_next, 0.0, 0.0),
            }
        };
        if let Some(p) = port {
            source_energy[p] += energy;
        }

        records.push(SlotRecord {
            k,
            t_start,
            u,
            v_selected: slot.v,
            source_index: port.map(|p| p as u32 + 1),
            header,
            x,
            y: plant.c * x,
            y_ref: plant.c * x_ref,
            current_avg,
            energy,
            framing_ok: src.decoded.is_ok(),
        });

        x = x_next;
        x_ref = reference_step(&plant, x_ref, u).0;
        load = slot.next;
        source = src.next;
    }

    if let Some(rows) = waveform.as_mut() {
        let end = spec.packet_duration() * config.n_slots as u32;
        rows.push(FineRow { time: end.as_secs_f64(), load_voltage: x, line_potential: 0.0, current: 0.0 });
    }

    let errors: Vec<f64> = records.iter().skip(1).map(|r| r.y - r.y_ref).collect();
    let max_error = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let rms_error =
        if errors.is_empty() { 0.0 } else { (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt() };

    Ok(Trace {
        records,
        source_energy,
        max_error,
        rms_error,
        x_final: x,
        plant,
        quantizer: qparams,
        waveform,
        load_dissipation: fine.then_some(dissipation),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub slots: usize,
    pub positive: usize,
    pub negative: usize,
    pub total_energy: f64,
    /// Net energy per source within this partition.
    pub source_energy: Vec<f64>,
}

impl Partition {
    pub fn mean_energy(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.total_energy / self.slots as f64
        }
    }

    pub fn negative_fraction(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.negative as f64 / self.slots as f64
        }
    }
}

/// Slot energies split by the sign of the reference slope. Vertex slots and
/// flat references land in `flat`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegenerationStats {
    pub rising: Partition,
    pub falling: Partition,
    pub flat: Partition,
}

pub fn regeneration_stats(trace: &Trace, reference: &ReferenceSpec) -> RegenerationStats {
    let n = trace.source_energy.len();
    let empty = || Partition { source_energy: vec![0.0; n], ..Default::default() };
    let mut stats = RegenerationStats { rising: empty(), falling: empty(), flat: empty() };
    for r in &trace.records {
        let part = match reference.slope_sign(r.k) {
            1 => &mut stats.rising,
            -1 => &mut stats.falling,
            _ => &mut stats.flat,
        };
        part.slots += 1;
        part.positive += (r.energy > 0.0) as usize;
        part.negative += (r.energy < 0.0) as usize;
        part.total_energy += r.energy;
        if let Some(s) = r.source_index {
            part.source_energy[s as usize - 1] += r.energy;
        }
    }
    stats
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineComparison {
    pub dynamic: Trace,
    pub memoryless: Trace,
}

impl BaselineComparison {
    pub fn table(&self) -> String {
        format!(
            "quantizer   max_err_V   rms_err_V\ndynamic     {:<11.6} {:.6}\nmemoryless  {:<11.6} {:.6}\n",
            self.dynamic.max_error, self.dynamic.rms_error, self.memoryless.max_error, self.memoryless.rms_error
        )
    }
}

/// Runs the config with the dynamic quantizer and with memoryless
/// nearest-level selection, concurrently.
pub fn compare_static_baseline(config: &ExperimentConfig) -> Result<BaselineComparison, SimError> {
    let dyn_cfg = ExperimentConfig { quantizer: QuantizerKind::Dynamic, ..config.clone() };
    let mem_cfg = ExperimentConfig { quantizer: QuantizerKind::Memoryless, ..config.clone() };
    let (dynamic, memoryless) = std::thread::scope(|s| {
        let h = s.spawn(|| run_experiment(&mem_cfg));
        let d = run_experiment(&dyn_cfg);
        (d, h.join().expect("baseline run panicked"))
    });
    Ok(BaselineComparison { dynamic: dynamic?, memoryless: memoryless? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleWindow {
    pub start: u64,
    pub dynamic_ports: Vec<usize>,
    pub dynamic: SequenceCost,
    pub optimal: OptimalSequence,
}

impl OracleWindow {
    /// Dynamic minimax error over the optimal one; 1 when both are zero.
    pub fn ratio(&self) -> f64 {
        if self.optimal.cost.max_error == 0.0 {
            if self.dynamic.max_error == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.dynamic.max_error / self.optimal.cost.max_error
        }
    }
}

/// Restarts plant and reference from the recorded load voltage at `start`,
/// runs a fresh dynamic quantizer over the next `horizon` demands and
/// compares it with the exhaustive optimum on the same window.
pub fn oracle_window(trace: &Trace, start: u64, horizon: usize) -> Result<OracleWindow, SimError> {
    let s = start as usize;
    if s + horizon > trace.records.len() {
        return Err(SimError::Config(format!("window {start}+{horizon} exceeds trace length")));
    }
    let u: Vec<f64> = trace.records[s..s + horizon].iter().map(|r| r.u).collect();
    let x0 = trace.records[s].x;
    let q = design_quantizer(&trace.plant)?;
    let mut state = QuantizerState::default();
    let mut ports = Vec::with_capacity(horizon);
    for &uk in &u {
        let out = quantizer_step(&q, state, uk)?;
        ports.push(out.port);
        state = out.next;
    }
    Ok(OracleWindow {
        start,
        dynamic: sequence_cost(&trace.plant, &u, x0, &ports),
        dynamic_ports: ports,
        optimal: brute_force_optimal(&trace.plant, &u, x0)?,
    })
}
