//! Whole-run properties of the closed loop.

use proptest::prelude::*;

use power_packet::protocol::{bits_to_waveform, ProtocolSpec};
use power_packet::quantizer::{triangular_reference, ReferenceSpec};
use power_packet::router::{load_router_slot, source_router_slot, LoadRouterState, SourceRouterState};
use power_packet::sim::{run_experiment, ExperimentConfig};
use power_packet::{CircuitParams, Discretization};

#[test]
fn routers_agree_on_every_slot() {
    let cfg = ExperimentConfig::default();
    let plant = cfg.plant().unwrap();
    let params = cfg.quantizer_params(&plant).unwrap();
    let spec = ProtocolSpec::default();
    let mut load = LoadRouterState::default();
    let mut source = SourceRouterState::with_sources(2);
    for k in 0..250u64 {
        let t0 = spec.packet_duration() * k as u32;
        let u = triangular_reference(&cfg.reference, k);
        let ls = load_router_slot(&load, &params, u, &spec, t0).unwrap();
        let ss = source_router_slot(&source, &ls.header_line, &spec, t0);
        assert_eq!(ss.decoded.as_ref().unwrap().source_index as usize, ls.port + 1);
        assert_eq!(ss.port, Some(ls.port));
        assert_eq!(ss.power_window, Some(ls.power_window));
        // At most one source switch closed at any bit.
        assert!(ss.timeline.iter().all(|p| p.is_none() || *p == Some(ls.port)));
        let conducting = ss.timeline.iter().filter(|p| p.is_some()).count();
        assert_eq!(conducting, spec.payload_bits as usize);
        load = ls.next;
        source = ss.next;
    }
}

#[test]
fn trace_error_matches_quantizer_state() {
    // With a zero initial quantizer state the state equals the output error.
    let trace = run_experiment(&ExperimentConfig::default()).unwrap();
    let bound = trace.plant.b * 8.4 / 2.0;
    for r in &trace.records {
        assert!((r.y - r.y_ref).abs() <= bound + 1e-12, "slot {}", r.k);
    }
}

#[test]
fn headers_follow_selection() {
    let trace = run_experiment(&ExperimentConfig::default()).unwrap();
    for r in &trace.records {
        let expected = if r.v_selected == 12.0 { "101001" } else { "101010" };
        assert_eq!(r.header.to_string(), expected);
        assert!(r.framing_ok);
    }
}

#[test]
fn zoh_tracks_as_well() {
    let cfg = ExperimentConfig { discretization: Discretization::Zoh, ..Default::default() };
    let trace = run_experiment(&cfg).unwrap();
    assert!(trace.max_error <= trace.plant.b * 8.4 / 2.0 + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn error_bounded_for_any_reachable_reference(amp in 0.0f64..4.0, offset in 3.6f64..12.0, period in 20u32..400) {
        prop_assume!(offset - amp >= 3.6 && offset + amp <= 12.0);
        let cfg = ExperimentConfig {
            n_slots: 300,
            reference: ReferenceSpec { amplitude: amp, offset, period_slots: period, ..Default::default() },
            ..Default::default()
        };
        let trace = run_experiment(&cfg).unwrap();
        prop_assert!(trace.max_error <= trace.plant.b * 8.4 / 2.0 + 1e-9);
    }

    #[test]
    fn source_energy_sums_slot_energy(n in 1u64..120, x0 in 0.0f64..12.0) {
        let cfg = ExperimentConfig { n_slots: n, x0, ..Default::default() };
        let trace = run_experiment(&cfg).unwrap();
        let total: f64 = trace.records.iter().map(|r| r.energy).sum();
        let by_source: f64 = trace.source_energy.iter().sum();
        prop_assert!((total - by_source).abs() <= 1e-9 * (1.0 + total.abs()));
    }

    #[test]
    fn line_round_trips_through_source_router(index in 1u32..=7) {
        let spec = ProtocolSpec::default();
        let bits = power_packet::protocol::encode_header(&spec, index).unwrap();
        let line = bits_to_waveform(&spec, &bits, spec.packet_duration() * 3);
        let slot = source_router_slot(&SourceRouterState::with_sources(7), &line, &spec, spec.packet_duration() * 3);
        prop_assert_eq!(slot.port, Some(index as usize - 1));
    }
}

#[test]
fn default_circuit_is_two_sources() {
    assert_eq!(CircuitParams::default().n_sources(), 2);
}
