//! Acceptance criteria for the built-in setup. Prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.

use std::time::{Duration, Instant};

use power_packet::cli::cmd_design;
use power_packet::protocol::{bits_to_waveform, decode_header, encode_header, Bits, ProtocolError, ProtocolSpec};
use power_packet::quantizer::{ReferenceSpec, TriRange};
use power_packet::router::{source_router_slot, SourceRouterState};
use power_packet::sim::{
    compare_static_baseline, oracle_window, regeneration_stats, run_experiment, ExperimentConfig, Fault, WaveformMode,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// A computed value reproduces a printed constant when it lies within one
/// unit of the last printed digit.
fn matches_printed(value: f64, printed: &str) -> bool {
    let decimals = printed.split('.').nth(1).map_or(0, str::len) as i32;
    let unit = 10f64.powi(-decimals);
    (value - printed.parse::<f64>().unwrap()).abs() < unit
}

fn design_line(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .map(|v| v.trim().parse().unwrap())
        .unwrap_or_else(|| panic!("{key} missing from design output"))
}

fn quantizer_constants() -> Outcome {
    let mut out = Vec::new();
    cmd_design(&ExperimentConfig::default(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let (a, b, c) = (design_line(&text, "a_q"), design_line(&text, "b_q"), design_line(&text, "c_q"));
    let pass = matches_printed(a, "0.9593") && matches_printed(b, "0.03060") && matches_printed(c, "-31.34");
    outcome(
        pass,
        format!(
            "a_q={a} ({a:.4}) b_q={b} ({b:.5} rounded, {:.5} truncated) c_q={c} ({c:.2}) vs 0.9593 / 0.03060 / -31.34",
            (b * 1e5).trunc() / 1e5
        ),
    )
}

fn header_encoding() -> Outcome {
    let spec = ProtocolSpec::default();
    let h1 = encode_header(&spec, 1).unwrap();
    let h2 = encode_header(&spec, 2).unwrap();
    let pass = h1.to_string() == "101001"
        && h2.to_string() == "101010"
        && decode_header(&spec, &h1).map(|h| h.source_index) == Ok(1)
        && decode_header(&spec, &h2).map(|h| h.source_index) == Ok(2);
    outcome(pass, format!("source 1 -> {h1}, source 2 -> {h2}"))
}

fn packet_timing() -> Outcome {
    let spec = ProtocolSpec::default();
    let pass = spec.packet_bit_length() == 250
        && spec.packet_duration() == Duration::from_millis(1)
        && spec.payload_duration() == Duration::from_micros(960)
        && spec.packet_duration().as_nanos() == 250 * 4_000;
    outcome(
        pass,
        format!(
            "{} bits x {:?} = {:?}, payload {:?}",
            spec.packet_bit_length(),
            spec.bit_duration,
            spec.packet_duration(),
            spec.payload_duration()
        ),
    )
}

fn tracking() -> Outcome {
    let start = Instant::now();
    let cmp = compare_static_baseline(&ExperimentConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let bound = 0.1286;
    let (max, rms, base_rms) = (cmp.dynamic.max_error, cmp.dynamic.rms_error, cmp.memoryless.rms_error);
    let pass = max <= 0.2 && max <= 2.0 * bound && rms < base_rms && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("max|y-yref|={max:.6} V (limit 0.2, 2x{bound}), rms {rms:.6} vs memoryless {base_rms:.6}, {elapsed:?}"),
    )
}

fn bidirectionality() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let trace = run_experiment(&cfg).unwrap();
    let stats = regeneration_stats(&trace, &cfg.reference);
    let elapsed = start.elapsed();
    let negatives_on_battery = trace.records.iter().filter(|r| r.energy < 0.0).all(|r| r.source_index == Some(2));
    let (fall, rise) = (stats.falling.mean_energy(), stats.rising.mean_energy());
    let pass = fall < 0.0 && rise > 0.0 && negatives_on_battery && elapsed < Duration::from_secs(1);

    // Same check under the alternative [-1, 1] triangle, for the record.
    let signed = ReferenceSpec { range: TriRange::Signed, ..cfg.reference };
    let st = run_experiment(&ExperimentConfig { reference: signed, ..cfg.clone() }).unwrap();
    let ss = regeneration_stats(&st, &signed);
    outcome(
        pass,
        format!(
            "mean slot energy falling={fall:.6} J rising={rise:.6} J, negative slots all source 2: {negatives_on_battery} \
             (signed triangle: falling={:.6} J rising={:.6} J), {elapsed:?}",
            ss.falling.mean_energy(),
            ss.rising.mean_energy()
        ),
    )
}

fn oracle_near_optimality() -> Outcome {
    let start = Instant::now();
    let trace = run_experiment(&ExperimentConfig::default()).unwrap();
    let windows: Vec<_> = (0..12u64).map(|i| oracle_window(&trace, i * 20, 12).unwrap()).collect();
    let elapsed = start.elapsed();
    let worst = windows.iter().map(|w| w.ratio()).fold(0.0f64, f64::max);
    let pass = windows.len() >= 10 && worst <= 1.05 && elapsed < Duration::from_secs(10);
    outcome(pass, format!("{} windows of 12 slots, worst dynamic/optimal = {worst:.6}, {elapsed:?}", windows.len()))
}

fn protocol_exhaustive() -> Outcome {
    let spec = ProtocolSpec::default();
    let round_trips = (1..=7)
        .filter(|&i| encode_header(&spec, i).and_then(|b| decode_header(&spec, &b)).map(|h| h.source_index) == Ok(i));
    let round_trips = round_trips.count();

    let mut rejected = 0;
    for word in 0u32..64 {
        if word >> 3 == 0b101 {
            continue;
        }
        let bits = Bits((0..6).rev().map(|i| (word >> i) & 1 == 1).collect());
        if matches!(decode_header(&spec, &bits), Err(ProtocolError::Framing { .. })) {
            rejected += 1;
        }
    }

    let bad: Bits = "001010".parse().unwrap();
    let line = bits_to_waveform(&spec, &bad, Duration::ZERO);
    let slot = source_router_slot(&SourceRouterState::with_sources(2), &line, &spec, Duration::ZERO);
    let router_safe = slot.port.is_none() && slot.timeline.iter().all(Option::is_none);

    let cfg = ExperimentConfig { faults: vec![Fault { slot: 50, bits: bad }], ..Default::default() };
    let trace = run_experiment(&cfg).unwrap();
    let (hit, next) = (&trace.records[50], &trace.records[51]);
    let sim_safe = !hit.framing_ok && hit.energy == 0.0 && hit.source_index.is_none() && next.framing_ok;

    let pass = round_trips == 7 && rejected == 56 && router_safe && sim_safe;
    outcome(
        pass,
        format!("round trips {round_trips}/7, corrupted markers rejected {rejected}/56, fail-safe router {router_safe}, run {sim_safe}"),
    )
}

fn energy_conservation() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig { waveform_mode: WaveformMode::Fine, ..Default::default() };
    let trace = run_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let wave = trace.waveform.as_ref().unwrap();
    let r_load = cfg.circuit.r_load;
    // Trapezoid rule over the bit-resolution load voltage.
    let dissipation: f64 = wave
        .windows(2)
        .map(|w| 0.5 * (w[0].load_voltage.powi(2) + w[1].load_voltage.powi(2)) / r_load * (w[1].time - w[0].time))
        .sum();
    let stored = 0.5 * cfg.circuit.c_load * (trace.x_final.powi(2) - cfg.x0.powi(2));
    let supplied: f64 = trace.source_energy.iter().sum();
    let rel = (supplied - (dissipation + stored)).abs() / supplied.abs();
    let pass = rel <= 0.01 && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!("sources {supplied:.6} J, R_L {dissipation:.6} J + C {stored:.6} J, rel err {rel:.2e}, {elapsed:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 quantizer constants", quantizer_constants),
        ("2 header encoding", header_encoding),
        ("3 packet timing", packet_timing),
        ("4 tracking regulation", tracking),
        ("5 bidirectionality", bidirectionality),
        ("6 oracle near-optimality", oracle_near_optimality),
        ("7 protocol exhaustive", protocol_exhaustive),
        ("8 energy conservation", energy_conservation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += !o.pass as usize;
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
