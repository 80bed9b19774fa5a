//! CSV and text output. Floats carry 9 significant digits.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::protocol::LogicWaveform;
use crate::sim::{RegenerationStats, Trace};

pub const TRACE_HEADER: &str = "k,u_V,v_V,source_index,header_bits,x_V,y_V,yref_V,i_avg_A,energy_J,framing_ok";
pub const WAVEFORM_HEADER: &str = "time_s,load_voltage_V,line_potential_V,current_A";
pub const LOGIC_HEADER: &str = "time_s,potential_V";

/// `v` rounded to 9 significant digits, printed in shortest decimal form.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    // Avoid "-0".
    if rounded == 0.0 {
        return "0".to_owned();
    }
    rounded.to_string()
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            sig9(r.u),
            sig9(r.v_selected),
            r.source_index.map(|s| s.to_string()).unwrap_or_default(),
            r.header,
            sig9(r.x),
            sig9(r.y),
            sig9(r.y_ref),
            sig9(r.current_avg),
            sig9(r.energy),
            r.framing_ok
        )?;
    }
    Ok(())
}

/// Writes nothing but the header when the trace has no fine waveform.
pub fn write_waveform_csv<W: Write>(trace: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{WAVEFORM_HEADER}")?;
    for row in trace.waveform.iter().flatten() {
        writeln!(
            w,
            "{},{},{},{}",
            sig9(row.time),
            sig9(row.load_voltage),
            sig9(row.line_potential),
            sig9(row.current)
        )?;
    }
    Ok(())
}

pub fn write_logic_waveform_csv<W: Write>(wave: &LogicWaveform, mut w: W) -> io::Result<()> {
    writeln!(w, "{LOGIC_HEADER}")?;
    for s in &wave.samples {
        writeln!(w, "{},{}", sig9(s.time), sig9(s.potential))?;
    }
    Ok(())
}

pub fn summary_text(trace: &Trace, stats: &RegenerationStats) -> String {
    let mut s = String::new();
    let failed = trace.records.iter().filter(|r| !r.framing_ok).count();
    let _ = writeln!(s, "slots                 {}", trace.records.len());
    let _ = writeln!(s, "framing_errors        {failed}");
    let _ = writeln!(s, "max_abs_error_V       {}", sig9(trace.max_error));
    let _ = writeln!(s, "rms_error_V           {}", sig9(trace.rms_error));
    for (i, e) in trace.source_energy.iter().enumerate() {
        let _ = writeln!(s, "source_{}_energy_J      {}", i + 1, sig9(*e));
    }
    for (name, p) in [("rising", &stats.rising), ("falling", &stats.falling), ("flat", &stats.flat)] {
        let _ = writeln!(
            s,
            "{name:<8} slots={} negative_fraction={} mean_energy_J={}",
            p.slots,
            sig9(p.negative_fraction()),
            sig9(p.mean_energy())
        );
        for (i, e) in p.source_energy.iter().enumerate() {
            let _ = writeln!(s, "{name:<8} source_{}_energy_J={}", i + 1, sig9(*e));
        }
    }
    if let Some(d) = trace.load_dissipation {
        let _ = writeln!(s, "load_dissipation_J    {}", sig9(d));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_experiment, ExperimentConfig, Fault};

    #[test]
    fn significant_digits() {
        assert_eq!(sig9(0.0306091215182), "0.0306091215");
        assert_eq!(sig9(-31.339999999999996), "-31.34");
        assert_eq!(sig9(12.0), "12");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(123456789123.0), "123456789000");
    }

    #[test]
    fn trace_csv_layout() {
        let cfg = ExperimentConfig {
            n_slots: 3,
            faults: vec![Fault { slot: 1, bits: "111111".parse().unwrap() }],
            ..Default::default()
        };
        let trace = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,8,12,1,101001,0,0,0,"));
        assert!(lines[2].contains(",,111111,") && lines[2].ends_with(",0,false"));
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 11));
    }

    #[test]
    fn logic_csv() {
        let spec = crate::protocol::ProtocolSpec::default();
        let w = crate::protocol::bits_to_waveform(&spec, &"10".parse().unwrap(), std::time::Duration::ZERO);
        let mut buf = Vec::new();
        write_logic_waveform_csv(&w, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time_s,potential_V\n0,5\n0.000004,0\n0.000008,0\n");
    }
}
