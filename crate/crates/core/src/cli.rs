//! Command-line front end.
//!
//! Exit codes: 0 success, 2 parse/usage, 3 forward-Euler instability,
//! 4 I/O, 5 framing.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{parse_config, ConfigError, BUILTIN_NAME};
use crate::export::{self, sig9};
use crate::plant::{discretize, Discretization, PlantError};
use crate::protocol::{bits_to_waveform, decode_header, encode_header, Bits, ProtocolError};
use crate::quantizer::{design_quantizer, TriRange};
use crate::sim::{
    compare_static_baseline, regeneration_stats, run_experiment, ExperimentConfig, SimError, WaveformMode,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Stability(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Framing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Stability(_) => 3,
            CliError::Io(_) => 4,
            CliError::Framing(_) => 5,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Plant(PlantError::Unstable(_)) => CliError::Stability(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Parse(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "power-packet", version, about = "Power packet upstream-allocation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DiscretizationArg {
    Euler,
    Zoh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TriRangeArg {
    Unit,
    Signed,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// TOML config; the built-in paper-2025 setup when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub discretization: Option<DiscretizationArg>,
    #[arg(long)]
    pub slots: Option<u64>,
    #[arg(long, value_enum)]
    pub tri_range: Option<TriRangeArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print plant coefficients and the optimal quantizer constants
    Design(ConfigArgs),
    /// Run the closed-loop experiment and write traces
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the dynamic quantizer against memoryless selection
    Compare(ConfigArgs),
    /// Encode or decode header tags
    Tag {
        #[command(subcommand)]
        action: TagAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum TagAction {
    /// Print the header for a source index
    Encode { index: u32 },
    /// Print the source index named by a header
    Decode { bits: String },
    /// Print the line potential of a bit string as CSV
    Wave {
        bits: String,
        /// Start time in microseconds
        #[arg(long, default_value_t = 0)]
        t0_us: u64,
    },
}

/// Loads the config and applies flag overrides. Defaults are echoed to
/// `err`.
pub fn load_config(args: &ConfigArgs, err: &mut dyn Write) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let (cfg, defaults) =
                parse_config(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            for d in defaults {
                let _ = writeln!(err, "default {d}");
            }
            cfg
        }
        None => {
            let _ = writeln!(err, "using built-in config {BUILTIN_NAME}");
            ExperimentConfig::default()
        }
    };
    if let Some(m) = args.mode {
        cfg.waveform_mode = match m {
            ModeArg::Coarse => WaveformMode::Coarse,
            ModeArg::Fine => WaveformMode::Fine,
        };
    }
    if let Some(d) = args.discretization {
        cfg.discretization = match d {
            DiscretizationArg::Euler => Discretization::ForwardEuler,
            DiscretizationArg::Zoh => Discretization::Zoh,
        };
    }
    if let Some(n) = args.slots {
        cfg.n_slots = n;
    }
    if let Some(t) = args.tri_range {
        cfg.reference.range = match t {
            TriRangeArg::Unit => TriRange::Unit,
            TriRangeArg::Signed => TriRange::Signed,
        };
    }
    Ok(cfg)
}

pub fn cmd_design(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let t = cfg.protocol.packet_duration();
    let _ = writeln!(out, "t_packet_s      {}", sig9(t.as_secs_f64()));
    for (name, m) in [("euler", Discretization::ForwardEuler), ("zoh", Discretization::Zoh)] {
        match discretize(&cfg.circuit, t, m) {
            Ok(p) => {
                let _ = writeln!(out, "{name:<6} a       {}", sig9(p.a));
                let _ = writeln!(out, "{name:<6} b       {}", sig9(p.b));
            }
            Err(e) => {
                let _ = writeln!(out, "{name:<6} {e}");
            }
        }
    }
    let plant = cfg.plant()?;
    let q = design_quantizer(&plant).map_err(|e| CliError::Parse(e.to_string()))?;
    let selected = match cfg.discretization {
        Discretization::ForwardEuler => "euler",
        Discretization::Zoh => "zoh",
    };
    let _ = writeln!(out, "selected        {selected}");
    let _ = writeln!(out, "a_q             {}", sig9(q.a_q));
    let _ = writeln!(out, "b_q             {}", sig9(q.b_q));
    let _ = writeln!(out, "c_q             {}", sig9(q.c_q));
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Writes `trace.csv`, `summary.txt`, `run_meta.txt` and, in fine mode,
/// `waveform.csv` into `out_dir`. Returns the summary text.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String, CliError> {
    let trace = run_experiment(cfg)?;
    let stats = regeneration_stats(&trace, &cfg.reference);
    let summary = export::summary_text(&trace, &stats);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_file(&out_dir.join("trace.csv"), |w| export::write_trace_csv(&trace, w))?;
    if trace.waveform.is_some() {
        write_file(&out_dir.join("waveform.csv"), |w| export::write_waveform_csv(&trace, w))?;
    }
    write_file(&out_dir.join("summary.txt"), |w| w.write_all(summary.as_bytes()))?;
    write_file(&out_dir.join("run_meta.txt"), |w| {
        writeln!(w, "tool power-packet {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "{cfg:#?}")
    })?;
    Ok(summary)
}

pub fn cmd_tag(action: &TagAction, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = crate::protocol::ProtocolSpec::default();
    match action {
        TagAction::Encode { index } => {
            let bits = encode_header(&spec, *index).map_err(|e| CliError::Parse(e.to_string()))?;
            let _ = writeln!(out, "{bits}");
        }
        TagAction::Decode { bits } => {
            let bits: Bits = bits.parse().map_err(|e: ProtocolError| CliError::Parse(e.to_string()))?;
            let h = decode_header(&spec, &bits).map_err(|e| CliError::Framing(e.to_string()))?;
            let _ = writeln!(out, "source {}", h.source_index);
        }
        TagAction::Wave { bits, t0_us } => {
            let bits: Bits = bits.parse().map_err(|e: ProtocolError| CliError::Parse(e.to_string()))?;
            let w = bits_to_waveform(&spec, &bits, Duration::from_micros(*t0_us));
            export::write_logic_waveform_csv(&w, out).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Design(args) => cmd_design(&load_config(&args, err)?, out),
        Command::Run { config, out: dir } => {
            let summary = cmd_run(&load_config(&config, err)?, &dir)?;
            let _ = out.write_all(summary.as_bytes());
            Ok(())
        }
        Command::Compare(args) => {
            let cmp = compare_static_baseline(&load_config(&args, err)?)?;
            let _ = out.write_all(cmp.table().as_bytes());
            Ok(())
        }
        Command::Tag { action } => cmd_tag(&action, out),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
