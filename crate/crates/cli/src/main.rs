use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use stresslane_cli::runner::{run_batch, StmMode};
use stresslane_cli::trace::{emit_trace, TraceKind};
use stresslane_core::{ConfigError, SimConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Seeded highway traffic runs with the stress-testing driver model.
#[derive(Parser, Debug)]
#[command(name = "stresslane", version)]
struct Args {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated list of seeds.
    #[arg(long, default_value = "1", value_delimiter = ',')]
    seed: Vec<u64>,

    /// Kilometers per run; overrides the config value.
    #[arg(long)]
    km: Option<f64>,

    /// Stress testing: on, off or both (paired runs per seed).
    #[arg(long, default_value = "both")]
    stm: String,

    /// Output directory for summary.csv, scenario logs and event logs.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Emit a behavior-model data series instead of running:
    /// driver_brake | acc_brake | lane_change.
    #[arg(long)]
    trace: Option<String>,

    /// Simulation step size in seconds; overrides the config value.
    #[arg(long)]
    dt: Option<f64>,
}

fn verbose() -> bool {
    std::env::var("STRESSLANE_LOG")
        .map(|v| !v.is_empty() && v != "off" && v != "error")
        .unwrap_or(false)
}

fn load_config(args: &Args) -> Result<SimConfig, ConfigError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            ConfigError::Invalid(vec![stresslane_core::world::Violation {
                key: "config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            }])
        })?,
        None => String::new(),
    };
    let mut cfg = SimConfig::from_toml(&text)?;
    if let Some(km) = args.km {
        cfg.run.km = km;
    }
    if let Some(dt) = args.dt {
        cfg.run.dt_s = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: Args) -> Result<(), u8> {
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return Err(EXIT_CONFIG);
        }
    };

    if let Some(kind) = &args.trace {
        let kind: TraceKind = kind.parse().map_err(|e| {
            eprintln!("configuration error: {e}");
            EXIT_CONFIG
        })?;
        let files = emit_trace(kind, &cfg, &args.out).map_err(|e| {
            eprintln!("I/O error: {e}");
            EXIT_IO
        })?;
        if verbose() {
            for f in files {
                eprintln!("wrote {}", args.out.join(f).display());
            }
        }
        return Ok(());
    }

    let mode = match args.stm.as_str() {
        "on" => StmMode::On,
        "off" => StmMode::Off,
        "both" => StmMode::Both,
        other => {
            eprintln!("configuration error: --stm must be on, off or both, got '{other}'");
            return Err(EXIT_CONFIG);
        }
    };
    if args.seed.is_empty() {
        eprintln!("configuration error: at least one seed required");
        return Err(EXIT_CONFIG);
    }

    let rows = run_batch(&cfg, &args.seed, mode, &args.out).map_err(|e| {
        let msg = format!("{e:#}");
        if msg.contains("creating output dir") || msg.contains("writing") || msg.contains("os error")
        {
            eprintln!("I/O error: {msg}");
            EXIT_IO
        } else {
            eprintln!("runtime error: {msg}");
            EXIT_RUNTIME
        }
    })?;

    if verbose() {
        eprint!("{}", stresslane_cli::runner::summary_csv(&rows));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
