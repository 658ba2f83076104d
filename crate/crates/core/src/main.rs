use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chainlab::harness::{self, format as table_format, ExperimentConfig};
use chainlab::{simulate_traced, Error};

#[derive(Parser)]
#[command(
    name = "chainlab",
    about = "Throughput models for XOR inter-flow network coding on a wireless chain",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration file (TOML).
    config: PathBuf,

    /// Output format: text, csv, or json.
    #[arg(long)]
    format: Option<String>,

    /// Write results to a file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Solver damping factor in (0, 1].
    #[arg(long)]
    damping: Option<f64>,

    /// Solver residual tolerance (max-norm).
    #[arg(long)]
    tolerance: Option<f64>,

    /// Solver iteration cap.
    #[arg(long)]
    max_iterations: Option<usize>,

    /// Which transmissions interfere: total or native_only.
    #[arg(long)]
    interference_rate: Option<String>,

    /// Simulated seconds per replication.
    #[arg(long)]
    horizon: Option<f64>,

    /// Warm-up seconds excluded from measurements.
    #[arg(long)]
    warmup: Option<f64>,

    /// Master seed for replication streams.
    #[arg(long)]
    seed: Option<u64>,

    /// Replications per simulated cell.
    #[arg(long)]
    replications: Option<usize>,

    /// Runtime queue-length cap (instability guard).
    #[arg(long)]
    queue_cap: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic throughput for every (scenario, gamma) cell.
    Analyze(CommonArgs),
    /// Simulated throughput for every (scenario, gamma) cell.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Write a packet-event trace (single-cell configs only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Analysis and simulation side by side with relative errors.
    Compare(CommonArgs),
    /// Sweep one axis (gamma, delta, beta, p_mix) per scenario row.
    Sweep(CommonArgs),
    /// Calibrate delta against per-row throughput targets.
    Calibrate(CommonArgs),
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &CommonArgs) -> chainlab::Result<()> {
    if let Some(v) = a.damping {
        cfg.solver.damping = v;
    }
    if let Some(v) = a.tolerance {
        cfg.solver.tolerance = v;
    }
    if let Some(v) = a.max_iterations {
        cfg.solver.max_iterations = v;
    }
    if let Some(v) = &a.interference_rate {
        cfg.solver.interference_rate = match v.as_str() {
            "total" => chainlab::InterferenceRate::Total,
            "native_only" => chainlab::InterferenceRate::NativeOnly,
            other => {
                return Err(Error::Config(format!(
                    "unknown interference rate '{other}' (expected total or native_only)"
                )))
            }
        };
    }
    if let Some(v) = a.horizon {
        cfg.sim.horizon_s = v;
    }
    if let Some(v) = a.warmup {
        cfg.sim.warmup_s = v;
    }
    if let Some(v) = a.seed {
        cfg.sim.seed = v;
    }
    if let Some(v) = a.replications {
        cfg.sim.replications = v;
    }
    if let Some(v) = a.queue_cap {
        cfg.sim.queue_cap = v;
    }
    if let Some(v) = &a.format {
        cfg.output.format = v.parse()?;
    }
    Ok(())
}

fn write_output(text: &str, out: &Option<PathBuf>) -> chainlab::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            std::io::stdout()
                .flush()
                .map_err(|e| Error::Config(format!("stdout error: {e}")))
        }
    }
}

fn run_traced_cell(cfg: &ExperimentConfig, trace_path: &PathBuf) -> chainlab::Result<()> {
    if cfg.scenarios.len() != 1 || cfg.grid.gamma.len() != 1 {
        return Err(Error::Config(
            "--trace needs a config with exactly one scenario row and one gamma".into(),
        ));
    }
    let deltas = harness::resolve_deltas(cfg)?;
    let delta = match &deltas[0][0] {
        Ok(d) => *d,
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    let gamma = cfg.grid.gamma[0];
    let scenario = cfg.scenarios[0].scenario();
    let gamma_k = if scenario.flows == 2 { gamma } else { 0.0 };
    let validated = chainlab::validate(
        scenario,
        chainlab::ModelParams::new(delta, cfg.params.mu, gamma, gamma_k),
        chainlab::build_chain(cfg.topology.nodes)?,
    )?;
    let mut file = std::fs::File::create(trace_path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", trace_path.display())))?;
    simulate_traced(&validated, &cfg.sim.options(), &mut file)?;
    Ok(())
}

fn run(cli: Cli) -> chainlab::Result<()> {
    match cli.command {
        Command::Analyze(common) => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            apply_overrides(&mut cfg, &common)?;
            let rows = harness::run_analyze(&cfg)?;
            let text = table_format::format_comparison(&rows, cfg.output.format)?;
            write_output(&text, &common.out)
        }
        Command::Simulate { common, trace } => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            apply_overrides(&mut cfg, &common)?;
            if let Some(path) = &trace {
                run_traced_cell(&cfg, path)?;
            }
            let rows = harness::run_simulate(&cfg)?;
            let text = table_format::format_comparison(&rows, cfg.output.format)?;
            write_output(&text, &common.out)
        }
        Command::Compare(common) => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            apply_overrides(&mut cfg, &common)?;
            let rows = harness::run_compare(&cfg)?;
            let text = table_format::format_comparison(&rows, cfg.output.format)?;
            write_output(&text, &common.out)
        }
        Command::Sweep(common) => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            apply_overrides(&mut cfg, &common)?;
            let rows = harness::run_sweep(&cfg)?;
            let text = table_format::format_sweep(&rows, cfg.output.format)?;
            write_output(&text, &common.out)
        }
        Command::Calibrate(common) => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            apply_overrides(&mut cfg, &common)?;
            let rows = harness::run_calibrate(&cfg)?;
            let text = table_format::format_comparison(&rows, cfg.output.format)?;
            write_output(&text, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
