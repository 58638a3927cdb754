use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use timebin_qkd::channel::{
    calibrate_noise, reference_targets, CalibrationError, CalibrationTarget, NoiseFit, Protocol,
};
use timebin_qkd::finite_key::SecurityParams;
use timebin_qkd_cli::config::{load_config, ExperimentConfig, OutputFormat, SweepSpec};
use timebin_qkd_cli::report::{emit_report, parse_csv, render, write_output};
use timebin_qkd_cli::sweep::{compare_protocols, run_sweep, ReportTable};

#[derive(Parser)]
#[command(name = "tbqkd", version, about = "Time-bin QKD key-rate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for Monte-Carlo runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulate detections instead of using expected counts.
    #[arg(long, global = true)]
    monte_carlo: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the points of a configuration file, or the reference points.
    Run { config: Option<PathBuf> },
    /// Evaluate a loss grid.
    Sweep {
        #[arg(long, default_value_t = 0.0)]
        from_db: f64,
        #[arg(long, default_value_t = 45.0)]
        to_db: f64,
        #[arg(long, default_value_t = 0.5)]
        step_db: f64,
        /// Protocols to sweep; both when absent.
        #[arg(long = "protocol")]
        protocols: Vec<Protocol>,
        /// Grid-optimize intensities and basis probability per point.
        #[arg(long)]
        optimize: bool,
        /// Base configuration for seed, block size and output.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the noise parameters of each protocol.
    Calibrate {
        /// Report-format CSV of measured points; the reference points when absent.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Key-rate ratio of the four-dimensional to the qubit protocol per loss.
    Compare { config: Option<PathBuf> },
}

fn base_config(path: Option<&PathBuf>, global: &Global) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = global.format {
        config.format = f;
    }
    if let Some(o) = &global.out {
        config.output = Some(o.clone());
    }
    if let Some(s) = global.seed {
        config.seed = s;
    }
    config.monte_carlo |= global.monte_carlo;
    Ok(config)
}

fn report_failures(table: &ReportTable) -> ExitCode {
    for f in &table.failures {
        eprintln!("{} at {} dB failed: {}", f.protocol, f.loss_db, f.message);
    }
    if table.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[derive(Serialize)]
struct FitRow {
    protocol: Protocol,
    dark_count_rate: f64,
    intrinsic_error_z: f64,
    intrinsic_error_x: f64,
    worst_qber_residual: f64,
    cost: f64,
    adequate: bool,
}

impl FitRow {
    fn new(fit: &NoiseFit, adequate: bool) -> Self {
        Self {
            protocol: fit.protocol,
            dark_count_rate: fit.params.dark_count_rate,
            intrinsic_error_z: fit.params.intrinsic_error_z,
            intrinsic_error_x: fit.params.intrinsic_error_x,
            worst_qber_residual: fit.worst_qber_residual(),
            cost: fit.cost,
            adequate,
        }
    }
}

fn load_targets(path: &PathBuf) -> Result<Vec<(Protocol, CalibrationTarget)>> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(parse_csv(&bytes)?
        .into_iter()
        .map(|r| {
            (
                r.protocol,
                CalibrationTarget {
                    loss_db: r.loss_db,
                    mu1: r.mu1,
                    mu2: r.mu2,
                    p_z_alice: r.p_z_alice,
                    p_z_bob: r.p_z_bob,
                    qber: r.qber,
                    phi_z: Some(r.phi_z),
                },
            )
        })
        .collect())
}

fn calibrate(targets: Option<&PathBuf>, global: &Global) -> Result<ExitCode> {
    let loaded = targets.map(load_targets).transpose()?;
    let mut rows = Vec::new();
    let mut code = ExitCode::SUCCESS;
    for protocol in [Protocol::TwoD, Protocol::FourD] {
        let set: Vec<CalibrationTarget> = match &loaded {
            Some(all) => all
                .iter()
                .filter(|(p, _)| *p == protocol)
                .map(|(_, t)| *t)
                .collect(),
            None => reference_targets(protocol),
        };
        if set.is_empty() {
            continue;
        }
        match calibrate_noise(protocol, &set, &SecurityParams::default()) {
            Ok(fit) => rows.push(FitRow::new(&fit, true)),
            Err(CalibrationError::Inadequate { fit, worst }) => {
                eprintln!("{protocol}: fit inadequate, worst QBER residual {worst:.4}");
                rows.push(FitRow::new(&fit, false));
                code = ExitCode::FAILURE;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let bytes = render(&rows, global.format.unwrap_or_default())?;
    write_output(&bytes, global.out.as_deref())?;
    Ok(code)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let global = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let config = base_config(config.as_ref(), global)?;
            let table = run_sweep(&config);
            emit_report(&table, config.format, config.output.as_deref())?;
            Ok(report_failures(&table))
        }
        Command::Sweep {
            from_db,
            to_db,
            step_db,
            protocols,
            optimize,
            config,
        } => {
            anyhow::ensure!(*step_db > 0.0, "--step-db must be positive");
            let mut config = base_config(config.as_ref(), global)?;
            config.points.clear();
            config.optimize |= *optimize;
            config.sweep = Some(SweepSpec {
                protocols: if protocols.is_empty() {
                    vec![Protocol::TwoD, Protocol::FourD]
                } else {
                    protocols.clone()
                },
                from_db: *from_db,
                to_db: *to_db,
                step_db: *step_db,
            });
            let table = run_sweep(&config);
            emit_report(&table, config.format, config.output.as_deref())?;
            Ok(report_failures(&table))
        }
        Command::Calibrate { targets } => calibrate(targets.as_ref(), global),
        Command::Compare { config } => {
            let config = base_config(config.as_ref(), global)?;
            let table = run_sweep(&config);
            let cmp = compare_protocols(&table);
            for (p, loss) in &cmp.unmatched {
                eprintln!("{p} at {loss} dB has no counterpart");
            }
            write_output(&render(&cmp.rows, config.format)?, config.output.as_deref())?;
            Ok(report_failures(&table))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
