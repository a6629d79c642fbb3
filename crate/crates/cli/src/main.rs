//! `dcdr` — scenario validation, synthesis, experiment runs, and workload
//! sweeps for the two-stage pricing model.
//!
//! Exit codes: 0 success, 2 validation failure, 3 solver infeasibility in
//! any requested cell, 4 internal solver error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcdr_core::error::Error;
use dcdr_core::runner::{run, sweep, RunManifest};
use dcdr_core::scenario::{load_scenario, save_scenario, synth_scenario, SynthConfig};
use dcdr_core::Method;

/// Environment variable overriding the default solver tolerance.
const TOL_ENV: &str = "DCDR_TOL";

#[derive(Parser)]
#[command(name = "dcdr", version, about = "Utility-side load balancing of data-center demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario directory and report every invariant violation.
    Validate {
        /// Scenario directory (contains scenario.toml and trace tables).
        scenario: PathBuf,
    },
    /// Generate a synthetic scenario directory.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        locations: usize,
        #[arg(long, default_value_t = 24)]
        slots: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every slot with the requested methods and emit reports.
    Run(RunArgs),
    /// Sweep the workload scale on one slot, comparing exact pricing with
    /// the base-price baseline.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario directory; omitted means the built-in synthetic default.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated subset of integrated, restricted, exact, heuristic,
    /// robust, base-price.
    #[arg(long, value_delimiter = ',', default_value = "integrated,restricted,exact")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    workload_scale: f64,
    /// Background-load uncertainty as a fraction (enables `robust`).
    #[arg(long)]
    uncertainty: Option<f64>,
    /// Keep the provider's energy box nominal under the worst-case shift.
    #[arg(long)]
    wcp_freeze_box: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Force single-threaded slot execution.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Range as start:end:step, e.g. 0.6:1.4:0.1.
    #[arg(long, default_value = "0.6:1.4:0.1")]
    range: String,
    /// Slot index to sweep.
    #[arg(long, default_value_t = 0)]
    slot: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    deterministic: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Parse(_) | Error::Precondition(_) => 2,
        Error::InfeasibleSlot(_)
        | Error::RestrictedInfeasible(_)
        | Error::ExactInfeasible(_)
        | Error::InfeasibleAfterShift(_) => 3,
        _ => 4,
    }
}

fn tolerance_from_env() -> Result<Option<f64>, Error> {
    match std::env::var(TOL_ENV) {
        Ok(text) => {
            let tol: f64 = text
                .parse()
                .map_err(|_| Error::Parse(format!("{TOL_ENV} must be a number, got `{text}`")))?;
            if !(tol > 0.0) {
                return Err(Error::Parse(format!("{TOL_ENV} must be positive, got {tol}")));
            }
            Ok(Some(tol))
        }
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Validate { scenario } => {
            let loaded = load_scenario(&scenario)?;
            println!(
                "ok: scenario `{}` with {} locations over {} slots",
                loaded.name, loaded.locations, loaded.slots
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { seed, locations, slots, out } => {
            let scenario =
                synth_scenario(&SynthConfig { seed, locations, slots, ..SynthConfig::default() });
            save_scenario(&scenario, &out, dcdr_core::scenario::DEFAULT_SCENARIO_NOTES)?;
            println!("wrote scenario `{}` to {}", scenario.name, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let methods = args
                .methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<Vec<_>, _>>()?;
            let manifest = RunManifest {
                scenario: args.scenario,
                methods,
                workload_scale: args.workload_scale,
                uncertainty: args.uncertainty,
                wcp_freeze_box: args.wcp_freeze_box,
                seed: args.seed,
                out_dir: args.out.clone(),
                deterministic: args.deterministic,
                tolerance: tolerance_from_env()?,
            };
            let output = run(&manifest)?;
            if let Some(r) = output.summary.avg_eli_reduction_vs_base_pct {
                println!("average load-index reduction vs base-price: {r:.2}%");
            }
            if let Some(r) = output.summary.cost_reduction_vs_base_pct {
                println!("total cost reduction vs base-price: {r:.2}%");
            }
            println!(
                "wrote {} slots x {} methods to {} ({} failed cells)",
                output.scenario.slots,
                manifest.methods.len(),
                args.out.display(),
                output.summary.failed_cells
            );
            Ok(ExitCode::from(output.exit_code() as u8))
        }
        Command::Sweep(args) => {
            let scales = parse_range(&args.range)?;
            let manifest = RunManifest {
                scenario: args.scenario,
                seed: args.seed,
                out_dir: args.out.clone(),
                deterministic: args.deterministic,
                tolerance: tolerance_from_env()?,
                ..RunManifest::new(args.out.clone())
            };
            let points = sweep(&manifest, args.slot, &scales)?;
            for p in &points {
                println!(
                    "scale {:.2}: exact {:.4}, base {:.4}, reduction {:.2}%",
                    p.scale, p.eli_exact, p.eli_base, p.reduction_pct
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_range(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("range must be start:end:step, got `{text}`")));
    }
    let parse = |s: &str| -> Result<f64, Error> {
        s.parse().map_err(|_| Error::Parse(format!("bad number `{s}` in range")))
    };
    let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if !(step > 0.0) || end < start {
        return Err(Error::Parse(format!("degenerate range `{text}`")));
    }
    let mut scales = Vec::new();
    let mut k = 0;
    loop {
        let scale = start + step * k as f64;
        if scale > end + 1e-9 {
            break;
        }
        scales.push(scale);
        k += 1;
    }
    Ok(scales)
}
