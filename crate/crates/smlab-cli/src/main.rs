//! `smlab` — run one spectral-multiplier experiment and emit a JSON report
//! plus one CSV per sweep table.
//!
//! Exit codes: 0 when every verdict passes, 1 on configuration or runtime
//! errors, 2 when the run completes but a verdict fails.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use smlab::experiments::{run, ExperimentConfig, ExperimentError, EXIT_CONFIG_ERROR};

#[derive(Parser)]
#[command(
    name = "smlab",
    about = "Numerical laboratory for spectral multiplier maximal functions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long, value_name = "path.json")]
    config: Option<PathBuf>,
    /// Directory for report.json and the CSV tables.
    #[arg(long, value_name = "dir")]
    out: Option<PathBuf>,
    /// Override the base seed of the configuration.
    #[arg(long, value_name = "u64")]
    seed: Option<u64>,
    /// Override the number of grid nodes.
    #[arg(long = "grid-M", value_name = "int")]
    grid_m: Option<usize>,
    /// Override the operator descriptor, e.g. free_laplacian,
    /// dirichlet_laplacian, bessel:<alpha>, inv_square:<n>:<gamma>.
    #[arg(long, value_name = "name")]
    operator: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Maximal-operator growth ladder over random multiplier families.
    Growth(RunArgs),
    /// Pointwise domination of sup_t |m(tL)f| by a calibrated square function.
    Carbery(RunArgs),
    /// Good-lambda decay of the martingale sup/square comparison.
    Goodlambda(RunArgs),
    /// Conservation and harmonicity checks of the ground-state transform.
    DoobCheck(RunArgs),
    /// Two-sided Gaussian envelope fit of the heat kernel.
    GaussianFit(RunArgs),
    /// Dilation-norm profile and admissibility verdicts for one symbol.
    MultiplierCheck(RunArgs),
    /// L² norm identity of the differentiated Bochner-Riesz square function.
    Stein(RunArgs),
    /// Continuous-to-dyadic reduction constant for the dilation sup.
    Reduction(RunArgs),
    /// Weighted vector-valued iterated-maximal probe.
    FsProbe(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Growth(_) => "growth",
            Command::Carbery(_) => "carbery",
            Command::Goodlambda(_) => "goodlambda",
            Command::DoobCheck(_) => "doob-check",
            Command::GaussianFit(_) => "gaussian-fit",
            Command::MultiplierCheck(_) => "multiplier-check",
            Command::Stein(_) => "stein",
            Command::Reduction(_) => "reduction",
            Command::FsProbe(_) => "fs-probe",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Growth(a)
            | Command::Carbery(a)
            | Command::Goodlambda(a)
            | Command::DoobCheck(a)
            | Command::GaussianFit(a)
            | Command::MultiplierCheck(a)
            | Command::Stein(a)
            | Command::Reduction(a)
            | Command::FsProbe(a) => a,
        }
    }
}

fn load_config(name: &str, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let c = ExperimentConfig::from_json(&text)?;
            if c.experiment != name {
                anyhow::bail!(
                    "config is for experiment {:?}, but the {name} subcommand was invoked",
                    c.experiment
                );
            }
            c
        }
        None => ExperimentConfig::defaults_for(name)?,
    };
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(m) = args.grid_m {
        config.grid.m = m;
    }
    if let Some(op) = &args.operator {
        config.operator = op.clone();
    }
    config.validate()?;
    Ok(config)
}

fn real_main() -> anyhow::Result<u8> {
    let cli = Cli::parse();
    let name = cli.command.name();
    let args = cli.command.args();
    let config = load_config(name, args)?;
    let report = run(&config)?;
    for v in &report.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    for (k, v) in &report.metrics {
        println!("  {k} = {v}");
    }
    if let Some(dir) = &args.out {
        let written = report.write_outputs(dir)?;
        for p in &written {
            println!("wrote {}", p.display());
        }
    }
    println!(
        "{name}: {} in {} ms",
        if report.passed() { "all verdicts pass" } else { "verdict failure" },
        report.runtime_ms
    );
    Ok(report.exit_code() as u8)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<ExperimentError>()
                .map(|e| e.exit_code())
                .unwrap_or(EXIT_CONFIG_ERROR);
            ExitCode::from(code as u8)
        }
    }
}
