use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gstein_cli::commands::{self, FamilyName};
use gstein_cli::experiments::verify;
use gstein_cli::{run_experiment, CliError, CliResult, ConfigOverrides, Experiment, RunOptions};
use gstein_core::ModelSpec;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gstein", version, about = "Density-power weighted Stein methods")]
struct Cli {
    /// JSON scenario overrides (ScenarioConfig field names).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 20240601)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Reduced replication counts.
    #[arg(long, global = true)]
    desk: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Validator anchor for gamma selection.
    #[arg(long, global = true)]
    gamma0: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model family to a CSV dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyName,
        #[arg(long, default_value_t = 2)]
        components: usize,
    },
    /// Goodness-of-fit test of a CSV dataset against a JSON model.
    Gof {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Poisson regression posterior by weighted SVGD.
    Svgd {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        response: String,
        #[arg(long, default_value_t = 32)]
        particles: usize,
        #[arg(long, default_value_t = 220)]
        iterations: usize,
    },
    /// Cross-validated choice of gamma.
    SelectGamma {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyName,
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = commands::FOLDS)]
        folds: usize,
    },
    /// Run a simulation table.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        /// Skip SVG figures.
        #[arg(long)]
        no_plots: bool,
    },
    /// Run the identity verification suite.
    Verify,
}

fn print_json<T: Serialize>(v: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cli: Cli) -> CliResult<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let overrides = match &cli.config {
        Some(p) => ConfigOverrides::load(p)?,
        None => ConfigOverrides::default(),
    };
    let gamma = cli.gamma.unwrap_or(0.0);
    if cli.gamma.is_some_and(|g| !(g >= 0.0)) || cli.gamma0.is_some_and(|g| !(g >= 0.0)) {
        return Err(CliError::Usage("gamma and gamma0 must be non-negative".into()));
    }
    let seed = overrides.seed.unwrap_or(cli.seed);
    match cli.command {
        Command::Fit { data, family, components } => {
            let ds = commands::read_dataset(&data, None)?;
            print_json(&commands::fit(&ds, &commands::family(family, ds.dim(), components), gamma, seed)?)?;
        }
        Command::Gof { data, model, replicates, alpha } => {
            let ds = commands::read_dataset(&data, None)?;
            let text = std::fs::read_to_string(&model)?;
            let q: ModelSpec = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", model.display())))?;
            print_json(&commands::gof(&ds, &q, gamma, replicates, alpha, seed)?)?;
        }
        Command::Svgd { data, response, particles, iterations } => {
            let ds = commands::read_dataset(&data, Some(&response))?;
            print_json(&commands::svgd(&ds, gamma, particles, iterations, seed)?)?;
        }
        Command::SelectGamma { data, family, components, grid, folds } => {
            let ds = commands::read_dataset(&data, None)?;
            let grid = grid.or(overrides.gamma_grid.clone()).unwrap_or_else(|| commands::DEFAULT_GRID.to_vec());
            let fam = commands::family(family, ds.dim(), components);
            print_json(&commands::select_gamma(&ds, &fam, &grid, folds, cli.gamma0, seed)?)?;
        }
        Command::Experiment { name, no_plots } => {
            let opts = RunOptions {
                seed: cli.seed,
                out: cli.out,
                desk: cli.desk,
                gamma: cli.gamma,
                gamma0: cli.gamma0,
                overrides,
                plots: !no_plots,
            };
            let report = run_experiment(name, &opts)?;
            print!("{}", report.text);
            eprintln!("{} finished in {:.1}s; files under {}", report.name, report.elapsed_seconds, opts.out_dir().display());
            if report.verified == Some(false) {
                return Ok(3);
            }
            if report.threshold_exceeded() {
                eprintln!("more than 10% of replications failed in some cell");
                return Ok(2);
            }
        }
        Command::Verify => {
            let checks = verify::identity_suite()?;
            for c in &checks {
                println!("{} {} {} (gamma={}): {:.3e} < {:.0e}", if c.passed { "ok" } else { "FAILED" }, c.group, c.name, c.gamma, c.value, c.tolerance);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
