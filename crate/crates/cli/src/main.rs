//! `cohmeas`: run coherent-measurement scenarios and emit reports.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cohmeas::memory::budget_table;
use cohmeas::scenario::{
    emit_budget_table, emit_reports, parse_scenario, run_scenario, validate_scenario, Format, Overrides,
    Report, ScenarioError,
};
use cohmeas::Mode;

#[derive(Debug, Parser)]
#[command(name = "cohmeas", version)]
#[command(about = "Sequential coherent measurement of quantum hypotheses")]
struct Cli {
    /// Also write the report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Override the scenario's mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Override the scenario's baseline search seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the Gram-Schmidt rank cutoff.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,

    /// Override the optimality-certificate tolerance.
    #[arg(long, global = true)]
    tol_cert: Option<f64>,

    /// Do not print the report to stdout.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run scenario files (`-` reads stdin).
    Run {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
    },
    /// Run scenarios with every applicable baseline enabled.
    Compare {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
    },
    /// Tabulate register budgets for 1 <= N <= n_max and 1 <= d <= d_max.
    EstimateMemory {
        #[arg(long)]
        n_max: usize,
        #[arg(long)]
        d_max: usize,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Compact,
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Compact => Mode::Compact,
            ModeArg::Full => Mode::Full,
        }
    }
}

fn read_spec(path: &Path) -> Result<String, ScenarioError> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| ScenarioError::Io(format!("stdin: {e}")))?;
    } else {
        text = fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

fn run_all(specs: &[PathBuf], overrides: &Overrides, compare: bool) -> Result<Vec<Report>, (PathBuf, ScenarioError)> {
    // every file is parsed before anything runs, so a schema error never
    // leaves a partial report behind
    let mut parsed = Vec::with_capacity(specs.len());
    for path in specs {
        let spec = read_spec(path)
            .and_then(|t| parse_scenario(&t))
            .and_then(|s| s.with_overrides(overrides))
            .map(|s| if compare { s.without_inapplicable_baselines() } else { s })
            .map_err(|e| (path.clone(), e))?;
        parsed.push((path, spec));
    }
    parsed
        .into_iter()
        .map(|(path, spec)| run_scenario(&spec).map_err(|e| (path.clone(), e)))
        .collect()
}

fn publish(text: &str, cli: &Cli) -> Result<(), ScenarioError> {
    if let Some(path) = &cli.report {
        fs::write(path, text).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    }
    if !cli.quiet {
        io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| ScenarioError::Io(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn fail(path: Option<&Path>, e: &ScenarioError) -> ExitCode {
    match path {
        Some(p) => eprintln!("{}: {e}", p.display()),
        None => eprintln!("{e}"),
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = Format::from(cli.format);
    let overrides = Overrides {
        mode: cli.mode.map(Mode::from),
        seed: cli.seed,
        rank_tol: cli.tol_rank,
        certificate_tol: cli.tol_cert,
        all_baselines: matches!(cli.command, Command::Compare { .. }),
    };

    let text = match &cli.command {
        Command::Run { specs } | Command::Compare { specs } => {
            let compare = matches!(cli.command, Command::Compare { .. });
            match run_all(specs, &overrides, compare) {
                Ok(reports) => emit_reports(&reports, format),
                Err((path, e)) => return fail(Some(&path), &e),
            }
        }
        Command::EstimateMemory { n_max, d_max } => emit_budget_table(&budget_table(*n_max, *d_max), format),
        Command::Validate { specs } => {
            let mut out = String::new();
            for path in specs {
                match read_spec(path).and_then(|t| validate_scenario(&t)) {
                    Ok(_) => out.push_str(&format!("{}: valid\n", path.display())),
                    Err(e) => return fail(Some(path), &e),
                }
            }
            out
        }
    };
    match publish(&text, &cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(None, &e),
    }
}
