//! Command-line front end: argument parsing, dispatch and output.

pub mod builtin;
pub mod commands;
pub mod file;
pub mod report;

use clap::{Parser, Subcommand};
use commands::{ExtractArgs, Options};
use file::SystemFile;
use report::{render_text, Report, Verdict};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "passivity",
    version,
    about = "Passivity and non-expansivity of LTI systems: storage, spectral factors, energy extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Verification tolerance (LMI eigenvalue floor for check/energy, identity error for factor).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Emit the report as a single JSON document.
    #[arg(long, global = true)]
    json: bool,
    /// Include the reduction trace when the singular-case chain runs.
    #[arg(long, global = true)]
    trace: bool,
    /// Seed for randomized checks (random initial states in `fixtures`).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Passivity (or non-expansivity, per the file's supply tag) verdict.
    Check { file: PathBuf },
    /// Available storage X₋, S_a and a spectral factor.
    Energy { file: PathBuf },
    /// Optimal extraction feedback, or the ε-regularized law.
    Feedback {
        file: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Simulate extraction from x0 and print the trajectory table.
    Extract {
        file: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        /// Defaults to 40/|Re λ| of the slowest visible closed-loop mode.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Positive-real / bounded-real pair test with witness.
    Pair { file: PathBuf },
    /// Spectral factor with its verification report.
    Factor { file: PathBuf },
    /// Rerun the built-in circuit and pair examples.
    Fixtures,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Energy { .. } => "energy",
            Command::Feedback { .. } => "feedback",
            Command::Extract { .. } => "extract",
            Command::Pair { .. } => "pair",
            Command::Factor { .. } => "factor",
            Command::Fixtures => "fixtures",
        }
    }

    fn file(&self) -> Option<&PathBuf> {
        match self {
            Command::Check { file }
            | Command::Energy { file }
            | Command::Feedback { file, .. }
            | Command::Extract { file, .. }
            | Command::Pair { file }
            | Command::Factor { file } => Some(file),
            Command::Fixtures => None,
        }
    }
}

/// Output of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub report: Option<Report>,
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() {
                (String::new(), text)
            } else {
                (text, String::new())
            };
            return Outcome {
                code,
                stdout,
                stderr,
                report: None,
            };
        }
    };
    let start = Instant::now();
    let opts = Options {
        tol: cli.tol,
        trace: cli.trace,
        seed: cli.seed,
    };
    let name = cli.command.name();
    let mut table = None;
    let result = match cli.command.file().map(|p| SystemFile::load(p)) {
        Some(Err(e)) => Err((Verdict::Error, e.to_string())),
        Some(Ok(file)) => match &cli.command {
            Command::Check { .. } => commands::check(&file, &opts),
            Command::Energy { .. } => commands::energy(&file, &opts),
            Command::Feedback { epsilon, .. } => commands::feedback(&file, *epsilon),
            Command::Pair { .. } => commands::pair_command(&file),
            Command::Factor { .. } => commands::factor(&file, &opts),
            Command::Extract {
                x0,
                horizon,
                step,
                epsilon,
                ..
            } => {
                let args = ExtractArgs {
                    x0: x0.clone(),
                    horizon: *horizon,
                    step: *step,
                    epsilon: *epsilon,
                };
                commands::extract_command(&file, &args).map(|(r, t)| {
                    table = Some(t);
                    r
                })
            }
            Command::Fixtures => unreachable!("fixtures takes no file"),
        },
        None => Ok(builtin::fixtures(opts.seed)),
    };
    let mut report = match result {
        Ok(r) => r,
        Err((verdict, msg)) => Report {
            verdict,
            ..Report::error(name, msg)
        },
    };
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let code = report.verdict.exit_code();
    let (stdout, stderr) = if cli.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        (text + "\n", String::new())
    } else if report.verdict == Verdict::Error {
        (
            String::new(),
            format!(
                "error: {}\n",
                report.message.as_deref().unwrap_or("unknown")
            ),
        )
    } else {
        (table.unwrap_or_else(|| render_text(&report)), String::new())
    };
    Outcome {
        code,
        stdout,
        stderr,
        report: Some(report),
    }
}
