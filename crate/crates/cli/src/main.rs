use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddprox::cli::{describe_command, run_command, verify_command, Overrides, EXIT_ERROR};

/// Domain decomposition by primal-dual proximal splitting.
#[derive(Parser)]
#[command(name = "ddprox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and write trace, solution, duals and a JSON summary.
    Run(RunArgs),
    /// Solve and compare against the monolithic solution.
    Verify(RunArgs),
    /// Print the partition without solving.
    Describe { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Worker threads for the per-subdomain and per-interface work.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stopping tolerance; keeps the config's relative or absolute reading.
    #[arg(long)]
    tol: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            threads: self.threads as usize,
            out_dir: self.out.clone(),
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

fn init_logging() {
    let level = std::env::var("DD_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level,
        other => {
            eprintln!("DD_LOG_LEVEL must be error, info or debug; ignoring {other:?}");
            "error".into()
        }
    };
    env_logger::Builder::new().parse_filters(&filter).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = match &cli.command {
        Command::Run(a) => run_command(&a.config, &a.overrides(), &mut out, &mut err),
        Command::Verify(a) => verify_command(&a.config, &a.overrides(), &mut out, &mut err),
        Command::Describe { config } => describe_command(config, &mut out, &mut err),
    };
    ExitCode::from(code as u8)
}
