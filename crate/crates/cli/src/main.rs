use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use simenv_cli::{
    render_trace, run_episode, verify_equivalence, write_trace, CliError, Format, Policy,
    Reference, RunConfig, Termination, DEFAULT_MAX_DAYS,
};

#[derive(Parser)]
#[command(
    name = "simenv",
    version,
    about = "Run greenhouse episodes and record traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run(RunArgs),
    /// Check that the environment-driven trace equals the model run on its own.
    VerifyEquivalence(VerifyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long = "env", default_value = "Greenhouse-v0")]
    env_id: String,
    /// random, fallback or constant:<x>
    #[arg(long, default_value = "random", value_parser = parse_policy)]
    policy: Policy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of trace rows.
    #[arg(long, default_value_t = DEFAULT_MAX_DAYS, value_parser = clap::value_parser!(u64).range(1..))]
    max_days: u64,
    /// Silence the daily log lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Trace file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Fallback)]
    reference: ReferenceArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Fallback,
    Forced,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            env_id: self.env_id.clone(),
            policy: self.policy,
            seed: self.seed,
            max_days: self.max_days,
            quiet: self.quiet,
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, CliError> {
    let config = args.common.config();
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Jsonl => Format::Jsonl,
    };
    let outcome = run_episode(&config)?;
    match &args.output {
        Some(path) => write_trace(&outcome.records, format, path)?,
        None => {
            let bytes = render_trace(&outcome.records, format)?;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    let rows = outcome.records.len();
    match outcome.termination {
        Termination::Done => eprintln!("episode done after {rows} rows"),
        Termination::Cap => eprintln!("episode stopped at the max-days cap ({rows} rows)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let config = args.common.config();
    let reference = match args.reference {
        ReferenceArg::Fallback => Reference::Fallback,
        ReferenceArg::Forced => Reference::Forced,
    };
    let result = verify_equivalence(&config, reference)?;
    match &result.divergence {
        None => {
            println!(
                "identical: {} rows, seed {}, {}",
                result.env.records.len(),
                config.seed,
                config.policy
            );
            Ok(ExitCode::SUCCESS)
        }
        Some(d) => {
            println!(
                "traces diverge at row {} (day {}): {}",
                d.row,
                d.day,
                d.fields.join(", ")
            );
            println!("  env:       {:?}", d.env);
            println!("  reference: {:?}", d.reference);
            Ok(ExitCode::from(3))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::VerifyEquivalence(args) => verify(args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code())
    })
}
