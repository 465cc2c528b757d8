use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mfgen", version, about = "Mean-field Gibbs generalization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant suites and write a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Top-level seed, replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicate evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run { common, .. } | Command::Verify { common } => common,
    };
    if let Some(k) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run { config, common } => mfgen::run_file(config, common.seed, common.out.as_deref()),
        Command::Verify { common } => {
            mfgen::run_verify(common.out.as_deref().unwrap_or("results".as_ref()))
        }
    };
    match result {
        Ok((outcome, status)) => {
            println!("{}", outcome.summary);
            ExitCode::from(status.code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
