use std::path::PathBuf;
use std::process::ExitCode;

use carnot_cli::{run, Command, Overrides};
use clap::{Args, Parser, Subcommand};

/// Littlewood-Paley wavelets, Besov norms and sampling frames on graded
/// groups.
#[derive(Parser)]
#[command(name = "carnot-wavelets", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default `carnot-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random test family.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Group summary and quasi-triangle constant.
    GroupInfo(Common),
    /// Build the wavelet and run its checks.
    Wavelet {
        #[command(flatten)]
        common: Common,
        /// Do not verify vanishing moments.
        #[arg(long)]
        skip_moments: bool,
    },
    /// Dyadic, continuous and heat Besov norms.
    Besov(Common),
    /// Sampling frame, Neumann inversion and density sweep.
    Frame(Common),
    /// Norm equivalence reports.
    Equiv(Common),
}

fn main() -> ExitCode {
    // Usage errors are configuration errors; clap's own code 2 is reserved
    // for contract violations here.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, common, skip_moments) = match cli.command {
        Cmd::GroupInfo(c) => (Command::GroupInfo, c, false),
        Cmd::Wavelet {
            common,
            skip_moments,
        } => (Command::Wavelet, common, skip_moments),
        Cmd::Besov(c) => (Command::Besov, c, false),
        Cmd::Frame(c) => (Command::Frame, c, false),
        Cmd::Equiv(c) => (Command::Equiv, c, false),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("configuration error: cannot set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    let ov = Overrides {
        out: common.out,
        seed: common.seed,
        skip_moments,
    };
    match run(cmd, &common.config, &ov) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
