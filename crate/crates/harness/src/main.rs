use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbdf_harness::{runs, HarnessError, Settings};

#[derive(Parser)]
#[command(name = "sbdf", version, about = "Stabilized BDF runs on 2-D grids")]
struct Cli {
    /// Worker threads for the grid kernels (default: all cores). Results do
    /// not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `section.key = value` configuration file; defaults are used without one.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set scheme.k=3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One Allen-Cahn run with snapshots and traces.
    Run(Common),
    /// Temporal convergence table against a fine reference.
    Converge(Common),
    /// sBDF1/sBDF2 against ETD1/ETDRK2 on a small grid.
    CompareEtd(Common),
    /// Long runs recording the max norm for every order and step size.
    MbpLongrun(Common),
    /// Tumor, nutrient and PSA fields.
    Prostate(Common),
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config {
                key: "--threads".into(),
                message: e.to_string(),
            })?;
    }
    let (common, run): (&Common, fn(&Settings) -> Result<PathBuf, HarnessError>) = match &cli.command {
        Command::Run(c) => (c, |s| runs::run(s).map(|o| o.out.root().to_path_buf())),
        Command::Converge(c) => (c, |s| runs::converge(s).map(|o| o.out.root().to_path_buf())),
        Command::CompareEtd(c) => (c, |s| runs::compare_etd(s).map(|o| o.out.root().to_path_buf())),
        Command::MbpLongrun(c) => (c, |s| runs::mbp_longrun(s).map(|o| o.out.root().to_path_buf())),
        Command::Prostate(c) => (c, |s| runs::prostate(s).map(|o| o.out.root().to_path_buf())),
    };
    let settings = Settings::load(common.config.as_deref(), &common.set)?;
    let dir = run(&settings)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sbdf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
