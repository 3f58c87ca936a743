//! Command-line pipeline: dataset generation, training, rendering,
//! evaluation, and inspection dumps.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 data error, 4 numeric failure.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use warpnerf::Error;

#[derive(Parser)]
#[command(name = "warpnerf", version, about = "Perspective-warped NeRF training at desk scale")]
struct Cli {
    /// Worker threads (0 = all cores). Results are identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with the analytic oracle renderer.
    Gen(commands::GenArgs),
    /// Train a radiance field on a dataset directory.
    Train(commands::TrainArgs),
    /// Render dataset poses from a checkpoint.
    Render(commands::RenderArgs),
    /// Render held-out views and report PSNR.
    Eval(commands::EvalArgs),
    /// Inspection dumps: octree JSON, leaf statistics, warped point clouds.
    Dump(commands::DumpArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.cmd {
        Cmd::Gen(args) => commands::gen(args),
        Cmd::Train(args) => commands::train(args),
        Cmd::Render(args) => commands::render(args),
        Cmd::Eval(args) => commands::eval(args),
        Cmd::Dump(args) => commands::dump(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<Error>() {
                Some(Error::NonFiniteLoss { .. }) => 4,
                Some(Error::InvalidArgument(_)) => 2,
                Some(_) => 3,
                None => 3,
            };
            ExitCode::from(code)
        }
    }
}
