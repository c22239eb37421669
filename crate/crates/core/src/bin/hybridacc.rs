use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use hybridacc::experiment::{parse_config, resolve_out_dir, run_matrix, RunManifest};
use hybridacc::sim::Controller;
use hybridacc::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Which {
    Mpc,
    Safe,
    Hybrid,
    All,
}

/// Runs the car-following experiment matrix and writes traces, plot series
/// and a summary table.
#[derive(Debug, Parser)]
#[command(name = "hybridacc", version)]
struct Args {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overridden by HYBRIDACC_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict the run to one controller.
    #[arg(long, value_enum, default_value = "all")]
    controller: Which,
    /// Print the grid without running it.
    #[arg(long)]
    list: bool,
    /// Worker threads; all cores by default.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::InvalidScenario(_)
        | Error::InvalidArgument(_) => 1,
        Error::Io { .. } | Error::InvalidTrace(_) | Error::UndefinedMetric(_) => 2,
    }
}

fn run(args: Args) -> Result<(), Error> {
    let mut manifest = match &args.config {
        Some(path) => parse_config(path)?,
        None => RunManifest::default(),
    };
    manifest.controllers = match args.controller {
        Which::Mpc => vec![Controller::Mpc],
        Which::Safe => vec![Controller::Safe],
        Which::Hybrid => vec![Controller::Hybrid],
        Which::All => manifest.controllers,
    };

    if args.list {
        manifest.validate()?;
        let names: Vec<&str> = manifest.controllers.iter().map(|c| c.as_str()).collect();
        for s in manifest.scenarios() {
            println!("{} {}", s.label(), names.join(","));
        }
        println!("{} cells", manifest.cell_count());
        return Ok(());
    }

    let out = resolve_out_dir(args.out, std::env::var_os("HYBRIDACC_OUT"));
    let results = run_matrix(&manifest, &out, args.workers.map(usize::from))?;
    let collisions = results
        .iter()
        .filter(|r| r.trace.collision.is_some())
        .count();
    println!(
        "{} cells, {} collisions, output in {}",
        results.len(),
        collisions,
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
