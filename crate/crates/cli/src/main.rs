mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, RunConfig};
use output::{warn, Failure, EXIT_OK, EXIT_USAGE};

/// Caps the worker pool at `PWAVG_THREADS` when set.
fn configure_threads() -> Option<usize> {
    let raw = std::env::var("PWAVG_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                warn("threads", "worker pool was already initialized");
            }
            Some(n)
        }
        _ => {
            warn("threads", &format!("ignoring PWAVG_THREADS={raw:?}"));
            None
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = configure_threads();
    match cli.command {
        Command::Validate { model, common } => commands::validate(&model, &RunConfig::from_args(&common, threads)),
        Command::Integrate {
            model,
            z,
            eps,
            t0,
            tf,
            common,
        } => commands::integrate_cmd(&model, &z, eps, t0, tf, &RunConfig::from_args(&common, threads)),
        Command::Avgfn { model, grid, common } => {
            let mut cfg = RunConfig::from_args(&common, threads);
            cfg.grid = Some(grid);
            commands::avgfn(&model, &cfg)
        }
        Command::Find { model, grid, common } => {
            let mut cfg = RunConfig::from_args(&common, threads);
            cfg.grid = Some(grid);
            commands::find(&model, &cfg)
        }
        Command::Verify {
            model,
            eps_list,
            z_a,
            grid,
            common,
        } => {
            let mut cfg = RunConfig::from_args(&common, threads);
            cfg.grid = Some(grid);
            cfg.eps_list = Some(eps_list);
            commands::verify(&model, z_a.as_deref(), &cfg)
        }
        Command::Builtin {
            name,
            coeffs,
            r_range,
            out,
        } => commands::builtin(name, coeffs.as_deref(), &r_range, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::from(EXIT_OK);
            }
            Failure::usage(e.render().to_string().trim_end()).emit();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            f.emit();
            ExitCode::from(f.exit)
        }
    }
}
