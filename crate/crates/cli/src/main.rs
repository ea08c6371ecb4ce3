use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinor_core::io::{analyze, run, RunError, RunOptions};
use spinor_core::propagator::threads_from_env;
use spinor_core::{parse_config, SimConfig};

/// Cantilever driven by adiabatic inversion of one spin of an entangled pair.
#[derive(Parser, Debug)]
#[command(name = "spinor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more configurations, each into its own output directory.
    Run {
        /// Configuration files (`key = value` lines, see `spinor presets`).
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Validate the configurations and print their echo without running.
        #[arg(long)]
        dry_run: bool,
        /// Also evolve with the dense oracle and report the L2 gap (small grids only).
        #[arg(long)]
        check_oracle: bool,
        /// Configurations run concurrently; each uses SPINOR_THREADS workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Recompute the summary from a run directory or a snapshot file.
    Analyze { path: PathBuf },
    /// Print the built-in configurations.
    Presets {
        /// Print only this preset (`paper` or `toy`).
        name: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            configs,
            dry_run,
            check_oracle,
            jobs,
        } => run_all(&configs, dry_run, check_oracle, jobs.max(1)),
        Command::Analyze { path } => match analyze(&path) {
            Ok(summary) => {
                print!("{summary}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Presets { name } => {
            let presets = [("paper", SimConfig::paper()), ("toy", SimConfig::toy())];
            let mut found = false;
            for (id, cfg) in &presets {
                if name.as_deref().is_none_or(|n| n == *id) {
                    println!("# preset: {id}\n{}", cfg.to_config_string());
                    found = true;
                }
            }
            if found {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: unknown preset (known: paper, toy)");
                ExitCode::from(1)
            }
        }
    }
}

fn run_all(paths: &[PathBuf], dry_run: bool, check_oracle: bool, jobs: usize) -> ExitCode {
    // parse everything up front so a typo fails before any compute starts
    let mut configs = Vec::with_capacity(paths.len());
    for path in paths {
        match parse_config(path).and_then(|c| c.validate().map(|_| c).map_err(Into::into)) {
            Ok(cfg) => configs.push((path, cfg)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    if dry_run {
        for (path, cfg) in &configs {
            println!(
                "# {}: ok, {} steps on {} points\n{}",
                path.display(),
                cfg.n_steps(),
                cfg.grid.len(),
                cfg.to_config_string()
            );
        }
        return ExitCode::SUCCESS;
    }
    let opts = RunOptions {
        dry_run: false,
        check_oracle,
        threads: threads_from_env(),
    };
    let results: Vec<Result<String, RunError>> = std::thread::scope(|scope| {
        let mut results = Vec::with_capacity(configs.len());
        for chunk in configs.chunks(jobs) {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(_, cfg)| {
                    scope.spawn(move || {
                        run(cfg, opts).map(|out| {
                            let mut text = format!("# output: {}\n{}", cfg.output_dir.display(), out.summary);
                            if let Some(gap) = out.oracle_gap {
                                text.push_str(&format!("oracle L2 gap = {gap:.3e}\n"));
                            }
                            text
                        })
                    })
                })
                .collect();
            results.extend(handles.into_iter().map(|h| h.join().expect("run thread panicked")));
        }
        results
    });
    let mut code = 0;
    for ((path, _), result) in configs.iter().zip(results) {
        match result {
            Ok(text) => print!("{text}"),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                if code == 0 {
                    code = e.exit_code();
                }
            }
        }
    }
    ExitCode::from(code as u8)
}
