use std::path::PathBuf;
use std::process::ExitCode;

use apg_cli::commands;
use apg_cli::CliError;
use apg_core::verify::Mutation;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "apg", version, about = "Adaptive policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config file or a bundled preset name.
    Run {
        config: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated seeds run in parallel, each in `seed-<s>/`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run the gradient, Lyapunov, Riccati and replay oracle suites.
    Verify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Deliberately break a component to confirm the suites notice.
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Log-log slope of the running-minimum squared gradient norm.
    Rate {
        log: PathBuf,
        #[arg(long, default_value = "100,300,1000,3000,10000")]
        grid: String,
        /// Directory for rate.json; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    FlipGradL2Sign,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seeds } => {
            let cfg = match commands::resolve_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let mut code = 0;
            for (seed, dir, res) in commands::run_seeds(&cfg, &out, seeds.as_deref()) {
                match res {
                    Ok(run) => {
                        let eps = &run.log.episodes;
                        let tail = &eps[eps.len().saturating_sub(20)..];
                        let mean_c = tail.iter().map(|e| e.disc_sum_c).sum::<f64>() / tail.len().max(1) as f64;
                        println!(
                            "seed {seed}: {} episodes, {} updates, final-20 mean discounted c {mean_c:.6} -> {}",
                            eps.len(),
                            run.log.iterations.len(),
                            dir.display()
                        );
                    }
                    Err(e) => {
                        eprintln!("seed {seed}: error: {e}");
                        code = code.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(code as u8)
        }
        Command::Verify { out, inject_fault } => {
            let mutation = match inject_fault {
                Some(Fault::FlipGradL2Sign) => Mutation::FlipGradL2Sign,
                None => Mutation::None,
            };
            match commands::verify_into(&out, mutation) {
                Ok(report) => {
                    for c in &report.checks {
                        let tag = if c.passed { "pass" } else { "FAIL" };
                        println!("{tag} {}/{}: {:.3e} (threshold {:.1e})", c.suite, c.name, c.metric, c.threshold);
                    }
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Rate { log, grid, out } => {
            let res = commands::parse_grid(&grid).and_then(|g| commands::rate_into(&log, &g, out.as_deref()));
            match res {
                Ok(diag) => {
                    println!("{}", diag.slope);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
