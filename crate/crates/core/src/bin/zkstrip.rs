use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zkstrip::commands::{self, Options, EXIT_CHECK_FAILED, EXIT_OK, EXIT_SOLVER, EXIT_USAGE};

/// Generalized Zakharov-Kuznetsov simulator and verification harness on a strip.
#[derive(Parser, Debug)]
#[command(name = "zkstrip", version)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// output directory (overrides $ZKSTRIP_OUT and the config)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// seed for randomized checks (overrides the config)
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// worker threads
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Integrate and write snapshots, invariants.csv and summary.json
    Run,
    /// Run a named verification check
    Check {
        #[arg(value_parser = commands::CHECKS)]
        name: String,
    },
    /// Sweep a parameter given in the [sweep] table
    Sweep {
        /// h, delta, t0 or grid (overrides the config)
        #[arg(long)]
        param: Option<String>,
    },
    /// Print eigenvalues and the dispersion table
    Info,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    ExitCode::from(dispatch(cli) as u8)
}

fn dispatch(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("zkstrip: cannot configure {n} threads: {e}");
            return EXIT_USAGE;
        }
        #[cfg(not(feature = "parallel"))]
        let _ = n;
    }
    let Some(config) = cli.config else {
        eprintln!("zkstrip: --config is required");
        return EXIT_USAGE;
    };
    let opts = Options {
        config,
        out: cli.out,
        seed: cli.seed,
    };
    let result = match cli.verb {
        Verb::Run => commands::run(&opts).map(|s| {
            println!(
                "t = {}  mass drift {:.3e}  energy drift {:.3e}  max iterations {}  -> {} files",
                s.t_final,
                s.mass_drift,
                s.energy_drift,
                s.max_iterations,
                s.files.len()
            );
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            EXIT_OK
        }),
        Verb::Check { name } => commands::check(&opts, &name).map(|r| {
            print!("{}", r.render());
            if r.pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }),
        Verb::Sweep { param } => commands::sweep(&opts, param.as_deref()).map(|o| {
            for r in &o.rows {
                let d = r.distance.map(|d| format!("{d:.3e}")).unwrap_or_else(|| "-".into());
                println!("{} = {:<10} {:<6} distance {d}", o.parameter, r.value, short(&r.status));
            }
            if o.failed == o.rows.len() {
                EXIT_SOLVER
            } else {
                EXIT_OK
            }
        }),
        Verb::Info => commands::info(&opts).map(|s| {
            print!("{s}");
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("zkstrip: {e}");
        commands::exit_code(&e)
    })
}

fn short(status: &str) -> &str {
    if status == "ok" {
        "ok"
    } else {
        "failed"
    }
}
