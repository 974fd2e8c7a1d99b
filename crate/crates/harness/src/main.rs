use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use finsler_morse_harness::pipeline::run_scenario;
use finsler_morse_harness::scenario::{Overrides, Scenario};
use finsler_morse_harness::suites::{run_suite, SUITES};
use finsler_morse_harness::{builtin, trace};

#[derive(Parser)]
#[command(
    name = "finsler-morse",
    about = "Morse index computations along Finsler geodesics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (TOML file or built-in name) and print its report.
    Run {
        config: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run verification suites (default: all).
    Verify {
        suites: Vec<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Write the scan-grid CSV trace of a scenario.
    Trace {
        config: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print a built-in scenario as TOML.
    Config { name: String },
    /// List built-in scenarios and suites.
    List,
}

#[derive(Args, Clone)]
struct Flags {
    /// Interior mesh nodes for the index form.
    #[arg(long)]
    mesh: Option<usize>,
    /// Relative ODE tolerance (absolute is 1e-2 of it).
    #[arg(long)]
    ode_tol: Option<f64>,
    /// Relative singular-value threshold for focal detection.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Base seed for randomized suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            mesh: self.mesh,
            ode_tol: self.ode_tol,
            rank_tol: self.rank_tol,
            seed: self.seed,
        }
    }
}

fn load(config: &str, flags: &Flags) -> Result<Scenario, String> {
    let mut s = if Path::new(config).exists() {
        let src = fs::read_to_string(config).map_err(|e| format!("{config}: {e}"))?;
        Scenario::from_toml(&src).map_err(|e| format!("{config}: {e}"))?
    } else {
        builtin::by_name(config)
            .ok_or_else(|| format!("no file or built-in scenario named `{config}`"))?
    };
    s.apply(&flags.overrides());
    Ok(s)
}

fn emit(out: &Option<PathBuf>, file: &str, body: &str) -> Result<(), String> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run { config, flags } => {
            let s = load(&config, &flags)?;
            let out = run_scenario(&s).map_err(|e| e.to_string())?;
            for (stage, secs) in &out.timings {
                eprintln!("{stage:>10}: {secs:.3}s");
            }
            for a in out.report.failures() {
                eprintln!("FAIL {}", a.describe());
            }
            emit(
                &flags.out,
                &format!("{}.json", s.name),
                &out.report.to_json(),
            )?;
            Ok(out.report.pass)
        }
        Command::Verify { suites, flags } => {
            let names: Vec<String> = if suites.is_empty() {
                SUITES.iter().map(|s| s.to_string()).collect()
            } else {
                suites
            };
            let mut ok = true;
            for name in &names {
                let r = run_suite(name, &flags.overrides())
                    .ok_or_else(|| format!("unknown suite `{name}`"))?;
                eprintln!("{}", r.summary());
                if flags.out.is_some() {
                    emit(&flags.out, &format!("{name}.json"), &r.to_json())?;
                }
                ok &= r.pass;
            }
            Ok(ok)
        }
        Command::Trace { config, flags } => {
            let s = load(&config, &flags)?;
            let (header, rows) = trace::trace_rows(&s).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            trace::write_csv(&mut buf, &header, &rows).map_err(|e| e.to_string())?;
            emit(
                &flags.out,
                &format!("{}.csv", s.name),
                &String::from_utf8_lossy(&buf),
            )?;
            Ok(true)
        }
        Command::Config { name } => {
            let s = builtin::by_name(&name)
                .ok_or_else(|| format!("no built-in scenario named `{name}`"))?;
            print!("{}", s.to_toml());
            Ok(true)
        }
        Command::List => {
            for s in builtin::all().into_iter().chain([builtin::lemma_circle()]) {
                println!("scenario {}", s.name);
            }
            for s in SUITES {
                println!("suite    {s}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
