//! `burstsim`: run, validate and report on burst scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use burstsim_core::check::check_run;
use burstsim_core::report::{emit_outputs, rebuild, SUMMARY_FILE};
use burstsim_core::scenario::{Scenario, ScenarioError};
use burstsim_core::sim;
use burstsim_core::workload::PerfTable;
use clap::{Parser, Subcommand};

const OK: u8 = 0;
const INVALID: u8 = 1;
const REJECTED: u8 = 2;
const INTERNAL: u8 = 3;

/// Name accepted in place of a path for the shipped replay scenario.
const BUILTIN_REPLAY: &str = "paper-replay";

#[derive(Parser)]
#[command(name = "burstsim", version, about = "Multi-cloud GPU burst simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to its horizon and write the run artifacts.
    Simulate {
        /// Scenario file, or `paper-replay` for the built-in replay.
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Multiplies every count (quotas, plan targets, jobs).
        #[arg(long, default_value_t = 0.01)]
        scale: f64,
        #[arg(long, env = "BURSTSIM_OUT_DIR", default_value = "burstsim-out")]
        out: PathBuf,
        /// Check the run against the reference figures; exit 2 on failure.
        #[arg(long)]
        check: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: String },
    /// Rebuild the peak and totals tables from a run directory.
    Report { dir: PathBuf },
}

fn load(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if arg == BUILTIN_REPLAY && !path.exists() {
        Ok(Scenario::paper_replay())
    } else {
        Scenario::from_path(path)
    }
}

fn print_scenario_error(e: &ScenarioError) {
    match e {
        ScenarioError::Invalid(errors) => {
            for v in errors {
                eprintln!("invalid: {}: {}", v.path, v.message);
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn simulate(scenario: &str, seed: Option<u64>, scale: f64, out: &Path, check: bool) -> u8 {
    let base = match load(scenario) {
        Ok(s) => s,
        Err(e) => {
            print_scenario_error(&e);
            return INVALID;
        }
    };
    let sc = match base.scaled(scale) {
        Ok(s) => s,
        Err(e) => {
            print_scenario_error(&e);
            return INVALID;
        }
    };
    let seed = seed.unwrap_or(sc.seed);
    let started = Instant::now();
    let run = match sim::run_with_seed(&sc, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return INTERNAL;
        }
    };
    eprintln!("simulated {} records in {:.2?}", run.trace.len(), started.elapsed());

    let checked = if check {
        match check_run(&sc, &run) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("error: {e}");
                return INTERNAL;
            }
        }
    } else {
        None
    };
    let (figures, acceptance) = match &checked {
        Some((a, f)) => (Some(f), Some(a)),
        None => (None, None),
    };
    let manifest = match emit_outputs(&run, &sc.perf, sc.workload.size_factor, figures, acceptance, out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return INTERNAL;
        }
    };
    for f in &manifest.files {
        println!("{}", f.display());
    }
    match acceptance {
        Some(a) => {
            for c in &a.criteria {
                println!("{c}");
            }
            if a.passed() {
                OK
            } else {
                REJECTED
            }
        }
        None => OK,
    }
}

fn validate(scenario: &str) -> u8 {
    match load(scenario) {
        Ok(s) => {
            println!(
                "ok: {} ({} regions, {} plan steps, horizon {:.0} min)",
                s.name,
                s.regions.len(),
                s.plan.len(),
                s.horizon.as_mins_f64()
            );
            OK
        }
        Err(e) => {
            print_scenario_error(&e);
            INVALID
        }
    }
}

fn report(dir: &Path) -> u8 {
    match rebuild(dir, &PerfTable::builtin()) {
        Ok((summary, peak, totals)) => {
            println!("{}", peak.to_text());
            println!("{}", totals.to_text());
            for (k, v) in summary.fields.iter().filter(|(k, _)| k.starts_with("check.") && !k.ends_with(".detail")) {
                println!("{} {}", v, &k["check.".len()..]);
            }
            OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if !dir.join(SUMMARY_FILE).exists() {
                eprintln!("hint: {} is not a run directory", dir.display());
            }
            INTERNAL
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { INVALID } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.cmd {
        Cmd::Simulate { scenario, seed, scale, out, check } => simulate(&scenario, seed, scale, &out, check),
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::Report { dir } => report(&dir),
    };
    ExitCode::from(code)
}
