use clap::{Parser, Subcommand};
use crashsim::experiments::{run_sweep, to_csv, verify_trace, RunConfig, TraceFile};
use crashsim::overlay::{build_overlay_with, overlay_property_checks, PAPER_EDGE_FACTOR};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "crashsim", about = "Crash-fault consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep; the CSV goes to the configured output or stdout.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check the invariants of a recorded trace.
    Verify {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Build one overlay graph and run the property verifiers on it.
    Graphcheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        delta: u32,
        #[arg(long)]
        gamma: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Samples per sampled property.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = PAPER_EDGE_FACTOR)]
        edge_factor: f64,
    },
}

fn run(config: PathBuf) -> Result<bool, String> {
    let text = std::fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
    let cfg = RunConfig::parse(&text).map_err(|e| format!("{}: {e}", config.display()))?;
    let rows = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let bad = rows.iter().filter(|r| !(r.agreement_ok && r.validity_ok)).count();
    match &cfg.output {
        Some(out) => eprintln!("{} rows written to {}", rows.len(), out.display()),
        None => print!("{}", to_csv(&rows)),
    }
    if bad > 0 {
        eprintln!("{bad} of {} rows failed agreement or validity", rows.len());
    }
    Ok(bad == 0)
}

fn verify(trace: PathBuf) -> Result<bool, String> {
    let t = TraceFile::load(&trace).map_err(|e| e.to_string())?;
    let report = verify_trace(&t);
    print!("{report}");
    Ok(report.passed())
}

fn graphcheck(n: usize, k: f64, delta: u32, gamma: u32, seed: u64, samples: usize, edge_factor: f64) -> bool {
    let g = build_overlay_with(n, k, delta, gamma, seed, edge_factor);
    let degrees = (0..n as u32).map(|v| g.degree(v));
    let (lo, hi) = degrees.fold((usize::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
    println!("n={n} edges={} degree=[{lo}, {hi}]", g.edge_count());
    let mut all = true;
    for (name, v) in overlay_property_checks(&g, k, delta, gamma, samples, seed) {
        let mode = if v.sampled { "sampled" } else { "exact" };
        println!("{} {name} ({mode})", if v.holds { "PASS" } else { "FAIL" });
        all &= v.holds;
    }
    all
}

fn main() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Run { config } => run(config),
        Command::Verify { trace } => verify(trace),
        Command::Graphcheck {
            n,
            k,
            delta,
            gamma,
            seed,
            samples,
            edge_factor,
        } => Ok(graphcheck(n, k, delta, gamma, seed, samples, edge_factor)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
