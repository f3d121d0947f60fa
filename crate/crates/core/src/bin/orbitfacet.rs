use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orbitfacet::scenario::{run, RunOptions, RunSummary, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(version, about = "Orbit, attitude and formation simulation for faceted spacecraft")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the file.
    Run(RunArgs),
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the file as an actuator sweep.
    Sweep(RunArgs),
    /// Run the file as a follower transfer optimization.
    Trajopt(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Keep every S-th integrator step in the time series.
    #[arg(long)]
    stride: Option<usize>,
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn report(s: &RunSummary) {
    println!("scenario {}, config {}", s.scenario, &s.config_hash[..16]);
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    for c in &s.spacecraft {
        println!(
            "{:<12} rms {:.5} deg  terminal {:.5} deg  settling {}  power {:.3e} W{}",
            c.name,
            c.rms_attitude_error_deg,
            c.terminal_error_deg,
            c.settling_time.map_or("-".into(), |t| format!("{t:.0} s")),
            c.avg_power,
            c.failure.as_ref().map_or(String::new(), |f| format!("  FAILED {f}"))
        );
    }
    for c in &s.sweep {
        match (&c.error, c.spin_rate_error, c.avg_power) {
            (None, Some(e), Some(p)) => println!(
                "coils {} intensity {}: spin error {e:.3e} rad/s, power {p:.3e} W",
                c.coils, c.intensity
            ),
            (err, _, _) => println!(
                "coils {} intensity {}: FAILED {}",
                c.coils,
                c.intensity,
                err.clone().unwrap_or_default()
            ),
        }
    }
    for t in &s.transfers {
        match &t.report {
            Some(r) => println!(
                "{}: converged {} cost {:.6e} min separation {:.3} m terminal miss {:.3e} m{}",
                t.name,
                r.converged,
                r.final_cost,
                r.min_separation,
                t.replay.as_ref().map_or(r.terminal_miss, |d| d.terminal_miss),
                t.error.as_ref().map_or(String::new(), |e| format!("  ({e})"))
            ),
            None => println!("{}: FAILED {}", t.name, t.error.clone().unwrap_or_default()),
        }
    }
    eprintln!("wall clock {:.2} s", s.wall_clock);
}

fn execute(args: RunArgs, force: Option<ScenarioKind>) -> ExitCode {
    let mut cfg = match load(&args.scenario) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(kind) = force {
        cfg.scenario = kind;
    }
    if let Some(s) = args.stride {
        cfg.output.stride = s;
    }
    let opts = RunOptions {
        threads: args.threads,
        out: Some(args.out),
    };
    match run(&cfg, &opts) {
        Ok(summary) => {
            report(&summary);
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(a) => execute(a, None),
        Command::Sweep(a) => execute(a, Some(ScenarioKind::Sweep)),
        Command::Trajopt(a) => execute(a, Some(ScenarioKind::Trajopt)),
        Command::Validate { scenario } => match load(&scenario) {
            Ok(cfg) => {
                for w in cfg.warnings() {
                    eprintln!("warning: {w}");
                }
                println!("{}: ok ({}, config {})", scenario.display(), cfg.scenario, cfg.hash());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
    }
}
