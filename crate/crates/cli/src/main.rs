use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use levelbot::scenario_file::parse_scenario;
use levelbot::scenarios;
use levelbot::sim::{self, RunOptions, Scenario};

const EXIT_USAGE: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "levelbot", version, about = "Simulate robots carrying a self-leveling payload")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file.
    Run {
        /// Built-in name (see `list`) or path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// Output directory for log.csv and metrics.txt.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the IMU noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulated duration in seconds.
        #[arg(long, value_parser = positive_seconds)]
        duration: Option<f64>,
        /// Also write plot.py next to the log.
        #[arg(long)]
        plot_script: bool,
        /// Evaluate robots on the thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// List built-in scenarios.
    List,
    /// Check a scenario file without running it.
    Validate { path: PathBuf },
}

fn positive_seconds(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(_) => Err("must be a positive number of seconds".into()),
        Err(e) => Err(e.to_string()),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn scenario(message: impl ToString) -> Self {
        Failure { code: EXIT_SCENARIO, message: message.to_string() }
    }
    fn runtime(message: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

fn load(arg: &str) -> Result<Scenario, Failure> {
    if scenarios::NAMES.contains(&arg) {
        return scenarios::builtin(arg).map_err(Failure::scenario);
    }
    let path = Path::new(arg);
    if !path.exists() && !arg.contains(['/', '.']) {
        return Err(Failure::scenario(format!(
            "unknown scenario `{arg}`: not a built-in ({}) and no such file",
            scenarios::NAMES.join(", ")
        )));
    }
    parse_scenario(path).map_err(Failure::scenario)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(
    scenario: &str,
    out: &Path,
    seed: Option<u64>,
    duration: Option<f64>,
    plot_script: bool,
    parallel: bool,
) -> Result<(), Failure> {
    let mut sc = load(scenario)?;
    if let Some(seed) = seed {
        sc.imu.seed = seed;
    }
    if let Some(d) = duration {
        sc.duration = d;
    }
    sc.validate().map_err(Failure::scenario)?;

    let log = sim::run_with(&sc, RunOptions { parallel }).map_err(Failure::runtime)?;
    let metrics = sim::summarize(&log).map_err(Failure::runtime)?;

    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out.display())))?;
    write(&out.join("log.csv"), &sim::write_csv(&log))?;
    let text = format!("scenario={}\nrobots={}\nduration={}\n{}", sc.name, sc.robots.len(), sc.duration, metrics.to_text());
    write(&out.join("metrics.txt"), &text)?;
    if plot_script {
        write(&out.join("plot.py"), PLOT_SCRIPT)?;
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::List => {
            for name in scenarios::NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Validate { path } => parse_scenario(&path).map_err(Failure::scenario).map(|sc| {
            println!("ok: {} ({} robots, {} s)", sc.name, sc.robots.len(), sc.duration);
        }),
        Command::Run { scenario, out, seed, duration, plot_script, parallel } => {
            run(&scenario, &out, seed, duration, plot_script, parallel)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot payload tilt and piston lengths from log.csv (needs matplotlib)."""
import csv
import math
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
with open(here / "log.csv", newline="") as f:
    rows = list(csv.DictReader(f))

t = [float(r["t"]) for r in rows]
n = sum(1 for k in rows[0] if k.startswith("length_"))

fig, (ax1, ax2, ax3) = plt.subplots(3, 1, sharex=True, figsize=(9, 9))
for key in ("roll", "pitch"):
    ax1.plot(t, [math.degrees(float(r[key])) for r in rows], label=key)
ax1.set_ylabel("tilt [deg]")
ax1.legend()
for i in range(n):
    ax2.plot(t, [float(r[f"length_{i}"]) for r in rows], label=f"robot {i}")
ax2.set_ylabel("piston length [m]")
ax2.legend()
for i in range(n):
    ax3.plot(t, [float(r[f"formation_error_{i}"]) for r in rows], label=f"robot {i}")
ax3.set_ylabel("formation error [m]")
ax3.set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(here / "plot.png", dpi=120)
print(f"wrote {here / 'plot.png'}")
"#;
