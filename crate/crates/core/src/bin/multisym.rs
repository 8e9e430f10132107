use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use multisym::scenario::{exit_code, run_scenario, ScenarioConfig, Task};

/// Run a De Donder–Weyl scenario and write CSV artifacts plus summary.json.
#[derive(Debug, Parser)]
#[command(name = "multisym", version)]
struct Cli {
    /// algebra-check, verify-xh, integrate, hj-check or foliation-check
    task: Task,
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = ScenarioConfig::from_path(&cli.config).and_then(|mut cfg| {
        if let Some(t) = cfg.task.filter(|&t| t != cli.task) {
            return Err(multisym::Error::Config(format!(
                "config is for task `{t}` but `{}` was requested",
                cli.task
            )));
        }
        cfg.task = Some(cli.task);
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| "out".into());
        run_scenario(&cfg, &out)
    });
    match &outcome {
        Ok(summary) => {
            for c in &summary.checks {
                if c.bound == "report" {
                    println!("INFO {}: {:e}", c.name, c.value);
                    continue;
                }
                println!(
                    "{} {}: {:e} ({} {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.bound,
                    c.tolerance
                );
            }
            println!("{}: {}", summary.task, if summary.passed { "passed" } else { "failed" });
        }
        Err(e) => {
            eprintln!("error: {e}");
        }
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
