use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ggn_lab::experiment::{self, Artifacts, ExperimentConfig, Task};

#[derive(Parser)]
#[command(name = "ggn-lab", version, about = "GI/GI/n simulation lab and mean queue-length bound engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks listed in the config (default: simulate).
    Simulate(Common),
    /// Print the bound table.
    Bounds(Common),
    /// Run the identity suite; exits nonzero if any check fails.
    Verify(Common),
    /// Run the (rho, n) sweep.
    Sweep(Common),
    /// Simulate the worked M/GI/n examples against their stated bounds.
    Reproduce(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; replaces any explicit seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Events per replication.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

impl Common {
    fn load(&self, tasks: Option<Vec<Task>>) -> Result<ExperimentConfig, String> {
        let path = self.config.as_ref().ok_or("--config <file> is required")?;
        let mut cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
        if let Some(seed) = self.seed {
            cfg.run.seeds = None;
            cfg.run.master_seed = seed;
        }
        if let Some(events) = self.events {
            cfg.run.events = events;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(t) = tasks {
            cfg.tasks = t;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn finish(art: &Artifacts, dir: &std::path::Path, json: bool, table: Option<&str>) -> Result<bool, String> {
    let files = art.write(dir).map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&art.summary).expect("json"));
    } else if let Some(t) = table {
        print!("{t}");
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(art.pass)
}

fn execute(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Reproduce(c) => {
            let (seeds, events, dir) = match &c.config {
                Some(_) => {
                    let cfg = c.load(Some(Vec::new()))?;
                    (cfg.run.seed_list(), cfg.run.events, cfg.output.dir)
                }
                None => (
                    vec![c.seed.unwrap_or(1)],
                    c.events.unwrap_or(1_000_000),
                    c.out.clone().unwrap_or_else(|| PathBuf::from("out")),
                ),
            };
            let art = experiment::reproduce_artifacts(&seeds, events).map_err(|e| e.to_string())?;
            let table = art.verify_csv.clone();
            finish(&art, &dir, c.json, table.as_deref())
        }
        Command::Simulate(c) => {
            let cfg = c.load(None)?;
            let art = experiment::run_experiment(&cfg, &[]).map_err(|e| e.to_string())?;
            let table = serde_json::to_string_pretty(&art.summary).expect("json") + "\n";
            finish(&art, &cfg.output.dir, c.json, Some(&table))
        }
        Command::Bounds(c) => {
            let cfg = c.load(Some(vec![Task::Bounds]))?;
            let model = cfg.model.build().map_err(|e| e.to_string())?;
            let report = ggn_lab::bounds::bound_report(&model, None, cfg.bounds.epsilon).map_err(|e| e.to_string())?;
            if c.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            } else {
                print!("{}", report.to_csv());
            }
            Ok(true)
        }
        Command::Verify(c) => {
            let cfg = c.load(Some(vec![Task::Verify]))?;
            let art = experiment::run_experiment(&cfg, &[]).map_err(|e| e.to_string())?;
            let table = art.verify_csv.clone();
            finish(&art, &cfg.output.dir, c.json, table.as_deref())
        }
        Command::Sweep(c) => {
            let cfg = c.load(Some(vec![Task::Sweep]))?;
            let art = experiment::run_experiment(&cfg, &[]).map_err(|e| e.to_string())?;
            let table = art.sweep_csv.clone();
            finish(&art, &cfg.output.dir, c.json, table.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
