// Recomputes Q from arrival and completion counts on a logged run.
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{queue_length_oracle, run, InitConfig, Mode, QueueModel, RunConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = QueueModel::poisson(DistributionSpec::deterministic(1.0)?, 2, 0.9, Mode::Modified)?;
    let cfg = RunConfig::new(9, 20_000).with_init(InitConfig::fresh(5)).with_log();
    let out = run(&model, &cfg)?;
    let log = out.log.as_ref().ok_or("run was not logged")?;
    let q = queue_length_oracle(log)?;
    println!("{} events, formula matches simulation, final Q = {}", log.len(), q.last().copied().unwrap_or(0));
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    let text = String::from_utf8(csv)?;
    for line in text.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
