// Rate-conservation identities on a simulated M/Gamma/3 run.
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{run_replications, Mode, QueueModel, RunConfig};
use ggn_lab::verify::{check_bar_identities, VerifyReport};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = QueueModel::poisson(DistributionSpec::gamma(0.5, 2.0)?, 3, 0.6, Mode::Modified)?;
    let out = run_replications(&model, &[1, 2], &RunConfig::new(0, 500_000))?;
    let report = VerifyReport::new(&model, out.horizon_events, out.seeds.clone(), check_bar_identities(&out, &model)?);
    print!("{}", report.to_csv());
    println!("all identities hold: {}", report.pass);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
