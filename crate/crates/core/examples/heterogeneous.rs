// Servers with different speeds and laws: identities and weighted bounds.
use ggn_lab::bounds::bound_report;
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{run_replications, Mode, QueueModel, RunConfig};
use ggn_lab::verify::verify_output;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let services = vec![
        DistributionSpec::exponential(1.0)?,
        DistributionSpec::deterministic(0.5)?,
        DistributionSpec::gamma(0.5, 1.0)?,
    ];
    let model = QueueModel::new(DistributionSpec::exponential(1.0)?, services, Mode::Modified)?.with_load(0.6)?;
    println!("{}: μ = {:?}, ρ = {:.2}", model.label(), model.service_rates(), model.rho());
    let out = run_replications(&model, &[31, 32], &RunConfig::new(0, 500_000))?;
    let report = verify_output(&out, &model)?;
    print!("{}", report.to_csv());
    let q = out.time_avg_q()?;
    let bounds = bound_report(&model, None, 0.5)?;
    for name in ["hetero_main", "hetero_simplified"] {
        println!("{name}: {:.4} (simulated {:.4})", bounds.value(name).unwrap_or(f64::NAN), q.value);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
