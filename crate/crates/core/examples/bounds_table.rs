// Every closed-form bound for a few models, as CSV.
use ggn_lab::bounds::bound_report;
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{Mode, QueueModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let models = [
        QueueModel::poisson(DistributionSpec::exponential(1.0)?, 10, 0.9, Mode::Original)?,
        QueueModel::poisson(DistributionSpec::gamma(0.5, 2.0)?, 4, 0.95, Mode::Original)?,
        QueueModel::homogeneous(DistributionSpec::erlang(2, 2.0)?, DistributionSpec::deterministic(2.0)?, 3, Mode::Original)?,
    ];
    for m in &models {
        let report = bound_report(m, None, 0.5)?;
        println!("# {}", m.label());
        print!("{}", report.to_csv());
        let main = report.value("main").ok_or("main bound missing")?;
        if !(main.is_finite() && main > 0.0) {
            return Err("main bound not finite".into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
