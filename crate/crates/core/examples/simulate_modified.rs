// Modified M/M/n (servers never idle) against E[Q] = ρ/(1−ρ).
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{run_replications, Mode, QueueModel, RunConfig};
use ggn_lab::verify::modified_mmn_mean;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let exp = DistributionSpec::exponential(1.0)?;
    for (n, rho) in [(1, 0.5), (4, 0.8)] {
        let model = QueueModel::poisson(exp.clone(), n, rho, Mode::Modified)?;
        let cfg = RunConfig::new(0, 400_000).with_tracked(Vec::new());
        let q = run_replications(&model, &[11, 12], &cfg)?.time_avg_q()?;
        let exact = modified_mmn_mean(rho);
        println!("{}: E[Q] = {:.4} ± {:.4}, exact {exact:.4}, z = {:.2}", model.label(), q.value, q.std_error, q.z_score(exact));
        if q.z_score(exact).abs() > 5.0 {
            return Err("simulated mean far from ρ/(1−ρ)".into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
