// FCFS M/M/n waiting count against Erlang-C.
use ggn_lab::dist::DistributionSpec;
use ggn_lab::sim::{run_replications, Mode, QueueModel, Routing, RunConfig};
use ggn_lab::verify::mmn_waiting;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = QueueModel::poisson(DistributionSpec::exponential(1.0)?, 4, 0.8, Mode::Original)?
        .with_routing(Routing::UniformRandomIdle);
    let cfg = RunConfig::new(0, 500_000).with_tracked(Vec::new());
    let q = run_replications(&model, &[3, 4], &cfg)?.time_avg_q()?;
    let exact = mmn_waiting(4, 0.8);
    println!("M/M/4 at ρ = 0.8: waiting {:.4} ± {:.4}, Erlang-C {exact:.4}", q.value, q.std_error);
    if q.z_score(exact).abs() > 5.0 {
        return Err("waiting count disagrees with Erlang-C".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
