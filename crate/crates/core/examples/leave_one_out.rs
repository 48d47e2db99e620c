// Leave-one-out queues: dominance, uncorrelation and conditional residuals.
use ggn_lab::dist::DistributionSpec;
use ggn_lab::loo::{check_conditional_residuals, check_dominance, check_uncorrelation, loo_zero_frequency};
use ggn_lab::sim::{run_replications, Mode, QueueModel, RunConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = QueueModel::poisson(DistributionSpec::gamma(0.5, 2.0)?, 3, 0.5, Mode::Modified)?;
    let out = run_replications(&model, &[21, 22], &RunConfig::new(0, 500_000).with_tracked(vec![0, 1]))?;
    let dom = check_dominance(&out)?;
    println!("Q_loo ≥ Q at every event: {} (min margin {})", dom.pass, dom.min_margin);
    if !dom.pass {
        return Err("leave-one-out dominance violated".into());
    }
    let c = check_uncorrelation(&out, &model, 1, 0)?;
    println!("residual gap at server-1 completions on Q_loo[0] = 0: {:.4} ± {:.4}", c.value, c.std_error);
    println!("P(Q_loo[0] = 0) = {:.4}", loo_zero_frequency(&out, 0)?.value);
    for cell in check_conditional_residuals(&out, &model, 4.0).iter().filter(|c| c.j == 0) {
        match cell.estimate {
            Some(e) => println!("{:<12} {:?} {:?}: {:.4} (bound {:.4}, n={})", cell.cell, cell.measure, cell.quantity, e.value, cell.bound, cell.samples),
            None => println!("{:<12} {:?} {:?}: skipped ({})", cell.cell, cell.measure, cell.quantity, cell.skip_reason.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
