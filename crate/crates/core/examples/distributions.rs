// Moments, residual profiles and sampling for each supported family.
use ggn_lab::dist::DistributionSpec;
use ggn_lab::rng::RandomStream;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let laws = vec![
        DistributionSpec::exponential(1.0)?,
        DistributionSpec::gamma(0.5, 2.0)?,
        DistributionSpec::deterministic(1.0)?,
        DistributionSpec::uniform(0.5, 1.5)?,
        DistributionSpec::hyperexponential(vec![0.5, 0.5], vec![0.5, 2.0])?,
        DistributionSpec::erlang(3, 3.0)?,
        DistributionSpec::phase_type(vec![0.5, 0.5], vec![vec![-1.0, 0.5], vec![0.0, -3.0]])?,
    ];
    let mut rng = RandomStream::new(7);
    println!("{:<16} {:>8} {:>8} {:>8} {:>10} {:>10}", "family", "mean", "scv", "sample", "R_sup", "R_inf");
    for d in &laws {
        let m = d.moments();
        let draws = 50_000;
        let avg = (0..draws).map(|_| d.sample(&mut rng)).sum::<f64>() / draws as f64;
        let p = d.unitize().residual_profile();
        println!(
            "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>10.4} {:>10.4}",
            d.family().name(),
            m.mean,
            m.scv,
            avg,
            p.r_sup,
            p.r_inf
        );
        if (avg - m.mean).abs() > 0.05 * m.mean.max(1.0) * (1.0 + m.scv.sqrt()) {
            return Err(format!("{}: sample mean {avg} far from {}", d.family().name(), m.mean).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
