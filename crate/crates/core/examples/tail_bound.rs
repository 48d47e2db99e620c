// P(S > t) ≤ min(1, C·exp(−(t−1)/C)) for a unit-mean law with mean residual at most C.
use ggn_lab::bounds::tail_bound;
use ggn_lab::dist::DistributionSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for d in [DistributionSpec::gamma(2.0, 0.5)?, DistributionSpec::uniform(0.5, 1.5)?, DistributionSpec::erlang(2, 2.0)?] {
        let c = d.residual_profile().r_sup;
        println!("{} (R^max = {c:.4})", d.family().name());
        for t in [0.5, 1.0, 2.0, 4.0] {
            let (tail, bound) = (d.tail(t), tail_bound(c, t));
            println!("  t = {t:<4} P(S > t) = {tail:.5}  bound {bound:.5}");
            if tail > bound + 1e-12 {
                return Err("tail exceeds the bound".into());
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
