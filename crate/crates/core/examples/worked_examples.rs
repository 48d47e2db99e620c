// The worked M/GI/n examples: stated constants and a short simulation.
use ggn_lab::experiment::{reproduce_examples, worked_examples};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for ex in worked_examples() {
        let r = ex.service.unitize().residual_profile().r_sup;
        println!("{:<16} constant {:.4}  sup residual {:.4}", ex.name, ex.constant, r);
    }
    let report = reproduce_examples(&[1], 60_000)?;
    for c in report.checks.iter().filter(|c| c.name.starts_with("example:")) {
        println!("{:<48} E[Q] {:>8.3}  bound {:>8.3}  {}", c.name, c.lhs.value, c.rhs, if c.pass { "ok" } else { "FAIL" });
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
