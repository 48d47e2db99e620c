// Bounds across ρ and n, with Halfin–Whitt and NDS scalings.
use ggn_lab::experiment::{run_sweep, sweep_csv, ExperimentConfig};

const CONFIG: &str = r#"
tasks = ["sweep"]

[model]
arrival = { family = "exponential", rate = 1.0 }
service = { family = "exponential", rate = 1.0 }
n = 1

[run]
events = 50000

[sweep]
rho = [0.5, 0.9]
n = [1, 4, 16, 64]
halfin_whitt = [1.0]
nds = [1.0]
simulate = false
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let rows = run_sweep(&cfg)?;
    print!("{}", sweep_csv(&rows));
    for r in &rows {
        if (r.bound_times_one_minus_rho - 1.0).abs() > 1e-12 {
            return Err(format!("M/M/n bound times (1−ρ) is {} at n={}", r.bound_times_one_minus_rho, r.n).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
