// Covariance terms Γ and the exact decomposition of (1−ρ)E[Q].
use ggn_lab::dist::DistributionSpec;
use ggn_lab::loo::{estimate_gammas, gamma_rows};
use ggn_lab::sim::{run_replications, Mode, QueueModel, RunConfig};
use ggn_lab::verify::{check_covariance_bounds, check_key_decomposition, Z_EQUALITY};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = QueueModel::homogeneous(
        DistributionSpec::erlang(2, 2.0 * 0.8 * 4.0 / 3.0)?,
        DistributionSpec::erlang(3, 3.0)?,
        4,
        Mode::Modified,
    )?;
    let out = run_replications(&model, &[5, 6], &RunConfig::new(0, 500_000))?;
    let g = estimate_gammas(&out, &model)?;
    print!("{}", gamma_rows(&g, &model, Z_EQUALITY));
    let d = check_key_decomposition(&out, &model, &g)?;
    println!("(1−ρ)E[Q] = {:.4}, decomposition = {:.4}, z = {:.2}", d.lhs.value, d.rhs, d.z);
    for c in check_covariance_bounds(&g, &model) {
        println!("{}: {:.4} vs bound {:.4} pass={}", c.name, c.lhs.value, c.rhs, c.pass);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
