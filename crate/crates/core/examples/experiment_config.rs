// A TOML experiment run end to end, writing artifacts to a directory.
use ggn_lab::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
tasks = ["simulate", "bounds", "verify"]

[model]
arrival = { family = "exponential", rate = 1.0 }
service = { family = "erlang", k = 2, rate = 2.0 }
n = 2
rho = 0.7

[run]
replications = 2
events = 200000
events_csv = true
log_events = 1000
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let art = run_experiment(&cfg, &[])?;
    let dir = std::env::temp_dir().join(format!("ggn-lab-example-{}", art.config_hash));
    for f in art.write(&dir)? {
        println!("wrote {}", f.display());
    }
    println!("config hash {}, all checks pass: {}", art.config_hash, art.pass);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
