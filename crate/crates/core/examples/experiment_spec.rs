//! Drive the harness from a TOML spec: a method matrix on one dataset, run
//! twice to show that completed cells are skipped.
//!
//! cargo run --release --example experiment_spec -- [out_dir]

use lrbs::bench::{render_report, report, run_experiment, ExperimentSpec};

const SPEC: &str = r#"
output_dir = "experiment_out"
oracle = "exact"

[dataset]
problem = "tsp"
n = 14
count = 6
seed = 3

[[methods]]
method = "lrbs"
search = { beta = 6, alpha = 2, n_s = 10, t_max = 200 }

[[methods]]
name = "sample"
method = "greedy_sample"
search = { beta = 6, alpha = 2, n_s = 10, t_max = 200 }

[[methods]]
method = "bs"
search = { beta = 6, alpha = 2, n_s = 10, t_max = 200 }

[[methods]]
method = "lrbs_oa"
search = { beta = 6, alpha = 2, n_s = 10, t_max = 200 }
adapt = { learning_rate = 0.01, reset_per_instance = true }
"#;

fn main() -> lrbs::Result<()> {
    env_logger::init();
    let mut spec = ExperimentSpec::from_toml(SPEC)?;
    if let Some(dir) = std::env::args().nth(1) {
        spec.output_dir = dir.into();
    }
    let first = run_experiment(&spec)?;
    println!("solved {} cells", first.computed);
    let second = run_experiment(&spec)?;
    println!("rerun solved {} cells", second.computed);
    print!("{}", render_report(&report(&spec.output_dir)?));
    Ok(())
}
