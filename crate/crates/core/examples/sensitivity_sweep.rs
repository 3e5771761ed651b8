//! A small grid over step budget and beam shape, written as a long-format
//! table keyed by (t_max, beta, alpha), with exact gaps.
//!
//! cargo run --release --example sensitivity_sweep -- [out_dir nodes count]

use lrbs::bench::{sweep, BenchMethod, DatasetSpec, ExperimentSpec, MethodSpec, ProblemKind, SweepGrid};
use lrbs::search::SearchConfig;

fn main() -> lrbs::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().cloned().unwrap_or_else(|| "sweep_out".into());
    let nodes = args.get(1).map_or(12, |s| s.parse().expect("node count"));
    let count = args.get(2).map_or(8, |s| s.parse().expect("instance count"));

    let base = ExperimentSpec::new(
        DatasetSpec::generated(ProblemKind::Tsp, nodes, count, 0),
        vec![MethodSpec::new(BenchMethod::Lrbs, SearchConfig::new(1, 1, 10, 10))],
        &out,
    );
    let grid = SweepGrid {
        t_max: vec![20, 50, 100, 200],
        beta_alpha: vec![(12, 1), (6, 2), (4, 3)],
        n_s: Some(10),
    };
    for r in sweep(&base, &grid)? {
        println!(
            "t_max {:>4}  beta {:>2}  alpha {}  gap {:>7.3}%  ({:.2}s)",
            r.t_max,
            r.beta,
            r.alpha,
            r.gap_percent.unwrap_or(f64::NAN),
            r.total_seconds
        );
    }
    println!("table in {out}/sweep.csv");
    Ok(())
}
