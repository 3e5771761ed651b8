//! Solve one random tour with limited rollout beam search under the uniform
//! policy and print the trace of best lengths after each selection.
//!
//! cargo run --release --example solve_tsp -- [nodes beta alpha n_s t_max seed]

use lrbs::instance::{gen_uniform_tsp, held_karp_optimal, HELD_KARP_MAX_NODES};
use lrbs::mdp::Problem;
use lrbs::policy::UniformPolicy;
use lrbs::search::{lrbs, SearchConfig};

fn main() -> lrbs::Result<()> {
    env_logger::init();
    let args: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("integer argument")).collect();
    let arg = |i: usize, default: u64| args.get(i).copied().unwrap_or(default);
    let nodes = arg(0, 12) as usize;
    let config = SearchConfig::new(arg(1, 8) as usize, arg(2, 4) as usize, arg(3, 5) as usize, arg(4, 300) as usize)
        .with_seed(arg(5, 0));

    let instance = gen_uniform_tsp(nodes, arg(5, 0))?;
    let optimum = (nodes <= HELD_KARP_MAX_NODES)
        .then(|| held_karp_optimal(&instance))
        .transpose()?;
    let problem = Problem::Tsp(instance);
    let result = lrbs(&problem, &UniformPolicy, &config)?;

    for (block, len) in result.trace.iter().enumerate() {
        println!("block {block:>3}: best {len:.5}");
    }
    println!("tour {:?}", result.best_solution);
    println!("length {:.6} after {} steps in {:.3}s", result.best_length, result.steps_consumed, result.wall_seconds);
    if let Some(opt) = optimum {
        println!("optimum {:.6} (gap {:.3}%)", opt.optimal_length, (result.best_length / opt.optimal_length - 1.0) * 100.0);
    }
    Ok(())
}
