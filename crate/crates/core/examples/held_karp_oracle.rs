//! Exact optima for small instances: Held-Karp for tours, enumeration for
//! pickup-and-delivery tours under both ordering rules.
//!
//! cargo run --release --example held_karp_oracle -- [nodes requests seed]

use std::time::Instant;

use lrbs::instance::{brute_force_pdp_optimal, gen_uniform_pdp, gen_uniform_tsp, held_karp_optimal_up_to, tour_length};
use lrbs::mdp::PdVariant;

fn main() -> lrbs::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("integer argument")).collect();
    let nodes = args.first().copied().unwrap_or(15) as usize;
    let requests = args.get(1).copied().unwrap_or(3) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let tsp = gen_uniform_tsp(nodes, seed)?;
    let started = Instant::now();
    let opt = held_karp_optimal_up_to(&tsp, nodes)?;
    println!(
        "TSP{nodes}: optimum {:.6} in {:.2}s, tour {:?}",
        opt.optimal_length,
        started.elapsed().as_secs_f64(),
        opt.optimal_tour
    );
    assert_eq!(tour_length(&tsp, &opt.optimal_tour)?, opt.optimal_length);

    let pdp = gen_uniform_pdp(requests, seed)?;
    for variant in [PdVariant::Precedence, PdVariant::Lifo] {
        let r = brute_force_pdp_optimal(&pdp, variant)?;
        println!("PDP{requests} {variant:?}: optimum {:.6}, tour {:?}", r.optimal_length, r.optimal_tour);
    }
    Ok(())
}
