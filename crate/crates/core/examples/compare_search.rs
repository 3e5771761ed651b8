//! Compares limited rollout beam search with equal-budget policy sampling,
//! plain beam search and SGBS+C on random 50-node tours.
//!
//! cargo run --release --example compare_search -- <policy.params> [beta alpha n_s t_max seeds objective]

use lrbs::instance::gen_uniform_tsp;
use lrbs::mdp::Problem;
use lrbs::policy::{PolicyParams, ReferencePolicy};
use lrbs::search::{solve, Method, SearchConfig};

fn main() -> lrbs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let params = PolicyParams::load(args.first().expect("usage: compare_search <policy.params> ..."))?;
    let num = |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let mut config = SearchConfig::new(num(1, 30), num(2, 2), num(3, 20), num(4, 2000));
    if let Some(o) = args.get(6) {
        config.objective = o.parse()?;
    }
    let seeds = num(5, 10) as u64;
    let policy = ReferencePolicy::new(&params);
    let methods = [Method::Lrbs, Method::GreedySample, Method::Bs, Method::SgbsC];
    let mut totals = [0.0; 4];
    let mut wins = [0usize; 4];
    for seed in 0..seeds {
        let p = Problem::Tsp(gen_uniform_tsp(50, 5000 + seed)?);
        let c = config.with_seed(seed);
        let mut row = [0.0; 4];
        for (k, m) in methods.iter().enumerate() {
            if *m == Method::SgbsC && config.t_max > 500 {
                continue;
            }
            let r = solve(&p, &policy, &c, *m)?;
            row[k] = r.best_length;
            totals[k] += r.best_length / seeds as f64;
        }
        for k in 1..4 {
            wins[k] += usize::from(row[0] <= row[k]);
        }
        println!("seed {seed}: lrbs {:.4}  sample {:.4}  bs {:.4}  sgbs_c {:.4}", row[0], row[1], row[2], row[3]);
    }
    println!("means: {totals:.4?}");
    println!("lrbs <= sample on {}/{seeds}, <= bs on {}/{seeds}", wins[1], wins[2]);
    Ok(())
}
