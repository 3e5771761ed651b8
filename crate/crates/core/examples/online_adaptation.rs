//! Online adaptation: beam search that trains the residual weights while it
//! solves, compared with the frozen policy on larger instances than it was
//! trained on.
//!
//! cargo run --release --example online_adaptation -- <policy.params> [lr nodes beta alpha n_s t_max seeds]

use lrbs::adapt::{lrbs_oa, AdaptConfig};
use lrbs::instance::gen_uniform_tsp;
use lrbs::mdp::Problem;
use lrbs::policy::{PolicyParams, ReferencePolicy};
use lrbs::search::{lrbs, SearchConfig};

fn main() -> lrbs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let params = PolicyParams::load(args.first().expect("usage: online_adaptation <policy.params> ..."))?;
    let lr: f64 = args.get(1).map_or(0.01, |s| s.parse().expect("learning rate"));
    let num = |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let nodes = num(2, 50);
    let config = SearchConfig::new(num(3, 30), num(4, 2), num(5, 20), num(6, 1000));
    let seeds = num(7, 10) as u64;
    let adapt = AdaptConfig::online().with_learning_rate(lr);

    let frozen = ReferencePolicy::new(&params);
    let mut wins = 0;
    for seed in 0..seeds {
        let p = Problem::Tsp(gen_uniform_tsp(nodes, 7000 + seed)?);
        let c = config.with_seed(seed);
        let base = lrbs(&p, &frozen, &c)?;
        let (oa, phi) = lrbs_oa(&p, &params, &c, &adapt)?;
        wins += usize::from(oa.best_length <= base.best_length);
        println!(
            "seed {seed}: frozen {:.4} ({:.1}s)  adapted {:.4} ({:.1}s)  phi0 {:+.3}",
            base.best_length,
            base.wall_seconds,
            oa.best_length,
            oa.wall_seconds,
            phi.head(0)[0]
        );
    }
    println!("adapted <= frozen on {wins}/{seeds}");
    Ok(())
}
