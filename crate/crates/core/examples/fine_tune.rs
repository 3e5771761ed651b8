//! Offline fine-tuning: adapt the residual weights on a small set of larger
//! instances, then solve a test set with them frozen.
//!
//! cargo run --release --example fine_tune -- <policy.params> [lr nodes test_size t_max]

use lrbs::adapt::{fine_tune, ft_dataset_size, AdaptConfig, DEFAULT_FT_FRACTION};
use lrbs::instance::gen_uniform_tsp;
use lrbs::mdp::Problem;
use lrbs::policy::{PolicyParams, ReferencePolicy};
use lrbs::search::{lrbs, SearchConfig};

fn main() -> lrbs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let params = PolicyParams::load(args.first().expect("usage: fine_tune <policy.params> ..."))?;
    let lr: f64 = args.get(1).map_or(0.01, |s| s.parse().expect("learning rate"));
    let num = |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let nodes = num(2, 50);
    let test_size = num(3, 10);
    let config = SearchConfig::new(30, 2, 20, num(4, 1000));

    let ft_size = ft_dataset_size(test_size, DEFAULT_FT_FRACTION);
    let ft_set: Vec<Problem> = (0..ft_size)
        .map(|i| gen_uniform_tsp(nodes, 90_000 + i as u64).map(Problem::Tsp))
        .collect::<lrbs::Result<_>>()?;
    let adapt = AdaptConfig::fine_tuning(ft_size).with_learning_rate(lr);
    let phi = fine_tune(&ft_set, &params, &config, &adapt)?;
    println!("fine-tuned on {ft_size} instance(s); phi0 per head {:+.3}", phi.head(0)[0]);

    let frozen = ReferencePolicy::new(&params);
    let tuned = ReferencePolicy::with_eas(&params, phi);
    let mut wins = 0;
    for seed in 0..test_size as u64 {
        let p = Problem::Tsp(gen_uniform_tsp(nodes, 8000 + seed)?);
        let c = config.with_seed(seed);
        let a = lrbs(&p, &frozen, &c)?.best_length;
        let b = lrbs(&p, &tuned, &c)?.best_length;
        wins += usize::from(b <= a);
        println!("seed {seed}: frozen {a:.4}  fine-tuned {b:.4}");
    }
    println!("fine-tuned <= frozen on {wins}/{test_size}");
    Ok(())
}
