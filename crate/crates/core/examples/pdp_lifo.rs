//! Pickup and delivery with last-in-first-out unloading: beam search over
//! remove-and-reinsert moves, checked against exhaustive enumeration.

use lrbs::instance::{brute_force_pdp_optimal, gen_uniform_pdp};
use lrbs::mdp::{pdp_feasible, PdVariant, Problem};
use lrbs::policy::UniformPolicy;
use lrbs::search::{lrbs, SearchConfig};

fn main() -> lrbs::Result<()> {
    let config = SearchConfig::new(10, 4, 10, 400);
    for seed in 0..5 {
        let instance = gen_uniform_pdp(3, seed)?;
        let optimum = brute_force_pdp_optimal(&instance, PdVariant::Lifo)?.optimal_length;
        let problem = Problem::Pdp {
            instance,
            variant: PdVariant::Lifo,
        };
        let r = lrbs(&problem, &UniformPolicy, &config.with_seed(seed))?;
        assert!(pdp_feasible(&r.best_solution, PdVariant::Lifo));
        println!(
            "seed {seed}: {:?} length {:.5}, optimum {optimum:.5}",
            r.best_solution, r.best_length
        );
    }
    Ok(())
}
