//! Trains the reference policy on random tours (20 nodes by default) and compares it with
//! uniform move sampling on fresh instances.
//!
//! cargo run --release --example train_policy -- [epochs] [out.params] [nodes] [instances_per_epoch] [lr] [init.params]

use lrbs::instance::gen_uniform_tsp;
use lrbs::mdp::Problem;
use lrbs::policy::{PolicyParams, ReferencePolicy, UniformPolicy};
use lrbs::search::sample_rollout;
use lrbs::train::{train_base_policy, train_from, write_training_curve, TrainConfig};

fn main() -> lrbs::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(200, |s| s.parse().expect("epochs"));
    let out = args.next().unwrap_or_else(|| "trained.params".into());

    let mut config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    if let Some(n) = args.next() {
        config.instance_size = n.parse().expect("nodes");
    }
    if let Some(k) = args.next() {
        config.episodes_per_epoch = k.parse().expect("instances per epoch");
    }
    if let Some(lr) = args.next() {
        config.learning_rate = lr.parse().expect("learning rate");
    }
    let started = std::time::Instant::now();
    let trained = match args.next() {
        Some(init) => train_from(PolicyParams::load(init)?, &config)?,
        None => train_base_policy(&config)?,
    };
    println!("trained {epochs} epochs in {:.1}s", started.elapsed().as_secs_f64());
    for p in trained.curve.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:>4}  mean return {:.4}", p.epoch, p.mean_return);
    }
    trained.params.save(&out)?;
    write_training_curve(&trained.curve, "training_curve.csv")?;

    let policy = ReferencePolicy::new(&trained.params);
    let (mut wins, mut ours, mut theirs) = (0, 0.0, 0.0);
    for seed in 0..10 {
        let p = Problem::Tsp(gen_uniform_tsp(config.instance_size, 1000 + seed)?);
        let a = sample_rollout(&p, &policy, 200, 4, seed)?.best_length;
        let b = sample_rollout(&p, &UniformPolicy, 200, 4, seed)?.best_length;
        wins += usize::from(a < b);
        ours += a / 10.0;
        theirs += b / 10.0;
    }
    println!("trained {ours:.4} vs uniform {theirs:.4}; trained shorter on {wins}/10");
    Ok(())
}
