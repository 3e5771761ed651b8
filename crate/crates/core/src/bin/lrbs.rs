use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lrbs::adapt::AdaptConfig;
use lrbs::bench::{
    generate_dataset, render_report, report, run_experiment, sweep, write_report_csv, BenchMethod, DatasetSpec,
    ExperimentSpec, MethodSpec, OracleMode, ProblemKind, SweepGrid,
};
use lrbs::instance::write_dataset;
use lrbs::policy::PolicyParams;
use lrbs::search::{default_config, Objective, Preset, SearchConfig, DEFAULT_N_S, DEFAULT_T_MAX};
use lrbs::train::{train_base_policy, train_from, write_training_curve, TrainConfig};

#[derive(Parser)]
#[command(name = "lrbs", version, about = "Limited rollout beam search for routing improvement heuristics")]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random dataset file.
    Gen {
        #[arg(long, default_value = "tsp")]
        problem: String,
        /// Nodes for TSP, requests for PDP.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "dataset.txt")]
        out: PathBuf,
    },
    /// Train base policy weights with REINFORCE.
    Train(TrainArgs),
    /// Run one search method on a dataset.
    Solve {
        #[arg(long, default_value = "lrbs")]
        method: String,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run LRBS with online adaptation or fine-tuning.
    Adapt {
        #[arg(long, value_enum, default_value_t = AdaptMode::Oa)]
        mode: AdaptMode,
        #[arg(long, default_value_t = lrbs::adapt::DEFAULT_LEARNING_RATE)]
        lr: f64,
        /// Rollout length while adapting; defaults to the preset's.
        #[arg(long)]
        n_s_adapt: Option<usize>,
        /// Fine-tuning set size relative to the dataset.
        #[arg(long, default_value_t = lrbs::adapt::DEFAULT_FT_FRACTION)]
        ft_fraction: f64,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run an experiment over a grid of (t_max, beta, alpha).
    Sweep {
        #[arg(long, default_value = "lrbs")]
        method: String,
        /// Comma-separated step budgets (`t_max` values).
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
        /// Comma-separated `BETAxALPHA` pairs, e.g. `20x3,30x2`.
        #[arg(long, value_delimiter = ',', required = true)]
        beta_alpha: Vec<String>,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Summarize the result files of a directory.
    Report {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
        /// Also write the summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdaptMode {
    Oa,
    Ft,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "tsp")]
    problem: String,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    instances: usize,
    #[arg(long, default_value_t = 200)]
    episode_length: usize,
    #[arg(long, default_value_t = 8)]
    rollouts: usize,
    #[arg(long)]
    lr: Option<f64>,
    /// Continue from saved weights.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value = "policy.params")]
    out: PathBuf,
    #[arg(long, default_value = "training_curve.csv")]
    curve: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec in TOML; other experiment flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file; without one a dataset is generated from `--n`, `--count`, `--seed`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "tsp")]
    problem: String,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Dataset tag whose tuned configuration to use.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, default_value = "best")]
    objective: String,
    /// Saved policy weights; the uniform policy when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Reference costs CSV (`instance_id,cost`) instead of exact optima.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Skip gaps entirely.
    #[arg(long, conflicts_with = "reference")]
    no_oracle: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

impl ExperimentArgs {
    fn search(&self, seed: u64) -> lrbs::Result<(SearchConfig, Option<Preset>)> {
        let preset: Option<Preset> = self.preset.as_deref().map(str::parse).transpose()?;
        let mut c = match preset {
            Some(p) => default_config(p),
            None => SearchConfig::new(60, 1, DEFAULT_N_S, DEFAULT_T_MAX),
        };
        c.beta = self.beta.unwrap_or(c.beta);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.n_s = self.n_s.unwrap_or(c.n_s);
        c.t_max = self.t_max.unwrap_or(c.t_max);
        c.objective = self.objective.parse::<Objective>()?;
        c.seed = seed;
        c.validate()?;
        Ok((c, preset))
    }

    fn spec(&self, seed: u64, method: MethodSpec) -> lrbs::Result<ExperimentSpec> {
        let problem: ProblemKind = self.problem.parse()?;
        let dataset = match &self.dataset {
            Some(path) => DatasetSpec::file(problem, path),
            None => DatasetSpec::generated(problem, self.n, self.count, seed),
        };
        let mut spec = ExperimentSpec::new(dataset, vec![method], &self.out);
        spec.policy = self.policy.clone();
        spec.workers = self.workers;
        spec.oracle = match (&self.reference, self.no_oracle) {
            (Some(r), _) => OracleMode::Reference(r.clone()),
            (None, true) => OracleMode::None,
            (None, false) => OracleMode::Exact,
        };
        Ok(spec)
    }

    fn method_spec(&self, seed: u64, method: BenchMethod) -> lrbs::Result<MethodSpec> {
        let (search, preset) = self.search(seed)?;
        Ok(MethodSpec {
            name: None,
            method,
            preset,
            search: Some(search),
            adapt: None,
        })
    }

    fn resolve(&self, seed: u64, method: BenchMethod, adapt: Option<AdaptConfig>) -> lrbs::Result<ExperimentSpec> {
        if let Some(path) = &self.config {
            return ExperimentSpec::load(path);
        }
        let mut m = self.method_spec(seed, method)?;
        m.adapt = adapt;
        self.spec(seed, m)
    }
}

fn parse_pair(s: &str) -> lrbs::Result<(usize, usize)> {
    let bad = || lrbs::Error::InvalidArgument(format!("expected BETAxALPHA, got `{s}`"));
    let (b, a) = s.split_once('x').ok_or_else(bad)?;
    Ok((b.trim().parse().map_err(|_| bad())?, a.trim().parse().map_err(|_| bad())?))
}

fn print_summary(spec: &ExperimentSpec, report: &lrbs::bench::ExperimentReport) {
    for m in &spec.methods {
        if let Some(c) = m.search.or(m.preset.map(default_config)) {
            println!(
                "{}: beta {} alpha {} n_s {} t_max {}",
                m.label(),
                c.beta,
                c.alpha,
                c.n_s,
                c.t_max
            );
        }
    }
    for s in &report.summary {
        let gap = s.gap_percent.map_or_else(|| "-".to_string(), |g| format!("{g:.3}%"));
        let obj = s.obj.map_or_else(|| "-".to_string(), |o| format!("{o:.4}"));
        println!(
            "{:<14} obj {obj}  gap {gap}  time {:.2}s  ({}/{} done, {} failed)",
            s.method, s.total_seconds, s.completed, s.instances, s.failed
        );
    }
    println!("results in {}", spec.output_dir.display());
}

fn run(cli: Cli) -> lrbs::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen { problem, n, count, out } => {
            let problem: ProblemKind = problem.parse()?;
            let data = generate_dataset(problem, n, count, seed)?;
            write_dataset(&data, &out)?;
            println!("wrote {count} {} instance(s) to {}", problem.name(), out.display());
        }
        Command::Train(a) => {
            let problem: ProblemKind = a.problem.parse()?;
            let defaults = TrainConfig::default();
            let config = TrainConfig {
                variant: problem.variant(),
                instance_size: a.n,
                episodes_per_epoch: a.instances,
                epochs: a.epochs,
                episode_length: a.episode_length,
                rollouts_per_instance: a.rollouts,
                learning_rate: a.lr.unwrap_or(defaults.learning_rate),
                seed,
                ..defaults
            };
            let outcome = match &a.init {
                Some(path) => train_from(PolicyParams::load(path)?, &config)?,
                None => train_base_policy(&config)?,
            };
            if outcome.diverged {
                log::warn!("training diverged; keeping the last finite weights");
            }
            outcome.params.save(&a.out)?;
            write_training_curve(&outcome.curve, &a.curve)?;
            if let Some(last) = outcome.curve.last() {
                println!("epoch {} mean return {:.4}", last.epoch, last.mean_return);
            }
            println!("weights in {}, curve in {}", a.out.display(), a.curve.display());
        }
        Command::Solve { method, exp } => {
            let spec = exp.resolve(seed, method.parse()?, None)?;
            let rep = run_experiment(&spec)?;
            print_summary(&spec, &rep);
        }
        Command::Adapt {
            mode,
            lr,
            n_s_adapt,
            ft_fraction,
            exp,
        } => {
            let (method, base) = match mode {
                AdaptMode::Oa => (BenchMethod::LrbsOa, AdaptConfig::online()),
                AdaptMode::Ft => (BenchMethod::LrbsFt, AdaptConfig::fine_tuning(0)),
            };
            let adapt = AdaptConfig {
                n_s_adapt,
                ..base.with_learning_rate(lr)
            };
            let mut spec = exp.resolve(seed, method, Some(adapt))?;
            if exp.config.is_none() {
                spec.ft_fraction = ft_fraction;
            }
            let rep = run_experiment(&spec)?;
            print_summary(&spec, &rep);
        }
        Command::Sweep {
            method,
            budgets,
            beta_alpha,
            exp,
        } => {
            let spec = exp.resolve(seed, method.parse()?, None)?;
            let grid = SweepGrid {
                t_max: budgets,
                beta_alpha: beta_alpha.iter().map(|s| parse_pair(s)).collect::<lrbs::Result<_>>()?,
                n_s: exp.n_s,
            };
            let rows = sweep(&spec, &grid)?;
            println!("{:<10} {:<10} {:>6} {:>5} {:>4} {:>5} {:>10} {:>9}", "dataset", "method", "t_max", "beta", "n_s", "alpha", "obj", "gap%");
            for r in rows {
                println!(
                    "{:<10} {:<10} {:>6} {:>5} {:>4} {:>5} {:>10} {:>9}",
                    r.dataset,
                    r.method,
                    r.t_max,
                    r.beta,
                    r.n_s,
                    r.alpha,
                    r.obj.map_or_else(|| "-".into(), |o| format!("{o:.4}")),
                    r.gap_percent.map_or_else(|| "-".into(), |g| format!("{g:.3}"))
                );
            }
        }
        Command::Report { dir, csv } => {
            let sections = report(&dir)?;
            if sections.is_empty() {
                println!("no results in {}", dir.display());
                return Ok(());
            }
            print!("{}", render_report(&sections));
            if let Some(path) = csv {
                write_report_csv(&sections, &path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
