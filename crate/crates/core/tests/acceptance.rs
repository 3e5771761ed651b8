//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Criteria 6 to 9 run through the experiment harness so that
//! criterion 10 can rerun them with another worker count and compare files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use lrbs::adapt::{eas_gradient, lrbs_oa, pomo_baseline, surrogate_objective, AdaptConfig, RecordedStep, Rollout, RolloutBatch};
use lrbs::bench::{
    run_experiment_with_policy, sweep_with_policy, without_column, write_reference_costs, BenchMethod, DatasetSpec,
    ExperimentSpec, MethodSpec, OracleMode, ProblemKind, SweepGrid, SweepRow,
};
use lrbs::instance::{
    brute_force_pdp_optimal, gen_uniform_pdp, gen_uniform_tsp, held_karp_optimal, held_karp_optimal_up_to,
    read_results, tour_length, AnyInstance, Instance, PdInstance, ResultRow,
};
use lrbs::mdp::{env_reset, env_step, pdp_feasible, two_opt_apply, two_opt_cyclic, PdVariant, Problem, SearchState};
use lrbs::policy::{
    action_space, eas_wrap, EasParams, GradBuffer, ImprovementPolicy, PolicyKind, PolicyParams, ReferencePolicy,
    UniformPolicy,
};
use lrbs::rng::rng_from_seed;
use lrbs::search::{beam_search, lrbs, sample_rollout, sgbs_c, SearchConfig, SearchResult};
use lrbs::train::{train_base_policy, train_from, TrainConfig};

type Check = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn operator_correctness() -> Check {
    let mut rng = rng_from_seed(101);
    let mut two_opt_ok = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(4..=100);
        let mut tour: Vec<usize> = (0..n).collect();
        tour.shuffle(&mut rng);
        let i = rng.gen_range(0..n - 1);
        let j = rng.gen_range(i + 1..n);
        let twice = two_opt_apply(&two_opt_apply(&tour, i, j).map_err(err)?, i, j).map_err(err)?;
        let mut cyc = tour.clone();
        two_opt_cyclic(&mut cyc, i, j).map_err(err)?;
        two_opt_cyclic(&mut cyc, i, j).map_err(err)?;
        two_opt_ok += usize::from(twice == tour && cyc == tour);
    }

    let mut pdp_ok = 0;
    let mut moves = 0;
    let mut seed = 0;
    while moves < 1000 {
        let variant = if seed % 2 == 0 { PdVariant::Precedence } else { PdVariant::Lifo };
        let problem = Problem::Pdp {
            instance: gen_uniform_pdp(rng.gen_range(1..=8), seed).map_err(err)?,
            variant,
        };
        let mut state = env_reset(&problem, seed);
        for _ in 0..50 {
            let actions = action_space(&problem, &state);
            let a = *actions.choose(&mut rng).ok_or("empty action space")?;
            state = env_step(&problem, &state, a).map_err(err)?.next_state;
            pdp_ok += usize::from(pdp_feasible(&state.current, variant));
            moves += 1;
        }
        seed += 1;
    }
    Ok((
        two_opt_ok == 10_000 && pdp_ok == moves,
        format!("2-opt double application {two_opt_ok}/10000, PDP moves feasible {pdp_ok}/{moves}"),
    ))
}

// ---------------------------------------------------------------- 2

fn telescoping_reward() -> Check {
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for k in 0..100u64 {
        let problem = match k % 3 {
            0 => Problem::Tsp(gen_uniform_tsp(10 + (k as usize % 40), k).map_err(err)?),
            1 => Problem::Pdp {
                instance: gen_uniform_pdp(2 + (k as usize % 9), k).map_err(err)?,
                variant: PdVariant::Precedence,
            },
            _ => Problem::Pdp {
                instance: gen_uniform_pdp(2 + (k as usize % 9), k).map_err(err)?,
                variant: PdVariant::Lifo,
            },
        };
        let mut state = env_reset(&problem, k);
        let start = state.best_length;
        let mut rng = rng_from_seed(k);
        let mut total = 0.0;
        for _ in 0..500 {
            let a = UniformPolicy.sample(&problem, &state, &mut rng).map_err(err)?.action;
            let out = env_step(&problem, &state, a).map_err(err)?;
            total += out.reward;
            state = out.next_state;
        }
        let dev = (total - (start - state.best_length)).abs();
        worst = worst.max(dev);
        ok += usize::from(dev <= 1e-9);
    }
    Ok((ok == 100, format!("{ok}/100 trajectories within 1e-9, worst deviation {worst:.2e}")))
}

// ---------------------------------------------------------------- 3

fn tsp_by_permutations(inst: &Instance) -> Result<f64, String> {
    let n = inst.n();
    let mut best = f64::INFINITY;
    for p in (1..n).permutations(n - 1) {
        let mut t = vec![0];
        t.extend(p);
        best = best.min(tour_length(inst, &t).map_err(err)?);
    }
    Ok(best)
}

/// Every ordering of the non-depot nodes, filtered by its own ordering
/// check.
fn pdp_by_enumeration(inst: &PdInstance, variant: PdVariant) -> f64 {
    let n = inst.requests();
    let mut best = f64::INFINITY;
    for order in (1..=2 * n).permutations(2 * n) {
        let mut pos = vec![0; 2 * n + 1];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        if (1..=n).any(|r| pos[r] > pos[r + n]) {
            continue;
        }
        if variant == PdVariant::Lifo {
            let mut stack = Vec::new();
            let mut ok = true;
            for &v in &order {
                if v <= n {
                    stack.push(v);
                } else if stack.pop() != Some(v - n) {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
        }
        let mut len = inst.dist(0, order[0]) + inst.dist(order[2 * n - 1], 0);
        for w in order.windows(2) {
            len += inst.dist(w[0], w[1]);
        }
        best = best.min(len);
    }
    best
}

fn oracle_equivalence() -> Check {
    let tsp: Vec<(f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|k| {
            let inst = gen_uniform_tsp(6 + (k as usize % 4), 300 + k).map_err(err)?;
            Ok((held_karp_optimal(&inst).map_err(err)?.optimal_length, tsp_by_permutations(&inst)?))
        })
        .collect::<Result<_, String>>()?;
    let tsp_ok = tsp.iter().filter(|(a, b)| a == b).count();

    let mut pdp_ok = 0;
    let mut pdp_total = 0;
    for requests in 1..=3 {
        for seed in 0..10 {
            let inst = gen_uniform_pdp(requests, 400 + seed).map_err(err)?;
            for variant in [PdVariant::Precedence, PdVariant::Lifo] {
                let got = brute_force_pdp_optimal(&inst, variant).map_err(err)?;
                let want = pdp_by_enumeration(&inst, variant);
                let problem = Problem::Pdp {
                    instance: inst.clone(),
                    variant,
                };
                pdp_total += 1;
                pdp_ok += usize::from(
                    (got.optimal_length - want).abs() <= 1e-12 && problem.is_valid_solution(&got.optimal_tour),
                );
            }
        }
    }
    Ok((
        tsp_ok == 50 && pdp_ok == pdp_total,
        format!("Held-Karp exact on {tsp_ok}/50, PDP enumeration agrees on {pdp_ok}/{pdp_total}"),
    ))
}

// ---------------------------------------------------------------- 4

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn random_params(kind: PolicyKind, seed: u64) -> PolicyParams {
    let mut p = PolicyParams::zeros(kind);
    let mut rng = rng_from_seed(seed);
    for w in &mut p.weights {
        *w = rng.gen_range(-0.7..0.7);
    }
    p.temperature = rng.gen_range(0.5..2.0);
    p
}

fn random_eas(kind: PolicyKind, seed: u64) -> EasParams {
    let mut e = EasParams::zeros(kind);
    let mut rng = rng_from_seed(seed);
    for w in &mut e.phi {
        *w = rng.gen_range(-0.3..0.3);
    }
    e
}

fn gradient_problem(case: u64) -> Result<Problem, String> {
    Ok(match case % 3 {
        0 => Problem::Tsp(gen_uniform_tsp(6 + case as usize % 7, case).map_err(err)?),
        1 => Problem::Pdp {
            instance: gen_uniform_pdp(2 + case as usize % 3, case).map_err(err)?,
            variant: PdVariant::Precedence,
        },
        _ => Problem::Pdp {
            instance: gen_uniform_pdp(2 + case as usize % 3, case).map_err(err)?,
            variant: PdVariant::Lifo,
        },
    })
}

fn kind_of(p: &Problem) -> PolicyKind {
    if p.is_tsp() {
        PolicyKind::Tsp
    } else {
        PolicyKind::Pdp
    }
}

fn walked(problem: &Problem, seed: u64, steps: usize) -> Result<SearchState, String> {
    let mut state = env_reset(problem, seed);
    let mut rng = rng_from_seed(seed);
    for _ in 0..steps {
        let a = UniformPolicy.sample(problem, &state, &mut rng).map_err(err)?.action;
        state = env_step(problem, &state, a).map_err(err)?.next_state;
    }
    Ok(state)
}

/// Worst relative error of one log-probability gradient over all of θ and φ.
fn log_prob_case(case: u64) -> Result<f64, String> {
    let p = gradient_problem(case)?;
    let kind = kind_of(&p);
    let params = random_params(kind, 1000 + case);
    let eas = random_eas(kind, 2000 + case);
    let state = walked(&p, case, 5)?;
    let policy = ReferencePolicy::with_eas(&params, eas.clone());
    let action = policy.sample(&p, &state, &mut rng_from_seed(case)).map_err(err)?.action;
    let mut buf = GradBuffer::both(&params, &eas);
    policy.log_prob_grad(&p, &state, action, &mut buf, 1.0).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (idx, g) in buf.theta.as_ref().unwrap().iter().enumerate() {
        let at = |d: f64| {
            let mut q = params.clone();
            q.weights[idx] += d;
            ReferencePolicy::with_eas(&q, eas.clone()).log_prob(&p, &state, action)
        };
        let fd = (at(FD_STEP).map_err(err)? - at(-FD_STEP).map_err(err)?) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(*g, fd));
    }
    for (idx, g) in buf.phi.as_ref().unwrap().iter().enumerate() {
        let at = |d: f64| {
            let mut e = eas.clone();
            e.phi[idx] += d;
            ReferencePolicy::with_eas(&params, e).log_prob(&p, &state, action)
        };
        let fd = (at(FD_STEP).map_err(err)? - at(-FD_STEP).map_err(err)?) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(*g, fd));
    }
    Ok(worst)
}

/// Worst relative error of the batch φ gradient against the surrogate.
fn batch_case(case: u64) -> Result<f64, String> {
    let p = gradient_problem(case + 7)?;
    let kind = kind_of(&p);
    let params = random_params(kind, 3000 + case);
    let eas = random_eas(kind, 4000 + case);
    let policy = ReferencePolicy::with_eas(&params, eas.clone());
    let mut rng = rng_from_seed(5000 + case);
    let rollouts = (0..4)
        .map(|r| {
            let mut state = walked(&p, case * 10 + r, 2)?;
            let mut steps = Vec::new();
            for _ in 0..3 {
                let s = policy.sample(&p, &state, &mut rng).map_err(err)?;
                steps.push(RecordedStep {
                    state: state.clone(),
                    action: s.action,
                    log_prob: s.log_prob,
                });
                state = env_step(&p, &state, s.action).map_err(err)?.next_state;
            }
            Ok(Rollout {
                steps,
                reward: rng.gen_range(0.0..1.0),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let batch = RolloutBatch {
        rollouts,
        phi_version: eas.version(),
    };
    let b = pomo_baseline(&batch.rewards()).map_err(err)?;
    let g = eas_gradient(&p, &batch, b, &policy).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (idx, gi) in g.iter().enumerate() {
        let at = |d: f64| {
            let mut e = eas.clone();
            e.phi[idx] += d;
            surrogate_objective(&p, &batch, b, &ReferencePolicy::with_eas(&params, e))
        };
        let fd = (at(FD_STEP).map_err(err)? - at(-FD_STEP).map_err(err)?) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(*gi, fd));
    }
    Ok(worst)
}

fn gradient_checks() -> Check {
    let single: Vec<f64> = (0..24).map(log_prob_case).collect::<Result<_, _>>()?;
    let batch: Vec<f64> = (0..20).map(batch_case).collect::<Result<_, _>>()?;
    let ok_single = single.iter().filter(|&&e| e <= FD_TOL).count();
    let ok_batch = batch.iter().filter(|&&e| e <= FD_TOL).count();
    let worst = single.iter().chain(&batch).fold(0.0f64, |a, &b| a.max(b));
    Ok((
        ok_single == single.len() && ok_batch == batch.len(),
        format!(
            "log-prob θ/φ {ok_single}/{} cases, batch φ {ok_batch}/{} cases, worst rel. error {worst:.2e}",
            single.len(),
            batch.len()
        ),
    ))
}

// ---------------------------------------------------------------- 5

fn equivalences() -> Check {
    let mut checks = 0;
    let mut failed = Vec::new();
    let mut expect = |name: &str, same: bool| {
        checks += 1;
        if !same {
            failed.push(name.to_string());
        }
    };
    for seed in 0..8u64 {
        let problems = [
            Problem::Tsp(gen_uniform_tsp(15, 500 + seed).map_err(err)?),
            Problem::Pdp {
                instance: gen_uniform_pdp(4, 500 + seed).map_err(err)?,
                variant: if seed % 2 == 0 { PdVariant::Precedence } else { PdVariant::Lifo },
            },
        ];
        for p in &problems {
            let params = random_params(kind_of(p), 600 + seed);
            let policy = ReferencePolicy::new(&params);

            let single = SearchConfig::new(1, 1, 5, 40).with_seed(seed);
            let a = lrbs(p, &policy, &single).map_err(err)?;
            let b = sample_rollout(p, &policy, 40, 1, seed).map_err(err)?;
            expect("lrbs(1,1) = sampled rollout", same_trajectory(&a, &b));

            let wide = SearchConfig::new(4, 3, 1, 30).with_seed(seed);
            let bs = beam_search(p, &policy, &SearchConfig { n_s: 7, ..wide }).map_err(err)?;
            let l1 = lrbs(p, &policy, &wide).map_err(err)?;
            expect("beam_search = lrbs(n_s=1)", bs.same_outcome(&l1));
            let sg = sgbs_c(p, &policy, &wide).map_err(err)?;
            expect("sgbs_c(n_s=1) = beam_search", sg.same_outcome(&bs));

            let cfg = SearchConfig::new(3, 2, 5, 40).with_seed(seed);
            let wrapped = ReferencePolicy::with_eas(&params, eas_wrap(&params));
            let state = walked(p, seed, 3)?;
            expect(
                "zero φ distribution = base distribution",
                wrapped.action_dist(p, &state).map_err(err)? == policy.action_dist(p, &state).map_err(err)?,
            );
            let base = lrbs(p, &policy, &cfg).map_err(err)?;
            expect("zero φ search = base search", lrbs(p, &wrapped, &cfg).map_err(err)?.same_outcome(&base));

            let frozen_oa = lrbs_oa(p, &params, &cfg, &AdaptConfig::online().with_learning_rate(0.0)).map_err(err)?;
            expect("lr=0 OA = frozen LRBS", frozen_oa.0.same_outcome(&base) && frozen_oa.1.phi.iter().all(|&x| x == 0.0));
        }
    }
    failed.dedup();
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{checks}/{checks} state-for-state identities hold")
        } else {
            format!("broken: {}", failed.join("; "))
        },
    ))
}

// Traces and parent links are driver bookkeeping; the walk itself must match.
fn same_trajectory(a: &SearchResult, b: &SearchResult) -> bool {
    a.best_solution == b.best_solution
        && a.best_length.to_bits() == b.best_length.to_bits()
        && a.steps_consumed == b.steps_consumed
        && a.final_beam.len() == 1
        && b.final_beam.len() == 1
        && a.final_beam[0].state == b.final_beam[0].state
}

// ---------------------------------------------------------------- 6..9

struct Runs {
    root: PathBuf,
    base_policy: PolicyParams,
    n50_policy: PolicyParams,
    refs9: PathBuf,
}

impl Runs {
    fn dir(&self, name: &str, workers: usize) -> PathBuf {
        self.root.join(format!("{name}_w{workers}"))
    }
}

fn spec(dataset: DatasetSpec, methods: Vec<MethodSpec>, dir: PathBuf, workers: usize) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(dataset, methods, dir);
    s.workers = Some(workers);
    s
}

fn tiny_spec(runs: &Runs, workers: usize) -> ExperimentSpec {
    spec(
        DatasetSpec::generated(ProblemKind::Tsp, 8, 100, 6006),
        vec![MethodSpec::new(BenchMethod::Lrbs, SearchConfig::new(8, 8, 5, 200))],
        runs.dir("c6", workers),
        workers,
    )
}

fn tiny_optimality(runs: &Runs, workers: usize) -> Check {
    let rep = run_experiment_with_policy(&tiny_spec(runs, workers), None).map_err(err)?;
    if !rep.failures.is_empty() {
        return Err(format!("{} failed cells", rep.failures.len()));
    }
    let hits = rep.rows.iter().filter(|r| r.obj <= r.opt.unwrap() + 1e-9).count();
    Ok((hits >= 95, format!("uniform LRBS reaches the optimum on {hits}/100 (need 95)")))
}

/// `(beta, alpha)` of the search-value comparison, with `beta * alpha = 60`.
const C7_BETA_ALPHA: (usize, usize) = (5, 12);

fn search_spec(runs: &Runs, workers: usize) -> ExperimentSpec {
    let (beta, alpha) = C7_BETA_ALPHA;
    let c = SearchConfig::new(beta, alpha, 20, 2000);
    let mut s = spec(
        DatasetSpec::generated(ProblemKind::Tsp, 50, 10, 7007),
        vec![
            MethodSpec::new(BenchMethod::Lrbs, c),
            MethodSpec::new(BenchMethod::GreedySample, c),
            MethodSpec::new(BenchMethod::Bs, c),
        ],
        runs.dir("c7", workers),
        workers,
    );
    s.oracle = OracleMode::None;
    s
}

fn objs(rows: &[ResultRow], method: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.method == method).map(|r| r.obj).collect()
}

fn paired_wins(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x <= y).count()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn search_value(runs: &Runs, workers: usize) -> Check {
    let rep = run_experiment_with_policy(&search_spec(runs, workers), Some(&runs.n50_policy)).map_err(err)?;
    if !rep.failures.is_empty() {
        return Err(format!("{} failed cells", rep.failures.len()));
    }
    let (l, s, b) = (objs(&rep.rows, "lrbs"), objs(&rep.rows, "greedy_sample"), objs(&rep.rows, "bs"));
    let (ws, wb) = (paired_wins(&l, &s), paired_wins(&l, &b));
    Ok((
        ws >= 8 && wb >= 7,
        format!(
            "LRBS <= sampling on {ws}/10 (need 8), <= BS on {wb}/10 (need 7); means lrbs {:.4} sample {:.4} bs {:.4}",
            mean(&l),
            mean(&s),
            mean(&b)
        ),
    ))
}

fn adapt_spec(runs: &Runs, workers: usize) -> ExperimentSpec {
    let c = SearchConfig::new(30, 2, 20, 1000);
    let lr = 0.01;
    let mut s = spec(
        DatasetSpec::generated(ProblemKind::Tsp, 50, 10, 8008),
        vec![
            MethodSpec::new(BenchMethod::Lrbs, c).named("frozen"),
            MethodSpec::new(BenchMethod::LrbsOa, c)
                .named("oa")
                .with_adapt(AdaptConfig::online().with_learning_rate(lr)),
            MethodSpec::new(BenchMethod::LrbsFt, c)
                .named("ft")
                .with_adapt(AdaptConfig::fine_tuning(0).with_learning_rate(lr)),
        ],
        runs.dir("c8", workers),
        workers,
    );
    s.oracle = OracleMode::None;
    s.ft_fraction = 0.10;
    s
}

fn adaptation(runs: &Runs, workers: usize) -> Check {
    let rep = run_experiment_with_policy(&adapt_spec(runs, workers), Some(&runs.base_policy)).map_err(err)?;
    if !rep.failures.is_empty() {
        return Err(format!("{} failed cells", rep.failures.len()));
    }
    let (f, o, t) = (objs(&rep.rows, "frozen"), objs(&rep.rows, "oa"), objs(&rep.rows, "ft"));
    let (wo, wt) = (paired_wins(&o, &f), paired_wins(&t, &f));
    Ok((
        wo >= 7 && wt >= 7,
        format!(
            "OA <= frozen on {wo}/10, FT (1 tuning instance) <= frozen on {wt}/10 (need 7 each); means frozen {:.4} oa {:.4} ft {:.4}",
            mean(&f),
            mean(&o),
            mean(&t)
        ),
    ))
}

const C9_COUNT: usize = 20;
const C9_SEED: u64 = 9009;

fn sweep_base(runs: &Runs, workers: usize) -> ExperimentSpec {
    let mut s = spec(
        DatasetSpec::generated(ProblemKind::Tsp, 20, C9_COUNT, C9_SEED),
        vec![MethodSpec::new(BenchMethod::Lrbs, SearchConfig::new(1, 1, 20, 100))],
        runs.dir("c9", workers),
        workers,
    );
    s.oracle = OracleMode::Reference(runs.refs9.clone());
    s
}

fn sweep_grid() -> SweepGrid {
    SweepGrid {
        t_max: vec![100, 200, 500, 1000],
        beta_alpha: vec![(60, 1), (30, 2), (20, 3)],
        n_s: Some(20),
    }
}

fn monotone_sweep(runs: &Runs, workers: usize) -> Check {
    let rows: Vec<SweepRow> = sweep_with_policy(&sweep_base(runs, workers), &sweep_grid(), Some(&runs.base_policy)).map_err(err)?;
    let mut ok = true;
    let mut cols = Vec::new();
    for (beta, alpha) in sweep_grid().beta_alpha {
        let gaps: Vec<f64> = rows
            .iter()
            .filter(|r| (r.beta, r.alpha) == (beta, alpha))
            .map(|r| r.gap_percent.unwrap_or(f64::NAN))
            .collect();
        let mono = gaps.windows(2).all(|w| w[1] <= w[0]);
        ok &= mono && gaps.len() == 4;
        cols.push(format!(
            "({beta},{alpha}) {}",
            gaps.iter().map(|g| format!("{g:.3}")).join(">")
        ));
    }
    Ok((ok, format!("mean gap % over T_max 100,200,500,1000: {}", cols.join("; "))))
}

/// Exact N=20 optima for the sweep, written as a reference-cost file.
fn sweep_references(path: &Path) -> Result<(), String> {
    let data = lrbs::bench::generate_dataset(ProblemKind::Tsp, 20, C9_COUNT, C9_SEED).map_err(err)?;
    let costs: Vec<f64> = data
        .par_iter()
        .map(|inst| match inst {
            AnyInstance::Tsp(t) => held_karp_optimal_up_to(t, 20).map(|r| r.optimal_length).map_err(err),
            AnyInstance::Pdp(_) => Err("unexpected PDP instance".to_string()),
        })
        .collect::<Result<_, _>>()?;
    write_reference_costs(&costs, path).map_err(err)
}

// ---------------------------------------------------------------- 10

fn csv_view(path: &Path, timing: &str) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(without_column(&text, timing))
}

fn result_files(dir: &Path) -> Vec<(PathBuf, &'static str)> {
    let mut out = vec![];
    if dir.join("results.csv").is_file() {
        out.push((PathBuf::from("results.csv"), "seconds"));
    }
    if dir.join("sweep.csv").is_file() {
        out.push((PathBuf::from("sweep.csv"), "total_seconds"));
        if let Ok(entries) = fs::read_dir(dir) {
            let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
            subs.sort();
            for s in subs {
                out.push((PathBuf::from(s.file_name().unwrap()).join("results.csv"), "seconds"));
            }
        }
    }
    out
}

fn determinism(runs: &Runs, workers_a: usize, workers_b: usize) -> Check {
    let mut compared = 0;
    let mut differ = Vec::new();
    for name in ["c6", "c7", "c8", "c9"] {
        let (a, b) = (runs.dir(name, workers_a), runs.dir(name, workers_b));
        let files = result_files(&a);
        if files.is_empty() {
            differ.push(format!("{name}: no result files"));
        }
        for (rel, timing) in files {
            compared += 1;
            if csv_view(&a.join(&rel), timing)? != csv_view(&b.join(&rel), timing)? {
                differ.push(format!("{name}/{}", rel.display()));
            }
        }
        let rows = read_results(a.join("results.csv")).map_err(err)?;
        if name != "c9" && rows.is_empty() {
            differ.push(format!("{name}: empty results"));
        }
    }
    Ok((
        differ.is_empty(),
        if differ.is_empty() {
            format!("{compared} result files identical with {workers_a} and {workers_b} workers (wall-clock columns excluded)")
        } else {
            format!("differing: {}", differ.join(", "))
        },
    ))
}

// ----------------------------------------------------------------

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, started: Instant, check: Check) {
        let secs = started.elapsed().as_secs_f64();
        let (pass, detail) = match check {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {detail} ({secs:.1}s)",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn main() {
    let mut report = Report { failures: 0 };
    let t = Instant::now();
    report.record(1, "operator correctness", t, operator_correctness());
    let t = Instant::now();
    report.record(2, "telescoping reward", t, telescoping_reward());
    let t = Instant::now();
    report.record(3, "oracle equivalence", t, oracle_equivalence());
    let t = Instant::now();
    report.record(4, "gradient checks", t, gradient_checks());
    let t = Instant::now();
    report.record(5, "degenerate equivalences", t, equivalences());

    let root = tempfile::tempdir().expect("temporary directory");
    let t = Instant::now();
    let base_policy = train_base_policy(&TrainConfig::default()).expect("base training").params;
    let n50 = TrainConfig {
        instance_size: 50,
        episodes_per_epoch: 32,
        epochs: 30,
        ..TrainConfig::default()
    };
    let n50_policy = train_from(base_policy.clone(), &n50).expect("N=50 training").params;
    println!("trained reference policies in {:.1}s", t.elapsed().as_secs_f64());
    let runs = Runs {
        root: root.path().to_path_buf(),
        base_policy,
        n50_policy,
        refs9: root.path().join("refs20.csv"),
    };

    let (w1, w2) = (1, 3);
    let t = Instant::now();
    report.record(6, "tiny-instance optimality", t, tiny_optimality(&runs, w1));
    let t = Instant::now();
    report.record(7, "search value", t, search_value(&runs, w1));
    let t = Instant::now();
    report.record(8, "adaptation", t, adaptation(&runs, w1));
    let t = Instant::now();
    let c9 = sweep_references(&runs.refs9).and_then(|()| monotone_sweep(&runs, w1));
    report.record(9, "sweep monotonicity", t, c9);

    let t = Instant::now();
    let rerun = [
        tiny_optimality(&runs, w2),
        search_value(&runs, w2),
        adaptation(&runs, w2),
        monotone_sweep(&runs, w2),
    ];
    let c10 = match rerun.into_iter().find_map(|r| r.err()) {
        Some(e) => Err(format!("rerun failed: {e}")),
        None => determinism(&runs, w1, w2),
    };
    report.record(10, "determinism across worker counts", t, c10);

    println!("{} of 10 criteria passed", 10 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
