//! Experiment harness: datasets, method matrices, gap tables and
//! configuration sweeps.
//!
//! An experiment writes three files to its output directory:
//! `results.csv` (one row per solved cell, see [`RESULTS_HEADER`]),
//! `summary.csv` (one row per method) and `failures.csv`. Cells already in
//! `results.csv` are skipped, so an interrupted run resumes where it stopped.
//!
//! Everything except the `seconds` columns is a pure function of the [`ExperimentSpec`]:
//! each cell draws from its own seed, and rows are written in method and instance order
//! whatever the worker count.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{fine_tune, ft_dataset_size, instance_seed, lrbs_oa, AdaptConfig, DEFAULT_FT_FRACTION};
use crate::error::{invalid, Error, Result};
use crate::instance::{gen_uniform_pdp, gen_uniform_tsp, read_dataset, read_results, AnyInstance, ResultRow, RESULTS_HEADER};
use crate::mdp::{PdVariant, Problem};
use crate::policy::{EasParams, PolicyKind, PolicyParams, ReferencePolicy, UniformPolicy};
use crate::rng::derive_seed;
use crate::search::{default_config, lrbs, solve, Method, Preset, SearchConfig, SearchResult};
use crate::train::{exact_optimum, gap_percent};

pub const SUMMARY_HEADER: &str = "method,instances,completed,failed,obj,gap_percent,total_seconds,mean_seconds,complete";
pub const FAILURES_HEADER: &str = "instance_id,method,error";
pub const REFERENCE_HEADER: &str = "instance_id,cost";
pub const SWEEP_HEADER: &str =
    "dataset,method,t_max,beta,n_s,alpha,instances,completed,obj,gap_percent,total_seconds";

const FT_STREAM: u64 = 0xF7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Tsp,
    /// Pickup and delivery with precedence only.
    Pdp,
    PdpLifo,
}

impl ProblemKind {
    pub fn variant(self) -> Option<PdVariant> {
        match self {
            ProblemKind::Tsp => None,
            ProblemKind::Pdp => Some(PdVariant::Precedence),
            ProblemKind::PdpLifo => Some(PdVariant::Lifo),
        }
    }

    pub fn policy_kind(self) -> PolicyKind {
        match self {
            ProblemKind::Tsp => PolicyKind::Tsp,
            _ => PolicyKind::Pdp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Tsp => "tsp",
            ProblemKind::Pdp => "pdp",
            ProblemKind::PdpLifo => "pdp_lifo",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsp" => Ok(ProblemKind::Tsp),
            "pdp" | "pdtsp" => Ok(ProblemKind::Pdp),
            "pdp_lifo" | "pdtspl" => Ok(ProblemKind::PdpLifo),
            other => Err(invalid(format!("unknown problem `{other}`"))),
        }
    }
}

/// `count` random instances; `n` is the node count for TSP and the request
/// count for PDP. Instance `i` is generated from `instance_seed(seed, i)`.
pub fn generate_dataset(problem: ProblemKind, n: usize, count: usize, seed: u64) -> Result<Vec<AnyInstance>> {
    (0..count)
        .map(|i| {
            let s = instance_seed(seed, i);
            Ok(match problem {
                ProblemKind::Tsp => AnyInstance::Tsp(gen_uniform_tsp(n, s)?),
                _ => AnyInstance::Pdp(gen_uniform_pdp(n, s)?),
            })
        })
        .collect()
}

/// Either a generated dataset or a dataset file. For files, nonzero `n` and
/// `count` are checked against the contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub problem: ProblemKind,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn generated(problem: ProblemKind, n: usize, count: usize, seed: u64) -> Self {
        Self {
            problem,
            n,
            count,
            seed,
            path: None,
        }
    }

    pub fn file(problem: ProblemKind, path: impl Into<PathBuf>) -> Self {
        Self {
            problem,
            n: 0,
            count: 0,
            seed: 0,
            path: Some(path.into()),
        }
    }

    /// Short tag such as `tsp20` or `pdp_lifo5`.
    pub fn label(&self) -> String {
        format!("{}{}", self.problem.name(), self.n)
    }

    fn size_of(&self, inst: &AnyInstance) -> usize {
        match inst {
            AnyInstance::Tsp(t) => t.n(),
            AnyInstance::Pdp(p) => p.requests(),
        }
    }

    pub fn load(&self) -> Result<Vec<Problem>> {
        let instances = match &self.path {
            None => {
                if self.count == 0 || self.n == 0 {
                    return Err(invalid("a generated dataset needs positive `n` and `count`"));
                }
                generate_dataset(self.problem, self.n, self.count, self.seed)?
            }
            Some(path) => {
                let all = read_dataset(path)?;
                if all.is_empty() {
                    return Err(invalid(format!("{} holds no instances", path.display())));
                }
                if self.count != 0 && self.count != all.len() {
                    return Err(invalid(format!(
                        "{} holds {} instances, expected {}",
                        path.display(),
                        all.len(),
                        self.count
                    )));
                }
                for (i, inst) in all.iter().enumerate() {
                    let kind_ok = matches!(
                        (inst, self.problem),
                        (AnyInstance::Tsp(_), ProblemKind::Tsp) | (AnyInstance::Pdp(_), ProblemKind::Pdp | ProblemKind::PdpLifo)
                    );
                    if !kind_ok {
                        return Err(invalid(format!("instance {i} is not a {} instance", self.problem.name())));
                    }
                    if self.n != 0 && self.size_of(inst) != self.n {
                        return Err(invalid(format!("instance {i} has size {}, expected {}", self.size_of(inst), self.n)));
                    }
                }
                all
            }
        };
        let variant = self.problem.variant().unwrap_or(PdVariant::Precedence);
        Ok(instances.into_iter().map(|i| Problem::from_instance(i, variant)).collect())
    }

    /// Random problems of the test size drawn from a stream disjoint from the
    /// test set, for fine-tuning.
    fn fine_tuning_set(&self, size: usize, test: &[Problem]) -> Result<Vec<Problem>> {
        let n = match test.first() {
            Some(Problem::Tsp(t)) => t.n(),
            Some(Problem::Pdp { instance, .. }) => instance.requests(),
            None => self.n,
        };
        let seed = derive_seed(self.seed, &[FT_STREAM]);
        let variant = self.problem.variant().unwrap_or(PdVariant::Precedence);
        Ok(generate_dataset(self.problem, n, size, seed)?
            .into_iter()
            .map(|i| Problem::from_instance(i, variant))
            .collect())
    }
}

/// Where optimal or reference costs come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Held-Karp or PDP enumeration; fails for sizes past the oracle limits.
    #[default]
    Exact,
    /// A CSV with header [`REFERENCE_HEADER`].
    Reference(PathBuf),
    /// No gaps are reported.
    None,
}

pub fn write_reference_costs(costs: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut text = format!("{REFERENCE_HEADER}\n");
    for (i, c) in costs.iter().enumerate() {
        let _ = writeln!(text, "{i},{c}");
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads reference costs for instances `0..count`.
pub fn read_reference_costs(path: impl AsRef<Path>, count: usize) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        instance_id: usize,
        cost: f64,
    }
    let path = path.as_ref();
    let mut out = vec![None; count];
    let mut r = csv::Reader::from_path(path)?;
    for row in r.deserialize() {
        let row: Row = row?;
        if !(row.cost.is_finite() && row.cost > 0.0) {
            return Err(invalid(format!("reference cost {} for instance {} is not positive", row.cost, row.instance_id)));
        }
        if let Some(slot) = out.get_mut(row.instance_id) {
            *slot = Some(row.cost);
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::MissingReference(format!("#{i} in {}", path.display()))))
        .collect()
}

/// Method families the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    GreedySample,
    Lrbs,
    Bs,
    SgbsC,
    /// LRBS with online adaptation, φ reset per instance.
    LrbsOa,
    /// LRBS with φ fine-tuned beforehand on a separate set, then frozen.
    LrbsFt,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::GreedySample => "greedy_sample",
            BenchMethod::Lrbs => "lrbs",
            BenchMethod::Bs => "bs",
            BenchMethod::SgbsC => "sgbs_c",
            BenchMethod::LrbsOa => "lrbs_oa",
            BenchMethod::LrbsFt => "lrbs_ft",
        }
    }

    fn adapts(self) -> bool {
        matches!(self, BenchMethod::LrbsOa | BenchMethod::LrbsFt)
    }
}

impl From<Method> for BenchMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::GreedySample => BenchMethod::GreedySample,
            Method::Lrbs => BenchMethod::Lrbs,
            Method::Bs => BenchMethod::Bs,
            Method::SgbsC => BenchMethod::SgbsC,
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrbs_oa" | "oa" => Ok(BenchMethod::LrbsOa),
            "lrbs_ft" | "ft" => Ok(BenchMethod::LrbsFt),
            other => other.parse::<Method>().map(Into::into),
        }
    }
}

/// One column of the method matrix. `search` wins over `preset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Label in the result files; defaults to the method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub method: BenchMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptConfig>,
}

impl MethodSpec {
    pub fn new(method: BenchMethod, search: SearchConfig) -> Self {
        Self {
            name: None,
            method,
            preset: None,
            search: Some(search),
            adapt: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_adapt(mut self, adapt: AdaptConfig) -> Self {
        self.adapt = Some(adapt);
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    fn resolve(&self) -> Result<Resolved> {
        let label = self.label();
        let search = match (self.search, self.preset) {
            (Some(s), _) => s,
            (None, Some(p)) => default_config(p),
            (None, None) => return Err(invalid(format!("method `{label}` needs `search` or `preset`"))),
        };
        search.validate()?;
        let adapt = if self.method.adapts() {
            let mut a = self.adapt.unwrap_or_else(|| match self.method {
                BenchMethod::LrbsFt => AdaptConfig::fine_tuning(0),
                _ => AdaptConfig::online(),
            });
            if a.n_s_adapt.is_none() {
                a.n_s_adapt = self.preset.and_then(Preset::adapt_n_s);
            }
            a.validate()?;
            Some(a)
        } else {
            None
        };
        Ok(Resolved {
            label,
            kind: self.method,
            search,
            adapt,
        })
    }
}

#[derive(Debug, Clone)]
struct Resolved {
    label: String,
    kind: BenchMethod,
    search: SearchConfig,
    adapt: Option<AdaptConfig>,
}

fn default_ft_fraction() -> f64 {
    DEFAULT_FT_FRACTION
}

/// A full experiment, serializable as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub output_dir: PathBuf,
    /// Saved policy weights; without one, frozen methods use the uniform
    /// policy and adaptive methods start from zero weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    /// Fine-tuning set size relative to the test set, unless a method's
    /// `ft_dataset_size` is set.
    #[serde(default = "default_ft_fraction")]
    pub ft_fraction: f64,
    /// Worker threads; `None` uses rayon's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub oracle: OracleMode,
    pub dataset: DatasetSpec,
    pub methods: Vec<MethodSpec>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, methods: Vec<MethodSpec>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            policy: None,
            ft_fraction: DEFAULT_FT_FRACTION,
            workers: None,
            oracle: OracleMode::Exact,
            dataset,
            methods,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot encode spec: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("an experiment needs at least one method"));
        }
        if self.dataset.path.is_none() && (self.dataset.count == 0 || self.dataset.n == 0) {
            return Err(invalid("dataset count and size must be positive"));
        }
        if !(self.ft_fraction > 0.0 && self.ft_fraction <= 1.0) {
            return Err(invalid(format!("ft_fraction {} must lie in (0, 1]", self.ft_fraction)));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be positive"));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            m.resolve()?;
            if !seen.insert(m.label()) {
                return Err(invalid(format!("duplicate method label `{}`", m.label())));
            }
        }
        Ok(())
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.csv")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output_dir.join("summary.csv")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.output_dir.join("failures.csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub instances: usize,
    pub completed: usize,
    pub failed: usize,
    /// Mean objective over completed cells.
    pub obj: Option<f64>,
    /// Mean gap over completed cells, when every one has a gap.
    pub gap_percent: Option<f64>,
    pub total_seconds: f64,
    pub mean_seconds: Option<f64>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub instance_id: usize,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Every row of `results.csv`, in file order.
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
    /// Cells solved by this call, as opposed to found on disk.
    pub computed: usize,
}

fn summarize(label: &str, instances: usize, rows: &[ResultRow], failed: usize) -> SummaryRow {
    let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == label).collect();
    let k = mine.len();
    let mean = |xs: &mut dyn Iterator<Item = f64>| xs.sum::<f64>() / k as f64;
    let gaps: Option<Vec<f64>> = mine.iter().map(|r| r.gap_percent).collect();
    let total_seconds = mine.iter().map(|r| r.seconds).sum();
    SummaryRow {
        method: label.to_string(),
        instances,
        completed: k,
        failed,
        obj: (k > 0).then(|| mean(&mut mine.iter().map(|r| r.obj))),
        gap_percent: gaps.filter(|g| !g.is_empty()).map(|g| mean(&mut g.into_iter())),
        total_seconds,
        mean_seconds: (k > 0).then(|| total_seconds / k as f64),
        complete: k == instances,
    }
}

fn write_csv<T: Serialize>(rows: &[T], header: &str, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_existing(path: &Path) -> Result<Vec<ResultRow>> {
    match fs::metadata(path) {
        Ok(m) if m.len() > 0 => read_results(path),
        _ => Ok(Vec::new()),
    }
}

fn read_failures(path: &Path) -> Result<Vec<CellFailure>> {
    match fs::metadata(path) {
        Ok(m) if m.len() > 0 => {
            let mut r = csv::Reader::from_path(path)?;
            r.deserialize().map(|row| row.map_err(Error::from)).collect()
        }
        _ => Ok(Vec::new()),
    }
}

/// Appends finished rows to `results.csv` as they arrive.
struct Appender {
    writer: Mutex<csv::Writer<fs::File>>,
}

impl Appender {
    fn open(path: &Path) -> Result<Self> {
        let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(RESULTS_HEADER.split(','))?;
            writer.flush()?;
        }
        Ok(Self {
            writer: Mutex::new(writer),
        })
    }

    fn push(&self, row: &ResultRow) -> Result<()> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.serialize(row)?;
        w.flush()?;
        Ok(())
    }
}

enum Solver<'a> {
    Uniform,
    Params(&'a PolicyParams),
    Tuned(&'a PolicyParams, EasParams),
}

fn run_cell(
    problem: &Problem,
    m: &Resolved,
    solver: &Solver<'_>,
    params: &PolicyParams,
    index: usize,
) -> Result<SearchResult> {
    let config = m.search.with_seed(instance_seed(m.search.seed, index));
    let method = match m.kind {
        BenchMethod::GreedySample => Some(Method::GreedySample),
        BenchMethod::Lrbs => Some(Method::Lrbs),
        BenchMethod::Bs => Some(Method::Bs),
        BenchMethod::SgbsC => Some(Method::SgbsC),
        BenchMethod::LrbsOa | BenchMethod::LrbsFt => None,
    };
    match (method, solver) {
        (Some(method), Solver::Uniform) => solve(problem, &UniformPolicy, &config, method),
        (Some(method), Solver::Params(p)) => solve(problem, &ReferencePolicy::new(p), &config, method),
        (None, Solver::Tuned(p, phi)) => lrbs(problem, &ReferencePolicy::with_eas(p, phi.clone()), &config),
        (None, _) => {
            let adapt = m.adapt.as_ref().expect("adaptive methods resolve an adapt config");
            lrbs_oa(problem, params, &config, adapt).map(|(r, _)| r)
        }
        (Some(_), Solver::Tuned(..)) => unreachable!("only fine-tuned methods carry φ"),
    }
}

fn load_policy(spec: &ExperimentSpec) -> Result<Option<PolicyParams>> {
    let Some(path) = &spec.policy else {
        return Ok(None);
    };
    let params = PolicyParams::load(path)?;
    let want = spec.dataset.problem.policy_kind();
    if params.kind != want {
        return Err(invalid(format!(
            "policy {} is for {:?} problems, dataset is {:?}",
            path.display(),
            params.kind,
            want
        )));
    }
    Ok(Some(params))
}

fn reference_costs(spec: &ExperimentSpec, dataset: &[Problem], needed: &[bool]) -> Result<Vec<Option<f64>>> {
    match &spec.oracle {
        OracleMode::None => Ok(vec![None; dataset.len()]),
        OracleMode::Reference(path) => Ok(read_reference_costs(path, dataset.len())?.into_iter().map(Some).collect()),
        OracleMode::Exact => dataset
            .par_iter()
            .zip(needed)
            .enumerate()
            .map(|(i, (p, &need))| {
                if !need {
                    return Ok(None);
                }
                exact_optimum(p)?
                    .map(Some)
                    .ok_or_else(|| Error::MissingReference(format!("#{i}: no exact oracle at this size")))
            })
            .collect(),
    }
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Runs every missing (method, instance) cell of `spec` and rewrites the
/// result, summary and failure files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_experiment_with_policy(spec, load_policy(spec)?.as_ref())
}

/// [`run_experiment`] with in-memory weights instead of `spec.policy`.
pub fn run_experiment_with_policy(spec: &ExperimentSpec, policy: Option<&PolicyParams>) -> Result<ExperimentReport> {
    spec.validate()?;
    if let Some(p) = policy {
        if p.kind != spec.dataset.problem.policy_kind() {
            return Err(invalid("policy kind does not match the dataset problem"));
        }
    }
    let methods: Vec<Resolved> = spec.methods.iter().map(MethodSpec::resolve).collect::<Result<_>>()?;
    let dataset = spec.dataset.load()?;
    let count = dataset.len();
    fs::create_dir_all(&spec.output_dir)?;
    let results_path = spec.results_path();
    let existing = read_existing(&results_path)?;
    let done: HashSet<(String, usize)> = existing.iter().map(|r| (r.method.clone(), r.instance_id)).collect();

    let pending: Vec<(usize, usize)> = methods
        .iter()
        .enumerate()
        .flat_map(|(mi, _)| (0..count).map(move |i| (mi, i)))
        .filter(|&(mi, i)| !done.contains(&(methods[mi].label.clone(), i)))
        .collect();
    let mut needed = vec![false; count];
    for &(_, i) in &pending {
        needed[i] = true;
    }

    let pool = build_pool(spec.workers)?;
    let zeros = PolicyParams::zeros(spec.dataset.problem.policy_kind());
    let params = policy.unwrap_or(&zeros);
    let (opts, solvers, setup_failures) = pool.install(|| -> Result<_> {
        let opts = if pending.is_empty() {
            vec![None; count]
        } else {
            reference_costs(spec, &dataset, &needed)?
        };
        let mut solvers = Vec::with_capacity(methods.len());
        let mut setup_failures = vec![None; methods.len()];
        for (mi, m) in methods.iter().enumerate() {
            let has_pending = pending.iter().any(|&(k, _)| k == mi);
            let solver = match (m.kind, policy) {
                (BenchMethod::LrbsFt, _) if has_pending => {
                    let adapt = m.adapt.expect("adaptive methods resolve an adapt config");
                    let size = if adapt.ft_dataset_size > 0 {
                        adapt.ft_dataset_size
                    } else {
                        ft_dataset_size(count, spec.ft_fraction)
                    };
                    let ft_set = spec.dataset.fine_tuning_set(size, &dataset)?;
                    match fine_tune(&ft_set, params, &m.search, &adapt) {
                        Ok(phi) => Solver::Tuned(params, phi),
                        Err(e) => {
                            setup_failures[mi] = Some(format!("fine-tuning failed: {e}"));
                            Solver::Params(params)
                        }
                    }
                }
                (_, Some(p)) => Solver::Params(p),
                (_, None) => Solver::Uniform,
            };
            solvers.push(solver);
        }
        Ok((opts, solvers, setup_failures))
    })?;

    let appender = Appender::open(&results_path)?;
    let outcomes: Vec<std::result::Result<ResultRow, CellFailure>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(mi, i)| {
                let m = &methods[mi];
                let fail = |error: String| CellFailure {
                    instance_id: i,
                    method: m.label.clone(),
                    error,
                };
                if let Some(msg) = &setup_failures[mi] {
                    return Err(fail(msg.clone()));
                }
                let started = Instant::now();
                let result = run_cell(&dataset[i], m, &solvers[mi], params, i);
                let seconds = started.elapsed().as_secs_f64();
                let r = result.map_err(|e| fail(e.to_string()))?;
                let row = ResultRow {
                    instance_id: i,
                    method: m.label.clone(),
                    obj: r.best_length,
                    opt: opts[i],
                    gap_percent: opts[i].map(|o| gap_percent(r.best_length, o)),
                    steps: r.steps_consumed as u64,
                    seconds,
                };
                appender.push(&row).map_err(|e| fail(format!("cannot record result: {e}")))?;
                Ok(row)
            })
            .collect()
    });
    drop(appender);

    let computed = outcomes.iter().filter(|o| o.is_ok()).count();
    let mut rows = existing;
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    let order = |label: &str| methods.iter().position(|m| m.label == label).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (order(&a.method), &a.method, a.instance_id).cmp(&(order(&b.method), &b.method, b.instance_id))
    });
    for f in &failures {
        log::warn!("{} on instance {}: {}", f.method, f.instance_id, f.error);
    }

    let in_range: Vec<ResultRow> = rows.iter().filter(|r| r.instance_id < count).cloned().collect();
    let summary: Vec<SummaryRow> = methods
        .iter()
        .map(|m| {
            let failed = failures.iter().filter(|f| f.method == m.label).count();
            summarize(&m.label, count, &in_range, failed)
        })
        .collect();

    write_csv(&rows, RESULTS_HEADER, &results_path)?;
    write_csv(&summary, SUMMARY_HEADER, &spec.summary_path())?;
    write_csv(&failures, FAILURES_HEADER, &spec.failures_path())?;
    Ok(ExperimentReport {
        rows,
        summary,
        failures,
        computed,
    })
}

/// Grid of an LRBS sensitivity sweep. Points run for every
/// `(beta, alpha)` pair and every `t_max`; `n_s` overrides the methods'
/// rollout length when set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub t_max: Vec<usize>,
    pub beta_alpha: Vec<(usize, usize)>,
    #[serde(default)]
    pub n_s: Option<usize>,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(usize, usize, usize)> {
        self.beta_alpha
            .iter()
            .flat_map(|&(b, a)| self.t_max.iter().map(move |&t| (t, b, a)))
            .collect()
    }
}

/// One method at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub method: String,
    pub t_max: usize,
    pub beta: usize,
    pub n_s: usize,
    pub alpha: usize,
    pub instances: usize,
    pub completed: usize,
    pub obj: Option<f64>,
    pub gap_percent: Option<f64>,
    pub total_seconds: f64,
}

/// The experiment for one grid point, written under its own subdirectory.
pub fn sweep_point(base: &ExperimentSpec, t_max: usize, beta: usize, alpha: usize, n_s: Option<usize>) -> Result<ExperimentSpec> {
    let mut spec = base.clone();
    spec.output_dir = base.output_dir.join(format!("t{t_max}_b{beta}_a{alpha}"));
    for m in &mut spec.methods {
        let mut s = m.resolve()?.search;
        s.t_max = t_max;
        s.beta = beta;
        s.alpha = alpha;
        if let Some(n) = n_s {
            s.n_s = n;
        }
        s.validate()?;
        m.search = Some(s);
    }
    Ok(spec)
}

/// Runs `base` at every grid point and writes `sweep.csv` to its output
/// directory.
pub fn sweep(base: &ExperimentSpec, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    sweep_with_policy(base, grid, load_policy(base)?.as_ref())
}

pub fn sweep_with_policy(base: &ExperimentSpec, grid: &SweepGrid, policy: Option<&PolicyParams>) -> Result<Vec<SweepRow>> {
    let points = grid.points();
    if points.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    let specs: Vec<ExperimentSpec> = points
        .iter()
        .map(|&(t, b, a)| sweep_point(base, t, b, a, grid.n_s))
        .collect::<Result<_>>()?;
    let label = base.dataset.label();
    let mut rows = Vec::new();
    for spec in &specs {
        let report = run_experiment_with_policy(spec, policy)?;
        for (m, s) in spec.methods.iter().zip(&report.summary) {
            let c = m.search.expect("sweep points carry explicit configs");
            rows.push(SweepRow {
                dataset: label.clone(),
                method: s.method.clone(),
                t_max: c.t_max,
                beta: c.beta,
                n_s: c.n_s,
                alpha: c.alpha,
                instances: s.instances,
                completed: s.completed,
                obj: s.obj,
                gap_percent: s.gap_percent,
                total_seconds: s.total_seconds,
            });
        }
    }
    fs::create_dir_all(&base.output_dir)?;
    write_csv(&rows, SWEEP_HEADER, &base.output_dir.join("sweep.csv"))?;
    Ok(rows)
}

/// Summary of one results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSection {
    pub source: PathBuf,
    pub rows: Vec<SummaryRow>,
}

fn results_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let top = dir.join("results.csv");
    if top.is_file() {
        found.push(top);
    }
    if dir.is_dir() {
        let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        found.extend(subdirs.into_iter().map(|d| d.join("results.csv")).filter(|p| p.is_file()));
    }
    Ok(found)
}

/// Summaries of `dir/results.csv` and of `results.csv` in each direct
/// subdirectory. Empty when there are none.
pub fn report(dir: impl AsRef<Path>) -> Result<Vec<ReportSection>> {
    let mut sections = Vec::new();
    for path in results_files(dir.as_ref())? {
        let rows = read_existing(&path)?;
        if rows.is_empty() {
            continue;
        }
        let failures = read_failures(&path.with_file_name("failures.csv")).unwrap_or_default();
        let mut labels: Vec<String> = Vec::new();
        for r in &rows {
            if !labels.contains(&r.method) {
                labels.push(r.method.clone());
            }
        }
        let summary = labels
            .iter()
            .map(|l| {
                let failed = failures.iter().filter(|f| &f.method == l).count();
                let done = rows.iter().filter(|r| &r.method == l).count();
                summarize(l, done + failed, &rows, failed)
            })
            .collect();
        sections.push(ReportSection { source: path, rows: summary });
    }
    Ok(sections)
}

fn opt_cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Plain-text tables, one per section.
pub fn render_report(sections: &[ReportSection]) -> String {
    let mut out = String::new();
    for s in sections {
        let _ = writeln!(out, "{}", s.source.display());
        let _ = writeln!(
            out,
            "  {:<16} {:>6} {:>6} {:>10} {:>9} {:>10} {:>10}",
            "method", "done", "failed", "obj", "gap%", "time_s", "per_inst_s"
        );
        for r in &s.rows {
            let _ = writeln!(
                out,
                "  {:<16} {:>6} {:>6} {:>10} {:>9} {:>10.3} {:>10}",
                r.method,
                r.completed,
                r.failed,
                opt_cell(r.obj, 4),
                opt_cell(r.gap_percent, 3),
                r.total_seconds,
                opt_cell(r.mean_seconds, 4)
            );
        }
    }
    out
}

/// All sections as one CSV with a leading `source` column.
pub fn write_report_csv(sections: &[ReportSection], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(std::iter::once("source").chain(SUMMARY_HEADER.split(',')))?;
    for s in sections {
        for r in &s.rows {
            w.serialize((s.source.display().to_string(), r))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `text` with the named CSV column removed, for comparing result files
/// while ignoring wall-clock columns.
pub fn without_column(text: &str, column: &str) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let drop = header.split(',').position(|h| h == column);
    let strip = |line: &str| match drop {
        Some(k) => line
            .split(',')
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, f)| f)
            .collect::<Vec<_>>()
            .join(","),
        None => line.to_string(),
    };
    let mut out = strip(header);
    out.push('\n');
    for l in lines {
        out.push_str(&strip(l));
        out.push('\n');
    }
    out
}
