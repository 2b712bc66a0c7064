//! Experiment runner: builds a request sequence, runs the selected
//! algorithms on it, checks their runtime invariants and emits traces and a
//! summary.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::online::{
    default_eta, run_online, MtsInstance, MultiplicativeWeights, OnlineError, WorkFunctionSolver,
};
use crate::oracle::{
    balanced_space, enumerate_states, exact_opt_in, OracleError, StateMetric, StateSpace,
    Trajectory,
};
use crate::rebalance::RebalanceError;
use crate::ring::{state_distance, Alpha, CutEdgeSet, Edge, RingError, RingSize};
use crate::shadow::{run_off, OffRun, ShadowError};

mod generate;
pub mod verify;

pub use generate::{
    generate, initial_state, unbalancing_reference, GeneratorSpec, InitSpec, DEFAULT_BLOCK_LEN,
};

/// Largest state space the harness builds a distance matrix for.
pub const MAX_METRIC_STATES: usize = 8_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown generator {0:?} (expected uniform, sweep, blocks[:L] or cut-chaser)")]
    UnknownGenerator(String),
    #[error("unknown algorithm {0:?} (expected opt, ropt, off, wfa or mw)")]
    UnknownAlgorithm(String),
    #[error("unknown initial coloring {0:?} (expected halves, alternating or random)")]
    UnknownInit(String),
    #[error("state space with {states} states exceeds the limit of {MAX_METRIC_STATES} for exact computation")]
    Intractable { states: usize },
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Rebalance(#[from] RebalanceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Online(#[from] OnlineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    /// Exact optimum over perfectly balanced states.
    Opt,
    /// Exact optimum over the restricted space.
    Ropt,
    /// Offline shadow of the exact optimum.
    Off,
    /// Deterministic work-function solver.
    Wfa,
    /// Randomized multiplicative-weights solver.
    Mw,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Opt,
        Algorithm::Ropt,
        Algorithm::Off,
        Algorithm::Wfa,
        Algorithm::Mw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Opt => "opt",
            Algorithm::Ropt => "ropt",
            Algorithm::Off => "off",
            Algorithm::Wfa => "wfa",
            Algorithm::Mw => "mw",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, Algorithm::Wfa | Algorithm::Mw)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "opt" | "exact_opt" => Ok(Algorithm::Opt),
            "ropt" | "restricted_opt" => Ok(Algorithm::Ropt),
            "off" | "off_shadow" => Ok(Algorithm::Off),
            "wfa" => Ok(Algorithm::Wfa),
            "mw" => Ok(Algorithm::Mw),
            other => Err(HarnessError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Parses a comma-separated algorithm list, keeping first occurrences.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, HarnessError> {
    let mut out: Vec<Algorithm> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let a: Algorithm = part.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for TraceFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(HarnessError::Config(format!(
                "unknown trace format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    /// Defaults to `3/2 + 1/k`.
    pub alpha: Option<Alpha>,
    pub seed: u64,
    pub gen: GeneratorSpec,
    pub len: usize,
    pub algos: Vec<Algorithm>,
    pub init: InitSpec,
    /// Multiplicative-weights learning rate; defaults to `1/sqrt(len)`.
    pub eta: Option<f64>,
}

impl RunConfig {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            alpha: None,
            seed: 0,
            gen: GeneratorSpec::Uniform,
            len: 100,
            algos: Algorithm::ALL.to_vec(),
            init: InitSpec::Random,
            eta: None,
        }
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
            .unwrap_or_else(|| Alpha::shadow_default(self.k.max(1)))
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| default_eta(Some(self.len)))
    }

    pub fn validate(&self) -> Result<RingSize, HarnessError> {
        let n = RingSize::new(self.n)?;
        if self.n > 62 {
            return Err(HarnessError::Config(format!(
                "n = {} is above the supported 62",
                self.n
            )));
        }
        if self.k == 0 {
            return Err(HarnessError::Config("k must be at least 1".into()));
        }
        if self.alpha() < Alpha::rebalanced(self.k) {
            return Err(HarnessError::Config(format!(
                "alpha = {} is below 1 + 1/k = {}",
                self.alpha(),
                Alpha::rebalanced(self.k)
            )));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        Ok(n)
    }
}

/// Builds the distance matrix of `space` if it is small enough.
pub fn metric_for(space: StateSpace) -> Result<StateMetric, HarnessError> {
    if space.len() > MAX_METRIC_STATES {
        return Err(HarnessError::Intractable {
            states: space.len(),
        });
    }
    Ok(StateMetric::new(space))
}

pub fn restricted_metric(n: RingSize, k: usize, alpha: Alpha) -> Result<StateMetric, HarnessError> {
    metric_for(enumerate_states(n, Some(2 * k), alpha)?)
}

pub fn balanced_metric(n: RingSize) -> Result<StateMetric, HarnessError> {
    metric_for(balanced_space(n)?)
}

#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub trajectory: Trajectory,
    /// Cost of reaching the trajectory's first state from the shared
    /// balanced initial coloring.
    pub initial_rebalance_cost: u64,
    pub expected_cost: Option<f64>,
    pub phases: Option<usize>,
}

impl AlgorithmResult {
    /// Sum of per-request hit and recoloring costs.
    pub fn service_cost(&self) -> u64 {
        self.trajectory.total_cost()
    }

    pub fn total_cost(&self) -> u64 {
        self.service_cost() + self.initial_rebalance_cost
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub request_edge: Edge,
    pub algorithm: &'static str,
    pub hit: u32,
    pub recolor: u32,
    pub cumulative_cost: u64,
    pub cut_count: usize,
    pub less_count: usize,
    pub phase_index: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub initial: CutEdgeSet,
    pub requests: Vec<Edge>,
    pub results: Vec<AlgorithmResult>,
    pub off: Option<OffRun>,
    pub opt_cost: Option<u64>,
    pub restricted_opt_cost: Option<u64>,
    pub violations: Vec<String>,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment, HarnessError> {
    let n = cfg.validate()?;
    let alpha = cfg.alpha();
    let initial = initial_state(cfg.init, n, cfg.seed);
    let wants = |a: Algorithm| cfg.algos.contains(&a);

    let needs_restricted = cfg.gen == GeneratorSpec::CutChaser
        || wants(Algorithm::Ropt)
        || wants(Algorithm::Wfa)
        || wants(Algorithm::Mw);
    let restricted = if needs_restricted {
        Some(restricted_metric(n, cfg.k, alpha)?)
    } else {
        None
    };
    let instance = match &restricted {
        Some(m) => Some(MtsInstance::new(m, &initial, cfg.k)?),
        None => None,
    };
    let requests = generate(cfg.gen, n, cfg.len, cfg.seed, instance.as_ref())?;

    let mut violations = Vec::new();
    let mut by_algo: BTreeMap<Algorithm, AlgorithmResult> = BTreeMap::new();

    let mut opt_cost = None;
    let mut off = None;
    if wants(Algorithm::Opt) || wants(Algorithm::Off) {
        let metric = balanced_metric(n)?;
        let opt = exact_opt_in(&metric, &initial, &requests)?;
        opt_cost = Some(opt.cost);
        if wants(Algorithm::Off) {
            let run = run_off(cfg.k, &requests, &opt.trajectory)?;
            for v in &run.violations {
                violations.push(format!(
                    "off: {:?} at {:?}: {}",
                    v.kind, v.request_index, v.detail
                ));
            }
            if let Err(e) = run.trajectory.check_consistency(&requests, false) {
                violations.push(format!("off: inconsistent trajectory: {e}"));
            }
            by_algo.insert(
                Algorithm::Off,
                AlgorithmResult {
                    algorithm: Algorithm::Off,
                    trajectory: run.trajectory.clone(),
                    initial_rebalance_cost: run.initial_rebalance_cost,
                    expected_cost: None,
                    phases: Some(run.phases.len()),
                },
            );
            off = Some(run);
        }
        by_algo.insert(
            Algorithm::Opt,
            AlgorithmResult {
                algorithm: Algorithm::Opt,
                trajectory: opt.trajectory,
                initial_rebalance_cost: 0,
                expected_cost: None,
                phases: None,
            },
        );
    }

    let mut restricted_opt_cost = None;
    if let (Some(metric), Some(inst)) = (&restricted, &instance) {
        let x0 = metric.space().state(inst.start()).clone();
        let rebalance_cost = state_distance(&initial, &x0) as u64;
        let ropt = exact_opt_in(metric, &x0, &requests)?;
        restricted_opt_cost = Some(ropt.cost);
        by_algo.insert(
            Algorithm::Ropt,
            AlgorithmResult {
                algorithm: Algorithm::Ropt,
                trajectory: ropt.trajectory,
                initial_rebalance_cost: rebalance_cost,
                expected_cost: None,
                phases: None,
            },
        );
        for algo in [Algorithm::Wfa, Algorithm::Mw]
            .into_iter()
            .filter(|&a| wants(a))
        {
            let run = match algo {
                Algorithm::Wfa => run_online(&mut WorkFunctionSolver::new(), inst, &requests)?,
                _ => {
                    let seed = generate::stream(cfg.seed, generate::SOLVER_STREAM).next_u64();
                    let mut mw = MultiplicativeWeights::new(cfg.eta(), seed)?;
                    let run = run_online(&mut mw, inst, &requests)?;
                    if mw.max_normalization_error() > 1e-9 || !mw.stayed_nonnegative() {
                        violations.push(format!(
                            "mw: distribution not normalized (error {:e})",
                            mw.max_normalization_error()
                        ));
                    }
                    if mw.max_conservation_error() > 1e-12 {
                        violations.push(format!(
                            "mw: coupling lost mass (error {:e})",
                            mw.max_conservation_error()
                        ));
                    }
                    if run.expected_cost.unwrap_or(f64::INFINITY) < ropt.cost as f64 - 1e-9 {
                        violations.push("mw: expected cost below the restricted optimum".into());
                    }
                    run
                }
            };
            let traj = run.trajectory;
            if let Err(e) = traj.check_consistency(&requests, true) {
                violations.push(format!("{algo}: inconsistent trajectory: {e}"));
            }
            let outside = std::iter::once(&traj.initial)
                .chain(traj.steps.iter().map(|s| &s.after))
                .any(|s| !metric.space().contains(s));
            if outside {
                violations.push(format!("{algo}: left the restricted state space"));
            }
            if traj.total_cost() < ropt.cost {
                violations.push(format!(
                    "{algo}: cost {} below the restricted optimum {}",
                    traj.total_cost(),
                    ropt.cost
                ));
            }
            by_algo.insert(
                algo,
                AlgorithmResult {
                    algorithm: algo,
                    trajectory: traj,
                    initial_rebalance_cost: rebalance_cost,
                    expected_cost: run.expected_cost,
                    phases: None,
                },
            );
        }
    }

    let results = cfg.algos.iter().filter_map(|a| by_algo.remove(a)).collect();
    Ok(Experiment {
        config: cfg.clone(),
        initial,
        requests,
        results,
        off,
        opt_cost,
        restricted_opt_cost,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: &'static str,
    pub service_cost: u64,
    pub hit_cost: u64,
    pub recolor_cost: u64,
    pub initial_rebalance_cost: u64,
    pub total_cost: u64,
    pub phases: Option<usize>,
    pub expected_cost: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Ratios {
    pub off_over_opt: Option<f64>,
    pub onl_over_off: BTreeMap<&'static str, Option<f64>>,
    pub onl_over_opt: BTreeMap<&'static str, Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub n: usize,
    pub k: usize,
    pub alpha: String,
    pub seed: u64,
    pub generator: String,
    pub len: usize,
    pub init: String,
    pub eta: Option<f64>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub opt_cost: Option<u64>,
    pub restricted_opt_cost: Option<u64>,
    pub ratios: Ratios,
    /// `OFF <= (3k+1) OPT + 3n/2`, when the shadow algorithm ran.
    pub total_bound_ok: Option<bool>,
    /// `alpha >= 2`: the bound says nothing useful about balance.
    pub trivial_augmentation: bool,
    pub invariants_ok: bool,
    pub violations: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| round6(num as f64 / den as f64))
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl Experiment {
    pub fn result(&self, algo: Algorithm) -> Option<&AlgorithmResult> {
        self.results.iter().find(|r| r.algorithm == algo)
    }

    pub fn invariants_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for r in &self.results {
            let mut cumulative = 0u64;
            for (t, s) in r.trajectory.steps.iter().enumerate() {
                cumulative += (s.hit + s.recolor) as u64;
                rows.push(TraceRow {
                    t,
                    request_edge: s.request_edge,
                    algorithm: r.algorithm.name(),
                    hit: s.hit,
                    recolor: s.recolor,
                    cumulative_cost: cumulative,
                    cut_count: s.after.len(),
                    less_count: s.after.less_count(),
                    phase_index: s.phase,
                });
            }
        }
        rows
    }

    pub fn write_trace<W: Write>(&self, out: W, format: TraceFormat) -> Result<(), HarnessError> {
        match format {
            TraceFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                let rows = self.trace_rows();
                if rows.is_empty() {
                    w.write_record([
                        "t",
                        "request_edge",
                        "algorithm",
                        "hit",
                        "recolor",
                        "cumulative_cost",
                        "cut_count",
                        "less_count",
                        "phase_index",
                    ])?;
                }
                for row in rows {
                    w.serialize(row)?;
                }
                w.flush()?;
            }
            TraceFormat::Jsonl => {
                let mut out = std::io::BufWriter::new(out);
                for row in self.trace_rows() {
                    serde_json::to_writer(&mut out, &row)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        let cfg = &self.config;
        let algorithms = self
            .results
            .iter()
            .map(|r| AlgorithmSummary {
                algorithm: r.algorithm.name(),
                service_cost: r.service_cost(),
                hit_cost: r.trajectory.hit_cost(),
                recolor_cost: r.trajectory.recolor_cost(),
                initial_rebalance_cost: r.initial_rebalance_cost,
                total_cost: r.total_cost(),
                phases: r.phases,
                expected_cost: r.expected_cost.map(round6),
            })
            .collect();
        let total = |a| self.result(a).map(AlgorithmResult::total_cost);
        let opt = self.opt_cost;
        let off = total(Algorithm::Off);
        let mut onl_over_off = BTreeMap::new();
        let mut onl_over_opt = BTreeMap::new();
        for a in [Algorithm::Wfa, Algorithm::Mw] {
            if let Some(c) = total(a) {
                if let Some(o) = off {
                    onl_over_off.insert(a.name(), ratio(c, o));
                }
                if let Some(o) = opt {
                    onl_over_opt.insert(a.name(), ratio(c, o));
                }
            }
        }
        Summary {
            n: cfg.n,
            k: cfg.k,
            alpha: cfg.alpha().to_string(),
            seed: cfg.seed,
            generator: cfg.gen.to_string(),
            len: cfg.len,
            init: cfg.init.to_string(),
            eta: cfg.algos.contains(&Algorithm::Mw).then(|| cfg.eta()),
            algorithms,
            opt_cost: self.opt_cost,
            restricted_opt_cost: self.restricted_opt_cost,
            ratios: Ratios {
                off_over_opt: match (off, opt) {
                    (Some(a), Some(b)) => ratio(a, b),
                    _ => None,
                },
                onl_over_off,
                onl_over_opt,
            },
            total_bound_ok: self.off.as_ref().map(|r| r.satisfies_total_bound(cfg.n)),
            trivial_augmentation: cfg.alpha() >= Alpha::new(2, 1).expect("valid"),
            invariants_ok: self.invariants_ok(),
            violations: self.violations.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTiming {
    pub stage: &'static str,
    pub states: Option<usize>,
    #[serde(serialize_with = "ser_millis")]
    pub elapsed: Duration,
}

fn ser_millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round6(d.as_secs_f64() * 1e3))
}

/// Times each stage of an experiment once.
pub fn bench(cfg: &RunConfig) -> Result<Vec<BenchTiming>, HarnessError> {
    let n = cfg.validate()?;
    let alpha = cfg.alpha();
    let mut out = Vec::new();
    let mut timed = |stage, states, start: Instant| {
        out.push(BenchTiming {
            stage,
            states,
            elapsed: start.elapsed(),
        })
    };

    let initial = initial_state(cfg.init, n, cfg.seed);
    let start = Instant::now();
    let balanced = balanced_metric(n)?;
    timed("balanced space + metric", Some(balanced.len()), start);
    let start = Instant::now();
    let restricted = restricted_metric(n, cfg.k, alpha)?;
    timed("restricted space + metric", Some(restricted.len()), start);
    let inst = MtsInstance::new(&restricted, &initial, cfg.k)?;

    let start = Instant::now();
    let requests = generate(cfg.gen, n, cfg.len, cfg.seed, Some(&inst))?;
    timed("generate", None, start);
    let start = Instant::now();
    let opt = exact_opt_in(&balanced, &initial, &requests)?;
    timed("exact optimum", None, start);
    let start = Instant::now();
    run_off(cfg.k, &requests, &opt.trajectory)?;
    timed("offline shadow", None, start);
    let start = Instant::now();
    exact_opt_in(
        &restricted,
        inst.metric().space().state(inst.start()),
        &requests,
    )?;
    timed("restricted optimum", None, start);
    let start = Instant::now();
    run_online(&mut WorkFunctionSolver::new(), &inst, &requests)?;
    timed("work function", None, start);
    let start = Instant::now();
    run_online(
        &mut MultiplicativeWeights::new(cfg.eta(), cfg.seed)?,
        &inst,
        &requests,
    )?;
    timed("multiplicative weights", None, start);
    Ok(out)
}
