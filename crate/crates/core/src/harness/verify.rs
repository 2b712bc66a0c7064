//! Randomized and exhaustive property suites over small rings. Each suite
//! stops at its first counterexample.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::generate::stream;
use super::{
    balanced_metric, generate, restricted_metric, unbalancing_reference, GeneratorSpec,
    HarnessError,
};
use crate::online::{run_online, MtsInstance, MultiplicativeWeights, WorkFunctionSolver};
use crate::oracle::{exact_opt_in, StateMetric};
use crate::rebalance::{global_rebalance_with, less_invariant_holds, ArcPolicy};
use crate::ring::{
    coloring_of, phi, state_distance, Alpha, Color, Coloring, CutEdgeSet, Edge, RingSize,
};
use crate::shadow::{run_off, OffRun, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    /// Potential set against brute force over colorings.
    Phi,
    /// Symmetry, zero diagonal and triangle inequality of the distance.
    Metric,
    /// Global rebalancing postconditions and per-stage invariant.
    Rebalance,
    /// Per-step amortized bound of the shadow algorithm.
    Step,
    /// Lower bound on recoloring plus potential change per closed phase.
    /// Exact optima on small rings never close a phase, so a quarter of the
    /// runs follow an unbalancing reference trajectory on a 40-node ring.
    Phase,
    /// Whole-run bound of the shadow algorithm against the optimum.
    TotalBound,
    /// Cut-edge invariants, potential lower bound and hit dominance.
    Structural,
    /// Dynamic program against exhaustive search.
    Oracle,
    /// Online solvers: state space membership, dominance, normalization.
    Online,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Phi,
        Suite::Metric,
        Suite::Rebalance,
        Suite::Step,
        Suite::Phase,
        Suite::TotalBound,
        Suite::Structural,
        Suite::Oracle,
        Suite::Online,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Phi => "phi",
            Suite::Metric => "metric",
            Suite::Rebalance => "rebalance",
            Suite::Step => "step",
            Suite::Phase => "phase",
            Suite::TotalBound => "total-bound",
            Suite::Structural => "structural",
            Suite::Oracle => "oracle",
            Suite::Online => "online",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub n_min: usize,
    pub n_max: usize,
    pub cases: usize,
    pub seed: u64,
    /// Run the rebalancing suite with the wrong arc color, to show that the
    /// suite catches it.
    pub mutate: bool,
    pub suites: Vec<Suite>,
    /// Request sequence length for the suites that run whole algorithms.
    pub len: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_min: 4,
            n_max: 12,
            cases: 500,
            seed: 0,
            mutate: false,
            suites: Suite::ALL.to_vec(),
            len: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub counterexample: Option<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.elapsed.as_secs_f64();
        match &self.counterexample {
            None => write!(
                f,
                "PASS {:<12} {:>6} cases  {secs:.2}s",
                self.suite.name(),
                self.cases
            ),
            Some(c) => write!(
                f,
                "FAIL {:<12} after {} cases  {secs:.2}s\n  counterexample: {c}",
                self.suite.name(),
                self.cases
            ),
        }
    }
}

pub fn verify(opts: &VerifyOptions) -> Result<Vec<SuiteReport>, HarnessError> {
    let n_min = opts.n_min.max(4).next_multiple_of(2);
    let n_max = opts.n_max.min(62);
    if n_min > n_max {
        return Err(HarnessError::Config(format!(
            "empty ring size range {}..={}",
            opts.n_min, opts.n_max
        )));
    }
    let mut ctx = Context {
        sizes: (n_min..=n_max).step_by(2).collect(),
        opts,
        balanced: HashMap::new(),
        restricted: HashMap::new(),
        off_runs: None,
    };
    let mut out = Vec::new();
    for &suite in &opts.suites {
        let start = Instant::now();
        let mut rng = stream(opts.seed, 100 + suite as u64);
        let (cases, counterexample) = match suite {
            Suite::Phi => ctx.phi_suite(&mut rng),
            Suite::Metric => ctx.metric_suite(&mut rng),
            Suite::Rebalance => ctx.rebalance_suite(&mut rng),
            Suite::Oracle => ctx.oracle_suite(&mut rng)?,
            Suite::Online => ctx.online_suite(&mut rng)?,
            Suite::Step | Suite::Phase | Suite::TotalBound | Suite::Structural => {
                ctx.shadow_suite(suite)?
            }
        };
        out.push(SuiteReport {
            suite,
            cases,
            counterexample,
            elapsed: start.elapsed(),
        });
    }
    Ok(out)
}

pub fn random_coloring_cuts(n: RingSize, rng: &mut ChaCha8Rng) -> CutEdgeSet {
    let colors = (0..n.get())
        .map(|_| if rng.gen() { Color::Red } else { Color::Blue })
        .collect();
    Coloring::new(colors).expect("length matches").cut_edges()
}

pub fn random_balanced(n: RingSize, rng: &mut ChaCha8Rng) -> CutEdgeSet {
    let mut colors: Vec<Color> = (0..n.get())
        .map(|i| {
            if i < n.half() {
                Color::Red
            } else {
                Color::Blue
            }
        })
        .collect();
    colors.shuffle(rng);
    Coloring::new(colors).expect("length matches").cut_edges()
}

/// A balanced set whose number of cut-edges is drawn uniformly first, so
/// dense sets (which stress rebalancing most) show up often.
pub fn random_balanced_dense(n: RingSize, rng: &mut ChaCha8Rng) -> CutEdgeSet {
    let m = 2 * rng.gen_range(1..=n.half());
    let edges: Vec<Edge> = (0..n.get()).collect();
    for _ in 0..64 {
        let pick = edges.choose_multiple(rng, m).copied();
        let c = CutEdgeSet::new(n, pick).expect("distinct edges, even count");
        if c.less_count() == n.half() {
            return c;
        }
    }
    random_balanced(n, rng)
}

/// `min(#disagreeing, #agreeing)` nodes between the canonical colorings.
pub fn brute_force_distance(a: &CutEdgeSet, b: &CutEdgeSet) -> usize {
    let ca = coloring_of(a, Color::Red);
    let cb = coloring_of(b, Color::Red);
    let differ = ca
        .colors()
        .iter()
        .zip(cb.colors())
        .filter(|(x, y)| x != y)
        .count();
    differ.min(a.ring().get() - differ)
}

struct ShadowCase {
    n: usize,
    k: usize,
    gen: GeneratorSpec,
    seed: u64,
    requests: Vec<Edge>,
    run: OffRun,
}

struct Context<'a> {
    sizes: Vec<usize>,
    opts: &'a VerifyOptions,
    balanced: HashMap<usize, StateMetric>,
    restricted: HashMap<(usize, usize), StateMetric>,
    off_runs: Option<Vec<ShadowCase>>,
}

type Outcome = (usize, Option<String>);

impl Context<'_> {
    fn ring(&self, rng: &mut ChaCha8Rng) -> RingSize {
        RingSize::new(*self.sizes.choose(rng).expect("non-empty")).expect("even")
    }

    /// Sizes small enough for exact optima.
    fn exact_sizes(&self) -> Vec<usize> {
        self.sizes.iter().copied().filter(|&n| n <= 12).collect()
    }

    fn phi_suite(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        for case in 0..self.opts.cases {
            let n = self.ring(rng);
            let a = random_coloring_cuts(n, rng);
            let b = random_coloring_cuts(n, rng);
            let p = phi(&a, &b).expect("same ring");
            let want = brute_force_distance(&a, &b);
            if p.len() != want || a.recolor_nodes(&p.nodes) != b {
                return (
                    case,
                    Some(format!(
                        "phi({a}, {b}) has {} nodes, brute force {want}",
                        p.len()
                    )),
                );
            }
        }
        (self.opts.cases, None)
    }

    fn metric_suite(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        for case in 0..self.opts.cases {
            let n = self.ring(rng);
            let [a, b, c] = [(); 3].map(|_| random_coloring_cuts(n, rng));
            let (ab, ba, bc, ac) = (
                state_distance(&a, &b),
                state_distance(&b, &a),
                state_distance(&b, &c),
                state_distance(&a, &c),
            );
            if state_distance(&a, &a) != 0 || ab != ba || ac > ab + bc {
                return (
                    case,
                    Some(format!(
                        "a={a} b={b} c={c}: d(a,b)={ab} d(b,a)={ba} d(b,c)={bc} d(a,c)={ac}"
                    )),
                );
            }
        }
        (self.opts.cases, None)
    }

    fn rebalance_suite(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        let policy = if self.opts.mutate {
            ArcPolicy::LessFrequent
        } else {
            ArcPolicy::MoreFrequent
        };
        for case in 0..self.opts.cases {
            let n = self.ring(rng);
            let k = rng.gen_range(1..=6);
            let c = if case % 2 == 0 {
                random_balanced(n, rng)
            } else {
                random_balanced_dense(n, rng)
            };
            let (out, trace) = global_rebalance_with(&c, k, policy).expect("balanced input");
            let nn = n.get();
            let mut bad = None;
            if !out.is_subset(&c) {
                bad = Some("output is not a subset of the input".to_string());
            } else if out.len() != c.len().min(2 * k) {
                bad = Some(format!("output has {} cut-edges", out.len()));
            } else if !less_invariant_holds(nn, k, out.less_count()) {
                bad = Some(format!("less = {} below n/2 - n/(2k)", out.less_count()));
            } else if let Some(s) = trace
                .steps
                .iter()
                .find(|s| !less_invariant_holds(nn, s.cuts_before / 2 - 1, s.less_after))
            {
                bad = Some(format!(
                    "after removing {:?} with {} cut-edges left, less = {}",
                    s.removed_pair,
                    s.cuts_before - 2,
                    s.less_after
                ));
            }
            if let Some(why) = bad {
                return (
                    case,
                    Some(format!("n={nn} k={k} input {c} output {out}: {why}")),
                );
            }
        }
        (self.opts.cases, None)
    }

    fn balanced_metric(&mut self, n: usize) -> Result<&StateMetric, HarnessError> {
        if let std::collections::hash_map::Entry::Vacant(e) = self.balanced.entry(n) {
            let m = balanced_metric(RingSize::new(n)?)?;
            e.insert(m);
        }
        Ok(&self.balanced[&n])
    }

    fn restricted_metric(&mut self, n: usize, k: usize) -> Result<&StateMetric, HarnessError> {
        if let std::collections::hash_map::Entry::Vacant(e) = self.restricted.entry((n, k)) {
            let m = restricted_metric(RingSize::new(n)?, k, Alpha::shadow_default(k))?;
            e.insert(m);
        }
        Ok(&self.restricted[&(n, k)])
    }

    fn oracle_suite(&mut self, rng: &mut ChaCha8Rng) -> Result<Outcome, HarnessError> {
        let sizes: Vec<usize> = self.sizes.iter().copied().filter(|&n| n <= 6).collect();
        if sizes.is_empty() {
            return Ok((0, None));
        }
        for case in 0..self.opts.cases {
            let n = *sizes.choose(rng).expect("non-empty");
            let len = rng.gen_range(1..=4);
            let metric = self.balanced_metric(n)?;
            let init = metric.space().state(rng.gen_range(0..metric.len())).clone();
            let req: Vec<Edge> = (0..len).map(|_| rng.gen_range(0..n)).collect();
            let dp = exact_opt_in(metric, &init, &req)?.cost;
            let brute = exhaustive_opt(
                metric,
                metric.space().index_of(&init).expect("in space"),
                &req,
            );
            if dp != brute {
                return Ok((
                    case,
                    Some(format!(
                        "n={n} init {init} requests {req:?}: dp {dp}, exhaustive {brute}"
                    )),
                ));
            }
        }
        Ok((self.opts.cases, None))
    }

    fn shadow_cases(&mut self) -> Result<&[ShadowCase], HarnessError> {
        if self.off_runs.is_none() {
            let sizes = self.exact_sizes();
            let mut rng = stream(self.opts.seed, 200);
            let mut cases = Vec::new();
            if !sizes.is_empty() {
                for i in 0..self.opts.cases {
                    let seed = rng.gen();
                    if i % 4 == 3 {
                        let k = rng.gen_range(3..=6);
                        cases.push(self.unbalancing_case(k, seed)?);
                        continue;
                    }
                    let n = *sizes.choose(&mut rng).expect("non-empty");
                    let k = rng.gen_range(1..=3);
                    let gen = *GeneratorSpec::ALL.choose(&mut rng).expect("non-empty");
                    cases.push(self.shadow_case(n, k, gen, seed)?);
                }
            }
            self.off_runs = Some(cases);
        }
        Ok(self.off_runs.as_deref().expect("filled"))
    }

    fn shadow_case(
        &mut self,
        n: usize,
        k: usize,
        gen: GeneratorSpec,
        seed: u64,
    ) -> Result<ShadowCase, HarnessError> {
        let ring = RingSize::new(n)?;
        let len = self.opts.len;
        let init = random_balanced(ring, &mut stream(seed, 1));
        let requests = if gen == GeneratorSpec::CutChaser {
            let m = self.restricted_metric(n, k)?;
            let inst = MtsInstance::new(m, &init, k)?;
            generate(gen, ring, len, seed, Some(&inst))?
        } else {
            generate(gen, ring, len, seed, None)?
        };
        let opt = exact_opt_in(self.balanced_metric(n)?, &init, &requests)?;
        let run = run_off(k, &requests, &opt.trajectory)?;
        Ok(ShadowCase {
            n,
            k,
            gen,
            seed,
            requests,
            run,
        })
    }

    fn unbalancing_case(&mut self, k: usize, seed: u64) -> Result<ShadowCase, HarnessError> {
        let n = 40;
        let (requests, reference) =
            unbalancing_reference(RingSize::new(n)?, k, self.opts.len, seed, 24)?;
        let run = run_off(k, &requests, &reference)?;
        Ok(ShadowCase {
            n,
            k,
            gen: GeneratorSpec::Uniform,
            seed,
            requests,
            run,
        })
    }

    fn shadow_suite(&mut self, suite: Suite) -> Result<Outcome, HarnessError> {
        let kinds: &[ViolationKind] = match suite {
            Suite::Step => &[ViolationKind::StepBound],
            Suite::Phase => &[ViolationKind::PhaseBound, ViolationKind::PhaseAmortized],
            Suite::TotalBound => &[ViolationKind::TotalBound],
            _ => &[
                ViolationKind::CutInvariant,
                ViolationKind::PotentialLowerBound,
                ViolationKind::HitDominance,
            ],
        };
        let cases = self.shadow_cases()?;
        for (i, c) in cases.iter().enumerate() {
            if let Some(v) = c.run.violations.iter().find(|v| kinds.contains(&v.kind)) {
                return Ok((
                    i,
                    Some(format!(
                        "n={} k={} gen={} seed={} requests {:?}: {:?} at {:?}: {}",
                        c.n, c.k, c.gen, c.seed, c.requests, v.kind, v.request_index, v.detail
                    )),
                ));
            }
        }
        Ok((cases.len(), None))
    }

    fn online_suite(&mut self, rng: &mut ChaCha8Rng) -> Result<Outcome, HarnessError> {
        let sizes = self.exact_sizes();
        if sizes.is_empty() {
            return Ok((0, None));
        }
        for case in 0..self.opts.cases {
            let n = *sizes.choose(rng).expect("non-empty");
            let k = rng.gen_range(1..=3);
            let seed: u64 = rng.gen();
            let ring = RingSize::new(n)?;
            let len = self.opts.len;
            let init = random_balanced(ring, &mut stream(seed, 1));
            let metric = self.restricted_metric(n, k)?;
            let inst = MtsInstance::new(metric, &init, k)?;
            let requests = generate(GeneratorSpec::Uniform, ring, len, seed, None)?;
            let ropt = exact_opt_in(metric, metric.space().state(inst.start()), &requests)?.cost;
            let wfa = run_online(&mut WorkFunctionSolver::new(), &inst, &requests)?;
            let mut mw = MultiplicativeWeights::new(crate::online::default_eta(Some(len)), seed)?;
            let mwr = run_online(&mut mw, &inst, &requests)?;
            let ctx = || format!("n={n} k={k} seed={seed} requests {requests:?}");
            for run in [&wfa, &mwr] {
                if let Err(e) = run.trajectory.check_consistency(&requests, true) {
                    return Ok((case, Some(format!("{}: {e} ({})", run.algorithm, ctx()))));
                }
                if run
                    .trajectory
                    .steps
                    .iter()
                    .any(|s| !metric.space().contains(&s.after))
                {
                    return Ok((
                        case,
                        Some(format!(
                            "{} left the state space ({})",
                            run.algorithm,
                            ctx()
                        )),
                    ));
                }
                if run.trajectory.total_cost() < ropt {
                    return Ok((
                        case,
                        Some(format!(
                            "{} beat the restricted optimum {ropt} ({})",
                            run.algorithm,
                            ctx()
                        )),
                    ));
                }
            }
            let expected = mwr.expected_cost.unwrap_or(0.0);
            if mw.max_normalization_error() > 1e-9
                || mw.max_conservation_error() > 1e-12
                || !mw.stayed_nonnegative()
                || expected < ropt as f64 - 1e-9
            {
                return Ok((
                    case,
                    Some(format!(
                        "mw normalization {:e}, conservation {:e}, expected {expected} vs optimum {ropt} ({})",
                        mw.max_normalization_error(),
                        mw.max_conservation_error(),
                        ctx()
                    )),
                ));
            }
        }
        Ok((self.opts.cases, None))
    }
}

/// Cheapest cost over every sequence of states, by plain enumeration.
pub fn exhaustive_opt(metric: &StateMetric, start: usize, requests: &[Edge]) -> u64 {
    fn go(metric: &StateMetric, cur: usize, requests: &[Edge], best: &mut u64, acc: u64) {
        if acc >= *best {
            return;
        }
        let Some((&e, rest)) = requests.split_first() else {
            *best = acc;
            return;
        };
        let hit = metric.space().hits(cur, e) as u64;
        for next in 0..metric.len() {
            go(
                metric,
                next,
                rest,
                best,
                acc + hit + metric.dist(cur, next) as u64,
            );
        }
    }
    let mut best = u64::MAX;
    go(metric, start, requests, &mut best, 0);
    best
}
