//! Online solvers over the restricted state space: states are
//! `alpha`-balanced cut-edge sets with at most `2k` edges, the metric is the
//! partition distance and request `e` costs 1 in every state that cuts `e`.
//!
//! Requests are served in the same order as everywhere else: the hit is paid
//! in the state held when the request arrives, then the solver may move.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracle::{OracleError, StateMetric, Trajectory, TrajectoryStep};
use crate::rebalance::global_rebalance;
use crate::ring::{CutEdgeSet, Edge};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OnlineError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("solver returned state index {0} outside the state space")]
    StateOutOfRange(usize),
}

/// A metric task system instance: the restricted space with its distances and
/// the starting state.
#[derive(Clone, Copy)]
pub struct MtsInstance<'a> {
    metric: &'a StateMetric,
    start: usize,
}

impl<'a> MtsInstance<'a> {
    /// Starts in the global rebalancing of the balanced `initial` state, as
    /// every algorithm of the class must.
    pub fn new(
        metric: &'a StateMetric,
        initial: &CutEdgeSet,
        k: usize,
    ) -> Result<Self, OracleError> {
        let (x0, _) = global_rebalance(initial, k)?;
        Self::starting_at(metric, &x0)
    }

    pub fn starting_at(metric: &'a StateMetric, x0: &CutEdgeSet) -> Result<Self, OracleError> {
        let start = metric
            .space()
            .index_of(x0)
            .ok_or_else(|| OracleError::InitialNotInSpace(x0.to_string()))?;
        Ok(Self { metric, start })
    }

    pub fn metric(&self) -> &'a StateMetric {
        self.metric
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    pub fn hit_vector(&self, e: Edge) -> Vec<bool> {
        self.metric.space().hit_vector(e)
    }
}

/// A solver sees only the requests served so far.
pub trait OnlineSolver {
    fn name(&self) -> &'static str;

    /// `prefix` ends with the request just charged in state `current`;
    /// returns the state to hold for the next request.
    fn serve(&mut self, instance: &MtsInstance<'_>, prefix: &[Edge], current: usize) -> usize;

    /// Expected cost of the underlying fractional algorithm, if randomized.
    fn expected_cost(&self) -> Option<f64> {
        None
    }
}

/// Work function: `w(s)` is the cheapest cost of serving the requests so far
/// and ending in `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkTable {
    pub w: Vec<u32>,
}

impl WorkTable {
    pub fn new(metric: &StateMetric, start: usize) -> Self {
        Self {
            w: metric.row(start).iter().map(|&d| d as u32).collect(),
        }
    }

    pub fn update(&mut self, hit: &[bool], metric: &StateMetric) {
        self.w = crate::oracle::relax_unit_hits(&self.w, hit, metric);
    }

    pub fn is_lipschitz(&self, metric: &StateMetric) -> bool {
        let s = self.w.len();
        (0..s).all(|i| (0..i).all(|j| self.w[i].abs_diff(self.w[j]) <= metric.dist(i, j)))
    }
}

/// One work-function step: update the table, then move to the state
/// minimizing `w'(s) + d(current, s)`, lowest index on ties. Returns the next
/// state, the hit paid in `current` and the movement cost.
pub fn wfa_step(
    table: &mut WorkTable,
    metric: &StateMetric,
    current: usize,
    e: Edge,
) -> (usize, u32, u32) {
    let hit = metric.space().hit_vector(e);
    table.update(&hit, metric);
    let row = metric.row(current);
    let next = (0..table.w.len())
        .min_by_key(|&s| (table.w[s] + row[s] as u32, s))
        .unwrap_or(current);
    (next, hit[current] as u32, row[next] as u32)
}

#[derive(Debug, Clone, Default)]
pub struct WorkFunctionSolver {
    table: Option<WorkTable>,
}

impl WorkFunctionSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self) -> Option<&WorkTable> {
        self.table.as_ref()
    }
}

impl OnlineSolver for WorkFunctionSolver {
    fn name(&self) -> &'static str {
        "wfa"
    }

    fn serve(&mut self, instance: &MtsInstance<'_>, prefix: &[Edge], current: usize) -> usize {
        let metric = instance.metric();
        let table = self
            .table
            .get_or_insert_with(|| WorkTable::new(metric, instance.start()));
        let e = *prefix
            .last()
            .expect("serve is called with a non-empty prefix");
        wfa_step(table, metric, current, e).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    pub p: Vec<f64>,
}

impl StateDistribution {
    pub fn uniform(len: usize) -> Self {
        Self {
            p: vec![1.0 / len as f64; len],
        }
    }

    pub fn point(len: usize, at: usize) -> Self {
        let mut p = vec![0.0; len];
        p[at] = 1.0;
        Self { p }
    }

    /// `p'(s) ∝ p(s) exp(-eta hit(s))`.
    pub fn reweighted(&self, hit: &[bool], eta: f64) -> Self {
        let damp = (-eta).exp();
        let mut p: Vec<f64> = self
            .p
            .iter()
            .zip(hit)
            .map(|(&m, &h)| if h { m * damp } else { m })
            .collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|m| *m /= total);
            Self { p }
        } else {
            // every state with mass was hit and the damping underflowed
            self.clone()
        }
    }

    pub fn normalization_error(&self) -> f64 {
        (self.p.iter().sum::<f64>() - 1.0).abs()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.p.iter().all(|&m| m >= 0.0)
    }

    pub fn expected(&self, cost: &[bool]) -> f64 {
        self.p
            .iter()
            .zip(cost)
            .filter(|(_, &h)| h)
            .map(|(&m, _)| m)
            .sum()
    }
}

/// Transport plan between two distributions; `flows` holds the mass leaving
/// each state for a different one, `stay` the mass that stays put.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub flows: Vec<(usize, usize, f64)>,
    pub stay: Vec<f64>,
    pub cost: f64,
}

impl Coupling {
    /// Largest deviation of row sums from `from` and column sums from `to`.
    pub fn conservation_error(&self, from: &StateDistribution, to: &StateDistribution) -> f64 {
        let mut out = self.stay.clone();
        let mut inc = self.stay.clone();
        for &(x, y, m) in &self.flows {
            out[x] += m;
            inc[y] += m;
        }
        let rows = out.iter().zip(&from.p).map(|(a, b)| (a - b).abs());
        let cols = inc.iter().zip(&to.p).map(|(a, b)| (a - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Next position of a sample currently at `x`: distributed as
    /// `pi(x, .) / from(x)`.
    pub fn move_sample(&self, x: usize, rng: &mut impl Rng) -> usize {
        let outgoing: Vec<(usize, f64)> = self
            .flows
            .iter()
            .filter(|f| f.0 == x)
            .map(|f| (f.1, f.2))
            .collect();
        let moving: f64 = outgoing.iter().map(|f| f.1).sum();
        if moving <= 0.0 {
            return x;
        }
        let u = rng.gen::<f64>() * (self.stay[x] + moving);
        if u < self.stay[x] {
            return x;
        }
        let mut acc = self.stay[x];
        for &(y, m) in &outgoing {
            acc += m;
            if u < acc {
                return y;
            }
        }
        outgoing.last().map(|f| f.0).unwrap_or(x)
    }
}

/// Greedy coupling: keep `min(p, q)` in place, then ship surplus to deficit
/// at distance 1, 2, ... in turn, sources and sinks in index order. Surplus
/// left over from rounding stays in place.
pub fn greedy_coupling(
    metric: &StateMetric,
    from: &StateDistribution,
    to: &StateDistribution,
) -> Coupling {
    let s = from.p.len();
    let stay: Vec<f64> = from.p.iter().zip(&to.p).map(|(a, b)| a.min(*b)).collect();
    let mut surplus: Vec<f64> = (0..s).map(|i| from.p[i] - stay[i]).collect();
    let mut deficit: Vec<f64> = (0..s).map(|i| to.p[i] - stay[i]).collect();
    let sources: Vec<usize> = (0..s).filter(|&i| surplus[i] > 0.0).collect();
    let mut flows = Vec::new();
    let mut cost = 0.0;
    let mut open_deficit: f64 = deficit.iter().sum();
    'levels: for d in 1..=metric.max_dist() {
        for &x in &sources {
            if surplus[x] <= 0.0 {
                continue;
            }
            for y in metric.neighbors_at(x, d) {
                if deficit[y] <= 0.0 {
                    continue;
                }
                let m = surplus[x].min(deficit[y]);
                surplus[x] -= m;
                deficit[y] -= m;
                open_deficit -= m;
                flows.push((x, y, m));
                cost += m * d as f64;
                if surplus[x] <= 0.0 {
                    break;
                }
            }
            if open_deficit <= 0.0 {
                break 'levels;
            }
        }
    }
    let mut stay = stay;
    for x in 0..s {
        if surplus[x] > 0.0 {
            stay[x] += surplus[x];
        }
    }
    Coupling { flows, stay, cost }
}

/// Outcome of one multiplicative-weights step.
#[derive(Debug, Clone, PartialEq)]
pub struct MwStep {
    pub dist: StateDistribution,
    pub next_sample: usize,
    pub expected_move_cost: f64,
    pub conservation_error: f64,
}

/// Reweight `dist` by the hits of `e` and move `sample` along the greedy
/// coupling between the old and new distribution.
pub fn mw_step(
    metric: &StateMetric,
    dist: &StateDistribution,
    sample: usize,
    e: Edge,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<MwStep, OnlineError> {
    check_eta(eta)?;
    let next = dist.reweighted(&metric.space().hit_vector(e), eta);
    let coupling = greedy_coupling(metric, dist, &next);
    let next_sample = coupling.move_sample(sample, rng);
    Ok(MwStep {
        conservation_error: coupling.conservation_error(dist, &next),
        expected_move_cost: coupling.cost,
        next_sample,
        dist: next,
    })
}

fn check_eta(eta: f64) -> Result<(), OnlineError> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(OnlineError::BadLearningRate(eta))
    }
}

/// Learning rate used when none is configured.
pub fn default_eta(len: Option<usize>) -> f64 {
    match len {
        Some(t) if t > 0 => 1.0 / (t as f64).sqrt(),
        _ => 0.1,
    }
}

/// Randomized solver: multiplicative weights over states with a sampled
/// position that follows the greedy coupling. The distribution starts
/// uniform; after the first update the sample is drawn from it, afterwards
/// it moves along couplings so that its marginal always equals the current
/// distribution.
#[derive(Debug, Clone)]
pub struct MultiplicativeWeights {
    eta: f64,
    rng: ChaCha8Rng,
    dist: Option<StateDistribution>,
    expected: f64,
    max_normalization_error: f64,
    max_conservation_error: f64,
    nonnegative: bool,
}

impl MultiplicativeWeights {
    pub fn new(eta: f64, seed: u64) -> Result<Self, OnlineError> {
        check_eta(eta)?;
        Ok(Self {
            eta,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: None,
            expected: 0.0,
            max_normalization_error: 0.0,
            max_conservation_error: 0.0,
            nonnegative: true,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn distribution(&self) -> Option<&StateDistribution> {
        self.dist.as_ref()
    }

    pub fn max_normalization_error(&self) -> f64 {
        self.max_normalization_error
    }

    pub fn max_conservation_error(&self) -> f64 {
        self.max_conservation_error
    }

    pub fn stayed_nonnegative(&self) -> bool {
        self.nonnegative
    }
}

impl OnlineSolver for MultiplicativeWeights {
    fn name(&self) -> &'static str {
        "mw"
    }

    fn serve(&mut self, instance: &MtsInstance<'_>, prefix: &[Edge], current: usize) -> usize {
        let metric = instance.metric();
        let e = *prefix
            .last()
            .expect("serve is called with a non-empty prefix");
        let hit = instance.hit_vector(e);
        let (next, next_dist) = match self.dist.take() {
            None => {
                // the sample sits at the start state; draw it afresh from the
                // first updated distribution
                self.expected += hit[current] as u32 as f64;
                let d = StateDistribution::uniform(instance.len()).reweighted(&hit, self.eta);
                let next = WeightedIndex::new(&d.p)
                    .map(|w| w.sample(&mut self.rng))
                    .unwrap_or(current);
                let row = metric.row(current);
                self.expected += d.p.iter().zip(row).map(|(m, &r)| m * r as f64).sum::<f64>();
                (next, d)
            }
            Some(d) => {
                self.expected += d.expected(&hit);
                let step = mw_step(metric, &d, current, e, self.eta, &mut self.rng)
                    .expect("learning rate checked at construction");
                self.expected += step.expected_move_cost;
                self.max_conservation_error =
                    self.max_conservation_error.max(step.conservation_error);
                (step.next_sample, step.dist)
            }
        };
        self.max_normalization_error = self
            .max_normalization_error
            .max(next_dist.normalization_error());
        self.nonnegative &= next_dist.is_nonnegative();
        self.dist = Some(next_dist);
        next
    }

    fn expected_cost(&self) -> Option<f64> {
        Some(self.expected)
    }
}

#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub algorithm: &'static str,
    pub trajectory: Trajectory,
    pub expected_cost: Option<f64>,
}

/// Serve `requests` one at a time; the solver sees only the prefix served so
/// far.
pub fn run_online(
    solver: &mut dyn OnlineSolver,
    instance: &MtsInstance<'_>,
    requests: &[Edge],
) -> Result<OnlineRun, OnlineError> {
    let space = instance.metric().space();
    for &e in requests {
        space.check_request(e)?;
    }
    let mut cur = instance.start();
    let mut trajectory = Trajectory::new(space.state(cur).clone());
    for t in 0..requests.len() {
        let e = requests[t];
        let hit = space.hits(cur, e) as u32;
        let next = solver.serve(instance, &requests[..=t], cur);
        if next >= space.len() {
            return Err(OnlineError::StateOutOfRange(next));
        }
        trajectory.steps.push(TrajectoryStep {
            request_edge: e,
            before: space.state(cur).clone(),
            after: space.state(next).clone(),
            hit,
            recolor: instance.metric().dist(cur, next),
            phase: 0,
        });
        cur = next;
    }
    Ok(OnlineRun {
        algorithm: solver.name(),
        trajectory,
        expected_cost: solver.expected_cost(),
    })
}
