//! Exact offline optima over enumerated state spaces.
//!
//! A state is a valid cut-edge set. The unrestricted optimum ranges over all
//! perfectly balanced states; restricted optima range over states with at
//! most `2k` cut-edges that are `alpha`-balanced. Costs follow the service
//! order of the problem: the hit cost of a request is paid in the state held
//! when it arrives, then the algorithm may move.
//!
//! The dynamic program exploits that every work function here is 1-Lipschitz
//! in the partition metric and every task cost is 0 or 1, so one relaxation
//! step can only raise a value by one; see [`relax_unit_hits`].

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::rebalance::{global_rebalance, RebalanceError};
use crate::ring::{mask_distance, phi, Alpha, CutEdgeSet, Edge, Node, RingError, RingSize};

/// Upper limit on enumerated states.
pub const MAX_STATES: usize = 2_000_000;

/// Spaces up to this size keep per-state neighbor lists sorted by distance.
const NEIGHBOR_INDEX_LIMIT: usize = 4_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Rebalance(#[from] RebalanceError),
    #[error("initial state {0} is not in the state space")]
    InitialNotInSpace(String),
    #[error("request edge {edge} out of range for ring of size {n}")]
    RequestOutOfRange { edge: Edge, n: usize },
    #[error("state space would hold {0} states, above the limit of {MAX_STATES}")]
    TooManyStates(u128),
    #[error("state space is empty")]
    EmptySpace,
}

/// Complete, duplicate-free list of valid `alpha`-balanced cut-edge sets with
/// at most `max_cut` edges, sorted lexicographically by edge list.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n: RingSize,
    max_cut: Option<usize>,
    alpha: Alpha,
    states: Vec<CutEdgeSet>,
    masks: Vec<u64>,
    index: HashMap<u64, usize>,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

pub fn enumerate_states(
    n: RingSize,
    max_cut: Option<usize>,
    alpha: Alpha,
) -> Result<StateSpace, OracleError> {
    let size = n.get();
    if size > 62 {
        return Err(RingError::RingTooLarge(size).into());
    }
    let top = max_cut.unwrap_or(size).min(size);
    let estimate: u128 = (0..=top)
        .step_by(2)
        .map(|s| binomial(size as u128, s as u128))
        .sum();
    if estimate > MAX_STATES as u128 {
        return Err(OracleError::TooManyStates(estimate));
    }

    let mut states = Vec::new();
    for card in (0..=top).step_by(2) {
        for_each_combination(size, card, |mask| {
            let c = CutEdgeSet::from_mask(n, mask).expect("even combination is valid");
            if c.is_alpha_balanced(alpha) {
                states.push(c);
            }
        });
    }
    states.sort();
    let masks: Vec<u64> = states.iter().map(|s| s.mask().expect("n <= 62")).collect();
    let index = masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    Ok(StateSpace {
        n,
        max_cut,
        alpha,
        states,
        masks,
        index,
    })
}

/// Calls `f` with every `card`-subset of `0..size` as a bitmask.
fn for_each_combination(size: usize, card: usize, mut f: impl FnMut(u64)) {
    if card == 0 {
        f(0);
        return;
    }
    if card > size {
        return;
    }
    let limit: u128 = 1u128 << size;
    let mut v: u128 = (1u128 << card) - 1;
    while v < limit {
        f(v as u64);
        // Gosper's hack: next integer with the same popcount
        let t = v | (v - 1);
        let w = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
        v = w;
    }
}

impl StateSpace {
    pub fn ring(&self) -> RingSize {
        self.n
    }

    pub fn max_cut(&self) -> Option<usize> {
        self.max_cut
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CutEdgeSet] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &CutEdgeSet {
        &self.states[i]
    }

    pub fn mask(&self, i: usize) -> u64 {
        self.masks[i]
    }

    pub fn index_of(&self, c: &CutEdgeSet) -> Option<usize> {
        if c.ring() != self.n {
            return None;
        }
        self.index.get(&c.mask().ok()?).copied()
    }

    pub fn contains(&self, c: &CutEdgeSet) -> bool {
        self.index_of(c).is_some()
    }

    /// Per-state hit cost of request `e`: true iff `e` is a cut-edge.
    pub fn hit_vector(&self, e: Edge) -> Vec<bool> {
        self.masks.iter().map(|m| m >> e & 1 == 1).collect()
    }

    #[inline]
    pub fn hits(&self, i: usize, e: Edge) -> bool {
        self.masks[i] >> e & 1 == 1
    }

    pub fn check_request(&self, e: Edge) -> Result<(), OracleError> {
        if e >= self.n.get() {
            return Err(OracleError::RequestOutOfRange {
                edge: e,
                n: self.n.get(),
            });
        }
        Ok(())
    }
}

/// A state space with its full distance matrix.
#[derive(Debug, Clone)]
pub struct StateMetric {
    space: StateSpace,
    dist: Vec<u8>,
    /// Row `i`: all state indices ordered by `(distance from i, index)`.
    by_distance: Option<Vec<u32>>,
    /// Row `i`, entry `d`: start of distance `d` within the row of `by_distance`.
    level_start: Option<Vec<u32>>,
    max_dist: usize,
}

impl StateMetric {
    pub fn new(space: StateSpace) -> Self {
        let s = space.len();
        let n = space.ring().get();
        let mut dist = vec![0u8; s * s];
        for i in 0..s {
            for j in i + 1..s {
                let d = mask_distance(n, space.masks[i], space.masks[j]) as u8;
                dist[i * s + j] = d;
                dist[j * s + i] = d;
            }
        }
        let max_dist = n / 2;
        let (by_distance, level_start) = if s <= NEIGHBOR_INDEX_LIMIT {
            let levels = max_dist + 2;
            let mut order = vec![0u32; s * s];
            let mut starts = vec![0u32; s * levels];
            let mut counts = vec![0u32; levels];
            for i in 0..s {
                counts.iter_mut().for_each(|c| *c = 0);
                let row = &dist[i * s..(i + 1) * s];
                for &d in row {
                    counts[d as usize + 1] += 1;
                }
                for d in 1..levels {
                    counts[d] += counts[d - 1];
                }
                starts[i * levels..(i + 1) * levels].copy_from_slice(&counts);
                let out = &mut order[i * s..(i + 1) * s];
                for (j, &d) in row.iter().enumerate() {
                    let slot = &mut counts[d as usize];
                    out[*slot as usize] = j as u32;
                    *slot += 1;
                }
            }
            (Some(order), Some(starts))
        } else {
            (None, None)
        };
        Self {
            space,
            dist,
            by_distance,
            level_start,
            max_dist,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> u32 {
        self.dist[i * self.space.len() + j] as u32
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let s = self.space.len();
        &self.dist[i * s..(i + 1) * s]
    }

    pub fn max_dist(&self) -> usize {
        self.max_dist
    }

    /// States at distance `1..=radius` from `i`, nearest first. Falls back to
    /// a row scan when no neighbor index was built.
    pub fn neighbors_within(&self, i: usize, radius: usize) -> NeighborIter<'_> {
        let s = self.space.len();
        let radius = radius.min(self.max_dist);
        match (&self.by_distance, &self.level_start) {
            (Some(order), Some(starts)) => {
                let levels = self.max_dist + 2;
                let lo = starts[i * levels + 1] as usize;
                let hi = starts[i * levels + radius + 1] as usize;
                NeighborIter::Indexed(order[i * s + lo..i * s + hi].iter())
            }
            _ => NeighborIter::Scan {
                row: self.row(i),
                radius,
                pos: 0,
            },
        }
    }

    /// States at exactly distance `d` from `i` in index order.
    pub fn neighbors_at(&self, i: usize, d: usize) -> NeighborIter<'_> {
        let s = self.space.len();
        match (&self.by_distance, &self.level_start) {
            (Some(order), Some(starts)) if d <= self.max_dist => {
                let levels = self.max_dist + 2;
                let lo = starts[i * levels + d] as usize;
                let hi = starts[i * levels + d + 1] as usize;
                NeighborIter::Indexed(order[i * s + lo..i * s + hi].iter())
            }
            _ => NeighborIter::Exact {
                row: self.row(i),
                d: d as u8,
                pos: 0,
            },
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let s = self.len();
        (0..s).all(|i| self.dist(i, i) == 0 && (0..i).all(|j| self.dist(i, j) == self.dist(j, i)))
    }
}

pub enum NeighborIter<'a> {
    Indexed(std::slice::Iter<'a, u32>),
    Scan {
        row: &'a [u8],
        radius: usize,
        pos: usize,
    },
    Exact {
        row: &'a [u8],
        d: u8,
        pos: usize,
    },
}

impl Iterator for NeighborIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            NeighborIter::Indexed(it) => it.next().map(|&j| j as usize),
            NeighborIter::Scan { row, radius, pos } => {
                while *pos < row.len() {
                    let j = *pos;
                    *pos += 1;
                    let d = row[j] as usize;
                    if d >= 1 && d <= *radius {
                        return Some(j);
                    }
                }
                None
            }
            NeighborIter::Exact { row, d, pos } => {
                while *pos < row.len() {
                    let j = *pos;
                    *pos += 1;
                    if row[j] == *d {
                        return Some(j);
                    }
                }
                None
            }
        }
    }
}

/// Computes `out(s) = min_{s'} base(s') + hit(s') + d(s', s)`.
///
/// Requires `base` to be 1-Lipschitz with respect to the metric. Then a
/// state without a hit keeps its value and a hit state either keeps it (some
/// hit-free state reaches it at no extra cost) or goes up by exactly one.
pub fn relax_unit_hits(base: &[u32], hit: &[bool], metric: &StateMetric) -> Vec<u32> {
    let floor = base.iter().copied().min().unwrap_or(0);
    base.iter()
        .enumerate()
        .map(|(s, &v)| {
            if !hit[s] {
                return v;
            }
            let slack = (v - floor) as usize;
            let covered = metric
                .neighbors_within(s, slack)
                .any(|j| !hit[j] && base[j] + metric.dist(j, s) <= v);
            if covered {
                v
            } else {
                v + 1
            }
        })
        .collect()
}

/// One served request of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrajectoryStep {
    pub request_edge: Edge,
    #[serde(serialize_with = "ser_cuts")]
    pub before: CutEdgeSet,
    #[serde(serialize_with = "ser_cuts")]
    pub after: CutEdgeSet,
    pub hit: u32,
    pub recolor: u32,
    /// Phase index for algorithms that have phases; zero otherwise.
    pub phase: usize,
}

fn ser_cuts<S: serde::Serializer>(c: &CutEdgeSet, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(c.edges())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    #[serde(serialize_with = "ser_cuts")]
    pub initial: CutEdgeSet,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new(initial: CutEdgeSet) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn hit_cost(&self) -> u64 {
        self.steps.iter().map(|s| s.hit as u64).sum()
    }

    pub fn recolor_cost(&self) -> u64 {
        self.steps.iter().map(|s| s.recolor as u64).sum()
    }

    pub fn total_cost(&self) -> u64 {
        self.hit_cost() + self.recolor_cost()
    }

    pub fn final_state(&self) -> &CutEdgeSet {
        self.steps.last().map(|s| &s.after).unwrap_or(&self.initial)
    }

    /// Checks that the trajectory serves `requests` in order, chains states,
    /// charges hits in the pre-move state and never charges less than the
    /// edit distance of a move. With `exact_moves`, recolor costs must equal
    /// the edit distance.
    pub fn check_consistency(&self, requests: &[Edge], exact_moves: bool) -> Result<(), String> {
        if self.steps.len() != requests.len() {
            return Err(format!(
                "trajectory has {} steps for {} requests",
                self.steps.len(),
                requests.len()
            ));
        }
        let mut prev = &self.initial;
        for (t, (step, &e)) in self.steps.iter().zip(requests).enumerate() {
            if step.request_edge != e {
                return Err(format!(
                    "step {t}: request {} but sequence has {e}",
                    step.request_edge
                ));
            }
            if &step.before != prev {
                return Err(format!(
                    "step {t}: state {} does not chain from {prev}",
                    step.before
                ));
            }
            if step.hit != step.before.contains(e) as u32 {
                return Err(format!(
                    "step {t}: hit {} inconsistent with {}",
                    step.hit, step.before
                ));
            }
            let d = crate::ring::state_distance(&step.before, &step.after) as u32;
            if step.recolor < d || (exact_moves && step.recolor != d) {
                return Err(format!(
                    "step {t}: recolor {} vs distance {d}",
                    step.recolor
                ));
            }
            prev = &step.after;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub cost: u64,
    pub trajectory: Trajectory,
    /// `min_s W_t(s)` for `t = 0..=T`, where `W_t(s)` is the cheapest way to
    /// serve the first `t` requests and end in `s`.
    pub prefix_lower_bounds: Vec<u32>,
}

/// Optimal offline cost from `initial` over `space`, with one optimal
/// trajectory. Builds the distance matrix; use [`exact_opt_in`] to reuse one.
pub fn exact_opt(
    space: &StateSpace,
    initial: &CutEdgeSet,
    requests: &[Edge],
) -> Result<OptResult, OracleError> {
    let metric = StateMetric::new(space.clone());
    exact_opt_in(&metric, initial, requests)
}

pub fn exact_opt_in(
    metric: &StateMetric,
    initial: &CutEdgeSet,
    requests: &[Edge],
) -> Result<OptResult, OracleError> {
    let space = metric.space();
    let start = space
        .index_of(initial)
        .ok_or_else(|| OracleError::InitialNotInSpace(initial.to_string()))?;
    for &e in requests {
        space.check_request(e)?;
    }
    let s = space.len();
    let t_len = requests.len();

    // Backward pass: cost_after_hit[t][s] = cheapest completion once the
    // hit of request t (1-based) was paid in s, before moving.
    let mut cost_after_hit: Vec<Vec<u32>> = vec![Vec::new(); t_len + 1];
    cost_after_hit[t_len] = vec![0; s];
    for t in (2..=t_len).rev() {
        let hit = space.hit_vector(requests[t - 1]);
        cost_after_hit[t - 1] = relax_unit_hits(&cost_after_hit[t], &hit, metric);
    }

    // Forward pass with lexicographic tie-breaking on the successor.
    let mut trajectory = Trajectory::new(initial.clone());
    let mut cur = start;
    let mut paid = 0u64;
    for t in 1..=t_len {
        let e = requests[t - 1];
        let hit = space.hits(cur, e) as u32;
        let to_go = |j: usize| -> u32 {
            if t == t_len {
                0
            } else {
                space.hits(j, requests[t]) as u32 + cost_after_hit[t + 1][j]
            }
        };
        let (next, _) = (0..s)
            .map(|j| (j, metric.dist(cur, j) + to_go(j)))
            .min_by_key(|&(j, c)| (c, j))
            .expect("non-empty space");
        let recolor = metric.dist(cur, next);
        paid += (hit + recolor) as u64;
        trajectory.steps.push(TrajectoryStep {
            request_edge: e,
            before: space.state(cur).clone(),
            after: space.state(next).clone(),
            hit,
            recolor,
            phase: 0,
        });
        cur = next;
    }
    let cost = if t_len == 0 {
        0
    } else {
        space.hits(start, requests[0]) as u64 + cost_after_hit[1][start] as u64
    };
    debug_assert_eq!(cost, paid);

    // Forward work function, for the prefix lower bounds. The first request
    // is served in `start`, so W_1(s) = hit_1(start) + d(start, s).
    let mut prefix_lower_bounds = Vec::with_capacity(t_len + 1);
    prefix_lower_bounds.push(0);
    if let Some((&first, rest)) = requests.split_first() {
        let first_hit = space.hits(start, first) as u32;
        let mut work: Vec<u32> = (0..s).map(|j| first_hit + metric.dist(start, j)).collect();
        prefix_lower_bounds.push(first_hit);
        for &e in rest {
            work = relax_unit_hits(&work, &space.hit_vector(e), metric);
            prefix_lower_bounds.push(work.iter().copied().min().unwrap_or(0));
        }
    }
    debug_assert_eq!(
        prefix_lower_bounds.last().copied().unwrap_or(0) as u64,
        cost
    );

    Ok(OptResult {
        cost,
        trajectory,
        prefix_lower_bounds,
    })
}

/// All perfectly balanced states of an `n`-node ring.
pub fn balanced_space(n: RingSize) -> Result<StateSpace, OracleError> {
    enumerate_states(n, None, Alpha::one())
}

/// Optimal cost within the restricted class: global rebalancing of the
/// balanced `initial` state first (its cost is not counted), then the best
/// trajectory over `alpha`-balanced states with at most `2k` cut-edges.
pub fn restricted_opt(
    n: RingSize,
    k: usize,
    alpha: Alpha,
    initial: &CutEdgeSet,
    requests: &[Edge],
) -> Result<OptResult, OracleError> {
    let (start, _) = global_rebalance(initial, k)?;
    let space = enumerate_states(n, Some(2 * k), alpha)?;
    if space.is_empty() {
        return Err(OracleError::EmptySpace);
    }
    exact_opt(&space, &start, requests)
}

/// Single-node recolorings that turn `from` into `to`: the nodes of
/// `phi(from, to)`, arc by arc, each arc swept clockwise.
pub fn decompose_transition(from: &CutEdgeSet, to: &CutEdgeSet) -> Result<Vec<Node>, OracleError> {
    Ok(phi(from, to)?.sweep())
}
