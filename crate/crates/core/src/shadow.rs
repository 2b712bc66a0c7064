//! The offline shadow algorithm.
//!
//! It follows an optimal balanced trajectory one single-node recoloring at a
//! time while keeping its own cut-edges a subset of the optimum's, of size
//! `min(2k, |CE(opt)|)`. After every request it checks `alpha`-balance with
//! `alpha = 3/2 + 1/k` and, when violated, rebuilds itself by global
//! rebalancing of the optimum's current cut-edges. Rebalancings split the run
//! into phases.
//!
//! The distance `phi` between the two partitions serves as a potential. Every
//! bound the analysis relies on is checked while running and reported as a
//! [`Violation`]; a correct implementation reports none.

use serde::Serialize;
use thiserror::Error;

use crate::oracle::{decompose_transition, OracleError, Trajectory, TrajectoryStep};
use crate::rebalance::{global_rebalance, RebalanceError};
use crate::ring::{
    phi, state_distance, Alpha, Arc, CutEdgeSet, Edge, Node, PhiSet, RingError, StepKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShadowError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Rebalance(#[from] RebalanceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("optimal trajectory does not match the request sequence: {0}")]
    InconsistentOpt(String),
    #[error("shadow state violates the cut-edge invariants: {0}")]
    BrokenInvariant(String),
    #[error("potential set is empty but an arc was required")]
    EmptyPhi,
    #[error("k must be positive")]
    ZeroK,
}

/// Which response rule handled a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SubCase {
    /// Optimum shifted one of our cut-edges; we shift it too.
    ShiftFollowed,
    /// Optimum shifted a cut-edge we do not have.
    ShiftIgnored,
    /// Optimum added a pair and we have room for it.
    AddFollowed,
    /// Optimum added a pair but we already hold `2k` cut-edges.
    AddIgnored,
    /// Optimum removed two cut-edges we do not have.
    RemoveNeither,
    /// Optimum removed two cut-edges and both sets are equal.
    RemoveBothSynced,
    /// Optimum removed two of our cut-edges while it has extra ones: we
    /// remove them too and recolor one potential arc to pick up two more.
    RemoveBothRefill,
    /// Optimum removed a pair of which we have exactly one.
    RemoveOne,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    /// Global step counter (one per single-node recoloring of the optimum).
    pub step_index: usize,
    pub request_index: usize,
    pub node: Node,
    pub kind: StepKind,
    pub sub_case: SubCase,
    pub off_recolor_cost: u32,
    pub phi_before: usize,
    pub phi_after: usize,
    /// Both cut-edge sets right after the step.
    #[serde(skip)]
    pub off_after: CutEdgeSet,
    #[serde(skip)]
    pub opt_after: CutEdgeSet,
}

impl StepRecord {
    pub fn delta_phi(&self) -> i64 {
        self.phi_after as i64 - self.phi_before as i64
    }

    /// `MC(off) + delta phi <= MC(opt) = 1`.
    pub fn satisfies_step_bound(&self) -> bool {
        self.off_recolor_cost as i64 + self.delta_phi() <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub index: usize,
    pub first_request: usize,
    /// Last request served in this phase (None for an empty final phase).
    pub last_request: Option<usize>,
    /// Step recoloring cost, rebalancing excluded.
    pub mc_off: u64,
    /// Potential change over the phase, rebalancing excluded.
    pub delta_phi: i64,
    pub hit_off: u64,
    pub hit_opt: u64,
    pub mc_opt: u64,
    pub less_begin: usize,
    pub less_end: usize,
    /// Cost of the rebalancing that closed the phase, if any.
    pub rebalance_cost: Option<u64>,
    /// Potential change caused by that rebalancing.
    pub rebalance_delta_phi: i64,
}

impl PhaseRecord {
    /// `MC(off)(p) + delta_p phi >= n / (2k)`, meaningful for closed phases.
    pub fn satisfies_phase_bound(&self, n: usize, k: usize) -> bool {
        2 * k as i64 * (self.mc_off as i64 + self.delta_phi) >= n as i64
    }

    /// `OFF(p~) + delta_p~ phi <= (3k + 1) * OPT(p)`.
    pub fn satisfies_amortized_bound(&self, k: usize) -> bool {
        let off = (self.hit_off + self.mc_off + self.rebalance_cost.unwrap_or(0)) as i64;
        let dphi = self.delta_phi + self.rebalance_delta_phi;
        off + dphi <= (3 * k as i64 + 1) * (self.hit_opt + self.mc_opt) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CostLedger {
    pub hit: u64,
    pub recolor: u64,
    pub rebalance_recolor: u64,
}

impl CostLedger {
    pub fn total(&self) -> u64 {
        self.hit + self.recolor + self.rebalance_recolor
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowState {
    off_cuts: CutEdgeSet,
    opt_cuts: CutEdgeSet,
    k: usize,
    alpha: Alpha,
    phi_value: usize,
    phase_index: usize,
    steps_taken: usize,
    ledger: CostLedger,
}

impl ShadowState {
    /// Starts from the optimum's initial balanced state, performing the
    /// initial global rebalancing (its cost is booked on the ledger).
    pub fn new(initial_opt: &CutEdgeSet, k: usize) -> Result<Self, ShadowError> {
        if k == 0 {
            return Err(ShadowError::ZeroK);
        }
        let (off, _) = global_rebalance(initial_opt, k)?;
        let mut state = Self::from_parts(off, initial_opt.clone(), k)?;
        state.ledger.rebalance_recolor = state_distance(initial_opt, &state.off_cuts) as u64;
        Ok(state)
    }

    /// A state with explicit cut-edge sets; they must satisfy the cut-edge
    /// invariants.
    pub fn from_parts(off: CutEdgeSet, opt: CutEdgeSet, k: usize) -> Result<Self, ShadowError> {
        if k == 0 {
            return Err(ShadowError::ZeroK);
        }
        let phi_value = phi(&opt, &off)?.len();
        let state = Self {
            off_cuts: off,
            opt_cuts: opt,
            k,
            alpha: Alpha::shadow_default(k),
            phi_value,
            phase_index: 0,
            steps_taken: 0,
            ledger: CostLedger::default(),
        };
        state
            .check_cut_invariants()
            .map_err(ShadowError::BrokenInvariant)?;
        Ok(state)
    }

    pub fn off_cuts(&self) -> &CutEdgeSet {
        &self.off_cuts
    }

    pub fn opt_cuts(&self) -> &CutEdgeSet {
        &self.opt_cuts
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn phi_value(&self) -> usize {
        self.phi_value
    }

    pub fn phase_index(&self) -> usize {
        self.phase_index
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger
    }

    pub fn potential_set(&self) -> PhiSet {
        phi(&self.opt_cuts, &self.off_cuts).expect("same ring")
    }

    /// `CE(off) ⊆ CE(opt)` and `|CE(off)| = min(2k, |CE(opt)|)`.
    pub fn check_cut_invariants(&self) -> Result<(), String> {
        if !self.off_cuts.is_subset(&self.opt_cuts) {
            return Err(format!(
                "{} is not a subset of {}",
                self.off_cuts, self.opt_cuts
            ));
        }
        let want = self.opt_cuts.len().min(2 * self.k);
        if self.off_cuts.len() != want {
            return Err(format!(
                "|{}| = {} but min(2k, |{}|) = {want}",
                self.off_cuts,
                self.off_cuts.len(),
                self.opt_cuts
            ));
        }
        Ok(())
    }

    /// `less(CE(off)) + phi >= n/2`, valid whenever the optimum is balanced.
    pub fn potential_lower_bound_holds(&self) -> bool {
        self.off_cuts.less_count() + self.phi_value >= self.off_cuts.ring().half()
    }

    pub fn is_balanced(&self) -> bool {
        self.off_cuts.is_alpha_balanced(self.alpha)
    }

    /// Mirror one recoloring of node `w` by the optimum.
    pub fn apply_step(&mut self, w: Node, request_index: usize) -> Result<StepRecord, ShadowError> {
        let before_phi = self.potential_set();
        let (next_opt, kind) = self.opt_cuts.flip_node(w);
        let off = &self.off_cuts;
        let (next_off, cost, sub_case) = match kind {
            StepKind::Shift { removed, .. } => {
                if off.contains(removed) {
                    (off.flip_node(w).0, 1, SubCase::ShiftFollowed)
                } else {
                    (off.clone(), 0, SubCase::ShiftIgnored)
                }
            }
            StepKind::AddPair(..) => {
                if off.len() + 2 <= 2 * self.k {
                    (off.flip_node(w).0, 1, SubCase::AddFollowed)
                } else {
                    (off.clone(), 0, SubCase::AddIgnored)
                }
            }
            StepKind::RemovePair(a, b) => match (off.contains(a), off.contains(b)) {
                (false, false) => (off.clone(), 0, SubCase::RemoveNeither),
                (true, true) if off == &self.opt_cuts => {
                    (off.flip_node(w).0, 1, SubCase::RemoveBothSynced)
                }
                (true, true) => {
                    let arc = arc_choice(&before_phi, None)?;
                    let mut nodes = vec![w];
                    nodes.extend_from_slice(&arc.nodes);
                    let cost = nodes.len() as u32;
                    (off.recolor_nodes(&nodes), cost, SubCase::RemoveBothRefill)
                }
                (a_in, _) => {
                    let (missing, _present) = if a_in { (b, a) } else { (a, b) };
                    let arc = arc_choice(&before_phi, Some(missing))?;
                    // recolor A(present, far end) = arc ⊕ {w}
                    let nodes: Vec<Node> = if arc.contains(w) {
                        arc.nodes.iter().copied().filter(|&v| v != w).collect()
                    } else {
                        let mut v = arc.nodes.clone();
                        v.push(w);
                        v
                    };
                    let cost = nodes.len() as u32;
                    (off.recolor_nodes(&nodes), cost, SubCase::RemoveOne)
                }
            },
        };
        self.opt_cuts = next_opt;
        self.off_cuts = next_off;
        let phi_before = self.phi_value;
        self.phi_value = self.potential_set().len();
        self.ledger.recolor += cost as u64;
        let record = StepRecord {
            step_index: self.steps_taken,
            request_index,
            node: w,
            kind,
            sub_case,
            off_recolor_cost: cost,
            phi_before,
            phi_after: self.phi_value,
            off_after: self.off_cuts.clone(),
            opt_after: self.opt_cuts.clone(),
        };
        self.steps_taken += 1;
        Ok(record)
    }

    /// Replace our cut-edges by the global rebalancing of the optimum's.
    /// Returns the recoloring cost paid.
    pub fn rebalance(&mut self) -> Result<u64, ShadowError> {
        let (fresh, _) = global_rebalance(&self.opt_cuts, self.k)?;
        let cost = state_distance(&self.off_cuts, &fresh) as u64;
        self.off_cuts = fresh;
        self.phi_value = self.potential_set().len();
        self.ledger.rebalance_recolor += cost;
        self.phase_index += 1;
        Ok(cost)
    }
}

/// Constituent arc of a potential set: the smallest one (lowest start edge
/// on ties), or the unique one with `anchor` as an endpoint.
pub fn arc_choice(phi: &PhiSet, anchor: Option<Edge>) -> Result<&Arc, ShadowError> {
    match anchor {
        None => phi
            .arcs
            .iter()
            .min_by_key(|a| (a.len(), a.start_edge))
            .ok_or(ShadowError::EmptyPhi),
        Some(e) => phi
            .arcs
            .iter()
            .find(|a| a.has_endpoint(e))
            .ok_or(ShadowError::Ring(RingError::NoArcWithEndpoint(e))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    CutInvariant,
    StepBound,
    PotentialLowerBound,
    PhaseBound,
    PhaseAmortized,
    HitDominance,
    TotalBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub request_index: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct OffRun {
    pub trajectory: Trajectory,
    pub steps: Vec<StepRecord>,
    pub phases: Vec<PhaseRecord>,
    pub initial_rebalance_cost: u64,
    pub ledger: CostLedger,
    pub opt_cost: u64,
    pub k: usize,
    pub violations: Vec<Violation>,
}

impl OffRun {
    /// Total cost including the initial rebalancing.
    pub fn total_cost(&self) -> u64 {
        self.ledger.total()
    }

    /// `OFF(sigma) <= (3k + 1) OPT(sigma) + (3/2) n`.
    pub fn satisfies_total_bound(&self, n: usize) -> bool {
        2 * self.total_cost() <= 2 * (3 * self.k as u64 + 1) * self.opt_cost + 3 * n as u64
    }

    pub fn completed_phases(&self) -> impl Iterator<Item = &PhaseRecord> {
        self.phases.iter().filter(|p| p.rebalance_cost.is_some())
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

struct PhaseTracker {
    record: PhaseRecord,
    phi_start: usize,
}

impl PhaseTracker {
    fn open(index: usize, first_request: usize, state: &ShadowState) -> Self {
        Self {
            record: PhaseRecord {
                index,
                first_request,
                last_request: None,
                mc_off: 0,
                delta_phi: 0,
                hit_off: 0,
                hit_opt: 0,
                mc_opt: 0,
                less_begin: state.off_cuts().less_count(),
                less_end: state.off_cuts().less_count(),
                rebalance_cost: None,
                rebalance_delta_phi: 0,
            },
            phi_start: state.phi_value(),
        }
    }
}

/// Run the shadow algorithm against an optimal trajectory for `requests`.
pub fn run_off(k: usize, requests: &[Edge], opt: &Trajectory) -> Result<OffRun, ShadowError> {
    opt.check_consistency(requests, false)
        .map_err(ShadowError::InconsistentOpt)?;
    let n = opt.initial.ring();
    let half = n.half();
    for (t, s) in std::iter::once(&opt.initial)
        .chain(opt.steps.iter().map(|s| &s.after))
        .enumerate()
    {
        if s.less_count() != half {
            return Err(ShadowError::InconsistentOpt(format!(
                "optimum state {s} at boundary {t} is not perfectly balanced"
            )));
        }
    }

    let mut state = ShadowState::new(&opt.initial, k)?;
    let initial_rebalance_cost = state.ledger().rebalance_recolor;
    let mut violations = Vec::new();
    let mut push = |kind, request_index, detail: String| {
        violations.push(Violation {
            kind,
            request_index,
            detail,
        })
    };
    if let Err(e) = state.check_cut_invariants() {
        push(ViolationKind::CutInvariant, None, e);
    }
    if !state.potential_lower_bound_holds() {
        push(
            ViolationKind::PotentialLowerBound,
            None,
            "after initial rebalancing".into(),
        );
    }

    let mut trajectory = Trajectory::new(state.off_cuts().clone());
    let mut steps = Vec::new();
    let mut phases = Vec::new();
    let mut tracker = PhaseTracker::open(0, 0, &state);

    for (t, (&e, opt_step)) in requests.iter().zip(&opt.steps).enumerate() {
        let off_before = state.off_cuts().clone();
        let hit_off = off_before.contains(e);
        let hit_opt = opt_step.before.contains(e);
        if hit_off && !hit_opt {
            push(
                ViolationKind::HitDominance,
                Some(t),
                format!(
                    "edge {e} cut in {off_before} but not in {}",
                    opt_step.before
                ),
            );
        }
        tracker.record.hit_off += hit_off as u64;
        tracker.record.hit_opt += hit_opt as u64;
        tracker.record.last_request = Some(t);
        let phase_of_request = state.phase_index();

        let mut step_cost = 0u64;
        for w in decompose_transition(&opt_step.before, &opt_step.after)? {
            let rec = state.apply_step(w, t)?;
            if !rec.satisfies_step_bound() {
                push(
                    ViolationKind::StepBound,
                    Some(t),
                    format!(
                        "step {} ({:?}): cost {} + dphi {} > 1",
                        rec.step_index,
                        rec.sub_case,
                        rec.off_recolor_cost,
                        rec.delta_phi()
                    ),
                );
            }
            if let Err(e) = state.check_cut_invariants() {
                push(ViolationKind::CutInvariant, Some(t), e);
            }
            step_cost += rec.off_recolor_cost as u64;
            tracker.record.mc_opt += 1;
            steps.push(rec);
        }
        tracker.record.mc_off += step_cost;
        if state.opt_cuts() != &opt_step.after {
            return Err(ShadowError::InconsistentOpt(format!(
                "replayed optimum {} differs from {}",
                state.opt_cuts(),
                opt_step.after
            )));
        }
        if !state.potential_lower_bound_holds() {
            push(
                ViolationKind::PotentialLowerBound,
                Some(t),
                format!(
                    "less {} + phi {} < n/2",
                    state.off_cuts().less_count(),
                    state.phi_value()
                ),
            );
        }

        let mut rebalance_cost = 0u64;
        if !state.is_balanced() {
            let phi_before = state.phi_value();
            tracker.record.delta_phi = phi_before as i64 - tracker.phi_start as i64;
            tracker.record.less_end = state.off_cuts().less_count();
            rebalance_cost = state.rebalance()?;
            tracker.record.rebalance_cost = Some(rebalance_cost);
            tracker.record.rebalance_delta_phi = state.phi_value() as i64 - phi_before as i64;
            if !tracker.record.satisfies_phase_bound(n.get(), k) {
                push(
                    ViolationKind::PhaseBound,
                    Some(t),
                    format!(
                        "phase {}: mc {} + dphi {} < n/(2k)",
                        tracker.record.index, tracker.record.mc_off, tracker.record.delta_phi
                    ),
                );
            }
            if !tracker.record.satisfies_amortized_bound(k) {
                push(
                    ViolationKind::PhaseAmortized,
                    Some(t),
                    format!("phase {} exceeds (3k+1) OPT(p)", tracker.record.index),
                );
            }
            if let Err(e) = state.check_cut_invariants() {
                push(ViolationKind::CutInvariant, Some(t), e);
            }
            if !state.potential_lower_bound_holds() {
                push(
                    ViolationKind::PotentialLowerBound,
                    Some(t),
                    "after rebalancing".into(),
                );
            }
            let closed = std::mem::replace(
                &mut tracker,
                PhaseTracker::open(state.phase_index(), t + 1, &state),
            );
            phases.push(closed.record);
        }

        trajectory.steps.push(TrajectoryStep {
            request_edge: e,
            before: off_before,
            after: state.off_cuts().clone(),
            hit: hit_off as u32,
            recolor: (step_cost + rebalance_cost) as u32,
            phase: phase_of_request,
        });
        state.ledger.hit += hit_off as u64;
    }

    // final, possibly empty, phase without a rebalancing
    tracker.record.delta_phi = state.phi_value() as i64 - tracker.phi_start as i64;
    tracker.record.less_end = state.off_cuts().less_count();
    if !tracker.record.satisfies_amortized_bound(k) {
        push(
            ViolationKind::PhaseAmortized,
            None,
            format!("final phase {} exceeds (3k+1) OPT(p)", tracker.record.index),
        );
    }
    phases.push(tracker.record);

    let mut run = OffRun {
        trajectory,
        steps,
        phases,
        initial_rebalance_cost,
        ledger: state.ledger(),
        opt_cost: opt.total_cost(),
        k,
        violations,
    };
    if !run.satisfies_total_bound(n.get()) {
        run.violations.push(Violation {
            kind: ViolationKind::TotalBound,
            request_index: None,
            detail: format!(
                "OFF {} > (3k+1) * OPT {} + 3n/2",
                run.total_cost(),
                run.opt_cost
            ),
        });
    }
    Ok(run)
}
