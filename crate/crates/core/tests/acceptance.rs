//! Acceptance gate. Every criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.
//!
//! Expected values come from oracles written here from scratch (colorings
//! recomputed from cut-edges, brute-force distances, plain enumeration of
//! state sequences) rather than from the library under test.

use std::collections::HashMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ring_bisection::harness::{
    generate, initial_state, restricted_metric, unbalancing_reference, GeneratorSpec, InitSpec,
};
use ring_bisection::online::{
    default_eta, run_online, MtsInstance, MultiplicativeWeights, WorkFunctionSolver,
};
use ring_bisection::oracle::{balanced_space, exact_opt, exact_opt_in, StateMetric, Trajectory};
use ring_bisection::rebalance::global_rebalance;
use ring_bisection::shadow::{run_off, OffRun};
use ring_bisection::{phi, state_distance, Alpha, CutEdgeSet, Edge, RingSize};

// ---------------------------------------------------------------------------
// independent oracles

/// Node colors (false = node 0's color) implied by a cut-edge list.
fn colors(n: usize, edges: &[Edge]) -> Vec<bool> {
    let mut out = vec![false; n];
    for i in 1..n {
        out[i] = out[i - 1] ^ edges.contains(&(i - 1));
    }
    out
}

fn majority(n: usize, edges: &[Edge]) -> usize {
    let first = colors(n, edges).iter().filter(|&&c| !c).count();
    first.max(n - first)
}

fn less(n: usize, edges: &[Edge]) -> usize {
    n - majority(n, edges)
}

fn dist(n: usize, a: &[Edge], b: &[Edge]) -> usize {
    let differ = colors(n, a)
        .iter()
        .zip(colors(n, b))
        .filter(|(x, y)| **x != *y)
        .count();
    differ.min(n - differ)
}

fn edges_of(mask: u64, n: usize) -> Vec<Edge> {
    (0..n).filter(|&e| mask >> e & 1 == 1).collect()
}

/// All valid cut-edge sets: even-size subsets of the edges.
fn valid_sets(n: usize) -> Vec<Vec<Edge>> {
    (0u64..1 << n)
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|m| edges_of(m, n))
        .collect()
}

fn cuts(n: usize, e: &[Edge]) -> CutEdgeSet {
    CutEdgeSet::new(RingSize::new(n).unwrap(), e.iter().copied()).unwrap()
}

fn random_balanced(n: usize, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let mut c: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    c.shuffle(rng);
    (0..n).filter(|&e| c[e] != c[(e + 1) % n]).collect()
}

/// Balanced set with a uniformly drawn number of cut-edges (rejection).
fn random_balanced_dense(n: usize, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let m = 2 * rng.gen_range(1..=n / 2);
    let all: Vec<Edge> = (0..n).collect();
    for _ in 0..200 {
        let mut pick: Vec<Edge> = all.choose_multiple(rng, m).copied().collect();
        pick.sort_unstable();
        if less(n, &pick) == n / 2 {
            return pick;
        }
    }
    random_balanced(n, rng)
}

/// Cheapest way to serve `req` from `start` over `states`, enumerating every
/// state sequence.
fn exhaustive(n: usize, states: &[Vec<Edge>], start: usize, req: &[Edge]) -> u64 {
    let Some((&e, rest)) = req.split_first() else {
        return 0;
    };
    let hit = states[start].contains(&e) as u64;
    (0..states.len())
        .map(|next| {
            hit + dist(n, &states[start], &states[next]) as u64 + exhaustive(n, states, next, rest)
        })
        .min()
        .unwrap()
}

/// Cost of a trajectory recomputed from its states; also checks that every
/// recorded recoloring covers the real distance.
fn own_cost(n: usize, t: &Trajectory) -> Result<u64, String> {
    let mut total = 0u64;
    for (i, s) in t.steps.iter().enumerate() {
        let d = dist(n, s.before.edges(), s.after.edges()) as u32;
        if s.recolor < d {
            return Err(format!(
                "step {i}: recolor {} below distance {d}",
                s.recolor
            ));
        }
        if s.hit != s.before.contains(s.request_edge) as u32 {
            return Err(format!("step {i}: wrong hit"));
        }
        total += (s.hit + s.recolor) as u64;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// reporting

struct Outcome {
    id: usize,
    title: &'static str,
    failures: Vec<String>,
    note: String,
    elapsed: Duration,
    budget: Option<Duration>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.failures.is_empty() && self.budget.is_none_or(|b| self.elapsed <= b)
    }

    fn print(&self) {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let budget = self
            .budget
            .map(|b| format!(" / {}s", b.as_secs()))
            .unwrap_or_default();
        println!(
            "{status} criterion {}: {} ({:.2}s{budget}){}{}",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            if self.note.is_empty() { "" } else { "; " },
            self.note
        );
        for f in self.failures.iter().take(5) {
            println!("    {f}");
        }
        if self.failures.len() > 5 {
            println!("    ... {} more", self.failures.len() - 5);
        }
        if let Some(b) = self.budget.filter(|&b| self.elapsed > b) {
            println!(
                "    runtime {:.2}s exceeds {}s",
                self.elapsed.as_secs_f64(),
                b.as_secs()
            );
        }
    }
}

fn timed(
    id: usize,
    title: &'static str,
    budget: Option<u64>,
    f: impl FnOnce() -> (Vec<String>, String),
) -> Outcome {
    let start = Instant::now();
    let (failures, note) = f();
    Outcome {
        id,
        title,
        failures,
        note,
        elapsed: start.elapsed(),
        budget: budget.map(Duration::from_secs),
    }
}

// ---------------------------------------------------------------------------
// criteria 1-4: exhaustive and randomized unit properties

fn rebalance_postconditions() -> (Vec<String>, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fails = Vec::new();
    let mut cases = 0;
    for n in (4..=32).step_by(2) {
        for k in 1..=6 {
            for i in 0..1000 {
                let input = if i % 2 == 0 {
                    random_balanced(n, &mut rng)
                } else {
                    random_balanced_dense(n, &mut rng)
                };
                cases += 1;
                let (out, trace) = global_rebalance(&cuts(n, &input), k).unwrap();
                let out_e = out.edges();
                let mut why = Vec::new();
                if !out_e.iter().all(|e| input.contains(e)) {
                    why.push("not a subset".to_string());
                }
                if out_e.len() != input.len().min(2 * k) {
                    why.push(format!("size {}", out_e.len()));
                }
                // less >= n/2 - n/(2k)  <=>  2k less + n >= k n
                if 2 * k * less(n, out_e) + n < k * n {
                    why.push(format!("less {}", less(n, out_e)));
                }
                let mut cur = input.clone();
                for s in &trace.steps {
                    cur.retain(|&e| e != s.removed_pair.0 && e != s.removed_pair.1);
                    let j = cur.len() / 2;
                    let l = less(n, &cur);
                    if l != s.less_after || (j > 0 && 2 * j * l + n < j * n) {
                        why.push(format!("stage with {} cut-edges has less {l}", cur.len()));
                    }
                }
                if cur != out_e {
                    why.push("trace does not replay to the output".into());
                }
                if !why.is_empty() {
                    fails.push(format!("n={n} k={k} input {input:?}: {}", why.join(", ")));
                }
            }
        }
    }
    (fails, format!("{cases} cases"))
}

fn phi_matches_brute_force() -> (Vec<String>, String) {
    let mut fails = Vec::new();
    let mut pairs = 0usize;
    let mut check = |n: usize, a: &[Edge], b: &[Edge], fails: &mut Vec<String>| {
        pairs += 1;
        let p = phi(&cuts(n, a), &cuts(n, b)).unwrap();
        let want = dist(n, a, b);
        // recoloring the potential set must turn one coloring into the other
        let mut ca = colors(n, a);
        for &w in &p.nodes {
            ca[w] = !ca[w];
        }
        let cb = colors(n, b);
        let same = ca == cb || ca.iter().zip(&cb).all(|(x, y)| x != y);
        if p.len() != want || !same {
            fails.push(format!(
                "n={n} a={a:?} b={b:?}: |phi| = {} want {want}",
                p.len()
            ));
        }
    };
    for n in [4, 6, 8] {
        let sets = valid_sets(n);
        for a in &sets {
            for b in &sets {
                check(n, a, b, &mut fails);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [10, 12] {
        let sets = valid_sets(n);
        for _ in 0..10_000 {
            let a = sets.choose(&mut rng).unwrap();
            let b = sets.choose(&mut rng).unwrap();
            check(n, a, b, &mut fails);
        }
    }
    (fails, format!("{pairs} pairs"))
}

fn metric_axioms() -> (Vec<String>, String) {
    let mut fails = Vec::new();
    let mut triples = 0usize;
    for n in [4, 6, 8] {
        let sets: Vec<CutEdgeSet> = valid_sets(n).iter().map(|e| cuts(n, e)).collect();
        let m = sets.len();
        let d: Vec<usize> = (0..m * m)
            .map(|ij| state_distance(&sets[ij / m], &sets[ij % m]))
            .collect();
        for i in 0..m {
            if d[i * m + i] != 0 {
                fails.push(format!("n={n}: d({0},{0}) != 0", sets[i]));
            }
            for j in 0..m {
                if d[i * m + j] != d[j * m + i] {
                    fails.push(format!("n={n}: asymmetric at {} {}", sets[i], sets[j]));
                }
                if d[i * m + j] != dist(n, sets[i].edges(), sets[j].edges()) {
                    fails.push(format!("n={n}: wrong distance {} {}", sets[i], sets[j]));
                }
                for l in 0..m {
                    triples += 1;
                    if d[i * m + l] > d[i * m + j] + d[j * m + l] {
                        fails.push(format!(
                            "n={n}: triangle {} {} {}",
                            sets[i], sets[j], sets[l]
                        ));
                    }
                }
            }
        }
    }
    (fails, format!("{triples} triples"))
}

fn oracle_equivalence() -> (Vec<String>, String) {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut states: HashMap<usize, Vec<Vec<Edge>>> = HashMap::new();
    let mut spaces = HashMap::new();
    for n in [4, 6] {
        // label-free: a set and its complement coloring share cut-edges, so
        // each balanced partition appears once
        let s: Vec<Vec<Edge>> = valid_sets(n)
            .into_iter()
            .filter(|e| less(n, e) == n / 2)
            .collect();
        states.insert(n, s);
        spaces.insert(n, balanced_space(RingSize::new(n).unwrap()).unwrap());
    }
    for n in [4, 6] {
        if spaces[&n].len() != states[&n].len() {
            fails.push(format!(
                "n={n}: {} states enumerated, expected {}",
                spaces[&n].len(),
                states[&n].len()
            ));
        }
    }

    // worked value: n = 4, five requests for e1 from {1,3}
    let space4 = &spaces[&4];
    let s4 = &states[&4];
    let start = s4.iter().position(|e| e == &vec![1, 3]).unwrap();
    let brute = exhaustive(4, s4, start, &[1; 5]);
    let dp = exact_opt(space4, &cuts(4, &[1, 3]), &[1; 5]).unwrap().cost;
    if brute != 3 || dp != 3 {
        fails.push(format!(
            "n=4 e1 x5: exhaustive {brute}, dp {dp}, expected 3"
        ));
    }

    for case in 0..200 {
        let n = if case % 2 == 0 { 4 } else { 6 };
        let s = &states[&n];
        let start = rng.gen_range(0..s.len());
        let len = rng.gen_range(1..=4);
        let req: Vec<Edge> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let brute = exhaustive(n, s, start, &req);
        let r = exact_opt(&spaces[&n], &cuts(n, &s[start]), &req).unwrap();
        let replay = own_cost(n, &r.trajectory);
        if r.cost != brute || replay != Ok(brute) {
            fails.push(format!(
                "n={n} start {:?} requests {req:?}: dp {}, trajectory {replay:?}, exhaustive {brute}",
                s[start], r.cost
            ));
        }
    }
    (fails, "200 sequences + worked value".into())
}

// ---------------------------------------------------------------------------
// criteria 5-8: regression corpus

const CORPUS_SIZES: [usize; 3] = [8, 10, 12];
const CORPUS_KS: [usize; 3] = [1, 2, 3];
const CORPUS_LEN: usize = 200;
const CORPUS_SEEDS: u64 = 20;

#[derive(Default)]
struct CaseReport {
    label: String,
    step: Vec<String>,
    structural: Vec<String>,
    total: Vec<String>,
    online: Vec<String>,
    steps_checked: usize,
    phases_closed: usize,
    off_over_opt: Option<f64>,
    wfa_over_off: Option<f64>,
    mw_over_off: Option<f64>,
}

fn alpha_admits(alpha: Alpha, n: usize, maj: usize) -> bool {
    let r = alpha.ratio();
    2 * maj as i64 * r.denom() <= r.numer() * n as i64
}

fn check_off(
    n: usize,
    k: usize,
    requests: &[Edge],
    opt: &Trajectory,
    off: &OffRun,
    rep: &mut CaseReport,
) {
    let traj = &off.trajectory;
    let shadow_alpha = Alpha::shadow_default(k);
    let subset_ok = |o: &CutEdgeSet, p: &CutEdgeSet| {
        o.edges().iter().all(|e| p.edges().contains(e)) && o.len() == p.len().min(2 * k)
    };
    if traj.steps.len() != requests.len() {
        rep.structural.push("trajectory length mismatch".into());
        return;
    }
    if !subset_ok(&traj.initial, &opt.initial) {
        rep.structural
            .push(format!("initial {} vs {}", traj.initial, opt.initial));
    }

    let mut records = off.steps.iter().peekable();
    let mut phase_start_phi = dist(n, opt.initial.edges(), traj.initial.edges()) as i64;
    let mut phase_mc = 0i64;
    let (mut hc_off, mut hc_opt) = (0u64, 0u64);
    for (t, (s, o)) in traj.steps.iter().zip(&opt.steps).enumerate() {
        hc_off += s.before.contains(requests[t]) as u64;
        hc_opt += o.before.contains(requests[t]) as u64;
        let mut cur_off = s.before.clone();
        let mut cur_opt = o.before.clone();
        let mut cur_phi = dist(n, cur_opt.edges(), cur_off.edges()) as i64;
        let mut charged = 0u64;
        while let Some(r) = records.next_if(|r| r.request_index == t) {
            rep.steps_checked += 1;
            let after_phi = dist(n, r.opt_after.edges(), r.off_after.edges()) as i64;
            if r.phi_before as i64 != cur_phi || r.phi_after as i64 != after_phi {
                rep.step
                    .push(format!("t={t}: recorded potential differs from recomputed"));
            }
            if dist(n, cur_opt.edges(), r.opt_after.edges()) != 1 {
                rep.step
                    .push(format!("t={t}: optimum step is not a single recoloring"));
            }
            if (r.off_recolor_cost as usize) < dist(n, cur_off.edges(), r.off_after.edges()) {
                rep.step
                    .push(format!("t={t}: charged recoloring below actual distance"));
            }
            if r.off_recolor_cost as i64 + after_phi - cur_phi > 1 {
                rep.step.push(format!(
                    "t={t} step {}: cost {} + dphi {} > 1",
                    r.step_index,
                    r.off_recolor_cost,
                    after_phi - cur_phi
                ));
            }
            if !subset_ok(&r.off_after, &r.opt_after) {
                rep.structural
                    .push(format!("t={t}: {} vs {}", r.off_after, r.opt_after));
            }
            charged += r.off_recolor_cost as u64;
            cur_off = r.off_after.clone();
            cur_opt = r.opt_after.clone();
            cur_phi = after_phi;
        }
        if cur_opt != o.after {
            rep.structural
                .push(format!("t={t}: steps do not reach the optimum's state"));
        }
        // request boundary, before any rebalancing
        if less(n, cur_off.edges()) as i64 + cur_phi < (n / 2) as i64 {
            rep.structural
                .push(format!("t={t}: less + phi below n/2 before rebalancing"));
        }
        phase_mc += charged as i64;
        let unbalanced = !alpha_admits(shadow_alpha, n, majority(n, cur_off.edges()));
        if unbalanced {
            // closed phase: MC + dphi >= n/(2k)
            if 2 * k as i64 * (phase_mc + cur_phi - phase_start_phi) < n as i64 {
                rep.structural.push(format!(
                    "t={t}: phase with mc {phase_mc} and dphi {} below n/(2k)",
                    cur_phi - phase_start_phi
                ));
            }
            rep.phases_closed += 1;
            let rebalance = dist(n, cur_off.edges(), s.after.edges()) as u64;
            if s.recolor as u64 != charged + rebalance {
                rep.structural
                    .push(format!("t={t}: rebalancing not charged at its distance"));
            }
            if !alpha_admits(Alpha::rebalanced(k), n, majority(n, s.after.edges())) {
                rep.structural.push(format!(
                    "t={t}: rebalanced state {} not (1+1/k)-balanced",
                    s.after
                ));
            }
            phase_mc = 0;
            phase_start_phi = dist(n, o.after.edges(), s.after.edges()) as i64;
        } else if s.after != cur_off || s.recolor as u64 != charged {
            rep.structural
                .push(format!("t={t}: state changed without a rebalancing"));
        }
        if !subset_ok(&s.after, &o.after) {
            rep.structural
                .push(format!("t={t}: {} vs {} after request", s.after, o.after));
        }
        let boundary_phi = dist(n, o.after.edges(), s.after.edges());
        if less(n, s.after.edges()) + boundary_phi < n / 2 {
            rep.structural.push(format!("t={t}: less + phi below n/2"));
        }
        if 2 * boundary_phi > n {
            rep.structural.push(format!("t={t}: phi above n/2"));
        }
    }
    if records.next().is_some() {
        rep.step.push("step records beyond the last request".into());
    }
    if hc_off > hc_opt {
        rep.structural
            .push(format!("hit cost {hc_off} above the optimum's {hc_opt}"));
    }

    // whole-run bound, initial rebalancing included
    match (own_cost(n, traj), own_cost(n, opt)) {
        (Ok(served), Ok(opt_cost)) => {
            let initial = dist(n, opt.initial.edges(), traj.initial.edges()) as u64;
            let total = served + initial;
            if total != off.total_cost() {
                rep.total.push(format!(
                    "recomputed total {total} differs from reported {}",
                    off.total_cost()
                ));
            }
            if 2 * total > 2 * (3 * k as u64 + 1) * opt_cost + 3 * n as u64 {
                rep.total
                    .push(format!("OFF {total} > (3k+1) * {opt_cost} + 3n/2"));
            }
            if opt_cost > 0 {
                rep.off_over_opt = Some(total as f64 / opt_cost as f64);
            }
        }
        (a, b) => rep.total.push(format!("cost replay failed: {a:?} {b:?}")),
    }
}

fn check_online(
    n: usize,
    k: usize,
    seed: u64,
    inst: &MtsInstance<'_>,
    requests: &[Edge],
    off_total: u64,
    rep: &mut CaseReport,
) {
    let metric = inst.metric();
    let alpha = metric.space().alpha();
    let x0 = metric.space().state(inst.start()).clone();
    let ropt = exact_opt_in(metric, &x0, requests).unwrap().cost;
    let in_class = |c: &CutEdgeSet| {
        c.len().is_multiple_of(2)
            && c.len() <= 2 * k
            && alpha_admits(alpha, n, majority(n, c.edges()))
    };
    let eta = default_eta(Some(requests.len()));
    let wfa = run_online(&mut WorkFunctionSolver::new(), inst, requests).unwrap();
    let wfa2 = run_online(&mut WorkFunctionSolver::new(), inst, requests).unwrap();
    let mut mw = MultiplicativeWeights::new(eta, seed).unwrap();
    let mwr = run_online(&mut mw, inst, requests).unwrap();
    let mwr2 = run_online(
        &mut MultiplicativeWeights::new(eta, seed).unwrap(),
        inst,
        requests,
    )
    .unwrap();

    for run in [&wfa, &mwr] {
        let name = run.algorithm;
        let t = &run.trajectory;
        if !std::iter::once(&t.initial)
            .chain(t.steps.iter().map(|s| &s.after))
            .all(in_class)
        {
            rep.online
                .push(format!("{name}: left the restricted class"));
        }
        match own_cost(n, t) {
            Ok(c) if c >= ropt => {}
            other => rep.online.push(format!(
                "{name}: cost {other:?} vs restricted optimum {ropt}"
            )),
        }
    }
    if mw.max_normalization_error() > 1e-9 || !mw.stayed_nonnegative() {
        rep.online.push(format!(
            "mw normalization error {:e}",
            mw.max_normalization_error()
        ));
    }
    if mwr.expected_cost.unwrap() < ropt as f64 - 1e-9 {
        rep.online.push(format!(
            "mw expected cost {} below {ropt}",
            mwr.expected_cost.unwrap()
        ));
    }
    if wfa.trajectory.steps != wfa2.trajectory.steps
        || mwr.trajectory.steps != mwr2.trajectory.steps
        || mwr.expected_cost.map(f64::to_bits) != mwr2.expected_cost.map(f64::to_bits)
    {
        rep.online.push("fixed-seed rerun differs".into());
    }
    if off_total > 0 {
        rep.wfa_over_off = Some(wfa.trajectory.total_cost() as f64 / off_total as f64);
        rep.mw_over_off = Some(mwr.trajectory.total_cost() as f64 / off_total as f64);
    }
}

fn run_case(
    n: usize,
    k: usize,
    gen: GeneratorSpec,
    seed: u64,
    balanced: &StateMetric,
    restricted: &StateMetric,
) -> CaseReport {
    let ring = RingSize::new(n).unwrap();
    let mut rep = CaseReport {
        label: format!("n={n} k={k} gen={gen} seed={seed}"),
        ..Default::default()
    };
    let init = initial_state(InitSpec::Random, ring, seed);
    let inst = MtsInstance::new(restricted, &init, k).unwrap();
    let requests = generate(gen, ring, CORPUS_LEN, seed, Some(&inst)).unwrap();
    let opt = exact_opt_in(balanced, &init, &requests).unwrap();
    let off = run_off(k, &requests, &opt.trajectory).unwrap();
    check_off(n, k, &requests, &opt.trajectory, &off, &mut rep);
    check_online(n, k, seed, &inst, &requests, off.total_cost(), &mut rep);
    rep
}

fn corpus() -> (Vec<CaseReport>, Duration) {
    let start = Instant::now();
    let mut balanced = HashMap::new();
    let mut restricted = HashMap::new();
    for n in CORPUS_SIZES {
        let ring = RingSize::new(n).unwrap();
        balanced.insert(n, StateMetric::new(balanced_space(ring).unwrap()));
        for k in CORPUS_KS {
            restricted.insert(
                (n, k),
                restricted_metric(ring, k, Alpha::shadow_default(k)).unwrap(),
            );
        }
    }
    let mut jobs = Vec::new();
    for n in CORPUS_SIZES {
        for k in CORPUS_KS {
            for gen in GeneratorSpec::ALL {
                for seed in 0..CORPUS_SEEDS {
                    jobs.push((n, k, gen, seed));
                }
            }
        }
    }
    let workers = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(8);
    let chunk = jobs.len().div_ceil(workers);
    let reports = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                let (balanced, restricted) = (&balanced, &restricted);
                scope.spawn(move || {
                    part.iter()
                        .map(|&(n, k, gen, seed)| {
                            run_case(n, k, gen, seed, &balanced[&n], &restricted[&(n, k)])
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    (reports, start.elapsed())
}

// Exact optima on rings of at most 12 nodes never push the shadow out of
// balance, so closed phases are exercised against balanced but suboptimal
// reference trajectories on larger rings.
const UNBALANCING_SIZES: [usize; 2] = [40, 48];
const UNBALANCING_KS: [usize; 4] = [3, 4, 5, 6];
const UNBALANCING_SEEDS: u64 = 4;

fn unbalancing_case(n: usize, k: usize, seed: u64) -> CaseReport {
    let mut rep = CaseReport {
        label: format!("unbalancing n={n} k={k} seed={seed}"),
        ..Default::default()
    };
    let (requests, reference) =
        unbalancing_reference(RingSize::new(n).unwrap(), k, CORPUS_LEN, seed, 80).unwrap();
    if reference
        .steps
        .iter()
        .any(|s| 2 * less(n, s.after.edges()) != n)
    {
        rep.structural.push("reference left perfect balance".into());
    }
    let off = run_off(k, &requests, &reference).unwrap();
    check_off(n, k, &requests, &reference, &off, &mut rep);
    rep
}

fn unbalancing_supplement() -> Vec<CaseReport> {
    let jobs: Vec<_> = UNBALANCING_SIZES
        .iter()
        .flat_map(|&n| {
            UNBALANCING_KS
                .iter()
                .flat_map(move |&k| (0..UNBALANCING_SEEDS).map(move |s| (n, k, s)))
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(n, k, seed)| scope.spawn(move || unbalancing_case(n, k, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn collect(reports: &[CaseReport], pick: impl Fn(&CaseReport) -> &Vec<String>) -> Vec<String> {
    reports
        .iter()
        .flat_map(|r| pick(r).iter().map(move |f| format!("{}: {f}", r.label)))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

// ---------------------------------------------------------------------------
// criterion 9

fn cli_determinism() -> (Vec<String>, String) {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ringbisect");
    let mut outputs = Vec::new();
    let mut fails = Vec::new();
    for (cfg, name) in [
        (["--gen", "cut-chaser", "--k", "3"], "a"),
        (["--gen", "blocks:3", "--k", "2"], "b"),
    ] {
        for round in 0..2 {
            let path = dir.path().join(format!("{name}{round}.csv"));
            let summary = dir.path().join(format!("{name}{round}.json"));
            let status = Command::new(bin)
                .args(["run", "--n", "10", "--seed", "7", "--len", "120"])
                .args(cfg)
                .arg("--out")
                .arg(&path)
                .arg("--summary")
                .arg(&summary)
                .status()
                .unwrap();
            if !status.success() {
                fails.push(format!("{name}: exit status {status}"));
            }
            outputs.push((
                name,
                std::fs::read(&path).unwrap_or_default(),
                std::fs::read(&summary).unwrap_or_default(),
            ));
        }
    }
    for pair in outputs.chunks(2) {
        let (name, csv_a, json_a) = &pair[0];
        let (_, csv_b, json_b) = &pair[1];
        if csv_a.is_empty() || csv_a != csv_b || json_a != json_b {
            fails.push(format!("{name}: outputs differ between identical runs"));
        }
        let header = csv_a.split(|&b| b == b'\n').next().unwrap_or_default();
        if header != b"t,request_edge,algorithm,hit,recolor,cumulative_cost,cut_count,less_count,phase_index" {
            fails.push(format!("{name}: unexpected CSV header"));
        }
    }
    (fails, "2 configurations, 2 runs each".into())
}

fn main() -> ExitCode {
    let mut outcomes = vec![
        timed(
            1,
            "global rebalancing postconditions",
            Some(30),
            rebalance_postconditions,
        ),
        timed(
            2,
            "potential set equals brute-force distance",
            Some(60),
            phi_matches_brute_force,
        ),
        timed(3, "metric axioms", Some(60), metric_axioms),
        timed(
            4,
            "dynamic program equals exhaustive search",
            Some(60),
            oracle_equivalence,
        ),
    ];

    let (reports, corpus_elapsed) = corpus();
    let cases = reports.len();
    let steps: usize = reports.iter().map(|r| r.steps_checked).sum();
    let phases: usize = reports.iter().map(|r| r.phases_closed).sum();
    let supplement_start = Instant::now();
    let supplement = unbalancing_supplement();
    let elapsed = corpus_elapsed + supplement_start.elapsed();
    let sup_steps: usize = supplement.iter().map(|r| r.steps_checked).sum();
    let sup_phases: usize = supplement.iter().map(|r| r.phases_closed).sum();
    let mut structural = collect(&reports, |r| &r.structural);
    structural.extend(collect(&supplement, |r| &r.structural));
    if sup_phases == 0 {
        structural.push("no phase closed on the unbalancing references".into());
    }
    let corpus_outcome = |id, title, failures, note: String, budget: Option<u64>| Outcome {
        id,
        title,
        failures,
        note,
        elapsed,
        budget: budget.map(Duration::from_secs),
    };
    outcomes.push(corpus_outcome(
        5,
        "per-step amortized bound on the corpus",
        [
            collect(&reports, |r| &r.step),
            collect(&supplement, |r| &r.step),
        ]
        .concat(),
        format!(
            "{cases} runs, {steps} steps; {} unbalancing runs, {sup_steps} steps",
            supplement.len()
        ),
        Some(300),
    ));
    outcomes.push(corpus_outcome(
        6,
        "structural invariants on the corpus",
        structural,
        format!("{phases} closed phases on the corpus, {sup_phases} on unbalancing references"),
        None,
    ));
    let worst = reports
        .iter()
        .filter_map(|r| r.off_over_opt)
        .fold(0.0, f64::max);
    outcomes.push(corpus_outcome(
        7,
        "OFF <= (3k+1) OPT + 3n/2 on the corpus",
        [
            collect(&reports, |r| &r.total),
            collect(&supplement, |r| &r.total),
        ]
        .concat(),
        format!("max OFF/OPT {worst:.3}"),
        None,
    ));
    outcomes.push(corpus_outcome(
        8,
        "online solvers stay in class, dominate the restricted optimum, reproduce",
        collect(&reports, |r| &r.online),
        format!(
            "mean WFA/OFF {:.3}, mean MW/OFF {:.3}",
            mean(reports.iter().filter_map(|r| r.wfa_over_off)),
            mean(reports.iter().filter_map(|r| r.mw_over_off))
        ),
        None,
    ));
    outcomes.push(timed(
        9,
        "byte-identical CSV for identical runs",
        None,
        cli_determinism,
    ));

    for o in &outcomes {
        o.print();
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
