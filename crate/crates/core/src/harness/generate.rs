//! Request sequence generators and initial colorings.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::online::{wfa_step, MtsInstance, WorkTable};
use crate::oracle::{decompose_transition, Trajectory, TrajectoryStep};
use crate::ring::{state_distance, Color, Coloring, CutEdgeSet, Edge, RingSize};
use crate::shadow::{ShadowError, ShadowState};

pub const DEFAULT_BLOCK_LEN: usize = 4;

/// Independent random streams derived from one seed.
pub(crate) const INIT_STREAM: u64 = 1;
pub(crate) const GEN_STREAM: u64 = 2;
pub(crate) const SOLVER_STREAM: u64 = 3;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorSpec {
    /// Independent uniformly random edges.
    Uniform,
    /// `e_0, e_1, ...` around the ring.
    Sweep,
    /// A random edge repeated `L` times, then redrawn.
    Blocks(usize),
    /// Always requests a cut-edge of the deterministic work-function solver,
    /// fixed in advance so that it stays oblivious to any randomized run.
    CutChaser,
}

impl GeneratorSpec {
    pub const ALL: [GeneratorSpec; 4] = [
        GeneratorSpec::Uniform,
        GeneratorSpec::Sweep,
        GeneratorSpec::Blocks(DEFAULT_BLOCK_LEN),
        GeneratorSpec::CutChaser,
    ];
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Uniform => write!(f, "uniform"),
            GeneratorSpec::Sweep => write!(f, "sweep"),
            GeneratorSpec::Blocks(l) => write!(f, "blocks:{l}"),
            GeneratorSpec::CutChaser => write!(f, "cut-chaser"),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || HarnessError::UnknownGenerator(s.to_string());
        match s.trim() {
            "uniform" => Ok(GeneratorSpec::Uniform),
            "sweep" => Ok(GeneratorSpec::Sweep),
            "blocks" => Ok(GeneratorSpec::Blocks(DEFAULT_BLOCK_LEN)),
            "cut-chaser" | "cut_chaser" | "chaser" => Ok(GeneratorSpec::CutChaser),
            other => match other.strip_prefix("blocks:") {
                Some(l) => match l.parse::<usize>() {
                    Ok(l) if l > 0 => Ok(GeneratorSpec::Blocks(l)),
                    _ => Err(unknown()),
                },
                None => Err(unknown()),
            },
        }
    }
}

/// Builds `len` requests. The cut-chaser needs the restricted instance it
/// chases; the other generators ignore it.
pub fn generate(
    spec: GeneratorSpec,
    n: RingSize,
    len: usize,
    seed: u64,
    chase: Option<&MtsInstance<'_>>,
) -> Result<Vec<Edge>, HarnessError> {
    let n = n.get();
    let mut rng = stream(seed, GEN_STREAM);
    let out = match spec {
        GeneratorSpec::Uniform => (0..len).map(|_| rng.gen_range(0..n)).collect(),
        GeneratorSpec::Sweep => (0..len).map(|t| t % n).collect(),
        GeneratorSpec::Blocks(l) => {
            let mut out = Vec::with_capacity(len);
            while out.len() < len {
                let e = rng.gen_range(0..n);
                let take = l.min(len - out.len());
                out.extend(std::iter::repeat_n(e, take));
            }
            out
        }
        GeneratorSpec::CutChaser => {
            let inst = chase.ok_or_else(|| {
                HarnessError::Config("the cut-chaser generator needs a restricted instance".into())
            })?;
            let metric = inst.metric();
            let mut table = WorkTable::new(metric, inst.start());
            let mut cur = inst.start();
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let e = match metric.space().state(cur).edges().choose(&mut rng) {
                    Some(&e) => e,
                    None => rng.gen_range(0..n),
                };
                cur = wfa_step(&mut table, metric, cur, e).0;
                out.push(e);
            }
            out
        }
    };
    Ok(out)
}

/// A perfectly balanced, not necessarily optimal, trajectory that pushes
/// the shadow algorithm towards imbalance: for each request it tries
/// `candidates` random swaps of a red and a blue node and keeps the one
/// leaving the shadow with the smallest minority. Requests are uniform.
///
/// The shadow algorithm's bounds hold against any balanced trajectory, and
/// on rings small enough for exact optima it never has to rebalance; this
/// reference makes phases close on larger rings.
pub fn unbalancing_reference(
    n: RingSize,
    k: usize,
    len: usize,
    seed: u64,
    candidates: usize,
) -> Result<(Vec<Edge>, Trajectory), ShadowError> {
    let mut rng = stream(seed, GEN_STREAM);
    let to_cuts = |c: &[Color]| {
        Coloring::new(c.to_vec())
            .expect("length matches")
            .cut_edges()
    };
    let mut colors: Vec<Color> = {
        let init = initial_state(InitSpec::Random, n, seed);
        crate::ring::coloring_of(&init, Color::Red)
            .colors()
            .to_vec()
    };
    let mut cur = to_cuts(&colors);
    let mut shadow = ShadowState::new(&cur, k)?;
    let mut trajectory = Trajectory::new(cur.clone());
    let mut requests = Vec::with_capacity(len);
    for _ in 0..len {
        let e = rng.gen_range(0..n.get());
        let red: Vec<usize> = (0..n.get()).filter(|&i| colors[i] == Color::Red).collect();
        let blue: Vec<usize> = (0..n.get()).filter(|&i| colors[i] == Color::Blue).collect();
        let mut best: Option<(usize, Vec<Color>, CutEdgeSet, ShadowState)> = None;
        for _ in 0..candidates.max(1) {
            let mut next_colors = colors.clone();
            next_colors[*red.choose(&mut rng).expect("balanced")] = Color::Blue;
            next_colors[*blue.choose(&mut rng).expect("balanced")] = Color::Red;
            let next = to_cuts(&next_colors);
            let mut probe = shadow.clone();
            for w in decompose_transition(&cur, &next)? {
                probe.apply_step(w, 0)?;
            }
            let less = probe.off_cuts().less_count();
            if best.as_ref().is_none_or(|b| less < b.0) {
                best = Some((less, next_colors, next, probe));
            }
        }
        let (_, next_colors, next, mut probe) = best.expect("at least one candidate");
        if !probe.is_balanced() {
            probe.rebalance()?;
        }
        trajectory.steps.push(TrajectoryStep {
            request_edge: e,
            hit: cur.contains(e) as u32,
            recolor: state_distance(&cur, &next) as u32,
            before: cur,
            after: next.clone(),
            phase: 0,
        });
        requests.push(e);
        colors = next_colors;
        cur = next;
        shadow = probe;
    }
    Ok((requests, trajectory))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitSpec {
    /// Nodes `0..n/2` red, the rest blue.
    Halves,
    /// Colors alternate around the ring.
    Alternating,
    /// A uniformly random perfectly balanced coloring.
    #[default]
    Random,
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitSpec::Halves => "halves",
            InitSpec::Alternating => "alternating",
            InitSpec::Random => "random",
        })
    }
}

impl FromStr for InitSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "halves" => Ok(InitSpec::Halves),
            "alternating" => Ok(InitSpec::Alternating),
            "random" => Ok(InitSpec::Random),
            other => Err(HarnessError::UnknownInit(other.to_string())),
        }
    }
}

pub fn initial_state(spec: InitSpec, n: RingSize, seed: u64) -> CutEdgeSet {
    let half = n.half();
    let mut colors: Vec<Color> = match spec {
        InitSpec::Halves | InitSpec::Random => (0..n.get())
            .map(|i| if i < half { Color::Red } else { Color::Blue })
            .collect(),
        InitSpec::Alternating => (0..n.get())
            .map(|i| if i % 2 == 0 { Color::Red } else { Color::Blue })
            .collect(),
    };
    if spec == InitSpec::Random {
        colors.shuffle(&mut stream(seed, INIT_STREAM));
    }
    Coloring::new(colors)
        .expect("length matches ring")
        .cut_edges()
}
