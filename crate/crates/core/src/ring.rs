//! Ring topology, colorings and cut-edge sets.
//!
//! Nodes are numbered `0..n` clockwise. Edge `i` joins node `i` and node
//! `(i + 1) % n`, so a request for edge `i` is the node pair `(i, i + 1)`.
//! A [`CutEdgeSet`] is the label-free representation of a two-coloring: it
//! determines the coloring up to swapping the color names. Where a labeled
//! coloring is needed, node 0 is anchored to [`Color::Red`].

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Node = usize;
pub type Edge = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring size must be even and at least 4, got {0}")]
    BadRingSize(usize),
    #[error("edge {edge} out of range for ring of size {n}")]
    EdgeOutOfRange { edge: Edge, n: usize },
    #[error("duplicate edge {0} in cut-edge set")]
    DuplicateEdge(Edge),
    #[error("cut-edge set has odd cardinality {0}")]
    OddCardinality(usize),
    #[error("ring sizes differ: {0} vs {1}")]
    RingMismatch(usize, usize),
    #[error("arc between an edge and itself is undefined (edge {0})")]
    DegenerateArc(Edge),
    #[error("balance factor must be at least 1, got {0}")]
    BadAlpha(String),
    #[error("cannot parse balance factor {0:?}")]
    AlphaParse(String),
    #[error("unknown color symbol {0:?}")]
    BadColor(char),
    #[error("no constituent arc has endpoint {0}")]
    NoArcWithEndpoint(Edge),
    #[error("ring of size {0} does not fit a 64-bit edge mask")]
    RingTooLarge(usize),
}

/// Number of nodes on the ring; always even and at least 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RingSize(usize);

impl RingSize {
    pub fn new(n: usize) -> Result<Self, RingError> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(RingError::BadRingSize(n));
        }
        Ok(Self(n))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn half(self) -> usize {
        self.0 / 2
    }

    /// Edge on the counter-clockwise side of `w`.
    #[inline]
    pub fn left_edge(self, w: Node) -> Edge {
        (w + self.0 - 1) % self.0
    }

    /// Edge on the clockwise side of `w`.
    #[inline]
    pub fn right_edge(self, w: Node) -> Edge {
        w % self.0
    }

    /// Number of nodes strictly between edges `a` and `b` walking clockwise.
    #[inline]
    pub fn clockwise_gap(self, a: Edge, b: Edge) -> usize {
        (b + self.0 - a) % self.0
    }
}

impl TryFrom<usize> for RingSize {
    type Error = RingError;
    fn try_from(n: usize) -> Result<Self, RingError> {
        Self::new(n)
    }
}

impl From<RingSize> for usize {
    fn from(n: RingSize) -> usize {
        n.0
    }
}

impl fmt::Display for RingSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    pub fn flipped(self) -> Self {
        match self {
            Color::Red => Color::Blue,
            Color::Blue => Color::Red,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coloring {
    colors: Vec<Color>,
}

impl Coloring {
    pub fn new(colors: Vec<Color>) -> Result<Self, RingError> {
        RingSize::new(colors.len())?;
        Ok(Self { colors })
    }

    pub fn ring(&self) -> RingSize {
        RingSize(self.colors.len())
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn get(&self, w: Node) -> Color {
        self.colors[w]
    }

    pub fn count(&self, color: Color) -> usize {
        self.colors.iter().filter(|&&c| c == color).count()
    }

    pub fn swapped(&self) -> Self {
        Self {
            colors: self.colors.iter().map(|c| c.flipped()).collect(),
        }
    }

    pub fn cut_edges(&self) -> CutEdgeSet {
        cut_edges_of(self)
    }
}

impl FromStr for Coloring {
    type Err = RingError;

    /// Parses strings such as `"RRBB"`.
    fn from_str(s: &str) -> Result<Self, RingError> {
        let colors = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                'R' | 'r' => Ok(Color::Red),
                'B' | 'b' => Ok(Color::Blue),
                other => Err(RingError::BadColor(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Coloring::new(colors)
    }
}

impl fmt::Display for Coloring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.colors {
            f.write_str(match c {
                Color::Red => "R",
                Color::Blue => "B",
            })?;
        }
        Ok(())
    }
}

/// A balance factor `alpha >= 1`, kept as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alpha(Ratio<i64>);

impl Alpha {
    pub fn new(numer: i64, denom: i64) -> Result<Self, RingError> {
        if denom == 0 {
            return Err(RingError::AlphaParse(format!("{numer}/{denom}")));
        }
        Self::from_ratio(Ratio::new(numer, denom))
    }

    pub fn from_ratio(r: Ratio<i64>) -> Result<Self, RingError> {
        if r < Ratio::from_integer(1) {
            return Err(RingError::BadAlpha(r.to_string()));
        }
        Ok(Self(r))
    }

    pub fn one() -> Self {
        Self(Ratio::from_integer(1))
    }

    /// `1 + 1/k`, the balance guaranteed by global rebalancing.
    pub fn rebalanced(k: usize) -> Self {
        Self(Ratio::new(k as i64 + 1, k as i64))
    }

    /// `3/2 + 1/k`, the balance maintained by the offline shadow algorithm.
    pub fn shadow_default(k: usize) -> Self {
        Self(Ratio::new(3, 2) + Ratio::new(1, k as i64))
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Whether a color class of `majority` nodes fits the capacity `alpha * n / 2`.
    pub fn admits(self, n: usize, majority: usize) -> bool {
        2 * (majority as i64) * self.0.denom() <= self.0.numer() * n as i64
    }
}

impl FromStr for Alpha {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self, RingError> {
        let s = s.trim();
        let parsed = if let Some((a, b)) = s.split_once('/') {
            let a: i64 = a
                .trim()
                .parse()
                .map_err(|_| RingError::AlphaParse(s.into()))?;
            let b: i64 = b
                .trim()
                .parse()
                .map_err(|_| RingError::AlphaParse(s.into()))?;
            if b <= 0 {
                return Err(RingError::AlphaParse(s.into()));
            }
            Ratio::new(a, b)
        } else if let Some((int, frac)) = s.split_once('.') {
            // exact decimal, e.g. "1.75"
            let digits = frac.len() as u32;
            let denom = 10i64
                .checked_pow(digits)
                .ok_or_else(|| RingError::AlphaParse(s.into()))?;
            let whole: i64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| RingError::AlphaParse(s.into()))?
            };
            let part: i64 = frac.parse().map_err(|_| RingError::AlphaParse(s.into()))?;
            Ratio::new(whole * denom + part, denom)
        } else {
            Ratio::from_integer(s.parse().map_err(|_| RingError::AlphaParse(s.into()))?)
        };
        Alpha::from_ratio(parsed)
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a single-node recoloring changes the cut-edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StepKind {
    /// One adjacent edge was a cut-edge and moves to the other side of the node.
    Shift { removed: Edge, added: Edge },
    /// Neither adjacent edge was cut; both become cut-edges.
    AddPair(Edge, Edge),
    /// Both adjacent edges were cut; both disappear.
    RemovePair(Edge, Edge),
}

/// Even-cardinality set of cut-edges, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CutEdgeSet {
    n: RingSize,
    edges: Vec<Edge>,
}

impl CutEdgeSet {
    pub fn new(n: RingSize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, RingError> {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(RingError::DuplicateEdge(w[0]));
            }
        }
        if let Some(&e) = edges.iter().find(|&&e| e >= n.get()) {
            return Err(RingError::EdgeOutOfRange {
                edge: e,
                n: n.get(),
            });
        }
        if !edges.len().is_multiple_of(2) {
            return Err(RingError::OddCardinality(edges.len()));
        }
        Ok(Self { n, edges })
    }

    pub fn empty(n: RingSize) -> Self {
        Self {
            n,
            edges: Vec::new(),
        }
    }

    pub fn from_mask(n: RingSize, mask: u64) -> Result<Self, RingError> {
        if n.get() > 64 {
            return Err(RingError::RingTooLarge(n.get()));
        }
        Self::new(n, (0..n.get()).filter(|&e| mask >> e & 1 == 1))
    }

    /// Bit `e` set iff edge `e` is cut. Only defined for `n <= 64`.
    pub fn mask(&self) -> Result<u64, RingError> {
        if self.n.get() > 64 {
            return Err(RingError::RingTooLarge(self.n.get()));
        }
        Ok(self.edges.iter().fold(0u64, |m, &e| m | 1 << e))
    }

    pub fn ring(&self) -> RingSize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn is_subset(&self, other: &CutEdgeSet) -> bool {
        self.n == other.n && self.edges.iter().all(|&e| other.contains(e))
    }

    /// Edges in exactly one of the two sets, sorted.
    pub fn symmetric_difference(&self, other: &CutEdgeSet) -> Vec<Edge> {
        let (a, b) = (&self.edges, &other.edges);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                }
                (Some(&x), Some(&y)) if x < y => {
                    out.push(x);
                    i += 1;
                }
                (Some(_), Some(&y)) => {
                    out.push(y);
                    j += 1;
                }
                (Some(&x), None) => {
                    out.push(x);
                    i += 1;
                }
                (None, Some(&y)) => {
                    out.push(y);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        out
    }

    /// Set with the given edges' membership toggled. Result may be invalid
    /// only if an odd number of edges is toggled, which callers never do.
    fn toggled(&self, toggles: &[Edge]) -> CutEdgeSet {
        let mut edges = self.edges.clone();
        for &e in toggles {
            match edges.binary_search(&e) {
                Ok(pos) => {
                    edges.remove(pos);
                }
                Err(pos) => edges.insert(pos, e),
            }
        }
        CutEdgeSet { n: self.n, edges }
    }

    pub fn without_pair(&self, a: Edge, b: Edge) -> CutEdgeSet {
        debug_assert!(self.contains(a) && self.contains(b));
        self.toggled(&[a, b])
    }

    /// Recolor node `w`: toggles edges `w - 1` and `w`.
    pub fn flip_node(&self, w: Node) -> (CutEdgeSet, StepKind) {
        let left = self.n.left_edge(w);
        let right = self.n.right_edge(w);
        let kind = match (self.contains(left), self.contains(right)) {
            (true, false) => StepKind::Shift {
                removed: left,
                added: right,
            },
            (false, true) => StepKind::Shift {
                removed: right,
                added: left,
            },
            (false, false) => StepKind::AddPair(left, right),
            (true, true) => StepKind::RemovePair(left, right),
        };
        (self.toggled(&[left, right]), kind)
    }

    /// Recolor every node of `nodes` (each at most once).
    pub fn recolor_nodes(&self, nodes: &[Node]) -> CutEdgeSet {
        let mut out = self.clone();
        for &w in nodes {
            out = out.flip_node(w).0;
        }
        out
    }

    /// The labeled coloring with node 0 colored `node0`.
    pub fn coloring(&self, node0: Color) -> Coloring {
        coloring_of(self, node0)
    }

    /// `(red, blue)` node counts of the canonical coloring (node 0 red).
    pub fn canonical_counts(&self) -> (usize, usize) {
        let n = self.n.get();
        if self.edges.is_empty() {
            return (n, 0);
        }
        // Node 0 lies on the arc ending at the first cut-edge; arcs alternate.
        let m = self.edges.len();
        let mut red = 0;
        for i in 0..m {
            let a = self.edges[(i + m - 1) % m];
            let b = self.edges[i];
            // arc clockwise from a to b; arc index 0 (i == 0) wraps through node 0
            let len = self.n.clockwise_gap(a, b);
            let len = if len == 0 { n } else { len };
            if i % 2 == 0 {
                red += len;
            }
        }
        (red, n - red)
    }

    pub fn less_count(&self) -> usize {
        let (r, b) = self.canonical_counts();
        r.min(b)
    }

    /// Majority color of the canonical coloring; red on a tie.
    pub fn majority_color(&self) -> Color {
        let (r, b) = self.canonical_counts();
        if r >= b {
            Color::Red
        } else {
            Color::Blue
        }
    }

    pub fn is_alpha_balanced(&self, alpha: Alpha) -> bool {
        alpha.admits(self.n.get(), self.n.get() - self.less_count())
    }

    /// Monochromatic arcs between consecutive cut-edges, with the canonical
    /// color of each. Empty for the empty set.
    pub fn monochromatic_arcs(&self) -> Vec<(Arc, Color)> {
        let m = self.edges.len();
        if m == 0 {
            return Vec::new();
        }
        let canon = self.coloring(Color::Red);
        (0..m)
            .map(|i| {
                let a = self.edges[i];
                let b = self.edges[(i + 1) % m];
                let arc = Arc::clockwise(self.n, a, b);
                let color = canon.get(arc.nodes[0]);
                (arc, color)
            })
            .collect()
    }
}

impl fmt::Display for CutEdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("}")
    }
}

pub fn cut_edges_of(c: &Coloring) -> CutEdgeSet {
    let n = c.ring();
    let edges = (0..n.get())
        .filter(|&e| c.get(e) != c.get((e + 1) % n.get()))
        .collect();
    CutEdgeSet { n, edges }
}

pub fn coloring_of(cuts: &CutEdgeSet, node0: Color) -> Coloring {
    let n = cuts.ring().get();
    let mut colors = Vec::with_capacity(n);
    let mut cur = node0;
    for w in 0..n {
        colors.push(cur);
        if cuts.contains(w) {
            cur = cur.flipped();
        }
    }
    Coloring { colors }
}

/// A run of consecutive nodes bounded by two edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Arc {
    pub start_edge: Edge,
    pub end_edge: Edge,
    /// Nodes in clockwise order, from `start_edge + 1` through `end_edge`.
    pub nodes: Vec<Node>,
}

impl Arc {
    /// The clockwise arc from `a` to `b`. For `a == b` this is the whole ring.
    pub fn clockwise(n: RingSize, a: Edge, b: Edge) -> Arc {
        let gap = n.clockwise_gap(a, b);
        let len = if gap == 0 { n.get() } else { gap };
        let nodes = (1..=len).map(|i| (a + i) % n.get()).collect();
        Arc {
            start_edge: a,
            end_edge: b,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_endpoint(&self, e: Edge) -> bool {
        self.start_edge == e || self.end_edge == e
    }

    pub fn other_endpoint(&self, e: Edge) -> Edge {
        if self.start_edge == e {
            self.end_edge
        } else {
            self.start_edge
        }
    }

    pub fn contains(&self, w: Node) -> bool {
        self.nodes.contains(&w)
    }
}

/// Nodes on the shorter path between two distinct edges. On a tie the
/// clockwise arc from the lower-index edge is taken.
pub fn arc_between(n: RingSize, e_i: Edge, e_j: Edge) -> Result<Arc, RingError> {
    for e in [e_i, e_j] {
        if e >= n.get() {
            return Err(RingError::EdgeOutOfRange {
                edge: e,
                n: n.get(),
            });
        }
    }
    if e_i == e_j {
        return Err(RingError::DegenerateArc(e_i));
    }
    let (lo, hi) = (e_i.min(e_j), e_i.max(e_j));
    let forward = n.clockwise_gap(lo, hi);
    let backward = n.get() - forward;
    Ok(if forward <= backward {
        Arc::clockwise(n, lo, hi)
    } else {
        Arc::clockwise(n, hi, lo)
    })
}

pub fn arc_distance(n: RingSize, e_i: Edge, e_j: Edge) -> Result<usize, RingError> {
    arc_between(n, e_i, e_j).map(|a| a.len())
}

/// Which alternating union of clockwise arcs was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhiSide {
    /// Arcs `(c1,c2), (c3,c4), ...`.
    Even,
    /// Arcs `(cm,c1), (c2,c3), ...`.
    Odd,
}

/// The smaller of the two alternating arc unions over the symmetric
/// difference of two cut-edge sets: the cheapest set of nodes to recolor so
/// that the two partitions coincide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhiSet {
    /// Sorted node indices.
    pub nodes: Vec<Node>,
    /// Constituent arcs, in clockwise order of their start edge.
    pub arcs: Vec<Arc>,
    pub side: Option<PhiSide>,
}

impl PhiSet {
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            arcs: Vec::new(),
            side: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in arc order, each arc swept clockwise.
    pub fn sweep(&self) -> Vec<Node> {
        self.arcs
            .iter()
            .flat_map(|a| a.nodes.iter().copied())
            .collect()
    }
}

pub fn phi(reference: &CutEdgeSet, other: &CutEdgeSet) -> Result<PhiSet, RingError> {
    let n = reference.ring();
    if n != other.ring() {
        return Err(RingError::RingMismatch(n.get(), other.ring().get()));
    }
    let d = reference.symmetric_difference(other);
    if d.is_empty() {
        return Ok(PhiSet::empty());
    }
    let m = d.len();
    let even_len: usize = (0..m)
        .step_by(2)
        .map(|i| n.clockwise_gap(d[i], d[i + 1]))
        .sum();
    let (side, arcs): (PhiSide, Vec<Arc>) = if 2 * even_len <= n.get() {
        (
            PhiSide::Even,
            (0..m)
                .step_by(2)
                .map(|i| Arc::clockwise(n, d[i], d[i + 1]))
                .collect(),
        )
    } else {
        // (c2,c3), ..., (c_{m-2}, c_{m-1}), then the wrapping arc (cm, c1)
        let mut arcs: Vec<Arc> = (1..m - 1)
            .step_by(2)
            .map(|i| Arc::clockwise(n, d[i], d[i + 1]))
            .collect();
        arcs.push(Arc::clockwise(n, d[m - 1], d[0]));
        (PhiSide::Odd, arcs)
    };
    let mut nodes: Vec<Node> = arcs.iter().flat_map(|a| a.nodes.iter().copied()).collect();
    nodes.sort_unstable();
    Ok(PhiSet {
        nodes,
        arcs,
        side: Some(side),
    })
}

/// Minimum number of recolored nodes turning one partition into the other.
///
/// Panics if the two sets live on different rings.
pub fn state_distance(a: &CutEdgeSet, b: &CutEdgeSet) -> usize {
    assert_eq!(a.ring(), b.ring(), "state_distance across different rings");
    let n = a.ring();
    let d = a.symmetric_difference(b);
    let even: usize = (0..d.len())
        .step_by(2)
        .map(|i| n.clockwise_gap(d[i], d[i + 1]))
        .sum();
    even.min(n.get() - even)
}

/// [`state_distance`] on 64-bit edge masks.
#[inline]
pub fn mask_distance(n: usize, a: u64, b: u64) -> usize {
    let mut diff = a ^ b;
    let mut even = 0usize;
    while diff != 0 {
        let first = diff.trailing_zeros() as usize;
        diff &= diff - 1;
        let second = diff.trailing_zeros() as usize;
        diff &= diff - 1;
        even += second - first;
    }
    even.min(n - even)
}
