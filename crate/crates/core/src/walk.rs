//! Linearly edge-reinforced random walk on a ladder.
//!
//! The walker at vertex `u` picks an incident edge `e` with probability
//! proportional to its current weight `a + counts(e)` and crossing an edge
//! raises its count by one.  Counts may start positive, which is how the
//! walk continues after a fixed prefix: the continuation is again a
//! reinforced walk whose initial counts are the prefix's crossing counts.
//!
//! Two evaluation modes share the same transition rule: a fast `f64`
//! simulator driven by a seeded generator, and exact rational path
//! probabilities used by the partial exchangeability and mixture checks.

use crate::ladder::{AdjacencyTable, EdgeId, Ladder, VertexId};
use crate::ratio::rational_to_string;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("initial weight a must be positive and finite, got {0}")]
    BadInitialWeight(f64),
    #[error("initial weight a must be positive, got {0}")]
    BadInitialWeightExact(String),
    #[error("graph error: {0}")]
    Graph(#[from] crate::ladder::GraphError),
    #[error("initial counts reference edge id {0} outside the ladder")]
    BadInitialCounts(usize),
    #[error("path is empty")]
    EmptyPath,
    #[error("path step {index} joins non-adjacent vertices {from} and {to}")]
    NotAPath { index: usize, from: usize, to: usize },
    #[error("observer failed at time {time}: {message}")]
    Observer { time: u64, message: String },
    #[error("path enumeration exceeded cap of {cap} recorded paths")]
    EnumerationOverflow { cap: usize },
}

/// Sparse crossing counts of a path segment, keyed by edge id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub counts: BTreeMap<EdgeId, u64>,
    pub total: u64,
}

impl EdgeCounts {
    pub fn get(&self, e: EdgeId) -> u64 {
        self.counts.get(&e).copied().unwrap_or(0)
    }

    pub fn insert(&mut self, e: EdgeId, k: u64) {
        if k > 0 {
            self.total += k - self.counts.insert(e, k).unwrap_or(0);
        }
    }

    pub fn increment(&mut self, e: EdgeId) {
        *self.counts.entry(e).or_insert(0) += 1;
        self.total += 1;
    }
}

/// One transition of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub from: VertexId,
    pub edge: EdgeId,
    pub to: VertexId,
}

/// Mutable state of a reinforced walk.
///
/// Invariant: the sum of all counts minus the initial counts equals the
/// number of steps taken since creation.
pub struct ReinforcementState {
    ladder: Arc<Ladder>,
    a: f64,
    table: AdjacencyTable,
    counts: Vec<u64>,
    position: VertexId,
    time: u64,
    initial_total: u64,
}

/// Weights at or below this value on a two-vertex tree fall outside the
/// regime where localization is guaranteed.
pub const A_MIN_TWO_VERTEX: f64 = 0.75;

fn raw_edge_bound(ladder: &Ladder, depth: u32) -> usize {
    (depth as usize + 1) * ladder.block_size()
}

impl ReinforcementState {
    /// Fresh walk at the ladder's start vertex with all counts zero.
    pub fn new(ladder: Arc<Ladder>, a: f64) -> Result<Self, SimError> {
        let start = ladder.start();
        Self::with_initial(ladder, a, start, &EdgeCounts::default())
    }

    /// Walk from `start` whose edges already carry `initial` counts.
    pub fn with_initial(
        ladder: Arc<Ladder>,
        a: f64,
        start: VertexId,
        initial: &EdgeCounts,
    ) -> Result<Self, SimError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(SimError::BadInitialWeight(a));
        }
        if a <= A_MIN_TWO_VERTEX && ladder.tree().vertex_count() == 2 {
            log::warn!(
                "initial weight a = {a} is at or below {A_MIN_TWO_VERTEX} on a two-vertex tree; \
                 localization is not guaranteed in this regime"
            );
        }
        if !ladder.contains_vertex(start) {
            return Err(SimError::Graph(crate::ladder::GraphError::UnknownVertexId(
                start.0,
            )));
        }
        let start_level = ladder.level_of_vertex(start)?;
        let depth = match ladder.depth() {
            crate::ladder::Depth::Finite(n) => n,
            crate::ladder::Depth::Unbounded => ladder.materialized_depth().max(start_level + 1),
        };
        let table = ladder.adjacency_table(depth);
        let mut counts = vec![0u64; raw_edge_bound(&ladder, depth)];
        for (&e, &k) in &initial.counts {
            if !ladder.contains_edge(e) {
                return Err(SimError::BadInitialCounts(e.0));
            }
            if e.0 >= counts.len() {
                counts.resize(e.0 + 1, 0);
            }
            counts[e.0] = k;
        }
        Ok(ReinforcementState {
            ladder,
            a,
            table,
            counts,
            position: start,
            time: 0,
            initial_total: initial.total,
        })
    }

    pub fn ladder(&self) -> &Arc<Ladder> {
        &self.ladder
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn position(&self) -> VertexId {
        self.position
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Current weight `a + counts(e)`.
    pub fn weight(&self, e: EdgeId) -> f64 {
        self.a + self.count(e) as f64
    }

    pub fn count(&self, e: EdgeId) -> u64 {
        self.counts.get(e.0).copied().unwrap_or(0)
    }

    /// Dense counts indexed by raw edge id (length covers the materialized
    /// window).
    pub fn counts_dense(&self) -> &[u64] {
        &self.counts
    }

    pub fn nonzero_counts(&self) -> EdgeCounts {
        let mut out = EdgeCounts::default();
        for (raw, &k) in self.counts.iter().enumerate() {
            if k > 0 {
                out.insert(EdgeId(raw), k);
            }
        }
        out
    }

    /// Steps taken since creation, per the count bookkeeping.
    pub fn accrued(&self) -> u64 {
        self.counts.iter().sum::<u64>() - self.initial_total
    }

    fn grow_to_cover(&mut self, v: VertexId) {
        let lvl = (v.0 / self.ladder.tree().vertex_count()) as u32;
        let depth = lvl.max(self.table.depth().saturating_mul(2)).max(1);
        self.ladder.ensure_level(depth + 1);
        self.table = self.ladder.adjacency_table(depth);
        self.counts.resize(raw_edge_bound(&self.ladder, depth), 0);
    }

    /// One reinforced step.
    #[inline]
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> StepEvent {
        if !self.table.covers_vertex(self.position.0) {
            self.grow_to_cover(self.position);
        }
        let row = self.table.row(self.position.0);
        let mut total = 0.0;
        for &(e, _) in row {
            total += self.a + self.counts[e as usize] as f64;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = row.len() - 1;
        for (k, &(e, _)) in row.iter().enumerate() {
            acc += self.a + self.counts[e as usize] as f64;
            if target < acc {
                pick = k;
                break;
            }
        }
        let (e, to) = row[pick];
        self.counts[e as usize] += 1;
        let ev = StepEvent {
            from: self.position,
            edge: EdgeId(e as usize),
            to: VertexId(to as usize),
        };
        self.position = ev.to;
        self.time += 1;
        ev
    }
}

/// Streaming hook over a running walk.  `on_step` sees the state after the
/// transition has been applied.
pub trait Observer {
    fn begin(&mut self, state: &ReinforcementState) -> Result<(), String> {
        let _ = state;
        Ok(())
    }
    fn on_step(&mut self, state: &ReinforcementState, ev: &StepEvent) -> Result<(), String>;
}

/// Tracks the current and maximum level without divisions: a step changes
/// level by +-1 exactly when it moves a full tree block up or down.
pub struct LevelObserver {
    tree_v: usize,
    pub current: u32,
    pub max: u32,
}

impl LevelObserver {
    pub fn new(ladder: &Ladder) -> Self {
        LevelObserver {
            tree_v: ladder.tree().vertex_count(),
            current: 0,
            max: 0,
        }
    }
}

impl Observer for LevelObserver {
    fn begin(&mut self, state: &ReinforcementState) -> Result<(), String> {
        self.current = state
            .ladder()
            .level_of_vertex(state.position())
            .map_err(|e| e.to_string())?;
        self.max = self.current;
        Ok(())
    }

    fn on_step(&mut self, _state: &ReinforcementState, ev: &StepEvent) -> Result<(), String> {
        if ev.to.0 == ev.from.0 + self.tree_v {
            self.current += 1;
            if self.current > self.max {
                self.max = self.current;
            }
        } else if ev.to.0 + self.tree_v == ev.from.0 {
            self.current -= 1;
        }
        Ok(())
    }
}

/// Counts crossings per edge over the observed window only (unlike the
/// state's own counts, which include initial counts).
pub struct CrossingObserver {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl CrossingObserver {
    pub fn new() -> Self {
        CrossingObserver {
            counts: Vec::new(),
            total: 0,
        }
    }

    pub fn as_edge_counts(&self) -> EdgeCounts {
        let mut out = EdgeCounts::default();
        for (raw, &k) in self.counts.iter().enumerate() {
            if k > 0 {
                out.insert(EdgeId(raw), k);
            }
        }
        out
    }
}

impl Default for CrossingObserver {
    fn default() -> Self {
        Self::new()
    }
}

impl Observer for CrossingObserver {
    fn on_step(&mut self, _state: &ReinforcementState, ev: &StepEvent) -> Result<(), String> {
        if ev.edge.0 >= self.counts.len() {
            self.counts.resize(ev.edge.0 + 1, 0);
        }
        self.counts[ev.edge.0] += 1;
        self.total += 1;
        Ok(())
    }
}

/// Records the position at the given times (ascending, time 0 allowed).
pub struct PositionRecorder {
    times: Vec<u64>,
    next: usize,
    pub positions: Vec<VertexId>,
}

impl PositionRecorder {
    pub fn new(mut times: Vec<u64>) -> Self {
        times.sort_unstable();
        times.dedup();
        PositionRecorder {
            times,
            next: 0,
            positions: Vec::new(),
        }
    }
}

impl Observer for PositionRecorder {
    fn begin(&mut self, state: &ReinforcementState) -> Result<(), String> {
        while self.next < self.times.len() && self.times[self.next] == state.time() {
            self.positions.push(state.position());
            self.next += 1;
        }
        Ok(())
    }

    fn on_step(&mut self, state: &ReinforcementState, _ev: &StepEvent) -> Result<(), String> {
        while self.next < self.times.len() && self.times[self.next] == state.time() {
            self.positions.push(state.position());
            self.next += 1;
        }
        Ok(())
    }
}

/// Whether `run_walk` keeps the full vertex sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRetention {
    /// Keep the path only below the streaming threshold.
    Auto,
    Full,
    Streaming,
}

/// Horizon at or above which `Auto` retention stops recording the path.
pub const STREAMING_THRESHOLD: u64 = 100_000;

/// Runs `horizon` steps, feeding every transition to the observers.  An
/// observer error aborts the run with its time attached.
pub fn run_walk<R: Rng>(
    state: &mut ReinforcementState,
    horizon: u64,
    rng: &mut R,
    observers: &mut [&mut dyn Observer],
    retention: PathRetention,
) -> Result<Option<PathRecord>, SimError> {
    let keep = match retention {
        PathRetention::Full => true,
        PathRetention::Streaming => false,
        PathRetention::Auto => horizon < STREAMING_THRESHOLD,
    };
    let mut path = if keep {
        let mut v = Vec::with_capacity(horizon as usize + 1);
        v.push(state.position());
        Some(v)
    } else {
        None
    };
    for obs in observers.iter_mut() {
        obs.begin(state).map_err(|message| SimError::Observer {
            time: state.time(),
            message,
        })?;
    }
    for _ in 0..horizon {
        let ev = state.step(rng);
        if let Some(p) = path.as_mut() {
            p.push(ev.to);
        }
        for obs in observers.iter_mut() {
            obs.on_step(state, &ev)
                .map_err(|message| SimError::Observer {
                    time: state.time(),
                    message,
                })?;
        }
    }
    Ok(path.map(|vertices| PathRecord { vertices }))
}

/// A finite path as its vertex sequence; `vertices[t]` is the position at
/// time `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub vertices: Vec<VertexId>,
}

impl PathRecord {
    pub fn new(vertices: Vec<VertexId>) -> Self {
        PathRecord { vertices }
    }

    pub fn steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn start(&self) -> Option<VertexId> {
        self.vertices.first().copied()
    }

    pub fn end(&self) -> Option<VertexId> {
        self.vertices.last().copied()
    }

    pub fn validate(&self, ladder: &Ladder) -> Result<(), SimError> {
        if self.vertices.is_empty() {
            return Err(SimError::EmptyPath);
        }
        for (i, w) in self.vertices.windows(2).enumerate() {
            if ladder.edge_between(w[0], w[1]).is_none() {
                return Err(SimError::NotAPath {
                    index: i,
                    from: w[0].0,
                    to: w[1].0,
                });
            }
        }
        Ok(())
    }

    /// Traversed edge ids, one per step.
    pub fn edges(&self, ladder: &Ladder) -> Result<Vec<EdgeId>, SimError> {
        self.validate(ladder)?;
        Ok(self
            .vertices
            .windows(2)
            .map(|w| ladder.edge_between(w[0], w[1]).expect("validated"))
            .collect())
    }
}

/// Crossing counts of a path.  In the multigraph of counts every vertex has
/// even degree except possibly the two path endpoints.
pub fn crossing_counts(ladder: &Ladder, path: &PathRecord) -> Result<EdgeCounts, SimError> {
    let mut out = EdgeCounts::default();
    for e in path.edges(ladder)? {
        out.increment(e);
    }
    Ok(out)
}

fn validate_a(a: &BigRational) -> Result<(), SimError> {
    if a.is_positive() {
        Ok(())
    } else {
        Err(SimError::BadInitialWeightExact(rational_to_string(a)))
    }
}

/// Exact probability that the reinforced walk started at `path.vertices[0]`
/// with initial counts `initial` traces exactly this path.
pub fn path_probability_exact(
    ladder: &Ladder,
    a: &BigRational,
    path: &PathRecord,
    initial: &EdgeCounts,
) -> Result<BigRational, SimError> {
    validate_a(a)?;
    path.validate(ladder)?;
    for &e in initial.counts.keys() {
        if !ladder.contains_edge(e) {
            return Err(SimError::BadInitialCounts(e.0));
        }
    }
    let mut counts: HashMap<EdgeId, u64> = initial
        .counts
        .iter()
        .map(|(&e, &k)| (e, k))
        .collect();
    let mut prob = BigRational::from_integer(1.into());
    for w in path.vertices.windows(2) {
        let edge = ladder.edge_between(w[0], w[1]).expect("validated");
        let mut den = BigRational::zero();
        for (e, _) in ladder.incident_edges(w[0])? {
            let k = counts.get(&e).copied().unwrap_or(0);
            den += a + BigRational::from_integer(BigInt::from(k));
        }
        let k = counts.get(&edge).copied().unwrap_or(0);
        let num = a + BigRational::from_integer(BigInt::from(k));
        prob *= num / den;
        *counts.entry(edge).or_insert(0) += 1;
    }
    Ok(prob)
}

/// Two paths with equal crossing counts and endpoint but different exact
/// probabilities (should never exist).
#[derive(Debug, Clone)]
pub struct ExchangeabilityViolation {
    pub witness: Vec<VertexId>,
    pub witness_probability: String,
    pub other: Vec<VertexId>,
    pub other_probability: String,
}

#[derive(Debug, Clone)]
pub struct ExchangeabilityReport {
    /// Paths enumerated, all lengths `1..=max_len` combined.
    pub total_paths: usize,
    /// Distinct (crossing counts, endpoint) classes seen.
    pub groups: usize,
    pub violations: Vec<ExchangeabilityViolation>,
}

impl ExchangeabilityReport {
    pub fn all_equal(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Enumerates every path from the start vertex up to `max_len` steps and
/// verifies that the exact path probability depends only on the pair
/// (crossing counts, endpoint).  Errors out after `cap` recorded paths.
pub fn exchangeability_check(
    ladder: &Ladder,
    a: &BigRational,
    max_len: usize,
    cap: usize,
) -> Result<ExchangeabilityReport, SimError> {
    validate_a(a)?;
    struct Group {
        prob: BigRational,
        witness: Vec<VertexId>,
    }
    type Key = (Vec<(usize, u64)>, usize);
    let mut groups: HashMap<Key, Group> = HashMap::new();
    let mut report = ExchangeabilityReport {
        total_paths: 0,
        groups: 0,
        violations: Vec::new(),
    };

    // iterative depth-first enumeration with undo
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut path = vec![ladder.start()];
    let mut prob_stack = vec![BigRational::from_integer(1.into())];
    // frames hold the not-yet-tried neighbors of each prefix
    let mut frames: Vec<Vec<(EdgeId, VertexId)>> = vec![ladder.incident_edges(ladder.start())?];

    loop {
        let at_max = frames.len() > max_len;
        let Some(frame) = frames.last_mut() else {
            break;
        };
        if at_max || frame.is_empty() {
            frames.pop();
            if let Some(last) = path.pop() {
                if path.is_empty() {
                    break;
                }
                let e = ladder.edge_between(*path.last().unwrap(), last).unwrap();
                let slot = counts.get_mut(&e.0).unwrap();
                *slot -= 1;
                if *slot == 0 {
                    counts.remove(&e.0);
                }
            }
            prob_stack.pop();
            continue;
        }
        let (e, v) = frame.pop().unwrap();
        let cur = *path.last().unwrap();
        let mut den = BigRational::zero();
        for (f, _) in ladder.incident_edges(cur)? {
            let k = counts.get(&f.0).copied().unwrap_or(0);
            den += a + BigRational::from_integer(BigInt::from(k));
        }
        let k = counts.get(&e.0).copied().unwrap_or(0);
        let p = prob_stack.last().unwrap() * (a + BigRational::from_integer(BigInt::from(k))) / den;
        *counts.entry(e.0).or_insert(0) += 1;
        path.push(v);
        prob_stack.push(p.clone());
        frames.push(ladder.incident_edges(v)?);

        report.total_paths += 1;
        if report.total_paths > cap {
            return Err(SimError::EnumerationOverflow { cap });
        }
        let key: Key = (
            counts.iter().map(|(&e, &k)| (e, k)).collect(),
            v.0,
        );
        match groups.get(&key) {
            None => {
                groups.insert(
                    key,
                    Group {
                        prob: p,
                        witness: path.clone(),
                    },
                );
            }
            Some(g) => {
                if g.prob != p {
                    report.violations.push(ExchangeabilityViolation {
                        witness: g.witness.clone(),
                        witness_probability: rational_to_string(&g.prob),
                        other: path.clone(),
                        other_probability: rational_to_string(&p),
                    });
                }
            }
        }
    }
    report.groups = groups.len();
    Ok(report)
}
