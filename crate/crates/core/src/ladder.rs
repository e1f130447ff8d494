//! Multi-level ladder graphs.
//!
//! A ladder is built from a finite tree `G = (V, E)` by stacking copies of
//! `V` at levels `0, 1, 2, ...` and wiring level `i` to level `i+1` with one
//! "horizontal" edge per tree vertex.  The copies of the tree edges inside a
//! level are called "rungs".  The level of a vertex `(i, v)` is `i`; the
//! level of an edge is the minimum level of its endpoints.
//!
//! Ids are canonical and dense.  With `B = |E| + |V|` per level block:
//! vertex `(i, v)` has id `i * |V| + index(v)`, the rung at level `i` for
//! tree edge `j` has id `i * B + j`, and the horizontal above `(i, v)` has id
//! `i * B + |E| + index(v)`.  Rungs of a level therefore precede the
//! horizontals leaving it, and ids do not depend on the ladder depth, so a
//! finite ladder and a deeper or unbounded one agree on every shared item.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use thiserror::Error;

/// Vertex label in the underlying finite tree.
pub type TreeVertex = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("tree must have at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("duplicate tree vertex label {0}")]
    DuplicateVertex(TreeVertex),
    #[error("tree edge references unknown vertex {0}")]
    UnknownEndpoint(TreeVertex),
    #[error("self-loop at tree vertex {0}")]
    SelfLoop(TreeVertex),
    #[error("duplicate tree edge {{{0}, {1}}}")]
    DuplicateEdge(TreeVertex, TreeVertex),
    #[error("not a tree: {vertices} vertices require {} edges, got {edges}", vertices - 1)]
    EdgeCount { vertices: usize, edges: usize },
    #[error("not a tree: vertex {0} is unreachable from vertex {1}")]
    Disconnected(TreeVertex, TreeVertex),
    #[error("unknown preset '{0}' (expected segment-k, path-k, or star-k)")]
    UnknownPreset(String),
    #[error("start vertex {0} is not a tree vertex")]
    UnknownStart(TreeVertex),
    #[error("reference rung {{{0}, {1}}} is not a tree edge incident to the start vertex")]
    BadReferenceRung(TreeVertex, TreeVertex),
    #[error("unknown vertex id {0}")]
    UnknownVertexId(usize),
    #[error("unknown edge id {0}")]
    UnknownEdgeId(usize),
    #[error("operation requires a finite ladder")]
    NotFinite,
    #[error("ladder descriptor must set exactly one of preset, tree_file, tree")]
    AmbiguousTreeSource,
    #[error("failed to read tree file: {0}")]
    TreeFile(String),
    #[error("invalid depth: {0}")]
    BadDepth(String),
}

/// Finite tree over `u32` labels.  Vertex indices follow the input order of
/// the label list; tree edge indices follow the input order of the edge list.
#[derive(Debug, Clone)]
pub struct FiniteTree {
    labels: Vec<TreeVertex>,
    edges: Vec<(TreeVertex, TreeVertex)>,
    // vertex index -> (neighbor vertex index, tree edge index), ascending in
    // tree edge index by construction
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl FiniteTree {
    pub fn new(
        labels: Vec<TreeVertex>,
        edges: Vec<(TreeVertex, TreeVertex)>,
    ) -> Result<Self, GraphError> {
        if labels.len() < 2 {
            return Err(GraphError::TooFewVertices(labels.len()));
        }
        let mut seen = BTreeSet::new();
        for &v in &labels {
            if !seen.insert(v) {
                return Err(GraphError::DuplicateVertex(v));
            }
        }
        if edges.len() != labels.len() - 1 {
            return Err(GraphError::EdgeCount {
                vertices: labels.len(),
                edges: edges.len(),
            });
        }
        let index_of = |v: TreeVertex| labels.iter().position(|&u| u == v);
        let mut adjacency = vec![Vec::new(); labels.len()];
        let mut seen_edges = BTreeSet::new();
        for (j, &(u, v)) in edges.iter().enumerate() {
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            let iu = index_of(u).ok_or(GraphError::UnknownEndpoint(u))?;
            let iv = index_of(v).ok_or(GraphError::UnknownEndpoint(v))?;
            if !seen_edges.insert((iu.min(iv), iu.max(iv))) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            adjacency[iu].push((iv, j));
            adjacency[iv].push((iu, j));
        }
        let tree = FiniteTree {
            labels,
            edges,
            adjacency,
        };
        // With |E| = |V| - 1 already checked, connectivity rules out cycles.
        let dist = tree.distances_from(0);
        if let Some(i) = dist.iter().position(|&d| d == u32::MAX) {
            return Err(GraphError::Disconnected(tree.labels[i], tree.labels[0]));
        }
        Ok(tree)
    }

    /// Path on `k` vertices labeled `1..=k`.
    pub fn segment(k: u32) -> Result<Self, GraphError> {
        let labels: Vec<TreeVertex> = (1..=k).collect();
        let edges = (1..k).map(|i| (i, i + 1)).collect();
        Self::new(labels, edges)
    }

    /// Star with center `1` and `k` leaves labeled `2..=k+1`.
    pub fn star(k: u32) -> Result<Self, GraphError> {
        let labels: Vec<TreeVertex> = (1..=k + 1).collect();
        let edges = (2..=k + 1).map(|l| (1, l)).collect();
        Self::new(labels, edges)
    }

    /// Parses `segment-k`, `path-k` (alias), or `star-k`.
    pub fn preset(name: &str) -> Result<Self, GraphError> {
        let err = || GraphError::UnknownPreset(name.to_string());
        let (kind, num) = name.rsplit_once('-').ok_or_else(err)?;
        let k: u32 = num.parse().map_err(|_| err())?;
        match kind {
            "segment" | "path" if k >= 2 => Self::segment(k),
            "star" if k >= 1 => Self::star(k),
            _ => Err(err()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[TreeVertex] {
        &self.labels
    }

    pub fn edges(&self) -> &[(TreeVertex, TreeVertex)] {
        &self.edges
    }

    pub fn index_of(&self, label: TreeVertex) -> Option<usize> {
        self.labels.iter().position(|&u| u == label)
    }

    pub fn label(&self, index: usize) -> TreeVertex {
        self.labels[index]
    }

    /// `(neighbor vertex index, tree edge index)` pairs, ascending edge index.
    pub fn neighbors(&self, index: usize) -> &[(usize, usize)] {
        &self.adjacency[index]
    }

    /// BFS distances from a vertex index; `u32::MAX` marks unreachable.
    pub fn distances_from(&self, index: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.labels.len()];
        dist[index] = 0;
        let mut queue = std::collections::VecDeque::from([index]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Canonical dense vertex id: `level * |V| + tree vertex index`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct VertexId(pub usize);

/// Canonical dense edge id, level-major, rungs before horizontals.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Copy of tree edge `tree_edge` inside a level.
    Rung { tree_edge: usize },
    /// Edge from `(i, v)` up to `(i+1, v)` where `v` has index `tree_vertex`.
    Horizontal { tree_vertex: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Finite(u32),
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

/// The two color classes of a finite ladder, as vertex id lists.
#[derive(Debug, Clone)]
pub struct ParityClasses {
    pub even: Vec<VertexId>,
    pub odd: Vec<VertexId>,
}

/// Ladder over a finite tree, either cut at a finite depth or unbounded.
///
/// Unbounded ladders materialize levels lazily: queries are arithmetic on
/// ids, and the recorded frontier doubles whenever a caller asks for a level
/// beyond it.  Growth is append-only, so ids and adjacency never change.
#[derive(Debug)]
pub struct Ladder {
    tree: FiniteTree,
    depth: Depth,
    v_start: usize,
    reference_rung: usize,
    dist_from_start: Vec<u32>,
    materialized: AtomicU32,
}

impl Ladder {
    /// `reference_rung` is a tree edge index that must be incident to
    /// `v_start`; its level-0 copy is the reference edge.
    pub fn new(
        tree: FiniteTree,
        depth: Depth,
        v_start: usize,
        reference_rung: usize,
    ) -> Result<Self, GraphError> {
        if v_start >= tree.vertex_count() {
            return Err(GraphError::UnknownStart(v_start as TreeVertex));
        }
        let (u, v) = tree.edges[reference_rung];
        let start_label = tree.label(v_start);
        if u != start_label && v != start_label {
            return Err(GraphError::BadReferenceRung(u, v));
        }
        let dist_from_start = tree.distances_from(v_start);
        let initial = match depth {
            Depth::Finite(n) => n,
            Depth::Unbounded => 1,
        };
        Ok(Ladder {
            tree,
            depth,
            v_start,
            reference_rung,
            dist_from_start,
            materialized: AtomicU32::new(initial),
        })
    }

    /// Start vertex with defaults: first tree vertex, first incident edge.
    pub fn with_defaults(tree: FiniteTree, depth: Depth) -> Result<Self, GraphError> {
        let rung = tree.neighbors(0)[0].1;
        Self::new(tree, depth, 0, rung)
    }

    pub fn tree(&self) -> &FiniteTree {
        &self.tree
    }

    pub fn depth(&self) -> Depth {
        self.depth
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.depth, Depth::Finite(_))
    }

    fn tree_v(&self) -> usize {
        self.tree.vertex_count()
    }

    fn tree_e(&self) -> usize {
        self.tree.edge_count()
    }

    /// Edges plus vertices of the tree: the id block size of one level.
    pub fn block_size(&self) -> usize {
        self.tree_e() + self.tree_v()
    }

    pub fn start(&self) -> VertexId {
        VertexId(self.v_start)
    }

    /// Level-0 copy of the chosen tree edge at the start vertex.
    pub fn reference_edge(&self) -> EdgeId {
        EdgeId(self.reference_rung)
    }

    pub fn vertex_id(&self, level: u32, tree_index: usize) -> VertexId {
        VertexId(level as usize * self.tree_v() + tree_index)
    }

    pub fn rung_id(&self, level: u32, tree_edge: usize) -> EdgeId {
        EdgeId(level as usize * self.block_size() + tree_edge)
    }

    pub fn horizontal_id(&self, level: u32, tree_vertex: usize) -> EdgeId {
        EdgeId(level as usize * self.block_size() + self.tree_e() + tree_vertex)
    }

    fn split_vertex(&self, v: VertexId) -> (u32, usize) {
        ((v.0 / self.tree_v()) as u32, v.0 % self.tree_v())
    }

    fn split_edge(&self, e: EdgeId) -> (u32, EdgeKind) {
        let level = (e.0 / self.block_size()) as u32;
        let offset = e.0 % self.block_size();
        let kind = if offset < self.tree_e() {
            EdgeKind::Rung { tree_edge: offset }
        } else {
            EdgeKind::Horizontal {
                tree_vertex: offset - self.tree_e(),
            }
        };
        (level, kind)
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        match self.depth {
            Depth::Finite(n) => v.0 < (n as usize + 1) * self.tree_v(),
            Depth::Unbounded => true,
        }
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        let (level, kind) = self.split_edge(e);
        match self.depth {
            // a horizontal at level i climbs to i+1, so it needs i < n
            Depth::Finite(n) => match kind {
                EdgeKind::Rung { .. } => level <= n,
                EdgeKind::Horizontal { .. } => level < n,
            },
            Depth::Unbounded => true,
        }
    }

    pub fn level_of_vertex(&self, v: VertexId) -> Result<u32, GraphError> {
        if !self.contains_vertex(v) {
            return Err(GraphError::UnknownVertexId(v.0));
        }
        Ok(self.split_vertex(v).0)
    }

    pub fn level_of_edge(&self, e: EdgeId) -> Result<u32, GraphError> {
        if !self.contains_edge(e) {
            return Err(GraphError::UnknownEdgeId(e.0));
        }
        Ok(self.split_edge(e).0)
    }

    pub fn edge_kind(&self, e: EdgeId) -> EdgeKind {
        self.split_edge(e).1
    }

    /// Endpoints ordered by vertex id.
    pub fn edge_endpoints(&self, e: EdgeId) -> Result<(VertexId, VertexId), GraphError> {
        if !self.contains_edge(e) {
            return Err(GraphError::UnknownEdgeId(e.0));
        }
        let (level, kind) = self.split_edge(e);
        Ok(match kind {
            EdgeKind::Rung { tree_edge } => {
                let (u, v) = self.tree.edges[tree_edge];
                let iu = self.tree.index_of(u).expect("validated edge");
                let iv = self.tree.index_of(v).expect("validated edge");
                let a = self.vertex_id(level, iu.min(iv));
                let b = self.vertex_id(level, iu.max(iv));
                (a, b)
            }
            EdgeKind::Horizontal { tree_vertex } => (
                self.vertex_id(level, tree_vertex),
                self.vertex_id(level + 1, tree_vertex),
            ),
        })
    }

    /// Edge joining two vertices, if any.
    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        if !self.contains_vertex(u) || !self.contains_vertex(v) {
            return None;
        }
        let (lu, tu) = self.split_vertex(u);
        let (lv, tv) = self.split_vertex(v);
        if lu == lv {
            self.tree.adjacency[tu]
                .iter()
                .find(|&&(nb, _)| nb == tv)
                .map(|&(_, j)| self.rung_id(lu, j))
        } else if lv == lu + 1 && tu == tv {
            Some(self.horizontal_id(lu, tu))
        } else if lu == lv + 1 && tu == tv {
            Some(self.horizontal_id(lv, tv))
        } else {
            None
        }
    }

    fn has_up_edge(&self, level: u32) -> bool {
        match self.depth {
            Depth::Finite(n) => level < n,
            Depth::Unbounded => true,
        }
    }

    /// Incident `(edge, neighbor)` pairs in ascending edge id order: the
    /// horizontal below, the level's rungs, the horizontal above.
    pub fn incident_edges(&self, v: VertexId) -> Result<Vec<(EdgeId, VertexId)>, GraphError> {
        if !self.contains_vertex(v) {
            return Err(GraphError::UnknownVertexId(v.0));
        }
        let (level, tv) = self.split_vertex(v);
        self.ensure_level(level + 1);
        let mut out = Vec::with_capacity(self.tree.adjacency[tv].len() + 2);
        if level > 0 {
            out.push((
                self.horizontal_id(level - 1, tv),
                self.vertex_id(level - 1, tv),
            ));
        }
        for &(nb, j) in &self.tree.adjacency[tv] {
            out.push((self.rung_id(level, j), self.vertex_id(level, nb)));
        }
        if self.has_up_edge(level) {
            out.push((self.horizontal_id(level, tv), self.vertex_id(level + 1, tv)));
        }
        Ok(out)
    }

    /// Grows the materialized frontier to cover `level`, doubling so that
    /// repeated frontier hits cost amortized constant time.  No-op on finite
    /// ladders and for already covered levels.
    pub fn ensure_level(&self, level: u32) {
        if self.is_finite() {
            return;
        }
        let mut cur = self.materialized.load(Ordering::Relaxed);
        while cur < level {
            let next = level.max(cur.saturating_mul(2)).max(1);
            match self.materialized.compare_exchange(
                cur,
                next,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }

    /// Highest level currently covered: the fixed depth if finite.
    pub fn materialized_depth(&self) -> u32 {
        match self.depth {
            Depth::Finite(n) => n,
            Depth::Unbounded => self.materialized.load(Ordering::Relaxed),
        }
    }

    /// `(d+1) * |V|` vertices on levels `0..=d`.
    pub fn vertex_count_at(&self, depth: u32) -> usize {
        (depth as usize + 1) * self.tree_v()
    }

    /// `(d+1) * |E|` rungs plus `d * |V|` horizontals on levels `0..=d`.
    pub fn edge_count_at(&self, depth: u32) -> usize {
        (depth as usize + 1) * self.tree_e() + depth as usize * self.tree_v()
    }

    pub fn vertex_count(&self) -> Result<usize, GraphError> {
        match self.depth {
            Depth::Finite(n) => Ok(self.vertex_count_at(n)),
            Depth::Unbounded => Err(GraphError::NotFinite),
        }
    }

    pub fn edge_count(&self) -> Result<usize, GraphError> {
        match self.depth {
            Depth::Finite(n) => Ok(self.edge_count_at(n)),
            Depth::Unbounded => Err(GraphError::NotFinite),
        }
    }

    /// Parity of `(i, v)`: parity of `i` plus the tree distance from the
    /// start's tree vertex to `v`.  Every edge joins opposite classes.
    pub fn parity_of(&self, v: VertexId) -> Result<Parity, GraphError> {
        if !self.contains_vertex(v) {
            return Err(GraphError::UnknownVertexId(v.0));
        }
        let (level, tv) = self.split_vertex(v);
        if (level + self.dist_from_start[tv]) % 2 == 0 {
            Ok(Parity::Even)
        } else {
            Ok(Parity::Odd)
        }
    }

    /// Both color classes of a finite ladder, ascending vertex id.
    pub fn parity_classes(&self) -> Result<ParityClasses, GraphError> {
        let n = self.vertex_count()?;
        let mut classes = ParityClasses {
            even: Vec::new(),
            odd: Vec::new(),
        };
        for i in 0..n {
            let v = VertexId(i);
            match self.parity_of(v)? {
                Parity::Even => classes.even.push(v),
                Parity::Odd => classes.odd.push(v),
            }
        }
        Ok(classes)
    }

    /// Flat adjacency for vertices on levels `0..=depth`, including frontier
    /// edges that point past `depth` when the ladder continues beyond it.
    /// Rows are in ascending edge id order, matching `incident_edges`.
    pub fn adjacency_table(&self, depth: u32) -> AdjacencyTable {
        self.ensure_level(depth + 1);
        let nv = self.vertex_count_at(depth);
        let mut offsets = Vec::with_capacity(nv + 1);
        let mut entries = Vec::new();
        offsets.push(0u32);
        for v in 0..nv {
            for (e, u) in self
                .incident_edges(VertexId(v))
                .expect("vertex within depth")
            {
                entries.push((e.0 as u32, u.0 as u32));
            }
            offsets.push(entries.len() as u32);
        }
        AdjacencyTable {
            offsets,
            entries,
            depth,
        }
    }

    /// Descriptor echo used in run manifests.
    pub fn describe(&self) -> LadderDescription {
        LadderDescription {
            tree_vertices: self.tree.labels.clone(),
            tree_edges: self.tree.edges.clone(),
            depth: match self.depth {
                Depth::Finite(n) => serde_json::json!(n),
                Depth::Unbounded => serde_json::json!("unbounded"),
            },
            v_start: self.tree.label(self.v_start),
            reference_rung: self.tree.edges[self.reference_rung],
        }
    }
}

/// CSR adjacency over a bounded window of levels.  Entry pairs are
/// `(edge id, neighbor vertex id)`; neighbors one level past `depth` appear
/// when the underlying ladder continues, so a walker noticing its position
/// has level `> depth` must rebuild at a larger depth.
#[derive(Debug, Clone)]
pub struct AdjacencyTable {
    offsets: Vec<u32>,
    entries: Vec<(u32, u32)>,
    depth: u32,
}

impl AdjacencyTable {
    #[inline]
    pub fn row(&self, v: usize) -> &[(u32, u32)] {
        &self.entries[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn covers_vertex(&self, v: usize) -> bool {
        v + 1 < self.offsets.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// One past the largest edge id that can appear in the table.
    pub fn edge_id_bound(&self) -> usize {
        self.entries
            .iter()
            .map(|&(e, _)| e as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Serializable ladder facts echoed into manifests and sample metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderDescription {
    pub tree_vertices: Vec<TreeVertex>,
    pub tree_edges: Vec<(TreeVertex, TreeVertex)>,
    pub depth: serde_json::Value,
    pub v_start: TreeVertex,
    pub reference_rung: (TreeVertex, TreeVertex),
}

/// Tree given inline in a config or tree file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSpec {
    pub vertices: Vec<TreeVertex>,
    pub edges: Vec<(TreeVertex, TreeVertex)>,
}

/// Declarative ladder description: exactly one tree source, a depth, and
/// optional start vertex / reference rung overrides.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct LadderDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSpec>,
    #[serde(default)]
    pub depth: DepthSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_start: Option<TreeVertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_rung: Option<(TreeVertex, TreeVertex)>,
}

/// Depth in a config: a number, or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthSpec {
    Finite(u32),
    Unbounded,
}

impl Default for DepthSpec {
    fn default() -> Self {
        DepthSpec::Finite(10)
    }
}

impl std::str::FromStr for DepthSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unbounded" {
            Ok(DepthSpec::Unbounded)
        } else {
            s.parse::<u32>()
                .map(DepthSpec::Finite)
                .map_err(|_| GraphError::BadDepth(s.to_string()))
        }
    }
}

impl Serialize for DepthSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            DepthSpec::Finite(n) => ser.serialize_u32(*n),
            DepthSpec::Unbounded => ser.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for DepthSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        match &v {
            serde_json::Value::Number(n) if n.as_u64().is_some() => {
                let n = n.as_u64().unwrap();
                u32::try_from(n)
                    .map(DepthSpec::Finite)
                    .map_err(|_| serde::de::Error::custom(format!("depth {n} out of range")))
            }
            serde_json::Value::String(s) if s == "unbounded" => Ok(DepthSpec::Unbounded),
            other => Err(serde::de::Error::custom(format!(
                "depth must be a nonnegative integer or \"unbounded\", got {other}"
            ))),
        }
    }
}

impl From<DepthSpec> for Depth {
    fn from(d: DepthSpec) -> Depth {
        match d {
            DepthSpec::Finite(n) => Depth::Finite(n),
            DepthSpec::Unbounded => Depth::Unbounded,
        }
    }
}

impl LadderDescriptor {
    /// Builds the ladder.  `base_dir` anchors a relative `tree_file`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Ladder, GraphError> {
        let sources =
            self.preset.is_some() as u8 + self.tree_file.is_some() as u8 + self.tree.is_some() as u8;
        if sources != 1 {
            return Err(GraphError::AmbiguousTreeSource);
        }
        let tree = if let Some(name) = &self.preset {
            FiniteTree::preset(name)?
        } else if let Some(path) = &self.tree_file {
            let full = match base_dir {
                Some(dir) if Path::new(path).is_relative() => dir.join(path),
                _ => Path::new(path).to_path_buf(),
            };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| GraphError::TreeFile(format!("{}: {e}", full.display())))?;
            let spec: TreeSpec = serde_json::from_str(&text)
                .map_err(|e| GraphError::TreeFile(format!("{}: {e}", full.display())))?;
            FiniteTree::new(spec.vertices, spec.edges)?
        } else {
            let spec = self.tree.as_ref().unwrap();
            FiniteTree::new(spec.vertices.clone(), spec.edges.clone())?
        };

        let v_start = match self.v_start {
            Some(label) => tree
                .index_of(label)
                .ok_or(GraphError::UnknownStart(label))?,
            None => 0,
        };
        let rung = match self.reference_rung {
            Some((a, b)) => tree
                .edges()
                .iter()
                .position(|&(u, v)| (u, v) == (a, b) || (u, v) == (b, a))
                .ok_or(GraphError::BadReferenceRung(a, b))?,
            None => {
                let nbrs = tree.neighbors(v_start);
                if nbrs.is_empty() {
                    return Err(GraphError::UnknownStart(tree.label(v_start)));
                }
                nbrs[0].1
            }
        };
        Ladder::new(tree, self.depth.into(), v_start, rung)
    }

    pub fn from_preset(preset: &str, depth: DepthSpec) -> Self {
        LadderDescriptor {
            preset: Some(preset.to_string()),
            depth,
            ..Default::default()
        }
    }
}
