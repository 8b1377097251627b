//! Series-parallel decomposition trees and a wavefront decomposition of
//! general DAGs into a forest of such trees.
//!
//! Decomposition grows a tree from the unique source: series growth
//! follows single-successor edges, parallel growth maintains a wavefront
//! of subtrees that merge once they share an end node. When a wavefront
//! cannot make progress the graph is not series-parallel and one active
//! subtree is cut off into the forest. On series-parallel inputs the
//! forest always contains exactly one tree.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskgraph::{NodeId, TaskGraph};

/// A tree endpoint: a graph node or the virtual marker that bounds the
/// outermost series operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Endpoint {
    Node(NodeId),
    Virtual,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Node(v) => write!(f, "{v}"),
            Endpoint::Virtual => write!(f, "*"),
        }
    }
}

/// Which active subtree a deadlocked wavefront cuts into the forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Uniform choice among the active subtrees, driven by the seed.
    Random,
    /// Cut the subtree with the fewest edges into its end node, ties
    /// broken by ascending (start, end) endpoints.
    SmallestOutsizeFirst,
}

/// Record of one cutting step: the wavefront's start node, the endpoint
/// pairs of all active subtrees at the deadlock, and the cut pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutEvent {
    pub at: NodeId,
    pub active: Vec<(Endpoint, Endpoint)>,
    pub cut: (Endpoint, Endpoint),
}

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("graph is empty")]
    Empty,
    #[error("expected single source {expected}, found sources {found:?}")]
    SourceMismatch { expected: NodeId, found: Vec<NodeId> },
    #[error("expected a single sink, found {0:?}")]
    MultipleSinks(Vec<NodeId>),
    #[error("graph is cyclic")]
    Cyclic,
}

/// One node of a decomposition tree. Series children form a chain of
/// endpoint-adjacent subtrees; parallel children all share the tree's
/// endpoints. `outsize` counts the edges of the subtree that end in the
/// tree's end node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompTree {
    start: NodeId,
    end: NodeId,
    outsize: usize,
    pub kind: TreeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeKind {
    Leaf,
    Series(Vec<DecompTree>),
    Parallel(Vec<DecompTree>),
}

impl DecompTree {
    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn end(&self) -> NodeId {
        self.end
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.start, self.end)
    }

    pub fn outsize(&self) -> usize {
        self.outsize
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, TreeKind::Leaf)
    }

    pub fn children(&self) -> &[DecompTree] {
        match &self.kind {
            TreeKind::Leaf => &[],
            TreeKind::Series(c) | TreeKind::Parallel(c) => c,
        }
    }

    /// All edges represented by the subtree, in leaf order.
    pub fn leaf_edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        self.collect_edges(&mut out);
        out
    }

    fn collect_edges(&self, out: &mut Vec<(NodeId, NodeId)>) {
        match &self.kind {
            TreeKind::Leaf => out.push((self.start, self.end)),
            TreeKind::Series(c) | TreeKind::Parallel(c) => {
                for t in c {
                    t.collect_edges(out);
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            TreeKind::Leaf => 1,
            TreeKind::Series(c) | TreeKind::Parallel(c) => c.iter().map(|t| t.leaf_count()).sum(),
        }
    }

    /// Node sets touched by the subtree: `(inner, with_endpoints)` where
    /// `inner` excludes the subtree's own endpoints.
    pub fn tree_nodes(&self) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
        let mut with_endpoints = BTreeSet::new();
        for (u, v) in self.leaf_edges() {
            with_endpoints.insert(u);
            with_endpoints.insert(v);
        }
        let mut inner = with_endpoints.clone();
        inner.remove(&self.start);
        inner.remove(&self.end);
        (inner, with_endpoints)
    }

    /// Recounts the edges ending in the tree's end node by traversal;
    /// equals `outsize()` on well-formed trees.
    pub fn recompute_outsize(&self) -> usize {
        self.leaf_edges().iter().filter(|&&(_, v)| v == self.end).count()
    }

    fn to_json_value(&self) -> serde_json::Value {
        match &self.kind {
            TreeKind::Leaf => serde_json::json!({
                "kind": "edge",
                "src": self.start.0,
                "dst": self.end.0,
            }),
            TreeKind::Series(c) => serde_json::json!({
                "kind": "S",
                "start": self.start.0,
                "end": self.end.0,
                "outsize": self.outsize,
                "children": c.iter().map(|t| t.to_json_value()).collect::<Vec<_>>(),
            }),
            TreeKind::Parallel(c) => serde_json::json!({
                "kind": "P",
                "start": self.start.0,
                "end": self.end.0,
                "outsize": self.outsize,
                "children": c.iter().map(|t| t.to_json_value()).collect::<Vec<_>>(),
            }),
        }
    }
}

/// Forest of decomposition trees. Trees appear in creation order: cut
/// subtrees first, the spanning tree grown from the source last. The
/// trees' leaf edges partition the decomposed graph's edge set.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompForest {
    pub trees: Vec<DecompTree>,
    pub cuts: Vec<CutEvent>,
    /// Elementary tree operations performed (leaf extensions, merges,
    /// cuts, wavefront openings); linear in the edge count.
    pub steps: usize,
}

impl DecompForest {
    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "trees": self.trees.iter().map(|t| t.to_json_value()).collect::<Vec<_>>(),
            "cuts": self.cuts,
            "steps": self.steps,
        });
        serde_json::to_string_pretty(&value).expect("forest serialization cannot fail")
    }

    /// Graphviz rendering with S/P/edge labels, for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph decomposition {\n  node [shape=box];\n");
        let mut next = 0usize;
        for (i, t) in self.trees.iter().enumerate() {
            writeln!(out, "  subgraph cluster_{i} {{ label=\"tree {i}\";").unwrap();
            Self::dot_tree(t, &mut next, &mut out);
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }

    fn dot_tree(t: &DecompTree, next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        let label = match &t.kind {
            TreeKind::Leaf => format!("{} -> {}", t.start, t.end),
            TreeKind::Series(_) => format!("S [{},{}]", t.start, t.end),
            TreeKind::Parallel(_) => format!("P [{},{}]", t.start, t.end),
        };
        let shape = if matches!(t.kind, TreeKind::Parallel(_)) { ", shape=ellipse" } else { "" };
        writeln!(out, "    t{id} [label=\"{label}\"{shape}];").unwrap();
        for c in t.children() {
            let cid = Self::dot_tree(c, next, out);
            writeln!(out, "    t{id} -> t{cid};").unwrap();
        }
        id
    }
}

/// Decomposes `g` into a forest of series-parallel decomposition trees.
///
/// `g` must be acyclic with `start` as its only source and a single
/// distinct sink (see `TaskGraph::normalize_endpoints`). Deterministic
/// for a fixed `(cut_rule, seed)`.
pub fn decompose(
    g: &TaskGraph,
    start: NodeId,
    cut_rule: CutRule,
    seed: u64,
) -> Result<DecompForest, DecompError> {
    if g.node_count() == 0 {
        return Err(DecompError::Empty);
    }
    let sources = g.sources();
    if sources != vec![start] {
        return Err(DecompError::SourceMismatch { expected: start, found: sources });
    }
    let sinks = g.sinks();
    if sinks.len() != 1 || sinks[0] == start {
        return Err(DecompError::MultipleSinks(sinks));
    }
    if g.bfs_order().is_err() {
        return Err(DecompError::Cyclic);
    }

    let mut builder = Builder {
        graph: g,
        end_node: sinks[0],
        expected_indeg: g.node_ids().map(|v| g.indegree(v)).collect(),
        consumed: vec![false; g.edges().len()],
        consumed_count: 0,
        final_edge_consumed: false,
        rng: ChaCha8Rng::seed_from_u64(seed),
        cut_rule,
        forest: Vec::new(),
        cuts: Vec::new(),
        steps: 0,
    };

    // Virtual in-edge to the start node arms its growth gate.
    builder.expected_indeg[start.0] += 1;
    let core = builder.grow_series(BuildTree::virtual_in(start));
    builder.forest.push(core);

    // A cut can strand the out-edges of a node no remaining subtree ends
    // at. Restart growth from such nodes until every edge is consumed;
    // this never fires on series-parallel inputs.
    while builder.consumed_count < g.edges().len() {
        let y = g
            .node_ids()
            .find(|&v| {
                g.out_edge_indices(v).iter().any(|&i| !builder.consumed[i])
                    && g.in_edge_indices(v).iter().all(|&i| builder.consumed[i])
            })
            .expect("acyclic remainder always has a ready node");
        builder.expected_indeg[y.0] = 1;
        let t = builder.grow_series(BuildTree::virtual_in(y));
        builder.forest.push(t);
    }

    let trees = builder.forest.iter().filter_map(finalize).collect();
    Ok(DecompForest { trees, cuts: builder.cuts, steps: builder.steps })
}

/// True iff the decomposition of `g` is a single tree. Requires
/// normalized endpoints; independent of cut rule and seed.
pub fn is_series_parallel(g: &TaskGraph) -> Result<bool, DecompError> {
    let sources = g.sources();
    let start = *sources.first().ok_or(DecompError::Empty)?;
    let forest = decompose(g, start, CutRule::SmallestOutsizeFirst, 0)?;
    Ok(forest.trees.len() == 1)
}

// Internal tree representation during growth; endpoints may be virtual.
#[derive(Clone, Debug)]
struct BuildTree {
    start: Endpoint,
    end: Endpoint,
    outsize: usize,
    edge_count: usize,
    kind: BuildKind,
}

#[derive(Clone, Debug)]
enum BuildKind {
    Leaf,
    Series(Vec<BuildTree>),
    Parallel(Vec<BuildTree>),
}

impl BuildTree {
    fn leaf(src: Endpoint, dst: Endpoint) -> Self {
        BuildTree { start: src, end: dst, outsize: 1, edge_count: 1, kind: BuildKind::Leaf }
    }

    fn virtual_in(v: NodeId) -> Self {
        Self::leaf(Endpoint::Virtual, Endpoint::Node(v))
    }

    fn key(&self) -> (Endpoint, Endpoint) {
        (self.start, self.end)
    }
}

// Series composition; flattens nested series so chains stay one node.
fn series(a: BuildTree, b: BuildTree) -> BuildTree {
    debug_assert_eq!(a.end, b.start);
    let start = a.start;
    let end = b.end;
    let outsize = b.outsize;
    let edge_count = a.edge_count + b.edge_count;
    let mut children = match a.kind {
        BuildKind::Series(c) => c,
        _ => vec![a],
    };
    match b.kind {
        BuildKind::Series(c) => children.extend(c),
        _ => children.push(b),
    }
    BuildTree { start, end, outsize, edge_count, kind: BuildKind::Series(children) }
}

// Parallel composition of same-endpoint trees; flattens nested parallels.
fn parallel(trees: Vec<BuildTree>) -> BuildTree {
    debug_assert!(trees.len() >= 2);
    let start = trees[0].start;
    let end = trees[0].end;
    let outsize = trees.iter().map(|t| t.outsize).sum();
    let edge_count = trees.iter().map(|t| t.edge_count).sum();
    let mut children = Vec::with_capacity(trees.len());
    for t in trees {
        debug_assert_eq!(t.key(), (start, end));
        match t.kind {
            BuildKind::Parallel(c) => children.extend(c),
            _ => children.push(t),
        }
    }
    BuildTree { start, end, outsize, edge_count, kind: BuildKind::Parallel(children) }
}

struct Builder<'g> {
    graph: &'g TaskGraph,
    end_node: NodeId,
    expected_indeg: Vec<usize>,
    consumed: Vec<bool>,
    consumed_count: usize,
    final_edge_consumed: bool,
    rng: ChaCha8Rng,
    cut_rule: CutRule,
    forest: Vec<BuildTree>,
    cuts: Vec<CutEvent>,
    steps: usize,
}

impl Builder<'_> {
    // Unconsumed out-edges of v; the sink additionally owns one virtual
    // out-edge to the end marker.
    fn pending_out(&self, v: NodeId) -> Vec<(Option<usize>, Endpoint)> {
        let mut out: Vec<(Option<usize>, Endpoint)> = self
            .graph
            .out_edge_indices(v)
            .iter()
            .filter(|&&i| !self.consumed[i])
            .map(|&i| (Some(i), Endpoint::Node(self.graph.edge(i).dst)))
            .collect();
        if v == self.end_node && !self.final_edge_consumed {
            out.push((None, Endpoint::Virtual));
        }
        out
    }

    fn take_edge(&mut self, v: NodeId, edge: Option<usize>, dst: Endpoint) -> BuildTree {
        match edge {
            Some(i) => {
                debug_assert!(!self.consumed[i]);
                self.consumed[i] = true;
                self.consumed_count += 1;
            }
            None => {
                debug_assert!(!self.final_edge_consumed);
                self.final_edge_consumed = true;
            }
        }
        self.steps += 1;
        BuildTree::leaf(Endpoint::Node(v), dst)
    }

    // Extends t while its end node's incoming edges are all inside t:
    // over single-successor edges directly, otherwise through a
    // recursively grown parallel subtree.
    fn grow_series(&mut self, mut t: BuildTree) -> BuildTree {
        loop {
            let v = match t.end {
                Endpoint::Virtual => break,
                Endpoint::Node(v) => v,
            };
            if self.expected_indeg[v.0] > t.outsize {
                break; // v has in-edges outside t: enclosing parallel op
            }
            let pending = self.pending_out(v);
            match pending.len() {
                0 => break,
                1 => {
                    let (edge, dst) = pending[0];
                    let leaf = self.take_edge(v, edge, dst);
                    t = series(t, leaf);
                }
                _ => {
                    let tp = self.grow_parallel(v);
                    t = series(t, tp);
                }
            }
        }
        t
    }

    // Grows a parallel operation rooted at v: all out-edges become
    // active subtrees; same-endpoint subtrees merge; when a full pass
    // changes nothing, one subtree is cut into the forest.
    fn grow_parallel(&mut self, v: NodeId) -> BuildTree {
        self.steps += 1;
        let mut wavefront: BTreeMap<(Endpoint, Endpoint), Vec<BuildTree>> = BTreeMap::new();
        for (edge, dst) in self.pending_out(v) {
            let leaf = self.take_edge(v, edge, dst);
            wavefront.entry(leaf.key()).or_default().push(leaf);
        }
        loop {
            loop {
                let mut changed = self.merge_pass(&mut wavefront);
                if wavefront.values().map(|g| g.len()).sum::<usize>() == 1 {
                    let (_, mut group) = wavefront.pop_first().unwrap();
                    return group.pop().unwrap();
                }
                changed |= self.grow_pass(&mut wavefront);
                if !changed {
                    break;
                }
            }
            self.cut_one(v, &mut wavefront);
        }
    }

    fn merge_pass(&mut self, wavefront: &mut BTreeMap<(Endpoint, Endpoint), Vec<BuildTree>>) -> bool {
        let mut changed = false;
        for group in wavefront.values_mut() {
            if group.len() >= 2 {
                let merged = parallel(std::mem::take(group));
                group.push(merged);
                self.steps += 1;
                changed = true;
            }
        }
        changed
    }

    fn grow_pass(&mut self, wavefront: &mut BTreeMap<(Endpoint, Endpoint), Vec<BuildTree>>) -> bool {
        let mut changed = false;
        let trees: Vec<BuildTree> = std::mem::take(wavefront).into_values().flatten().collect();
        for t in trees {
            let before = t.edge_count;
            let grown = self.grow_series(t);
            if grown.edge_count != before {
                changed = true;
            }
            wavefront.entry(grown.key()).or_default().push(grown);
        }
        changed
    }

    // Deadlocked wavefront: cut one active subtree into the forest and
    // release its end node's expected inputs. Completed subtrees (ending
    // at the virtual marker) are never cut.
    fn cut_one(&mut self, at: NodeId, wavefront: &mut BTreeMap<(Endpoint, Endpoint), Vec<BuildTree>>) {
        let active: Vec<(Endpoint, Endpoint)> =
            wavefront.values().flatten().map(|t| t.key()).collect();
        let keys: Vec<(Endpoint, Endpoint)> = wavefront
            .iter()
            .filter(|(k, _)| matches!(k.1, Endpoint::Node(_)))
            .map(|(k, _)| *k)
            .collect();
        debug_assert!(!keys.is_empty(), "wavefront cannot stall on completed subtrees only");
        let chosen = match self.cut_rule {
            CutRule::Random => keys[self.rng.gen_range(0..keys.len())],
            CutRule::SmallestOutsizeFirst => *keys
                .iter()
                .min_by_key(|k| (wavefront[*k][0].outsize, **k))
                .unwrap(),
        };
        let cut = wavefront.remove(&chosen).unwrap().pop().unwrap();
        if let Endpoint::Node(end) = cut.end {
            self.expected_indeg[end.0] -= cut.outsize;
        }
        self.cuts.push(CutEvent { at, active, cut: cut.key() });
        self.steps += 1;
        self.forest.push(cut);
    }
}

// Drops virtual leaves and converts to the public tree form, unwrapping
// operations left with a single child.
fn finalize(t: &BuildTree) -> Option<DecompTree> {
    match &t.kind {
        BuildKind::Leaf => match (t.start, t.end) {
            (Endpoint::Node(u), Endpoint::Node(v)) => Some(DecompTree {
                start: u,
                end: v,
                outsize: 1,
                kind: TreeKind::Leaf,
            }),
            _ => None,
        },
        BuildKind::Series(children) => {
            let kept: Vec<DecompTree> = children.iter().filter_map(finalize).collect();
            match kept.len() {
                0 => None,
                1 => kept.into_iter().next(),
                _ => {
                    let start = kept.first().unwrap().start;
                    let end = kept.last().unwrap().end;
                    let outsize = kept.last().unwrap().outsize;
                    Some(DecompTree { start, end, outsize, kind: TreeKind::Series(kept) })
                }
            }
        }
        BuildKind::Parallel(children) => {
            let mut kept: Vec<DecompTree> = children.iter().filter_map(finalize).collect();
            // Parallel children are a set; order them canonically.
            kept.sort_by_cached_key(|t| t.leaf_edges());
            match kept.len() {
                0 => None,
                1 => kept.into_iter().next(),
                _ => {
                    let start = kept[0].start;
                    let end = kept[0].end;
                    let outsize = kept.iter().map(|t| t.outsize).sum();
                    Some(DecompTree { start, end, outsize, kind: TreeKind::Parallel(kept) })
                }
            }
        }
    }
}
