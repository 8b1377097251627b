//! Mapping algorithms: greedy decomposition mapping over pluggable
//! subgraph sets, the threshold/first-fit acceleration, the HEFT and
//! PEFT list schedulers, and a single-objective genetic algorithm.

mod ga;
mod greedy;
mod listsched;

pub use ga::{nsga2_map, GaConfig, GaRun};
pub use greedy::{decomposition_map, threshold_map};
pub use listsched::{heft, peft, ListScheduleRun};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::evaluator::{EvalConfig, Mapping};
use crate::platform::{Platform, UnitId};
use crate::spdag::{decompose, CutRule, TreeKind};
use crate::taskgraph::{NodeId, TaskGraph, DEFAULT_EDGE_BYTES};

/// Candidate subgraphs considered for joint remapping. Sets are sorted
/// node lists, deduplicated, listed in lexicographic order; every
/// singleton is present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphSet {
    subgraphs: Vec<Vec<NodeId>>,
}

impl SubgraphSet {
    pub fn new(sets: Vec<Vec<NodeId>>) -> Self {
        let mut subgraphs: Vec<Vec<NodeId>> = sets
            .into_iter()
            .map(|mut s| {
                s.sort();
                s.dedup();
                s
            })
            .filter(|s| !s.is_empty())
            .collect();
        subgraphs.sort();
        subgraphs.dedup();
        SubgraphSet { subgraphs }
    }

    pub fn subgraphs(&self) -> &[Vec<NodeId>] {
        &self.subgraphs
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    pub fn contains(&self, set: &[NodeId]) -> bool {
        self.subgraphs.binary_search_by(|s| s.as_slice().cmp(set)).is_ok()
    }
}

/// One candidate move: remap a subgraph (by index into the
/// [`SubgraphSet`]) onto a target unit. `expected_improvement` is the
/// estimate recorded at the candidate's last evaluation and goes stale
/// as other moves are applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveCandidate {
    pub subgraph: usize,
    pub target_unit: UnitId,
    pub expected_improvement: f64,
}

/// Greedy engine parameters. `gamma >= 1` controls the threshold
/// look-ahead (1 = first fit); `iteration_cap` defaults to the task
/// count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub gamma: f64,
    pub iteration_cap: Option<usize>,
    pub seed: u64,
    pub eval: EvalConfig,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig { gamma: 1.0, iteration_cap: None, seed: 0, eval: EvalConfig::default() }
    }
}

/// Outcome of a mapper run. `makespan` is the internal deterministic
/// cost of the final mapping; re-score with the reporting evaluator for
/// cross-algorithm comparisons.
#[derive(Clone, Debug)]
pub struct MapperRun {
    pub mapping: Mapping,
    pub makespan: f64,
    pub iterations: usize,
    pub eval_calls: u64,
}

/// The n singleton subgraphs.
pub fn single_node_subgraphs(g: &TaskGraph) -> SubgraphSet {
    SubgraphSet::new(g.node_ids().map(|v| vec![v]).collect())
}

/// Singletons plus, per decomposition tree node, the inner node set of
/// every series operation and the endpoint-inclusive node set of every
/// parallel operation. Virtual endpoint nodes are stripped.
pub fn series_parallel_subgraphs(g: &TaskGraph, cut_rule: CutRule, seed: u64) -> SubgraphSet {
    let n = g.node_count();
    let mut sets: Vec<Vec<NodeId>> = g.node_ids().map(|v| vec![v]).collect();
    let norm = match g.normalize_endpoints(DEFAULT_EDGE_BYTES) {
        Ok(norm) => norm,
        Err(_) => return SubgraphSet::new(sets), // empty graph: singletons only
    };
    if let Ok(forest) = decompose(&norm.graph, norm.start, cut_rule, seed) {
        for tree in &forest.trees {
            collect_operation_sets(tree, n, &mut sets);
        }
    }
    SubgraphSet::new(sets)
}

fn collect_operation_sets(tree: &crate::spdag::DecompTree, n: usize, out: &mut Vec<Vec<NodeId>>) {
    match &tree.kind {
        TreeKind::Leaf => {}
        TreeKind::Series(children) => {
            let (inner, _) = tree.tree_nodes();
            out.push(strip_virtual(inner, n));
            for c in children {
                collect_operation_sets(c, n, out);
            }
        }
        TreeKind::Parallel(children) => {
            let (_, with_endpoints) = tree.tree_nodes();
            out.push(strip_virtual(with_endpoints, n));
            for c in children {
                collect_operation_sets(c, n, out);
            }
        }
    }
}

fn strip_virtual(set: BTreeSet<NodeId>, n: usize) -> Vec<NodeId> {
    set.into_iter().filter(|v| v.0 < n).collect()
}

/// Serializable mapping with its provenance, the JSON surface of the
/// `map` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRecord {
    pub assignment: Vec<TaskAssignment>,
    pub algorithm: String,
    pub seed: u64,
    pub makespan: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskAssignment {
    pub task: usize,
    pub unit: usize,
}

impl MappingRecord {
    pub fn new(mapping: &Mapping, algorithm: &str, seed: u64, makespan: f64) -> Self {
        MappingRecord {
            assignment: mapping
                .units()
                .iter()
                .enumerate()
                .map(|(task, u)| TaskAssignment { task, unit: u.0 })
                .collect(),
            algorithm: algorithm.to_string(),
            seed,
            makespan,
        }
    }

    /// Reconstructs the mapping, requiring a total assignment over
    /// exactly the graph's tasks and known units.
    pub fn to_mapping(&self, g: &TaskGraph, p: &Platform) -> Result<Mapping, String> {
        let n = g.node_count();
        let mut units = vec![None; n];
        for a in &self.assignment {
            if a.task >= n {
                return Err(format!("task {} out of range (graph has {n} tasks)", a.task));
            }
            if a.unit >= p.unit_count() {
                return Err(format!("unit {} out of range", a.unit));
            }
            if units[a.task].replace(UnitId(a.unit)).is_some() {
                return Err(format!("task {} assigned twice", a.task));
            }
        }
        let mut out = Vec::with_capacity(n);
        for (task, u) in units.into_iter().enumerate() {
            out.push(u.ok_or_else(|| format!("task {task} unassigned"))?);
        }
        Ok(Mapping::from_units(out))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }
}

// Exhaustive mapping enumeration scored with the internal evaluator;
// the independent optimum oracle shared by the mapper tests.
#[cfg(test)]
pub(crate) mod testutil {
    use crate::evaluator::{EvalConfig, Evaluator, Mapping};
    use crate::platform::{Platform, UnitId};
    use crate::taskgraph::TaskGraph;

    pub fn brute_force_optimum(
        g: &TaskGraph,
        p: &Platform,
        eval: &EvalConfig,
    ) -> (f64, Mapping) {
        let evaluator = Evaluator::internal(g, p, eval);
        let n = g.node_count();
        let m = p.unit_count();
        let mut best = (f64::INFINITY, Mapping::all_default(g, p));
        let total = m.pow(n as u32);
        for code in 0..total {
            let mut units = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                units.push(UnitId(c % m));
                c /= m;
            }
            let cand = Mapping::from_units(units);
            let cost = evaluator.cost(&cand);
            if cost < best.0 {
                best = (cost, cand);
            }
        }
        best
    }
}
