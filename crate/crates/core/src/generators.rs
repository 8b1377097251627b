//! Random series-parallel and almost-series-parallel task graph
//! generation, attribute augmentation, and workflow-JSON ingestion.
//!
//! Series-parallel graphs grow from a single edge by node insertions
//! (series) and edge duplications (parallel) at a configurable ratio;
//! redundant parallel edges are merged at the end. Almost-SP graphs add
//! k extra edges oriented along a random topological order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::platform::TaskAttributes;
use crate::taskgraph::{merge_duplicate_edges, Edge, GraphError, NodeId, TaskGraph, DEFAULT_EDGE_BYTES};

/// Default rate used to turn workflow runtimes into operation counts.
pub const DEFAULT_REFERENCE_RATE: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_tasks: usize,
    /// Series : parallel operation weights.
    pub series_parallel_ratio: (u32, u32),
    pub extra_edges: usize,
    pub edge_bytes: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_tasks: 2,
            series_parallel_ratio: (1, 2),
            extra_edges: 0,
            edge_bytes: DEFAULT_EDGE_BYTES,
            seed: 0,
        }
    }
}

/// Attribute distributions: complexity and streamability are lognormal,
/// parallelizability is 1 with `perfect_parallel_prob` else uniform, and
/// area is proportional to complexity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeDistribution {
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,
    pub perfect_parallel_prob: f64,
    pub area_per_complexity: f64,
}

impl Default for AttributeDistribution {
    fn default() -> Self {
        AttributeDistribution {
            lognormal_mu: 2.0,
            lognormal_sigma: 0.5,
            perfect_parallel_prob: 0.5,
            area_per_complexity: 10.0,
        }
    }
}

/// One recorded construction step of a series-parallel graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpOp {
    /// Node `new_node` inserted on `edge`, splitting it in two.
    Series { edge: (NodeId, NodeId), new_node: NodeId },
    /// `edge` duplicated.
    Parallel { edge: (NodeId, NodeId) },
}

/// Construction trace: ground truth that the emitted graph is
/// series-parallel, kept for decomposition oracle tests.
#[derive(Clone, Debug, Default)]
pub struct SpTrace {
    pub ops: Vec<SpOp>,
}

/// Grows a random series-parallel DAG from a single edge 0 -> 1 until it
/// has `cfg.n_tasks` nodes, then merges duplicate parallel edges. Node 0
/// is always the source and node 1 the sink. Deterministic per seed.
pub fn random_sp_graph(cfg: &GenConfig) -> (TaskGraph, SpTrace) {
    assert!(cfg.n_tasks >= 2, "a series-parallel graph has at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (series_w, parallel_w) = cfg.series_parallel_ratio;
    assert!(series_w >= 1 && parallel_w >= 1, "ratio components must be >= 1");
    let total_w = (series_w + parallel_w) as f64;

    let mut n = 2usize;
    let mut edges: Vec<(NodeId, NodeId)> = vec![(NodeId(0), NodeId(1))];
    let mut trace = SpTrace::default();
    while n < cfg.n_tasks {
        let pick = rng.gen_range(0..edges.len());
        let (u, v) = edges[pick];
        if rng.gen_range(0.0..total_w) < series_w as f64 {
            let w = NodeId(n);
            n += 1;
            edges[pick] = (u, w);
            edges.push((w, v));
            trace.ops.push(SpOp::Series { edge: (u, v), new_node: w });
        } else {
            edges.push((u, v));
            trace.ops.push(SpOp::Parallel { edge: (u, v) });
        }
    }

    let raw: Vec<Edge> = edges
        .into_iter()
        .map(|(src, dst)| Edge { src, dst, bytes: cfg.edge_bytes })
        .collect();
    let merged = merge_duplicate_edges(raw);
    let attrs = vec![TaskAttributes::default(); n];
    let g = TaskGraph::new(attrs, merged).expect("generated endpoints are in range");
    (g, trace)
}

/// Inserts `k` extra edges between uniformly drawn distinct node pairs,
/// oriented along a random topological order of `g`, skipping duplicates
/// with a bounded retry budget. New edges carry the graph's largest
/// existing edge volume (or the default volume on edgeless graphs), so
/// the result stays acyclic and simple.
pub fn add_random_edges(g: &TaskGraph, k: usize, seed: u64) -> Result<TaskGraph, GraphError> {
    if k == 0 {
        return Ok(g.clone());
    }
    let n = g.node_count();
    let available = n * (n - 1) / 2 - g.edges().len();
    if k > available {
        return Err(GraphError::TooDense { requested: k, available });
    }
    let order = g.random_topological_order(seed)?;
    let mut pos = vec![0usize; n];
    for (i, v) in order.iter().enumerate() {
        pos[v.0] = i;
    }
    let bytes = g.edges().iter().map(|e| e.bytes).max().unwrap_or(DEFAULT_EDGE_BYTES);

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut present: std::collections::HashSet<(NodeId, NodeId)> =
        g.edges().iter().map(|e| (e.src, e.dst)).collect();
    let mut edges = g.edges().to_vec();
    let mut placed = 0;
    let mut retries = 0usize;
    let retry_budget = 1000 + 100 * k;
    while placed < k {
        let a = NodeId(rng.gen_range(0..n));
        let b = NodeId(rng.gen_range(0..n));
        if a == b {
            continue;
        }
        let (src, dst) = if pos[a.0] < pos[b.0] { (a, b) } else { (b, a) };
        if present.contains(&(src, dst)) {
            retries += 1;
            if retries > retry_budget {
                return Err(GraphError::TooDense { requested: k, available });
            }
            continue;
        }
        present.insert((src, dst));
        edges.push(Edge { src, dst, bytes });
        placed += 1;
    }
    let attrs: Vec<TaskAttributes> = g.node_ids().map(|v| *g.attrs(v)).collect();
    let names: Vec<Option<String>> =
        g.node_ids().map(|v| g.name(v).map(str::to_string)).collect();
    TaskGraph::new_named(attrs, names, edges)
}

/// Replaces every task's attributes with fresh draws from `dist`.
/// Deterministic per seed; per task the draw order is complexity,
/// streamability, then parallelizability.
pub fn augment_attributes(g: &TaskGraph, dist: &AttributeDistribution, seed: u64) -> TaskGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = LogNormal::new(dist.lognormal_mu, dist.lognormal_sigma)
        .expect("sigma is validated positive");
    let attrs: Vec<TaskAttributes> = g
        .node_ids()
        .map(|_| {
            let complexity = lognormal.sample(&mut rng);
            sample_accel(&mut rng, &lognormal, dist, complexity)
        })
        .collect();
    rebuild(g, attrs)
}

/// Redraws parallelizability, streamability and area but keeps each
/// task's existing complexity; used for ingested workflows whose
/// complexity comes from measured runtimes.
pub fn augment_accel_attributes(
    g: &TaskGraph,
    dist: &AttributeDistribution,
    seed: u64,
) -> TaskGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = LogNormal::new(dist.lognormal_mu, dist.lognormal_sigma)
        .expect("sigma is validated positive");
    let attrs: Vec<TaskAttributes> = g
        .node_ids()
        .map(|v| sample_accel(&mut rng, &lognormal, dist, g.attrs(v).complexity))
        .collect();
    rebuild(g, attrs)
}

fn sample_accel(
    rng: &mut ChaCha8Rng,
    lognormal: &LogNormal<f64>,
    dist: &AttributeDistribution,
    complexity: f64,
) -> TaskAttributes {
    let streamability = lognormal.sample(rng);
    let parallelizability = if rng.gen_bool(dist.perfect_parallel_prob) {
        1.0
    } else {
        rng.gen_range(0.0..=1.0)
    };
    TaskAttributes {
        complexity,
        parallelizability,
        streamability,
        area: dist.area_per_complexity * complexity,
    }
}

fn rebuild(g: &TaskGraph, attrs: Vec<TaskAttributes>) -> TaskGraph {
    let names: Vec<Option<String>> =
        g.node_ids().map(|v| g.name(v).map(str::to_string)).collect();
    TaskGraph::new_named(attrs, names, g.edges().to_vec()).expect("same topology")
}

/// Full generation pipeline: series-parallel growth plus `extra_edges`
/// random insertions. Attributes stay at their defaults; augment
/// separately.
pub fn generate(cfg: &GenConfig) -> Result<TaskGraph, GraphError> {
    let (g, _) = random_sp_graph(cfg);
    add_random_edges(&g, cfg.extra_edges, cfg.seed.wrapping_add(0x5eed))
}

// ---------------------------------------------------------------------
// Workflow ingestion

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("workflow JSON: {0}")]
    Parse(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("task {task:?} consumes file {file:?} that no task produces")]
    DanglingFile { task: String, file: String },
    #[error("file {file:?} is produced by both {first:?} and {second:?}")]
    MultipleProducers { file: String, first: String, second: String },
    #[error("task {0:?} declares neither runtime_seconds nor operations")]
    MissingCost(String),
    #[error("file {file:?} of task {task:?} has zero size")]
    ZeroSizeFile { task: String, file: String },
    #[error("ingested workflow is invalid: {0}")]
    InvalidGraph(String),
}

#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    /// Operations per second assumed when deriving complexity from a
    /// declared runtime.
    pub reference_rate: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { reference_rate: DEFAULT_REFERENCE_RATE }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowDoc {
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    tasks: Vec<WorkflowTask>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowTask {
    id: String,
    #[serde(default)]
    #[allow(dead_code)]
    parents: Option<Vec<String>>,
    #[serde(default)]
    #[allow(dead_code)]
    children: Option<Vec<String>>,
    #[serde(default)]
    runtime_seconds: Option<f64>,
    #[serde(default)]
    operations: Option<f64>,
    #[serde(default)]
    files: Vec<WorkflowFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowFile {
    name: String,
    link: FileLink,
    size_bytes: u64,
}

#[derive(Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum FileLink {
    Input,
    Output,
}

/// Ingests a workflow description: one task per entry, one edge per
/// producer-to-consumer file relation with the file's byte size
/// (duplicate pairs keep the larger file). Complexity derives from
/// declared operation counts, or from runtime at `reference_rate`;
/// parallelizability and streamability are left at neutral defaults for
/// later augmentation. Dependency structure comes exclusively from file
/// relations; `parents`/`children` fields are accepted as metadata.
pub fn ingest_workflow(json: &str, opts: &IngestOptions) -> Result<TaskGraph, WorkflowError> {
    let doc: WorkflowDoc =
        serde_json::from_str(json).map_err(|e| WorkflowError::Parse(e.to_string()))?;

    let mut index = std::collections::HashMap::new();
    for (i, t) in doc.tasks.iter().enumerate() {
        if index.insert(t.id.clone(), i).is_some() {
            return Err(WorkflowError::DuplicateTask(t.id.clone()));
        }
    }

    // Producer of every file name.
    let mut producer: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, t) in doc.tasks.iter().enumerate() {
        for f in &t.files {
            if f.link == FileLink::Output {
                if f.size_bytes == 0 {
                    return Err(WorkflowError::ZeroSizeFile {
                        task: t.id.clone(),
                        file: f.name.clone(),
                    });
                }
                if let Some(&first) = producer.get(f.name.as_str()) {
                    return Err(WorkflowError::MultipleProducers {
                        file: f.name.clone(),
                        first: doc.tasks[first].id.clone(),
                        second: t.id.clone(),
                    });
                }
                producer.insert(&f.name, i);
            }
        }
    }

    let mut edges = Vec::new();
    let mut input_bytes = vec![0u64; doc.tasks.len()];
    for (i, t) in doc.tasks.iter().enumerate() {
        for f in &t.files {
            if f.link != FileLink::Input {
                continue;
            }
            if f.size_bytes == 0 {
                return Err(WorkflowError::ZeroSizeFile {
                    task: t.id.clone(),
                    file: f.name.clone(),
                });
            }
            input_bytes[i] += f.size_bytes;
            let &src = producer.get(f.name.as_str()).ok_or_else(|| {
                WorkflowError::DanglingFile { task: t.id.clone(), file: f.name.clone() }
            })?;
            edges.push(Edge { src: NodeId(src), dst: NodeId(i), bytes: f.size_bytes });
        }
    }
    let edges = merge_duplicate_edges(edges);

    let mut attrs = Vec::with_capacity(doc.tasks.len());
    let mut names = Vec::with_capacity(doc.tasks.len());
    for (i, t) in doc.tasks.iter().enumerate() {
        let operations = match (t.operations, t.runtime_seconds) {
            (Some(ops), _) => ops,
            (None, Some(rt)) => rt * opts.reference_rate,
            (None, None) => return Err(WorkflowError::MissingCost(t.id.clone())),
        };
        let denom = if input_bytes[i] > 0 { input_bytes[i] } else { DEFAULT_EDGE_BYTES };
        attrs.push(TaskAttributes {
            complexity: operations / denom as f64,
            ..Default::default()
        });
        names.push(Some(t.id.clone()));
    }

    let g = TaskGraph::new_named(attrs, names, edges)
        .map_err(|e| WorkflowError::InvalidGraph(e.to_string()))?;
    let violations = g.validate();
    if !violations.is_empty() {
        let msg =
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(WorkflowError::InvalidGraph(msg));
    }
    Ok(g)
}
