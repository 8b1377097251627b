//! Experiment sweeps: generate or ingest graphs, run a set of mapping
//! algorithms over them, and emit one aggregated CSV/JSON row per
//! (axis point, algorithm) cell.
//!
//! Every cell averages `repetitions` graphs. Mappings are re-scored with
//! the reporting evaluator so all algorithms compare on one metric; the
//! improvement column is the mean positive relative improvement over
//! the all-default mapping. Wall-clock time per mapping call is the
//! median of `timing_runs` in-process repetitions.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{relative_improvement, EvalConfig, Evaluator, Mapping};
use crate::generators::{
    add_random_edges, augment_accel_attributes, augment_attributes, ingest_workflow,
    random_sp_graph, AttributeDistribution, GenConfig, IngestOptions, DEFAULT_REFERENCE_RATE,
};
use crate::mappers::{
    decomposition_map, heft, nsga2_map, peft, series_parallel_subgraphs, single_node_subgraphs,
    threshold_map, GaConfig, MapperConfig,
};
use crate::platform::Platform;
use crate::spdag::CutRule;
use crate::taskgraph::{TaskGraph, DEFAULT_EDGE_BYTES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "single_node")]
    SingleNode,
    #[serde(rename = "series_parallel")]
    SeriesParallel,
    #[serde(rename = "sn_firstfit")]
    SnFirstFit,
    #[serde(rename = "sp_firstfit")]
    SpFirstFit,
    #[serde(rename = "heft")]
    Heft,
    #[serde(rename = "peft")]
    Peft,
    #[serde(rename = "nsga2")]
    Nsga2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::SingleNode,
        Algorithm::SeriesParallel,
        Algorithm::SnFirstFit,
        Algorithm::SpFirstFit,
        Algorithm::Heft,
        Algorithm::Peft,
        Algorithm::Nsga2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::SingleNode => "single_node",
            Algorithm::SeriesParallel => "series_parallel",
            Algorithm::SnFirstFit => "sn_firstfit",
            Algorithm::SpFirstFit => "sp_firstfit",
            Algorithm::Heft => "heft",
            Algorithm::Peft => "peft",
            Algorithm::Nsga2 => "nsga2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Where a sweep's graphs come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSource {
    /// Random series-parallel graphs (plus optional extra edges). The
    /// sweep axis is the task count, or the extra-edge count when
    /// `extra_edges` lists more than one value.
    Generated {
        sizes: Vec<usize>,
        #[serde(default = "default_extra_edges")]
        extra_edges: Vec<usize>,
        #[serde(default = "default_ratio")]
        series_parallel_ratio: (u32, u32),
        #[serde(default = "default_edge_bytes")]
        edge_bytes: u64,
        #[serde(default)]
        attributes: AttributeDistribution,
    },
    /// Workflow files; each file is one axis point. Ingested complexity
    /// is kept, accelerator attributes are augmented per repetition.
    Workflows {
        files: Vec<PathBuf>,
        #[serde(default = "default_reference_rate")]
        reference_rate: f64,
        #[serde(default)]
        attributes: AttributeDistribution,
    },
}

fn default_extra_edges() -> Vec<usize> {
    vec![0]
}

fn default_ratio() -> (u32, u32) {
    (1, 2)
}

fn default_edge_bytes() -> u64 {
    DEFAULT_EDGE_BYTES
}

fn default_reference_rate() -> f64 {
    DEFAULT_REFERENCE_RATE
}

fn default_repetitions() -> usize {
    30
}

fn default_timing_runs() -> usize {
    3
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    pub graphs: GraphSource,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Platform file; the built-in reference platform when absent.
    #[serde(default)]
    pub platform: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Threshold parameter of the first-fit variants.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Genetic algorithm parameters; its seed field is ignored (seeds
    /// derive from the sweep seed).
    #[serde(default)]
    pub ga: GaConfig,
    /// In-process repetitions per mapping call; the reported time is
    /// their median.
    #[serde(default = "default_timing_runs")]
    pub timing_runs: usize,
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        let spec: ExperimentSpec =
            serde_json::from_str(s).map_err(|e| BenchError::Spec(e.to_string()))?;
        if spec.algorithms.is_empty() {
            return Err(BenchError::Spec("algorithms must be nonempty".into()));
        }
        if spec.repetitions < 1 {
            return Err(BenchError::Spec("repetitions must be >= 1".into()));
        }
        Ok(spec)
    }

    /// Loads the spec's platform file, or the reference platform.
    pub fn load_platform(&self) -> Result<Platform, BenchError> {
        match &self.platform {
            None => Ok(Platform::reference()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| BenchError::Io(path.clone(), e.to_string()))?;
                Platform::from_json(&text)
                    .map_err(|e| BenchError::Spec(format!("{}: {e}", path.display())))
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}: {1}")]
    Io(PathBuf, String),
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("graph generation: {0}")]
    Generation(String),
    #[error("baseline makespan is not positive")]
    DegenerateBaseline,
}

/// One aggregated result cell.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub axis: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub makespan_baseline: f64,
    pub makespan_mapped: f64,
    pub rel_improvement: f64,
    pub mapper_ms: f64,
    pub eval_calls: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const CSV_HEADER: &'static str =
        "axis,algorithm,seed,makespan_baseline,makespan_mapped,rel_improvement,mapper_ms,eval_calls";

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(Self::CSV_HEADER.split(',')).expect("header");
        for r in &self.rows {
            wtr.write_record(&[
                r.axis.clone(),
                r.algorithm.name().to_string(),
                r.seed.to_string(),
                r.makespan_baseline.to_string(),
                r.makespan_mapped.to_string(),
                r.rel_improvement.to_string(),
                r.mapper_ms.to_string(),
                r.eval_calls.to_string(),
            ])
            .expect("row");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("utf8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialization cannot fail")
    }

    /// Mean of a row field over all rows of one algorithm.
    pub fn mean_improvement(&self, algo: Algorithm) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.algorithm == algo)
            .map(|r| r.rel_improvement)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

// splitmix64 finalizer; decorrelates derived seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn cell_seed(base: u64, axis: usize, rep: usize) -> u64 {
    mix(base ^ mix(axis as u64).wrapping_add(mix(rep as u64).rotate_left(17)))
}

/// One mapping algorithm applied to one graph: the mapping plus the
/// internal evaluation-call count.
pub fn run_algorithm(
    algo: Algorithm,
    g: &TaskGraph,
    p: &Platform,
    seed: u64,
    gamma: f64,
    ga: &GaConfig,
    eval: &EvalConfig,
) -> (Mapping, u64) {
    let mapper_cfg = MapperConfig { gamma, iteration_cap: None, seed, eval: *eval };
    match algo {
        Algorithm::SingleNode => {
            let set = single_node_subgraphs(g);
            let run = decomposition_map(g, p, &set, &mapper_cfg);
            (run.mapping, run.eval_calls)
        }
        Algorithm::SeriesParallel => {
            let set = series_parallel_subgraphs(g, CutRule::Random, seed);
            let run = decomposition_map(g, p, &set, &mapper_cfg);
            (run.mapping, run.eval_calls)
        }
        Algorithm::SnFirstFit => {
            let set = single_node_subgraphs(g);
            let run = threshold_map(g, p, &set, &mapper_cfg);
            (run.mapping, run.eval_calls)
        }
        Algorithm::SpFirstFit => {
            let set = series_parallel_subgraphs(g, CutRule::Random, seed);
            let run = threshold_map(g, p, &set, &mapper_cfg);
            (run.mapping, run.eval_calls)
        }
        Algorithm::Heft => (heft(g, p).mapping, 0),
        Algorithm::Peft => (peft(g, p).mapping, 0),
        Algorithm::Nsga2 => {
            let cfg = GaConfig { seed, ..ga.clone() };
            let run = nsga2_map(g, p, &cfg);
            (run.mapping, run.eval_calls)
        }
    }
}

struct AxisPoint {
    label: String,
    graphs: Vec<TaskGraph>,
}

fn build_axis_points(spec: &ExperimentSpec) -> Result<Vec<AxisPoint>, BenchError> {
    match &spec.graphs {
        GraphSource::Generated {
            sizes,
            extra_edges,
            series_parallel_ratio,
            edge_bytes,
            attributes,
        } => {
            let mut points = Vec::new();
            let mut axis_idx = 0;
            for &n in sizes {
                for &k in extra_edges {
                    let label = if extra_edges.len() <= 1 {
                        n.to_string()
                    } else if sizes.len() == 1 {
                        k.to_string()
                    } else {
                        format!("n{n}_k{k}")
                    };
                    let mut graphs = Vec::with_capacity(spec.repetitions);
                    for rep in 0..spec.repetitions {
                        let seed = cell_seed(spec.seed, axis_idx, rep);
                        let cfg = GenConfig {
                            n_tasks: n,
                            series_parallel_ratio: *series_parallel_ratio,
                            extra_edges: k,
                            edge_bytes: *edge_bytes,
                            seed,
                        };
                        let (g, _) = random_sp_graph(&cfg);
                        let g = add_random_edges(&g, k, seed.wrapping_add(0x5eed))
                            .map_err(|e| BenchError::Generation(e.to_string()))?;
                        graphs.push(augment_attributes(&g, attributes, mix(seed)));
                    }
                    points.push(AxisPoint { label, graphs });
                    axis_idx += 1;
                }
            }
            Ok(points)
        }
        GraphSource::Workflows { files, reference_rate, attributes } => {
            let opts = IngestOptions { reference_rate: *reference_rate };
            let mut points = Vec::new();
            for (axis_idx, path) in files.iter().enumerate() {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| BenchError::Io(path.clone(), e.to_string()))?;
                let base = ingest_workflow(&text, &opts)
                    .map_err(|e| BenchError::Generation(format!("{}: {e}", path.display())))?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                let graphs = (0..spec.repetitions)
                    .map(|rep| {
                        let seed = cell_seed(spec.seed, axis_idx, rep);
                        augment_accel_attributes(&base, attributes, seed)
                    })
                    .collect();
                points.push(AxisPoint { label, graphs });
            }
            Ok(points)
        }
    }
}

/// Runs the sweep: per (axis point, algorithm) one row averaging the
/// positive relative improvement, mapped/baseline makespans, mapper
/// wall-clock milliseconds and evaluation-call counts over repetitions.
/// Fully reproducible per seed set, except wall-clock cells.
pub fn run_experiment(
    spec: &ExperimentSpec,
    platform: &Platform,
) -> Result<ResultTable, BenchError> {
    let points = build_axis_points(spec)?;
    let mut rows = Vec::new();
    for (axis_idx, point) in points.iter().enumerate() {
        // Baselines are shared by all algorithms of the cell.
        let mut baselines = Vec::with_capacity(point.graphs.len());
        for g in &point.graphs {
            let reporting = Evaluator::reporting(g, platform, &spec.eval);
            let b = reporting.cost(&Mapping::all_default(g, platform));
            if !(b > 0.0) {
                return Err(BenchError::DegenerateBaseline);
            }
            baselines.push(b);
        }
        for &algo in &spec.algorithms {
            let mut sum_baseline = 0.0;
            let mut sum_mapped = 0.0;
            let mut sum_impr = 0.0;
            let mut sum_ms = 0.0;
            let mut sum_calls = 0.0;
            for (rep, g) in point.graphs.iter().enumerate() {
                let seed = cell_seed(spec.seed ^ 0xa1_60_17_4d, axis_idx, rep);
                let mut timings = Vec::with_capacity(spec.timing_runs);
                let mut outcome = None;
                for _ in 0..spec.timing_runs.max(1) {
                    let t0 = Instant::now();
                    let r = run_algorithm(algo, g, platform, seed, spec.gamma, &spec.ga, &spec.eval);
                    timings.push(t0.elapsed().as_secs_f64() * 1e3);
                    outcome = Some(r);
                }
                let (mapping, calls) = outcome.expect("at least one timing run");
                timings.sort_by(f64::total_cmp);
                let median_ms = timings[timings.len() / 2];

                let reporting = Evaluator::reporting(g, platform, &spec.eval);
                let mapped = reporting.cost(&mapping);
                let impr = relative_improvement(baselines[rep], mapped)
                    .map_err(|_| BenchError::DegenerateBaseline)?;
                sum_baseline += baselines[rep];
                sum_mapped += mapped;
                sum_impr += impr;
                sum_ms += median_ms;
                sum_calls += calls as f64;
            }
            let reps = point.graphs.len() as f64;
            rows.push(ResultRow {
                axis: point.label.clone(),
                algorithm: algo,
                seed: spec.seed,
                makespan_baseline: sum_baseline / reps,
                makespan_mapped: sum_mapped / reps,
                rel_improvement: sum_impr / reps,
                mapper_ms: sum_ms / reps,
                eval_calls: sum_calls / reps,
            });
        }
    }
    Ok(ResultTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(algos: Vec<Algorithm>, sizes: Vec<usize>, reps: usize) -> ExperimentSpec {
        ExperimentSpec {
            algorithms: algos,
            graphs: GraphSource::Generated {
                sizes,
                extra_edges: vec![0],
                series_parallel_ratio: (1, 2),
                edge_bytes: DEFAULT_EDGE_BYTES,
                attributes: AttributeDistribution::default(),
            },
            repetitions: reps,
            seed: 42,
            platform: None,
            eval: EvalConfig { random_schedules: 10, ..Default::default() },
            gamma: 1.0,
            ga: GaConfig { population: 10, generations: 5, ..Default::default() },
            timing_runs: 1,
        }
    }

    #[test]
    fn one_graph_one_algorithm_one_row() {
        let spec = small_spec(vec![Algorithm::SingleNode], vec![8], 1);
        let table = run_experiment(&spec, &Platform::reference()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.axis, "8");
        assert_eq!(row.algorithm, Algorithm::SingleNode);
    }

    #[test]
    fn rows_cover_axis_algorithm_grid() {
        let spec = small_spec(
            vec![Algorithm::SingleNode, Algorithm::Heft],
            vec![6, 9, 12],
            2,
        );
        let table = run_experiment(&spec, &Platform::reference()).unwrap();
        assert_eq!(table.rows.len(), 6);
        let csv = table.to_csv();
        assert!(csv.starts_with(ResultTable::CSV_HEADER));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn row_invariants_hold() {
        let spec = small_spec(
            vec![Algorithm::SingleNode, Algorithm::SpFirstFit, Algorithm::Peft, Algorithm::Nsga2],
            vec![10],
            2,
        );
        let table = run_experiment(&spec, &Platform::reference()).unwrap();
        for row in &table.rows {
            assert!(row.rel_improvement >= 0.0 && row.rel_improvement < 1.0);
            assert!(row.mapper_ms > 0.0);
            assert!(row.makespan_baseline.is_finite());
            assert!(row.makespan_mapped.is_finite());
            assert!(row.eval_calls.is_finite());
        }
    }

    #[test]
    fn results_are_reproducible_modulo_timing() {
        let spec = small_spec(vec![Algorithm::SeriesParallel], vec![10], 2);
        let p = Platform::reference();
        let a = run_experiment(&spec, &p).unwrap();
        let b = run_experiment(&spec, &p).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.axis, y.axis);
            assert_eq!(x.makespan_baseline.to_bits(), y.makespan_baseline.to_bits());
            assert_eq!(x.makespan_mapped.to_bits(), y.makespan_mapped.to_bits());
            assert_eq!(x.rel_improvement.to_bits(), y.rel_improvement.to_bits());
            assert_eq!(x.eval_calls, y.eval_calls);
        }
    }

    #[test]
    fn extra_edge_axis_labels() {
        let spec = ExperimentSpec {
            graphs: GraphSource::Generated {
                sizes: vec![12],
                extra_edges: vec![0, 5],
                series_parallel_ratio: (1, 2),
                edge_bytes: DEFAULT_EDGE_BYTES,
                attributes: AttributeDistribution::default(),
            },
            ..small_spec(vec![Algorithm::SnFirstFit], vec![12], 1)
        };
        let table = run_experiment(&spec, &Platform::reference()).unwrap();
        let axes: Vec<&str> = table.rows.iter().map(|r| r.axis.as_str()).collect();
        assert_eq!(axes, vec!["0", "5"]);
    }

    #[test]
    fn spec_parses_with_defaults_and_rejects_unknown_algorithms() {
        let json = r#"{
            "algorithms": ["single_node", "sp_firstfit"],
            "graphs": { "kind": "generated", "sizes": [5, 10] }
        }"#;
        let spec = ExperimentSpec::from_json(json).unwrap();
        assert_eq!(spec.repetitions, 30);
        assert_eq!(spec.gamma, 1.0);

        let bad = r#"{ "algorithms": ["warp_drive"], "graphs": { "kind": "generated", "sizes": [5] } }"#;
        assert!(matches!(ExperimentSpec::from_json(bad), Err(BenchError::Spec(_))));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("warp_drive".parse::<Algorithm>().is_err());
    }
}
