//! Greedy decomposition mapping.
//!
//! Both variants start from the all-default mapping and repeatedly apply
//! a strictly improving subgraph move, fully re-evaluating candidates
//! with the deterministic internal cost, so the result is never worse
//! than the default mapping and the engine terminates. The basic variant
//! re-evaluates every candidate each iteration; the threshold variant
//! orders candidates by their last observed improvement in a priority
//! queue and, with `gamma` = 1, applies the first improvement found
//! unless a queued candidate still promises more.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{MapperConfig, MapperRun, MoveCandidate, SubgraphSet};
use crate::evaluator::{Evaluator, Mapping};
use crate::platform::{Platform, UnitId};
use crate::taskgraph::{NodeId, TaskGraph};

// Candidates are enumerated subgraph-major, unit-minor, so index order
// is the (subgraph lexicographic, unit id) tie-break order.
struct Candidates<'a> {
    set: &'a SubgraphSet,
    units: usize,
}

impl Candidates<'_> {
    fn count(&self) -> usize {
        self.set.len() * self.units
    }

    fn move_of(&self, idx: usize) -> (&[NodeId], UnitId) {
        let sg = &self.set.subgraphs()[idx / self.units];
        (sg, UnitId(idx % self.units))
    }
}

// Applies a move in place, returning the previous units for rollback.
fn apply_move(m: &mut Mapping, sg: &[NodeId], unit: UnitId) -> Vec<UnitId> {
    let saved: Vec<UnitId> = sg.iter().map(|&v| m.unit_of(v)).collect();
    for &v in sg {
        m.set(v, unit);
    }
    saved
}

fn rollback(m: &mut Mapping, sg: &[NodeId], saved: &[UnitId]) {
    for (&v, &u) in sg.iter().zip(saved) {
        m.set(v, u);
    }
}

/// Basic decomposition mapping: each iteration evaluates all
/// `|S| * units` candidate moves and applies the single best strictly
/// improving one, until no move improves or the iteration cap is hit.
pub fn decomposition_map(
    g: &TaskGraph,
    p: &Platform,
    set: &SubgraphSet,
    cfg: &MapperConfig,
) -> MapperRun {
    let evaluator = Evaluator::internal(g, p, &cfg.eval);
    let cands = Candidates { set, units: p.unit_count() };
    let cap = cfg.iteration_cap.unwrap_or(g.node_count());
    let mut mapping = Mapping::all_default(g, p);
    let mut cost = evaluator.cost(&mapping);
    let mut iterations = 0;

    while iterations < cap {
        let mut best: Option<(f64, usize)> = None;
        for idx in 0..cands.count() {
            let (sg, unit) = cands.move_of(idx);
            let saved = apply_move(&mut mapping, sg, unit);
            let c = evaluator.cost(&mapping);
            rollback(&mut mapping, sg, &saved);
            if c < cost && best.map_or(true, |(b, _)| c < b) {
                best = Some((c, idx));
            }
        }
        match best {
            Some((c, idx)) => {
                let (sg, unit) = cands.move_of(idx);
                apply_move(&mut mapping, sg, unit);
                cost = c;
                iterations += 1;
            }
            None => break,
        }
    }
    MapperRun { mapping, makespan: cost, iterations, eval_calls: evaluator.calls() }
}

// Max-heap entry ordered by expected improvement, ties by ascending
// candidate index. Stale entries are skipped via the version stamp.
#[derive(PartialEq)]
struct HeapEntry {
    expected: f64,
    idx: usize,
    version: u64,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.expected
            .total_cmp(&other.expected)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Threshold decomposition mapping.
///
/// The first iteration evaluates every candidate and records expected
/// improvements. Afterwards candidates are re-evaluated best-expected
/// first; a found improvement is applied once no queued candidate
/// promises more than `found / gamma`. Before declaring convergence
/// every candidate is re-evaluated against the final mapping.
pub fn threshold_map(
    g: &TaskGraph,
    p: &Platform,
    set: &SubgraphSet,
    cfg: &MapperConfig,
) -> MapperRun {
    assert!(cfg.gamma >= 1.0, "gamma must be >= 1");
    let evaluator = Evaluator::internal(g, p, &cfg.eval);
    let cands = Candidates { set, units: p.unit_count() };
    let cap = cfg.iteration_cap.unwrap_or(g.node_count());
    let mut mapping = Mapping::all_default(g, p);
    let mut cost = evaluator.cost(&mapping);

    let n_cands = cands.count();
    // Per candidate: last observed improvement and the state (number of
    // applied moves) it was observed at.
    let mut state: Vec<MoveCandidate> = (0..n_cands)
        .map(|idx| {
            let (sg, unit) = cands.move_of(idx);
            let _ = sg;
            MoveCandidate { subgraph: idx / p.unit_count(), target_unit: unit, expected_improvement: 0.0 }
        })
        .collect();
    let mut eval_state = vec![u64::MAX; n_cands];
    let mut version = vec![0u64; n_cands];
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(n_cands);
    let mut moves: u64 = 0;
    let mut iterations = 0;

    let reevaluate = |idx: usize,
                          mapping: &mut Mapping,
                          cost: f64,
                          moves: u64,
                          state: &mut Vec<MoveCandidate>,
                          eval_state: &mut Vec<u64>|
     -> f64 {
        let (sg, unit) = cands.move_of(idx);
        let saved = apply_move(mapping, sg, unit);
        let c = evaluator.cost(mapping);
        rollback(mapping, sg, &saved);
        let improvement = if c.is_finite() { cost - c } else { f64::NEG_INFINITY };
        state[idx].expected_improvement = improvement;
        eval_state[idx] = moves;
        improvement
    };

    // First iteration: full sweep, seed the queue, apply the best move.
    let mut first_best: Option<(f64, usize)> = None;
    for idx in 0..n_cands {
        let r = reevaluate(idx, &mut mapping, cost, moves, &mut state, &mut eval_state);
        if r > 0.0 && first_best.map_or(true, |(b, _)| r > b) {
            first_best = Some((r, idx));
        }
    }
    if let Some((r, idx)) = first_best {
        let (sg, unit) = cands.move_of(idx);
        apply_move(&mut mapping, sg, unit);
        cost -= r;
        moves += 1;
        iterations += 1;
    }
    for idx in 0..n_cands {
        version[idx] += 1;
        heap.push(HeapEntry { expected: state[idx].expected_improvement, idx, version: version[idx] });
    }

    'outer: while iterations < cap {
        // Queue-guided round: re-evaluate best-expected first, stop when
        // no remaining candidate promises more than best_found / gamma.
        let mut best_found: Option<(f64, usize)> = None;
        let mut stash: Vec<usize> = Vec::new();
        loop {
            let top = match heap.peek() {
                Some(t) if t.version == version[t.idx] => t,
                Some(_) => {
                    heap.pop();
                    continue;
                }
                None => break,
            };
            let threshold = match best_found {
                Some((r, _)) => r / cfg.gamma,
                None => 0.0,
            };
            if top.expected <= threshold {
                break;
            }
            let idx = top.idx;
            heap.pop();
            let r = if eval_state[idx] == moves {
                state[idx].expected_improvement // already exact for this state
            } else {
                reevaluate(idx, &mut mapping, cost, moves, &mut state, &mut eval_state)
            };
            stash.push(idx);
            if r > 0.0 && best_found.map_or(true, |(b, _)| r > b) {
                best_found = Some((r, idx));
            }
        }
        for idx in stash {
            version[idx] += 1;
            heap.push(HeapEntry {
                expected: state[idx].expected_improvement,
                idx,
                version: version[idx],
            });
        }

        if let Some((r, idx)) = best_found {
            let (sg, unit) = cands.move_of(idx);
            apply_move(&mut mapping, sg, unit);
            cost -= r;
            moves += 1;
            iterations += 1;
            continue;
        }

        // Final iteration: refresh every estimate not computed against
        // the current mapping before declaring convergence.
        let mut best: Option<(f64, usize)> = None;
        for idx in 0..n_cands {
            let r = if eval_state[idx] == moves {
                state[idx].expected_improvement
            } else {
                let r = reevaluate(idx, &mut mapping, cost, moves, &mut state, &mut eval_state);
                version[idx] += 1;
                heap.push(HeapEntry { expected: r, idx, version: version[idx] });
                r
            };
            if r > 0.0 && best.map_or(true, |(b, _)| r > b) {
                best = Some((r, idx));
            }
        }
        match best {
            Some((r, idx)) => {
                let (sg, unit) = cands.move_of(idx);
                apply_move(&mut mapping, sg, unit);
                cost -= r;
                moves += 1;
                iterations += 1;
            }
            None => break 'outer,
        }
    }

    MapperRun { mapping, makespan: cost, iterations, eval_calls: evaluator.calls() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::EvalConfig;
    use crate::mappers::{series_parallel_subgraphs, single_node_subgraphs};
    use crate::platform::{BandwidthEntry, ProcessingUnit, TaskAttributes, UnitKind};
    use crate::spdag::CutRule;
    use crate::taskgraph::{Edge, DEFAULT_EDGE_BYTES};

    fn cpu_gpu_platform(gpu_speedup: f64) -> Platform {
        let units = vec![
            ProcessingUnit {
                id: UnitId(0),
                kind: UnitKind::Cpu,
                cores: 1,
                per_core_rate: 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
            ProcessingUnit {
                id: UnitId(1),
                kind: UnitKind::Gpu,
                cores: 1,
                per_core_rate: gpu_speedup * 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
        ];
        let bw = [
            BandwidthEntry { from: UnitId(0), to: UnitId(1), bytes_per_sec: 1e10 },
            BandwidthEntry { from: UnitId(1), to: UnitId(0), bytes_per_sec: 1e10 },
        ];
        Platform::new(units, UnitId(0), &bw).unwrap()
    }

    #[test]
    fn single_task_moves_to_faster_unit() {
        let p = cpu_gpu_platform(2.0);
        let attrs =
            vec![TaskAttributes { complexity: 10.0, parallelizability: 0.0, ..Default::default() }];
        let g = TaskGraph::new(attrs, vec![]).unwrap();
        let set = single_node_subgraphs(&g);
        let run = decomposition_map(&g, &p, &set, &MapperConfig::default());
        assert_eq!(run.mapping.unit_of(NodeId(0)), UnitId(1));
        assert_eq!(run.makespan, 0.5);
        assert_eq!(run.iterations, 1);
    }

    #[test]
    fn transfer_dominated_task_stays_default() {
        // 5 ms of work per task against 10 ms per 100 MB transfer:
        // every single-task move worsens, including the source (whose
        // only penalty is its outgoing transfer).
        let p = cpu_gpu_platform(100.0);
        let attrs = vec![
            TaskAttributes { complexity: 0.05, parallelizability: 0.0, ..Default::default() };
            3
        ];
        let g = TaskGraph::new(
            attrs,
            vec![
                Edge { src: NodeId(0), dst: NodeId(1), bytes: DEFAULT_EDGE_BYTES },
                Edge { src: NodeId(1), dst: NodeId(2), bytes: DEFAULT_EDGE_BYTES },
            ],
        )
        .unwrap();
        let set = single_node_subgraphs(&g);
        let run = decomposition_map(&g, &p, &set, &MapperConfig::default());
        for v in g.node_ids() {
            assert_eq!(run.mapping.unit_of(v), UnitId(0));
        }
        assert_eq!(run.iterations, 0);
    }

    use crate::mappers::testutil::brute_force_optimum;

    /// A chain x -> a -> b -> c -> y where each interior task gains from
    /// the FPGA but a single move never pays for two extra transfers,
    /// while moving the whole interior pays once at each boundary.
    fn fpga_chain_instance() -> (TaskGraph, Platform) {
        let units = vec![
            ProcessingUnit {
                id: UnitId(0),
                kind: UnitKind::Cpu,
                cores: 1,
                per_core_rate: 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
            ProcessingUnit {
                id: UnitId(1),
                kind: UnitKind::Fpga,
                cores: 1,
                per_core_rate: 1e9,
                area_capacity: 1000.0,
                stream_startup: 0.001,
            },
        ];
        let bw = [
            BandwidthEntry { from: UnitId(0), to: UnitId(1), bytes_per_sec: 1e9 },
            BandwidthEntry { from: UnitId(1), to: UnitId(0), bytes_per_sec: 1e9 },
        ];
        let p = Platform::new(units, UnitId(0), &bw).unwrap();
        // Interior: complexity 2, streamability 4 => CPU 0.2 s, FPGA
        // 0.05 s each; per-task gain 0.15 s < 2 transfers (0.2 s) <
        // chain gain. Endpoints are near-free.
        let light = TaskAttributes { complexity: 0.01, parallelizability: 0.0, ..Default::default() };
        let heavy = TaskAttributes {
            complexity: 2.0,
            parallelizability: 0.0,
            streamability: 4.0,
            area: 1.0,
        };
        let attrs = vec![light, heavy, heavy, heavy, light];
        let g = TaskGraph::new(
            attrs,
            vec![
                Edge { src: NodeId(0), dst: NodeId(1), bytes: DEFAULT_EDGE_BYTES },
                Edge { src: NodeId(1), dst: NodeId(2), bytes: DEFAULT_EDGE_BYTES },
                Edge { src: NodeId(2), dst: NodeId(3), bytes: DEFAULT_EDGE_BYTES },
                Edge { src: NodeId(3), dst: NodeId(4), bytes: DEFAULT_EDGE_BYTES },
            ],
        )
        .unwrap();
        (g, p)
    }

    #[test]
    fn chain_subgraph_escapes_single_node_minimum() {
        let (g, p) = fpga_chain_instance();
        let cfg = MapperConfig::default();

        let sn = decomposition_map(&g, &p, &single_node_subgraphs(&g), &cfg);
        for v in g.node_ids() {
            assert_eq!(sn.mapping.unit_of(v), UnitId(0), "single-node set must stay on CPU");
        }

        let sp_set = series_parallel_subgraphs(&g, CutRule::SmallestOutsizeFirst, 0);
        assert!(sp_set.contains(&[NodeId(1), NodeId(2), NodeId(3)]));
        let sp = decomposition_map(&g, &p, &sp_set, &cfg);
        for v in [NodeId(1), NodeId(2), NodeId(3)] {
            assert_eq!(sp.mapping.unit_of(v), UnitId(1), "chain moves to the FPGA");
        }
        assert!(sp.makespan < sn.makespan);

        // Exhaustive enumeration confirms the SP result is the optimum.
        let (opt, _) = brute_force_optimum(&g, &p, &cfg.eval);
        assert!((sp.makespan - opt).abs() < 1e-12);
    }

    #[test]
    fn basic_sweep_budget_is_exact() {
        let g = TaskGraph::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let p = cpu_gpu_platform(3.0);
        let set = single_node_subgraphs(&g);
        // Large cap so the run converges instead of being cut off.
        let cfg = MapperConfig { iteration_cap: Some(1000), ..Default::default() };
        let run = decomposition_map(&g, &p, &set, &cfg);
        // 1 initial cost + (iterations + 1 converging sweep) * |S| * m
        let sweeps = (run.iterations + 1) as u64;
        assert_eq!(run.eval_calls, 1 + sweeps * (set.len() * p.unit_count()) as u64);
    }

    #[test]
    fn threshold_single_improving_candidate_matches_basic() {
        let p = cpu_gpu_platform(2.0);
        let attrs =
            vec![TaskAttributes { complexity: 10.0, parallelizability: 0.0, ..Default::default() }];
        let g = TaskGraph::new(attrs, vec![]).unwrap();
        let set = single_node_subgraphs(&g);
        let cfg = MapperConfig::default();
        let basic = decomposition_map(&g, &p, &set, &cfg);
        let ff = threshold_map(&g, &p, &set, &cfg);
        assert_eq!(basic.mapping, ff.mapping);
        assert_eq!(basic.makespan, ff.makespan);
    }

    #[test]
    fn threshold_never_worse_than_default_and_fewer_evals() {
        let (g, p) = fpga_chain_instance();
        let cfg = MapperConfig::default();
        let set = series_parallel_subgraphs(&g, CutRule::SmallestOutsizeFirst, 0);
        let basic = decomposition_map(&g, &p, &set, &cfg);
        let ff = threshold_map(&g, &p, &set, &cfg);
        let default_cost =
            Evaluator::internal(&g, &p, &cfg.eval).cost(&Mapping::all_default(&g, &p));
        assert!(ff.makespan <= default_cost);
        assert!(ff.eval_calls <= basic.eval_calls);
        assert!((ff.makespan - basic.makespan).abs() < 1e-12);
    }

    #[test]
    fn gamma_must_be_at_least_one() {
        let g = TaskGraph::from_edges(2, &[(0, 1)]);
        let p = cpu_gpu_platform(2.0);
        let set = single_node_subgraphs(&g);
        let cfg = MapperConfig { gamma: 0.5, ..Default::default() };
        let result = std::panic::catch_unwind(|| threshold_map(&g, &p, &set, &cfg));
        assert!(result.is_err());
    }
}
