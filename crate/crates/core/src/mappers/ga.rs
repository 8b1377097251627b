//! Single-objective elitist genetic algorithm over task-to-unit genomes.
//!
//! Genes follow a fixed topological order, one unit id per task. Fitness
//! is the internal deterministic makespan; selection is binary
//! tournament, crossover single-point, mutation per-gene uniform. A
//! repair pass moves FPGA-overflow tasks back to the default unit in
//! descending area order so every evaluated individual is feasible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluator::{EvalConfig, Evaluator, Mapping};
use crate::platform::{Platform, UnitId, UnitKind};
use crate::taskgraph::{NodeId, TaskGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / n`.
    pub mutation_rate: Option<f64>,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 100,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: None,
            seed: 0,
        }
    }
}

/// Result of a GA run; `best_history` holds the best-ever fitness after
/// initialization and after each generation (monotone nonincreasing).
#[derive(Clone, Debug)]
pub struct GaRun {
    pub mapping: Mapping,
    pub makespan: f64,
    pub best_history: Vec<f64>,
    pub eval_calls: u64,
}

// Reassign FPGA-overflow tasks to the default unit, biggest area first.
fn repair(genes: &mut [UnitId], order: &[NodeId], g: &TaskGraph, p: &Platform) {
    for unit in p.units() {
        if unit.kind != UnitKind::Fpga {
            continue;
        }
        let mut on_unit: Vec<(usize, f64)> = genes
            .iter()
            .enumerate()
            .filter(|(_, &u)| u == unit.id)
            .map(|(i, _)| (i, g.attrs(order[i]).area))
            .collect();
        let mut used: f64 = on_unit.iter().map(|&(_, a)| a).sum();
        // Descending area, ties by ascending task id for determinism.
        on_unit.sort_by(|a, b| b.1.total_cmp(&a.1).then(order[a.0].cmp(&order[b.0])));
        let mut next = 0;
        while used > unit.area_capacity && next < on_unit.len() {
            let (i, a) = on_unit[next];
            genes[i] = p.default_unit();
            used -= a;
            next += 1;
        }
    }
}

fn to_mapping(genes: &[UnitId], order: &[NodeId], n: usize) -> Mapping {
    let mut units = vec![UnitId(0); n];
    for (i, &u) in genes.iter().enumerate() {
        units[order[i].0] = u;
    }
    Mapping::from_units(units)
}

/// Runs the GA and returns the best individual ever observed.
/// Deterministic for a fixed seed.
pub fn nsga2_map(g: &TaskGraph, p: &Platform, cfg: &GaConfig) -> GaRun {
    assert!(cfg.population >= 2, "population must be at least 2");
    let eval_cfg = EvalConfig::default();
    let evaluator = Evaluator::internal(g, p, &eval_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = g.node_count();
    let m = p.unit_count();
    let order = g.bfs_order().expect("graph must be acyclic");
    let mutation_rate = cfg.mutation_rate.unwrap_or(1.0 / n.max(1) as f64);

    let fitness_of = |genes: &[UnitId]| evaluator.cost(&to_mapping(genes, &order, n));

    let mut population: Vec<Vec<UnitId>> = (0..cfg.population)
        .map(|_| {
            let mut genes: Vec<UnitId> =
                (0..n).map(|_| UnitId(rng.gen_range(0..m))).collect();
            repair(&mut genes, &order, g, p);
            genes
        })
        .collect();
    let mut fitness: Vec<f64> = population.iter().map(|c| fitness_of(c)).collect();

    let mut best_idx = argmin(&fitness);
    let mut best_genes = population[best_idx].clone();
    let mut best_fit = fitness[best_idx];
    let mut history = vec![best_fit];

    for _ in 0..cfg.generations {
        let mut offspring: Vec<Vec<UnitId>> = Vec::with_capacity(cfg.population);
        while offspring.len() < cfg.population {
            let p1 = tournament(&fitness, &mut rng);
            let p2 = tournament(&fitness, &mut rng);
            let (mut c1, mut c2) = if n >= 2 && rng.gen_bool(cfg.crossover_rate) {
                let cut = rng.gen_range(1..n);
                let mut a = population[p1].clone();
                let mut b = population[p2].clone();
                for i in cut..n {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
                (a, b)
            } else {
                (population[p1].clone(), population[p2].clone())
            };
            for child in [&mut c1, &mut c2] {
                for gene in child.iter_mut() {
                    if rng.gen_bool(mutation_rate) {
                        *gene = UnitId(rng.gen_range(0..m));
                    }
                }
                repair(child, &order, g, p);
            }
            offspring.push(c1);
            if offspring.len() < cfg.population {
                offspring.push(c2);
            }
        }
        let mut off_fitness: Vec<f64> = offspring.iter().map(|c| fitness_of(c)).collect();

        // Elitism: the best-ever individual replaces the worst offspring.
        let worst = argmax(&off_fitness);
        offspring[worst] = best_genes.clone();
        off_fitness[worst] = best_fit;

        population = offspring;
        fitness = off_fitness;
        best_idx = argmin(&fitness);
        if fitness[best_idx] < best_fit {
            best_fit = fitness[best_idx];
            best_genes = population[best_idx].clone();
        }
        history.push(best_fit);
    }

    GaRun {
        mapping: to_mapping(&best_genes, &order, n),
        makespan: best_fit,
        best_history: history,
        eval_calls: evaluator.calls(),
    }
}

fn tournament(fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..fitness.len());
    let b = rng.gen_range(0..fitness.len());
    if fitness[a] <= fitness[b] {
        a
    } else {
        b
    }
}

fn argmin(xs: &[f64]) -> usize {
    xs.iter().enumerate().min_by(|(_, a), (_, b)| a.total_cmp(b)).map(|(i, _)| i).unwrap()
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().max_by(|(_, a), (_, b)| a.total_cmp(b)).map(|(i, _)| i).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::{BandwidthEntry, ProcessingUnit, TaskAttributes};

    fn small_platform() -> Platform {
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
                cores: 4,
                per_core_rate: 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
            ProcessingUnit {
                id: UnitId(2),
                kind: UnitKind::Fpga,
                cores: 1,
                per_core_rate: 1e9,
                area_capacity: 10.0,
                stream_startup: 0.001,
            },
        ];
        let mut bw = Vec::new();
        for from in 0..3 {
            for to in 0..3 {
                if from != to {
                    bw.push(BandwidthEntry {
                        from: UnitId(from),
                        to: UnitId(to),
                        bytes_per_sec: 1e10,
                    });
                }
            }
        }
        Platform::new(units, UnitId(0), &bw).unwrap()
    }

    #[test]
    fn single_task_finds_optimum_immediately() {
        let p = small_platform();
        let attrs = vec![TaskAttributes {
            complexity: 10.0,
            parallelizability: 1.0,
            streamability: 2.0,
            area: 1.0,
        }];
        let g = TaskGraph::new(attrs, vec![]).unwrap();
        for seed in [0, 1, 99] {
            let cfg = GaConfig { generations: 1, seed, ..Default::default() };
            let run = nsga2_map(&g, &p, &cfg);
            // GPU with 4 cores and p=1 is the fastest option: 0.25 s.
            assert_eq!(run.mapping.unit_of(NodeId(0)), UnitId(1));
            assert_eq!(run.makespan, 0.25);
        }
    }

    #[test]
    fn best_history_is_monotone() {
        let p = small_platform();
        let g = TaskGraph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (1, 3), (3, 5), (0, 4), (4, 5)]);
        let cfg = GaConfig { population: 20, generations: 40, seed: 5, ..Default::default() };
        let run = nsga2_map(&g, &p, &cfg);
        assert_eq!(run.best_history.len(), 41);
        for w in run.best_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(*run.best_history.last().unwrap(), run.makespan);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = small_platform();
        let g = TaskGraph::from_edges(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]);
        let cfg = GaConfig { population: 16, generations: 25, seed: 11, ..Default::default() };
        let a = nsga2_map(&g, &p, &cfg);
        let b = nsga2_map(&g, &p, &cfg);
        assert_eq!(a.mapping, b.mapping);
        assert_eq!(a.best_history, b.best_history);
    }

    #[test]
    fn six_task_run_reaches_brute_force_optimum() {
        let p = small_platform();
        let attrs = vec![
            TaskAttributes { complexity: 4.0, parallelizability: 0.3, streamability: 9.0, area: 3.0 },
            TaskAttributes { complexity: 12.0, parallelizability: 0.0, streamability: 2.0, area: 8.0 },
            TaskAttributes { complexity: 6.5, parallelizability: 0.9, streamability: 1.0, area: 2.0 },
            TaskAttributes { complexity: 9.0, parallelizability: 0.5, streamability: 6.0, area: 5.0 },
            TaskAttributes { complexity: 2.0, parallelizability: 1.0, streamability: 4.0, area: 1.0 },
            TaskAttributes { complexity: 15.0, parallelizability: 0.2, streamability: 7.0, area: 9.0 },
        ];
        let g = TaskGraph::new_named(
            attrs,
            vec![None; 6],
            [(0, 1), (1, 2), (2, 3), (1, 3), (3, 5), (0, 4), (4, 5)]
                .iter()
                .map(|&(s, d)| crate::taskgraph::Edge {
                    src: NodeId(s),
                    dst: NodeId(d),
                    bytes: crate::taskgraph::DEFAULT_EDGE_BYTES,
                })
                .collect(),
        )
        .unwrap();
        let (opt, _) =
            crate::mappers::testutil::brute_force_optimum(&g, &p, &EvalConfig::default());
        let cfg = GaConfig { generations: 200, seed: 3, ..Default::default() };
        let run = nsga2_map(&g, &p, &cfg);
        assert!((run.makespan - opt).abs() < 1e-12, "ga {} vs optimum {opt}", run.makespan);
    }

    #[test]
    fn repair_restores_feasibility() {
        let p = small_platform();
        let attrs = vec![TaskAttributes { area: 6.0, ..Default::default() }; 3];
        let g = TaskGraph::new(attrs, vec![]).unwrap();
        let order = g.bfs_order().unwrap();
        let mut genes = vec![UnitId(2); 3]; // 18 area on a 10-capacity FPGA
        repair(&mut genes, &order, &g, &p);
        let mapping = to_mapping(&genes, &order, 3);
        assert!(crate::platform::area_feasible(&mapping, &g, &p));
        let on_fpga = genes.iter().filter(|&&u| u == UnitId(2)).count();
        assert_eq!(on_fpga, 1);
    }
}
