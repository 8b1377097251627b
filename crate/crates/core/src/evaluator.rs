//! Deterministic makespan simulation of a (graph, platform, mapping)
//! triple under a schedule order, plus the min-over-schedules evaluation
//! protocol and the positive relative improvement metric.
//!
//! Consecutive tasks mapped to the same FPGA stream: maximal linear
//! chains collapse into one pipelined composite before simulation.

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::platform::{area_feasible, compute_time, Platform, UnitId, UnitKind};
use crate::taskgraph::{NodeId, TaskGraph, DEFAULT_EDGE_BYTES};

/// Total assignment of tasks to processing units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    assignment: Vec<UnitId>,
}

impl Mapping {
    /// Every task on the platform's default unit; always area-feasible.
    pub fn all_default(g: &TaskGraph, p: &Platform) -> Self {
        Mapping { assignment: vec![p.default_unit(); g.node_count()] }
    }

    pub fn from_units(assignment: Vec<UnitId>) -> Self {
        Mapping { assignment }
    }

    pub fn unit_of(&self, v: NodeId) -> UnitId {
        self.assignment[v.0]
    }

    pub fn set(&mut self, v: NodeId, u: UnitId) {
        self.assignment[v.0] = u;
    }

    pub fn units(&self) -> &[UnitId] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Evaluation protocol: the reported makespan is the minimum over a
/// breadth-first schedule and `random_schedules` random topological
/// orders. Greedy mappers use `internal_schedules` orders (1 = BFS only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub random_schedules: usize,
    pub internal_schedules: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { random_schedules: 100, internal_schedules: 1, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mapping exceeds FPGA area capacity")]
    AreaInfeasible,
    #[error("schedule is not a topological order of the graph")]
    NotTopological,
    #[error("schedule must list every task exactly once")]
    BadScheduleLength,
    #[error("baseline makespan must be positive")]
    NonpositiveBaseline,
}

/// Simulated timeline. Tasks coalesced into one streaming composite
/// share the composite's interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub makespan: f64,
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub schedule_used: String,
}

impl EvalResult {
    /// CSV timeline `task,unit,start,finish`, one row per task.
    pub fn to_csv(&self, m: &Mapping) -> String {
        let mut out = String::from("task,unit,start,finish\n");
        for i in 0..self.start.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i,
                m.unit_of(NodeId(i)).0,
                self.start[i],
                self.finish[i]
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization cannot fail")
    }
}

/// Execution graph after stream coalescing: tasks may be composites of
/// several graph nodes running as one pipelined FPGA chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecGraph {
    pub tasks: Vec<ExecTask>,
    pub edges: Vec<ExecEdge>,
    /// Composite index of every original node.
    pub task_of_node: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecTask {
    pub members: Vec<NodeId>,
    pub unit: UnitId,
    pub duration: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecEdge {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
}

/// Bytes a task computes over: the sum of its in-edges, or the default
/// edge volume for source tasks.
pub fn effective_input_bytes(g: &TaskGraph, v: NodeId) -> u64 {
    if g.indegree(v) == 0 {
        DEFAULT_EDGE_BYTES
    } else {
        g.input_bytes(v)
    }
}

/// Collapses maximal linear chains of same-FPGA tasks into pipelined
/// composites. A chain link u -> w requires u's only successor to be w,
/// w's only predecessor to be u, and both on the same FPGA unit. The
/// composite runs for `max stage time + stream_startup * (len - 1)`;
/// intra-chain transfers disappear.
pub fn coalesce_streams(g: &TaskGraph, p: &Platform, m: &Mapping) -> ExecGraph {
    let n = g.node_count();
    let is_fpga = |v: NodeId| p.unit(m.unit_of(v)).kind == UnitKind::Fpga;
    let mut next = vec![None; n];
    let mut has_prev = vec![false; n];
    for v in g.node_ids() {
        if !is_fpga(v) || g.outdegree(v) != 1 {
            continue;
        }
        let w = g.out_edges(v).next().unwrap().dst;
        if g.indegree(w) == 1 && m.unit_of(w) == m.unit_of(v) && is_fpga(w) {
            next[v.0] = Some(w);
            has_prev[w.0] = true;
        }
    }

    let mut task_of_node = vec![usize::MAX; n];
    let mut tasks = Vec::new();
    for head in g.node_ids() {
        if has_prev[head.0] {
            continue; // interior or tail of a chain
        }
        let mut members = vec![head];
        let mut cur = head;
        while let Some(w) = next[cur.0] {
            members.push(w);
            cur = w;
        }
        let unit = m.unit_of(head);
        let duration = if members.len() == 1 {
            compute_time(g.attrs(head), effective_input_bytes(g, head), p.unit(unit))
        } else {
            let stage_max = members
                .iter()
                .map(|&v| compute_time(g.attrs(v), effective_input_bytes(g, v), p.unit(unit)))
                .fold(0.0_f64, f64::max);
            stage_max + p.unit(unit).stream_startup * (members.len() - 1) as f64
        };
        let idx = tasks.len();
        for &v in &members {
            task_of_node[v.0] = idx;
        }
        tasks.push(ExecTask { members, unit, duration });
    }

    let mut edges = Vec::new();
    for e in g.edges() {
        let (a, b) = (task_of_node[e.src.0], task_of_node[e.dst.0]);
        if a != b {
            edges.push(ExecEdge { src: a, dst: b, bytes: e.bytes });
        }
    }
    ExecGraph { tasks, edges, task_of_node }
}

/// List simulation: every unit runs one composite at a time in the
/// sequence induced by `order`; a composite starts once its unit is free
/// and all predecessor results have arrived. Linear in the edge count.
pub fn simulate(
    g: &TaskGraph,
    p: &Platform,
    m: &Mapping,
    order: &[NodeId],
) -> Result<EvalResult, EvalError> {
    if !area_feasible(m, g, p) {
        return Err(EvalError::AreaInfeasible);
    }
    validate_order(g, order)?;
    let exec = coalesce_streams(g, p, m);
    Ok(simulate_exec(g, p, &exec, order, "custom"))
}

fn validate_order(g: &TaskGraph, order: &[NodeId]) -> Result<(), EvalError> {
    let n = g.node_count();
    if order.len() != n {
        return Err(EvalError::BadScheduleLength);
    }
    let mut pos = vec![usize::MAX; n];
    for (i, v) in order.iter().enumerate() {
        if v.0 >= n || pos[v.0] != usize::MAX {
            return Err(EvalError::BadScheduleLength);
        }
        pos[v.0] = i;
    }
    for e in g.edges() {
        if pos[e.src.0] >= pos[e.dst.0] {
            return Err(EvalError::NotTopological);
        }
    }
    Ok(())
}

// Core simulation over a coalesced graph. Composites execute in the
// order of their first member's position in `order`.
fn simulate_exec(
    g: &TaskGraph,
    p: &Platform,
    exec: &ExecGraph,
    order: &[NodeId],
    label: &str,
) -> EvalResult {
    let n = g.node_count();
    let mut pos = vec![0usize; n];
    for (i, v) in order.iter().enumerate() {
        pos[v.0] = i;
    }
    let mut exec_order: Vec<usize> = (0..exec.tasks.len()).collect();
    exec_order.sort_by_key(|&t| pos[exec.tasks[t].members[0].0]);

    let mut in_edges: Vec<Vec<&ExecEdge>> = vec![Vec::new(); exec.tasks.len()];
    for e in &exec.edges {
        in_edges[e.dst].push(e);
    }

    let mut unit_free = vec![0.0_f64; p.unit_count()];
    let mut t_start = vec![0.0_f64; exec.tasks.len()];
    let mut t_finish = vec![0.0_f64; exec.tasks.len()];
    for &t in &exec_order {
        let task = &exec.tasks[t];
        let mut ready = 0.0_f64;
        for e in &in_edges[t] {
            let arrival =
                t_finish[e.src] + p.transfer_time(e.bytes, exec.tasks[e.src].unit, task.unit);
            ready = ready.max(arrival);
        }
        let start = ready.max(unit_free[task.unit.0]);
        let finish = start + task.duration;
        t_start[t] = start;
        t_finish[t] = finish;
        unit_free[task.unit.0] = finish;
    }

    let makespan = t_finish.iter().copied().fold(0.0_f64, f64::max);
    let mut start = vec![0.0_f64; n];
    let mut finish = vec![0.0_f64; n];
    for v in 0..n {
        start[v] = t_start[exec.task_of_node[v]];
        finish[v] = t_finish[exec.task_of_node[v]];
    }
    EvalResult { makespan, start, finish, schedule_used: label.to_string() }
}

/// Precomputed schedule orders for repeated mapping evaluations, with a
/// call counter. Infeasible mappings evaluate to `+inf` so greedy search
/// skips them uniformly.
pub struct Evaluator<'a> {
    graph: &'a TaskGraph,
    platform: &'a Platform,
    orders: Vec<(String, Vec<NodeId>)>,
    calls: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    /// Orders: the BFS schedule plus `random_orders` seeded random ones.
    pub fn new(g: &'a TaskGraph, p: &'a Platform, random_orders: usize, seed: u64) -> Self {
        let mut orders = vec![("bfs".to_string(), g.bfs_order().expect("graph must be acyclic"))];
        for i in 0..random_orders {
            let s = seed.wrapping_add(i as u64);
            orders.push((
                format!("random{i}"),
                g.random_topological_order(s).expect("graph must be acyclic"),
            ));
        }
        Evaluator { graph: g, platform: p, orders, calls: Cell::new(0) }
    }

    /// Reporting evaluator: BFS + `cfg.random_schedules` random orders.
    pub fn reporting(g: &'a TaskGraph, p: &'a Platform, cfg: &EvalConfig) -> Self {
        Self::new(g, p, cfg.random_schedules, cfg.seed)
    }

    /// Internal evaluator used inside mappers: `cfg.internal_schedules`
    /// orders in total, the first being BFS.
    pub fn internal(g: &'a TaskGraph, p: &'a Platform, cfg: &EvalConfig) -> Self {
        Self::new(g, p, cfg.internal_schedules.saturating_sub(1), cfg.seed)
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }

    /// Minimum makespan over the configured orders; `+inf` when the
    /// mapping overruns an FPGA area budget.
    pub fn cost(&self, m: &Mapping) -> f64 {
        self.calls.set(self.calls.get() + 1);
        if !area_feasible(m, self.graph, self.platform) {
            return f64::INFINITY;
        }
        let exec = coalesce_streams(self.graph, self.platform, m);
        self.orders
            .iter()
            .map(|(label, order)| {
                simulate_exec(self.graph, self.platform, &exec, order, label).makespan
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Like [`Evaluator::cost`] but returns the full timeline of the best
    /// order. Errors on infeasible mappings.
    pub fn best_result(&self, m: &Mapping) -> Result<EvalResult, EvalError> {
        self.calls.set(self.calls.get() + 1);
        if !area_feasible(m, self.graph, self.platform) {
            return Err(EvalError::AreaInfeasible);
        }
        let exec = coalesce_streams(self.graph, self.platform, m);
        let mut best: Option<EvalResult> = None;
        for (label, order) in &self.orders {
            let r = simulate_exec(self.graph, self.platform, &exec, order, label);
            if best.as_ref().map_or(true, |b| r.makespan < b.makespan) {
                best = Some(r);
            }
        }
        Ok(best.expect("at least the BFS order exists"))
    }
}

/// Minimum makespan over the BFS schedule and `cfg.random_schedules`
/// seeded random schedules; `+inf` for area-infeasible mappings.
pub fn evaluate(g: &TaskGraph, p: &Platform, m: &Mapping, cfg: &EvalConfig) -> f64 {
    Evaluator::reporting(g, p, cfg).cost(m)
}

/// Positive relative improvement of `candidate` over `baseline`;
/// deteriorations count as zero.
pub fn relative_improvement(baseline: f64, candidate: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) {
        return Err(EvalError::NonpositiveBaseline);
    }
    Ok(((baseline - candidate) / baseline).max(0.0))
}
