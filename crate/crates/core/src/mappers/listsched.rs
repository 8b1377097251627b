//! HEFT and PEFT list schedulers.
//!
//! HEFT ranks tasks by upward rank from unit-averaged compute times and
//! pair-averaged transfer times, then assigns each task to the unit with
//! the minimal insertion-based earliest finish time. PEFT instead
//! precomputes an optimistic cost table (OCT) over task-unit pairs,
//! ranks tasks by their average OCT row, and assigns by minimal
//! `EFT + OCT`. Units whose FPGA area budget a task would overflow are
//! not eligible for it.

use crate::evaluator::{effective_input_bytes, Mapping};
use crate::platform::{compute_time, Platform, UnitId, UnitKind};
use crate::taskgraph::{NodeId, TaskGraph};

/// Mapping plus the schedule that produced it: the task order and the
/// scheduler's own insertion-based timeline.
#[derive(Clone, Debug)]
pub struct ListScheduleRun {
    pub mapping: Mapping,
    pub order: Vec<NodeId>,
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
}

// Busy intervals of one unit, kept sorted for gap scans.
#[derive(Default)]
struct UnitTimeline {
    busy: Vec<(f64, f64)>,
}

impl UnitTimeline {
    fn earliest_start(&self, ready: f64, duration: f64) -> f64 {
        let mut candidate = ready;
        for &(s, f) in &self.busy {
            if candidate + duration <= s {
                return candidate;
            }
            candidate = candidate.max(f);
        }
        candidate
    }

    fn insert(&mut self, start: f64, finish: f64) {
        let at = self.busy.partition_point(|&(s, _)| s < start);
        self.busy.insert(at, (start, finish));
    }
}

fn mean_compute(g: &TaskGraph, p: &Platform, v: NodeId) -> f64 {
    let bytes = effective_input_bytes(g, v);
    let total: f64 = p.units().iter().map(|u| compute_time(g.attrs(v), bytes, u)).sum();
    total / p.unit_count() as f64
}

// Transfer cost averaged over all ordered pairs of distinct units.
fn mean_transfer(p: &Platform, bytes: u64) -> f64 {
    let m = p.unit_count();
    if m < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for from in p.unit_ids() {
        for to in p.unit_ids() {
            if from != to {
                total += p.transfer_time(bytes, from, to);
            }
        }
    }
    total / (m * (m - 1)) as f64
}

fn upward_ranks(g: &TaskGraph, p: &Platform) -> Vec<f64> {
    let order = g.bfs_order().expect("graph must be acyclic");
    let mut rank = vec![0.0_f64; g.node_count()];
    for &v in order.iter().rev() {
        let tail = g
            .out_edges(v)
            .map(|e| mean_transfer(p, e.bytes) + rank[e.dst.0])
            .fold(0.0_f64, f64::max);
        rank[v.0] = mean_compute(g, p, v) + tail;
    }
    rank
}

struct Assigner<'a> {
    g: &'a TaskGraph,
    p: &'a Platform,
    timelines: Vec<UnitTimeline>,
    area_used: Vec<f64>,
    mapping: Vec<Option<UnitId>>,
    finish: Vec<f64>,
    start: Vec<f64>,
}

impl<'a> Assigner<'a> {
    fn new(g: &'a TaskGraph, p: &'a Platform) -> Self {
        Assigner {
            g,
            p,
            timelines: (0..p.unit_count()).map(|_| UnitTimeline::default()).collect(),
            area_used: vec![0.0; p.unit_count()],
            mapping: vec![None; g.node_count()],
            finish: vec![0.0; g.node_count()],
            start: vec![0.0; g.node_count()],
        }
    }

    fn fits(&self, v: NodeId, u: UnitId) -> bool {
        let unit = self.p.unit(u);
        unit.kind != UnitKind::Fpga
            || self.area_used[u.0] + self.g.attrs(v).area <= unit.area_capacity
    }

    // Insertion-based earliest start/finish of v on u given already
    // scheduled predecessors.
    fn eft(&self, v: NodeId, u: UnitId) -> (f64, f64) {
        let mut ready = 0.0_f64;
        for e in self.g.in_edges(v) {
            let pu = self.mapping[e.src.0].expect("predecessors scheduled first");
            ready = ready.max(self.finish[e.src.0] + self.p.transfer_time(e.bytes, pu, u));
        }
        let duration = compute_time(self.g.attrs(v), effective_input_bytes(self.g, v), self.p.unit(u));
        let start = self.timelines[u.0].earliest_start(ready, duration);
        (start, start + duration)
    }

    fn commit(&mut self, v: NodeId, u: UnitId, start: f64, finish: f64) {
        self.timelines[u.0].insert(start, finish);
        self.area_used[u.0] += self.g.attrs(v).area;
        self.mapping[v.0] = Some(u);
        self.start[v.0] = start;
        self.finish[v.0] = finish;
    }

    fn into_run(self, order: Vec<NodeId>) -> ListScheduleRun {
        let units = self.mapping.into_iter().map(|u| u.expect("total assignment")).collect();
        ListScheduleRun {
            mapping: Mapping::from_units(units),
            order,
            start: self.start,
            finish: self.finish,
        }
    }
}

/// Heterogeneous earliest finish time scheduling.
pub fn heft(g: &TaskGraph, p: &Platform) -> ListScheduleRun {
    let rank = upward_ranks(g, p);
    let mut order: Vec<NodeId> = g.node_ids().collect();
    order.sort_by(|a, b| rank[b.0].total_cmp(&rank[a.0]).then(a.cmp(b)));

    let mut asg = Assigner::new(g, p);
    for &v in &order {
        let mut best: Option<(f64, f64, UnitId)> = None;
        for u in p.unit_ids() {
            if !asg.fits(v, u) {
                continue;
            }
            let (start, finish) = asg.eft(v, u);
            if best.map_or(true, |(_, bf, _)| finish < bf) {
                best = Some((start, finish, u));
            }
        }
        let (start, finish, u) = best.expect("a CPU unit always fits");
        asg.commit(v, u, start, finish);
    }
    asg.into_run(order)
}

/// Optimistic cost table: `oct[v][u]` bounds the remaining schedule
/// length after running v on u, assuming every successor lands on its
/// best unit.
pub fn optimistic_cost_table(g: &TaskGraph, p: &Platform) -> Vec<Vec<f64>> {
    let order = g.bfs_order().expect("graph must be acyclic");
    let m = p.unit_count();
    let mut oct = vec![vec![0.0_f64; m]; g.node_count()];
    for &v in order.iter().rev() {
        for u in p.unit_ids() {
            let mut worst = 0.0_f64;
            for e in g.out_edges(v) {
                let s = e.dst;
                let best = p
                    .unit_ids()
                    .map(|w| {
                        oct[s.0][w.0]
                            + compute_time(g.attrs(s), effective_input_bytes(g, s), p.unit(w))
                            + p.transfer_time(e.bytes, u, w)
                    })
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
            }
            oct[v.0][u.0] = worst;
        }
    }
    oct
}

/// Predict earliest finish time scheduling.
pub fn peft(g: &TaskGraph, p: &Platform) -> ListScheduleRun {
    let oct = optimistic_cost_table(g, p);
    let m = p.unit_count() as f64;
    let rank: Vec<f64> = oct.iter().map(|row| row.iter().sum::<f64>() / m).collect();

    // Ready-list scheduling: highest average OCT among ready tasks.
    let n = g.node_count();
    let mut pending: Vec<usize> = (0..n).map(|v| g.indegree(NodeId(v))).collect();
    let mut ready: Vec<NodeId> = g.node_ids().filter(|&v| pending[v.0] == 0).collect();
    let mut order = Vec::with_capacity(n);
    let mut asg = Assigner::new(g, p);
    while !ready.is_empty() {
        let pick = ready
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| rank[b.0].total_cmp(&rank[a.0]).then(a.cmp(b)))
            .map(|(i, _)| i)
            .unwrap();
        let v = ready.remove(pick);
        order.push(v);

        let mut best: Option<(f64, f64, f64, UnitId)> = None;
        for u in p.unit_ids() {
            if !asg.fits(v, u) {
                continue;
            }
            let (start, finish) = asg.eft(v, u);
            let score = finish + oct[v.0][u.0];
            if best.map_or(true, |(bs, ..)| score < bs) {
                best = Some((score, start, finish, u));
            }
        }
        let (_, start, finish, u) = best.expect("a CPU unit always fits");
        asg.commit(v, u, start, finish);

        for e in g.out_edges(v) {
            pending[e.dst.0] -= 1;
            if pending[e.dst.0] == 0 {
                ready.push(e.dst);
            }
        }
    }
    asg.into_run(order)
}
