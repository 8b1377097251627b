//! Heterogeneous platform description and the per-task cost model.
//!
//! The cost model is a documented surrogate: CPUs and GPUs follow an
//! Amdahl-style law over `cores` and `parallelizability`, FPGAs divide
//! work by `per_core_rate * streamability` and are additionally subject
//! to an area budget. All algorithms in this crate are compared under
//! this one model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Mapping;
use crate::taskgraph::TaskGraph;

/// Dense index of a processing unit within its [`Platform`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub usize);

impl std::fmt::Display for UnitId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Cpu,
    Gpu,
    Fpga,
}

/// Per-task performance attributes.
///
/// `complexity` is operations per byte of input, `parallelizability` the
/// Amdahl fraction in [0,1], `streamability` a dimensionless FPGA speedup
/// factor, `area` the FPGA resource demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskAttributes {
    pub complexity: f64,
    pub parallelizability: f64,
    pub streamability: f64,
    pub area: f64,
}

impl Default for TaskAttributes {
    fn default() -> Self {
        TaskAttributes { complexity: 1.0, parallelizability: 1.0, streamability: 1.0, area: 0.0 }
    }
}

impl TaskAttributes {
    /// Attributes of virtual endpoint tasks: free on every unit.
    pub const fn virtual_endpoint() -> Self {
        TaskAttributes { complexity: 0.0, parallelizability: 1.0, streamability: 1.0, area: 0.0 }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.complexity >= 0.0) {
            return Err(format!("complexity {} must be >= 0", self.complexity));
        }
        if !(0.0..=1.0).contains(&self.parallelizability) {
            return Err(format!("parallelizability {} must be in [0,1]", self.parallelizability));
        }
        if !(self.streamability > 0.0) {
            return Err(format!("streamability {} must be > 0", self.streamability));
        }
        if !(self.area >= 0.0) {
            return Err(format!("area {} must be >= 0", self.area));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingUnit {
    pub id: UnitId,
    pub kind: UnitKind,
    pub cores: u32,
    pub per_core_rate: f64,
    pub area_capacity: f64,
    pub stream_startup: f64,
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("platform has no units")]
    Empty,
    #[error("unit ids must be dense 0..{expected} (unit {got} out of place)")]
    NonDenseIds { expected: usize, got: usize },
    #[error("unit {0}: {1}")]
    InvalidUnit(UnitId, String),
    #[error("default unit {0} does not exist")]
    MissingDefault(UnitId),
    #[error("default unit {0} is not a CPU")]
    DefaultNotCpu(UnitId),
    #[error("missing bandwidth entry {from} -> {to}")]
    MissingBandwidth { from: UnitId, to: UnitId },
    #[error("bandwidth entry {from} -> {to}: {reason}")]
    InvalidBandwidth { from: UnitId, to: UnitId, reason: String },
    #[error("platform JSON: {0}")]
    Parse(String),
}

/// Directed bandwidth declaration between two distinct units.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthEntry {
    pub from: UnitId,
    pub to: UnitId,
    pub bytes_per_sec: f64,
}

/// A fixed set of processing units, a default CPU, and a full ordered
/// bandwidth table. Same-unit transfers are implicitly free.
#[derive(Clone, Debug, PartialEq)]
pub struct Platform {
    units: Vec<ProcessingUnit>,
    default_unit: UnitId,
    bw: Vec<f64>, // row-major m*m, infinite on the diagonal
}

impl Platform {
    pub fn new(
        units: Vec<ProcessingUnit>,
        default_unit: UnitId,
        bandwidth: &[BandwidthEntry],
    ) -> Result<Self, PlatformError> {
        if units.is_empty() {
            return Err(PlatformError::Empty);
        }
        let m = units.len();
        for (i, u) in units.iter().enumerate() {
            if u.id.0 != i {
                return Err(PlatformError::NonDenseIds { expected: m, got: u.id.0 });
            }
            if u.cores < 1 {
                return Err(PlatformError::InvalidUnit(u.id, "cores must be >= 1".into()));
            }
            if !(u.per_core_rate > 0.0) {
                return Err(PlatformError::InvalidUnit(u.id, "per_core_rate must be > 0".into()));
            }
            if !(u.area_capacity >= 0.0) {
                return Err(PlatformError::InvalidUnit(u.id, "area_capacity must be >= 0".into()));
            }
            if !(u.stream_startup >= 0.0) {
                return Err(PlatformError::InvalidUnit(u.id, "stream_startup must be >= 0".into()));
            }
        }
        if default_unit.0 >= m {
            return Err(PlatformError::MissingDefault(default_unit));
        }
        if units[default_unit.0].kind != UnitKind::Cpu {
            return Err(PlatformError::DefaultNotCpu(default_unit));
        }
        let mut bw = vec![f64::NAN; m * m];
        for i in 0..m {
            bw[i * m + i] = f64::INFINITY;
        }
        for e in bandwidth {
            if e.from.0 >= m || e.to.0 >= m {
                return Err(PlatformError::InvalidBandwidth {
                    from: e.from,
                    to: e.to,
                    reason: "unknown unit".into(),
                });
            }
            if e.from == e.to {
                return Err(PlatformError::InvalidBandwidth {
                    from: e.from,
                    to: e.to,
                    reason: "same-unit pairs are implicitly infinite".into(),
                });
            }
            if !(e.bytes_per_sec > 0.0) {
                return Err(PlatformError::InvalidBandwidth {
                    from: e.from,
                    to: e.to,
                    reason: "bytes_per_sec must be > 0".into(),
                });
            }
            let slot = &mut bw[e.from.0 * m + e.to.0];
            if !slot.is_nan() {
                return Err(PlatformError::InvalidBandwidth {
                    from: e.from,
                    to: e.to,
                    reason: "duplicate entry".into(),
                });
            }
            *slot = e.bytes_per_sec;
        }
        for from in 0..m {
            for to in 0..m {
                if bw[from * m + to].is_nan() {
                    return Err(PlatformError::MissingBandwidth {
                        from: UnitId(from),
                        to: UnitId(to),
                    });
                }
            }
        }
        Ok(Platform { units, default_unit, bw })
    }

    /// The reference platform shipped with the crate: one 16-core CPU,
    /// one many-core GPU and one FPGA with an area budget.
    pub fn reference() -> Platform {
        Platform::from_json(include_str!("../data/default_platform.json"))
            .expect("embedded platform file is valid")
    }

    pub fn units(&self) -> &[ProcessingUnit] {
        &self.units
    }

    pub fn unit(&self, id: UnitId) -> &ProcessingUnit {
        &self.units[id.0]
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = UnitId> {
        (0..self.units.len()).map(UnitId)
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn default_unit(&self) -> UnitId {
        self.default_unit
    }

    pub fn bandwidth(&self, from: UnitId, to: UnitId) -> f64 {
        self.bw[from.0 * self.units.len() + to.0]
    }

    /// Seconds to move `bytes` from one unit to another; co-located
    /// transfers are free.
    pub fn transfer_time(&self, bytes: u64, from: UnitId, to: UnitId) -> f64 {
        if from == to || bytes == 0 {
            0.0
        } else {
            bytes as f64 / self.bandwidth(from, to)
        }
    }

    pub fn to_json(&self) -> String {
        let mut bandwidth = Vec::new();
        let m = self.units.len();
        for from in 0..m {
            for to in 0..m {
                if from != to {
                    bandwidth.push(BandwidthEntry {
                        from: UnitId(from),
                        to: UnitId(to),
                        bytes_per_sec: self.bw[from * m + to],
                    });
                }
            }
        }
        let doc = PlatformDoc {
            units: self.units.clone(),
            default_unit: self.default_unit,
            bandwidth,
        };
        serde_json::to_string_pretty(&doc).expect("platform serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, PlatformError> {
        let doc: PlatformDoc =
            serde_json::from_str(s).map_err(|e| PlatformError::Parse(e.to_string()))?;
        Platform::new(doc.units, doc.default_unit, &doc.bandwidth)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformDoc {
    units: Vec<ProcessingUnit>,
    default_unit: UnitId,
    bandwidth: Vec<BandwidthEntry>,
}

/// Seconds to execute a task with `attrs` over `input_bytes` on `unit`.
///
/// Work is `complexity * input_bytes`. CPU/GPU time follows Amdahl's law
/// over the unit's cores; FPGA time divides by the streamability factor.
pub fn compute_time(attrs: &TaskAttributes, input_bytes: u64, unit: &ProcessingUnit) -> f64 {
    let work = attrs.complexity * input_bytes as f64;
    if work == 0.0 {
        return 0.0;
    }
    match unit.kind {
        UnitKind::Cpu | UnitKind::Gpu => {
            let p = attrs.parallelizability;
            work / unit.per_core_rate * ((1.0 - p) + p / unit.cores as f64)
        }
        UnitKind::Fpga => work / (unit.per_core_rate * attrs.streamability),
    }
}

/// Seconds to move `bytes` between two units of `platform`.
pub fn transfer_time(bytes: u64, from: UnitId, to: UnitId, platform: &Platform) -> f64 {
    platform.transfer_time(bytes, from, to)
}

/// True iff every FPGA unit's summed task area fits its capacity.
pub fn area_feasible(mapping: &Mapping, g: &TaskGraph, platform: &Platform) -> bool {
    let mut used = vec![0.0_f64; platform.unit_count()];
    for v in g.node_ids() {
        used[mapping.unit_of(v).0] += g.attrs(v).area;
    }
    platform
        .units()
        .iter()
        .all(|u| u.kind != UnitKind::Fpga || used[u.id.0] <= u.area_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::NodeId;

    fn unit(kind: UnitKind, cores: u32, rate: f64) -> ProcessingUnit {
        ProcessingUnit {
            id: UnitId(0),
            kind,
            cores,
            per_core_rate: rate,
            area_capacity: 0.0,
            stream_startup: 0.0,
        }
    }

    #[test]
    fn compute_time_cpu_fully_parallel() {
        let attrs = TaskAttributes { complexity: 10.0, ..Default::default() };
        let u = unit(UnitKind::Cpu, 16, 1e9);
        // work = 1e9 ops
        assert_eq!(compute_time(&attrs, 100_000_000, &u), 0.0625);
    }

    #[test]
    fn compute_time_cpu_serial_limit() {
        let attrs =
            TaskAttributes { complexity: 10.0, parallelizability: 0.0, ..Default::default() };
        for cores in [1, 4, 16, 128] {
            let u = unit(UnitKind::Cpu, cores, 1e9);
            assert_eq!(compute_time(&attrs, 100_000_000, &u), 1.0);
        }
    }

    #[test]
    fn compute_time_fpga_streaming() {
        let attrs = TaskAttributes { complexity: 10.0, streamability: 8.0, ..Default::default() };
        let u = unit(UnitKind::Fpga, 1, 1e8);
        assert_eq!(compute_time(&attrs, 100_000_000, &u), 1.25);
    }

    #[test]
    fn compute_time_zero_work() {
        let attrs = TaskAttributes::virtual_endpoint();
        let u = unit(UnitKind::Gpu, 1000, 1e9);
        assert_eq!(compute_time(&attrs, 100_000_000, &u), 0.0);
    }

    #[test]
    fn compute_time_monotonicity() {
        let attrs =
            TaskAttributes { complexity: 7.0, parallelizability: 0.7, ..Default::default() };
        let mut prev = f64::INFINITY;
        for cores in [1, 2, 8, 64] {
            let t = compute_time(&attrs, 1_000_000, &unit(UnitKind::Cpu, cores, 1e9));
            assert!(t <= prev);
            prev = t;
        }
        let mut prev = f64::INFINITY;
        for s in [1.0, 2.0, 5.0, 20.0] {
            let a = TaskAttributes { streamability: s, ..attrs };
            let t = compute_time(&a, 1_000_000, &unit(UnitKind::Fpga, 1, 1e9));
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn transfer_times() {
        let p = Platform::reference();
        assert_eq!(p.transfer_time(100_000_000, UnitId(1), UnitId(1)), 0.0);
        assert_eq!(p.transfer_time(0, UnitId(0), UnitId(1)), 0.0);
        let t = p.transfer_time(100_000_000, UnitId(0), UnitId(1));
        assert!((t - 100_000_000.0 / p.bandwidth(UnitId(0), UnitId(1))).abs() < 1e-12);
    }

    #[test]
    fn transfer_example_direct_division() {
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
                per_core_rate: 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
        ];
        let bw = [
            BandwidthEntry { from: UnitId(0), to: UnitId(1), bytes_per_sec: 1e10 },
            BandwidthEntry { from: UnitId(1), to: UnitId(0), bytes_per_sec: 1e10 },
        ];
        let p = Platform::new(units, UnitId(0), &bw).unwrap();
        assert_eq!(p.transfer_time(100_000_000, UnitId(0), UnitId(1)), 0.01);
    }

    #[test]
    fn platform_rejects_missing_bandwidth() {
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
                per_core_rate: 1e9,
                area_capacity: 0.0,
                stream_startup: 0.0,
            },
        ];
        let bw = [BandwidthEntry { from: UnitId(0), to: UnitId(1), bytes_per_sec: 1e10 }];
        match Platform::new(units, UnitId(0), &bw) {
            Err(PlatformError::MissingBandwidth { from, to }) => {
                assert_eq!((from, to), (UnitId(1), UnitId(0)));
            }
            other => panic!("expected missing bandwidth, got {other:?}"),
        }
    }

    #[test]
    fn platform_rejects_non_cpu_default() {
        let units = vec![ProcessingUnit {
            id: UnitId(0),
            kind: UnitKind::Gpu,
            cores: 1,
            per_core_rate: 1e9,
            area_capacity: 0.0,
            stream_startup: 0.0,
        }];
        assert!(matches!(
            Platform::new(units, UnitId(0), &[]),
            Err(PlatformError::DefaultNotCpu(_))
        ));
    }

    #[test]
    fn area_feasibility() {
        let p = Platform::reference();
        let fpga = p
            .units()
            .iter()
            .find(|u| u.kind == UnitKind::Fpga)
            .expect("reference platform has an FPGA")
            .id;
        let capacity = p.unit(fpga).area_capacity;
        let mut attrs = vec![TaskAttributes::default(); 2];
        attrs[0].area = capacity * 0.6;
        attrs[1].area = capacity * 0.6;
        let g = TaskGraph::new(attrs, vec![]).unwrap();

        let all_cpu = Mapping::all_default(&g, &p);
        assert!(area_feasible(&all_cpu, &g, &p));

        let mut one = all_cpu.clone();
        one.set(NodeId(0), fpga);
        assert!(area_feasible(&one, &g, &p));

        let mut both = one.clone();
        both.set(NodeId(1), fpga);
        assert!(!area_feasible(&both, &g, &p));
    }

    #[test]
    fn reference_platform_loads_and_round_trips() {
        let p = Platform::reference();
        assert_eq!(p.unit_count(), 3);
        assert_eq!(p.unit(p.default_unit()).kind, UnitKind::Cpu);
        let back = Platform::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
    }
}
