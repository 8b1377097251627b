//! Static task mapping for heterogeneous CPU/GPU/FPGA platforms.
//!
//! The crate models applications as task DAGs, platforms as sets of
//! processing units under a surrogate cost model, and scores mappings
//! with a deterministic makespan simulator. Mappers include greedy
//! decomposition mapping over single-node and series-parallel subgraph
//! sets (with a first-fit/threshold acceleration), the HEFT and PEFT
//! list schedulers, and a single-objective genetic algorithm. Generators
//! produce random series-parallel and almost-series-parallel task
//! graphs and ingest workflow descriptions; the bench module sweeps
//! experiments into CSV/JSON tables.

pub mod bench;
pub mod evaluator;
pub mod generators;
pub mod mappers;
pub mod platform;
pub mod spdag;
pub mod taskgraph;
