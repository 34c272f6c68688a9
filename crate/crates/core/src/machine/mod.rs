//! Timing model of a two-cluster big.LITTLE machine: an in-order LITTLE core
//! and an out-of-order big core, private L1d caches, one L2 per cluster,
//! coherent service from the other cluster's L2, main memory, and a bounded
//! queue of in-flight software prefetches per cluster.
//!
//! Time is counted in integer ticks common to both clusters. Each core acts
//! only on its own cycle boundaries; when both act on the same tick the
//! LITTLE core goes first.

mod cache;
mod config;
mod core;
mod memory;
mod program;

pub use self::cache::{Cache, Line};
pub use self::config::*;
pub use self::core::{
    align_up, run_slice, PrefetchCounts, SliceExec, SliceResult, SourceCounts, Step,
};
pub use self::memory::{line_of, MemorySystem, PrefetchOutcome, ServiceResult, ServiceSource};
pub use self::program::{DynInstr, DynKind, SliceProgram};
