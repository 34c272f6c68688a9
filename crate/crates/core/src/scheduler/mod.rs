//! Runs Access slices on the LITTLE core and Execute slices on the big core
//! as two interleaved discrete-event processes sharing one memory system.
//!
//! Handshake per slice `s` under a locking policy: Access takes its lock
//! once Execute has finished slice `s - 1` (immediately for slice 0), then
//! runs; Execute takes its lock once Access has finished slice `s` (or issued
//! the configured lead fraction of its prefetches), then runs. Each lock
//! operation costs `lock_cost_ns` on the acquiring core. Under the timed
//! policy Access sleeps after every slice and Execute sleeps before every
//! slice, and neither waits for the other. Slices start on the first cycle
//! boundary after the preceding interval ends.

mod engine;
mod policy;
mod timeline;

use rayon::prelude::*;

pub use self::engine::{
    assert_lockstep_order, max_slice_drift, run_coupled, run_coupled_chunked, run_dae, Jitter, Run,
};
pub use self::policy::{set_overlap, SyncPolicy, ThreadModel, TimedParams};
pub use self::timeline::{Interval, Phase, SliceRecord, Tag, Timeline};

use crate::error::{ConfigError, Result};
use crate::kernel_ir::ValidatedKernel;
use crate::machine::MachineConfig;
use crate::transform::{chunk, make_phase_pair};

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub baseline: Run,
    /// One DAE run per requested granularity, in request order.
    pub entries: Vec<Run>,
}

pub fn sweep_granularity(
    kernel: &ValidatedKernel,
    machine: &MachineConfig,
    granularities: &[u64],
    sync: &SyncPolicy,
    threads: &ThreadModel,
) -> Result<Sweep> {
    if granularities.is_empty() {
        return Err(ConfigError::Scenario("granularity list is empty".into()).into());
    }
    let pairs = granularities
        .iter()
        .map(|&g| Ok(make_phase_pair(&chunk(kernel, g)?)))
        .collect::<Result<Vec<_>>>()?;
    let (baseline, entries) = rayon::join(
        || run_coupled(kernel, machine),
        || {
            pairs
                .par_iter()
                .map(|p| run_dae(p, machine, sync, threads))
                .collect::<Result<Vec<_>>>()
        },
    );
    Ok(Sweep {
        baseline,
        entries: entries?,
    })
}

/// Timed-policy sleeps matching a lock-step run: Access sleeps for the mean
/// Execute slice duration and Execute for the mean Access slice duration.
pub fn perfect_sleeps(lockstep: &Run, jitter_stddev_ns: f64, rng_seed: u64) -> TimedParams {
    let mean = |phase| {
        let (n, total) = lockstep
            .phase_slices(phase)
            .fold((0u64, 0u64), |(n, t), r| {
                (n + 1, t + r.result.end - r.result.start)
            });
        lockstep.timeline.ns(total) / n.max(1) as f64
    };
    TimedParams {
        sleep_access_ns: mean(Phase::Execute),
        sleep_execute_ns: mean(Phase::Access),
        jitter_stddev_ns,
        rng_seed,
    }
}
