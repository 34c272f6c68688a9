mod common;

use dae_core::kernel_ir::ValidatedKernel;
use dae_core::machine::{MachineConfig, SourceCounts};
use dae_core::metrics::breakdown;
use dae_core::presets::preset_with_iterations;
use dae_core::scheduler::{
    assert_lockstep_order, max_slice_drift, perfect_sleeps, run_coupled, run_dae, set_overlap,
    Phase, Run, SyncPolicy, Tag, ThreadModel, TimedParams,
};
use dae_core::transform::{chunk, make_phase_pair};
use proptest::prelude::*;

fn dae(k: &ValidatedKernel, g: u64, sync: &SyncPolicy, m: &MachineConfig) -> Run {
    run_dae(
        &make_phase_pair(&chunk(k, g).unwrap()),
        m,
        sync,
        &ThreadModel::pool(m),
    )
    .unwrap()
}

fn execute_retired(r: &Run) -> u64 {
    r.phase_slices(Phase::Execute)
        .map(|s| s.result.retired)
        .sum()
}

fn lock_ticks(r: &Run) -> u64 {
    r.timeline
        .intervals
        .iter()
        .filter(|i| i.tag == Tag::Lock)
        .map(|i| i.len())
        .sum()
}

fn timed(seed: u64, jitter: f64) -> TimedParams {
    TimedParams {
        sleep_access_ns: 900.0,
        sleep_execute_ns: 700.0,
        jitter_stddev_ns: jitter,
        rng_seed: seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Two lock operations per slice and invocation, each exactly
    /// lock_cost_ns, and nothing else counted as synchronization.
    #[test]
    fn lockstep_sync_identity(k in common::kernel(400, 8), g_seed in any::<u64>(), cost in 0u32..3000) {
        let mut m = MachineConfig::default();
        m.costs.lock_cost_ns = f64::from(cost);
        let g = g_seed % k.iterations() + 1;
        let r = dae(&k, g, &SyncPolicy::lock_step(), &m);
        let slices = r.slice_count * u64::from(r.invocations);
        let per_op = m.timing().ns_to_ticks(m.costs.lock_cost_ns);
        prop_assert_eq!(lock_ticks(&r), 2 * slices * per_op);
        let b = breakdown::<f64>(&r.timeline);
        prop_assert_eq!(b.sync_ns, 2.0 * slices as f64 * f64::from(cost));
        assert_lockstep_order(&r.timeline);
    }

    /// Timing only changes latencies: Execute retires the same work under
    /// every policy.
    #[test]
    fn retired_work_is_policy_independent(k in common::kernel(300, 8), g_seed in any::<u64>(),
                                          seed in any::<u64>(), jitter in 0.0f64..5000.0) {
        let m = MachineConfig::default();
        let g = g_seed % k.iterations() + 1;
        let base = execute_retired(&run_coupled(&k, &m));
        for sync in [
            SyncPolicy::lock_step(),
            SyncPolicy::Timed(timed(seed, jitter)),
            SyncPolicy::hybrid(timed(seed, jitter), 3),
            set_overlap(&SyncPolicy::lock_step(), 0.5).unwrap(),
        ] {
            prop_assert_eq!(execute_retired(&dae(&k, g, &sync, &m)), base, "{}", sync.label());
        }
    }

    /// Under Hybrid with period P neither phase gets more than P slices
    /// ahead of the other.
    #[test]
    fn hybrid_drift_is_bounded(k in common::kernel(400, 8), g_seed in any::<u64>(), seed in any::<u64>(),
                               period in prop::sample::select(vec![1u64, 2, 4, 16]), jitter in 0.0f64..20000.0) {
        let m = MachineConfig::default();
        let g = g_seed % k.iterations() + 1;
        let r = dae(&k, g, &SyncPolicy::hybrid(timed(seed, jitter), period), &m);
        prop_assert!(max_slice_drift(&r.timeline) <= period);
    }

    /// Same inputs, same seed: identical timelines.
    #[test]
    fn runs_are_reproducible(k in common::kernel(200, 8), seed in any::<u64>()) {
        let m = MachineConfig::default();
        let g = k.iterations().div_ceil(3);
        let sync = SyncPolicy::Timed(timed(seed, 500.0));
        prop_assert_eq!(dae(&k, g, &sync, &m), dae(&k, g, &sync, &m));
    }
}

#[test]
fn lockstep_drift_is_one_slice() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("cigar_like", 2048, 2).unwrap();
    assert_eq!(
        max_slice_drift(&dae(&k, 64, &SyncPolicy::lock_step(), &m).timeline),
        1
    );
}

#[test]
fn sync_component_shrinks_with_granularity() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("lbm_like", 4096, 2).unwrap();
    let sync: Vec<f64> = [64, 128, 256, 512, 1024, 2048, 4096]
        .iter()
        .map(|&g| breakdown::<f64>(&dae(&k, g, &SyncPolicy::lock_step(), &m).timeline).sync_ns)
        .collect();
    assert!(sync.windows(2).all(|w| w[0] > w[1]), "{sync:?}");
}

fn execute_sources(r: &Run) -> SourceCounts {
    let mut s = SourceCounts::default();
    for x in r.phase_slices(Phase::Execute) {
        s.add(&x.result.sources);
    }
    s
}

/// Execute loads find their lines prefetched into the LITTLE L2 and pay the
/// coherence latency instead of the memory latency.
#[test]
fn decoupling_lowers_execute_load_latency() {
    let m = MachineConfig::default();
    for name in ["lbm_like", "cigar_like", "libquantum_like"] {
        let k = preset_with_iterations(name, 4096, 1).unwrap();
        let coupled = execute_sources(&run_coupled(&k, &m));
        let dae = execute_sources(&dae(&k, 1024, &SyncPolicy::lock_step(), &m));
        assert!(
            dae.mean_latency() < coupled.mean_latency(),
            "{name}: {dae:?} vs {coupled:?}"
        );
        assert!(dae.remote > 0 && dae.memory < coupled.memory, "{name}");
    }
}

#[test]
fn perfect_sleeps_remove_lock_time() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("lbm_like", 4096, 2).unwrap();
    let lockstep = dae(&k, 256, &SyncPolicy::lock_step(), &m);
    let timed = dae(
        &k,
        256,
        &SyncPolicy::Timed(perfect_sleeps(&lockstep, 0.0, 1)),
        &m,
    );
    assert_eq!(lock_ticks(&timed), 0);
    assert!(timed.runtime_ns() < lockstep.runtime_ns());
}

#[test]
fn zero_lock_cost_flattens_sync() {
    let mut m = MachineConfig::default();
    m.costs.lock_cost_ns = 0.0;
    let k = preset_with_iterations("cigar_like", 2048, 1).unwrap();
    for g in [64, 2048] {
        assert_eq!(
            breakdown::<f64>(&dae(&k, g, &SyncPolicy::lock_step(), &m).timeline).sync_ns,
            0.0
        );
    }
}

/// Zero-jitter perfect sleeps reproduce LockStep's cache behavior to within
/// 0.5% of Execute loads. Sleeps are mean slice durations, not per-slice
/// ones, so a few lines per early slice may arrive from another level.
#[test]
fn perfect_sleeps_keep_lockstep_cache_behavior() {
    let m = MachineConfig::default();
    for name in ["lbm_like", "cigar_like", "libquantum_like"] {
        let k = preset_with_iterations(name, 4096, 2).unwrap();
        for g in [256, 1024] {
            let lockstep = dae(&k, g, &SyncPolicy::lock_step(), &m);
            let timed = dae(
                &k,
                g,
                &SyncPolicy::Timed(perfect_sleeps(&lockstep, 0.0, 1)),
                &m,
            );
            let (a, b) = (execute_sources(&lockstep), execute_sources(&timed));
            let loads = a.l1 + a.local_l2 + a.remote + a.memory;
            let moved = a.memory.abs_diff(b.memory) + a.remote.abs_diff(b.remote);
            assert!(moved * 200 <= loads, "{name} g={g}: {a:?} vs {b:?}");
            assert_eq!(lock_ticks(&timed), 0);
        }
    }
}
