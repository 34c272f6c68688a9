mod common;

use dae_core::error::{Error, OracleError};
use dae_core::machine::MachineConfig;
use dae_core::oracle::{compare_timelines, oracle_check, run_oracle, ORACLE_LIMIT};
use dae_core::presets::{preset_threads, preset_with_iterations};
use dae_core::scheduler::{run_dae, set_overlap, SyncPolicy, ThreadModel, TimedParams};
use dae_core::transform::{chunk, make_phase_pair};
use proptest::prelude::*;

fn machine(scale: f64, depth: u32, mlp: u32, lock_ns: f64) -> MachineConfig {
    let mut m = MachineConfig::default().scale_latencies(scale);
    m.little.prefetch_queue_depth = depth;
    m.big.core.mlp_degree = mlp;
    m.costs.lock_cost_ns = lock_ns;
    m
}

fn policy() -> impl Strategy<Value = SyncPolicy> {
    let timed =
        (0.0f64..3000.0, 0.0f64..3000.0, 0.0f64..2000.0, any::<u64>()).prop_map(|(a, e, j, s)| {
            TimedParams {
                sleep_access_ns: a,
                sleep_execute_ns: e,
                jitter_stddev_ns: j,
                rng_seed: s,
            }
        });
    prop_oneof![
        Just(SyncPolicy::Coupled),
        (0.0f64..=1.0).prop_map(|f| set_overlap(&SyncPolicy::lock_step(), f).unwrap()),
        timed.clone().prop_map(SyncPolicy::Timed),
        (timed, 1u64..6, 0.0f64..=1.0).prop_map(|(t, p, f)| set_overlap(
            &SyncPolicy::hybrid(t, p),
            f
        )
        .unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn simulator_matches_oracle(k in common::kernel(300, 8), g_seed in any::<u64>(), sync in policy(),
                                scale in 0.5f64..1.5, depth in 1u32..9, mlp in 1u32..7,
                                lock_ns in prop::sample::select(vec![0.0, 10.0, 750.0]), pool in any::<bool>()) {
        let m = machine(scale, depth, mlp, lock_ns);
        let g = g_seed % k.iterations() + 1;
        let threads = if pool { ThreadModel::pool(&m) } else { ThreadModel::spawn(&m) };
        if let Err(e) = oracle_check(&k, &m, &sync, g, &threads) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn presets_match_at_512() {
    let m = MachineConfig::default();
    for name in ["lbm_like", "cigar_like", "libquantum_like"] {
        let k = preset_with_iterations(name, 512, 2).unwrap();
        for g in [512, 128, 32] {
            oracle_check(
                &k,
                &m,
                &SyncPolicy::lock_step(),
                g,
                &preset_threads(name, &m),
            )
            .unwrap();
        }
    }
}

#[test]
fn oracle_refuses_large_kernels() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("libquantum_like", ORACLE_LIMIT + 1, 1).unwrap();
    let e = run_oracle(&k, &m, &SyncPolicy::lock_step(), 64, &ThreadModel::pool(&m)).unwrap_err();
    assert!(matches!(e, Error::Oracle(OracleError::TooLarge { .. })));
    let k = preset_with_iterations("libquantum_like", ORACLE_LIMIT, 1).unwrap();
    assert!(run_oracle(
        &k,
        &m,
        &SyncPolicy::lock_step(),
        ORACLE_LIMIT,
        &ThreadModel::pool(&m)
    )
    .is_ok());
}

/// A single slice covers the whole loop, so equal slice records imply equal
/// total runtime.
#[test]
fn single_slice_runtime_matches() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("cigar_like", 1024, 1).unwrap();
    let sync = SyncPolicy::lock_step();
    let threads = ThreadModel::spawn(&m);
    let oracle = run_oracle(&k, &m, &sync, 1024, &threads).unwrap();
    let sim = run_dae(
        &make_phase_pair(&chunk(&k, 1024).unwrap()),
        &m,
        &sync,
        &threads,
    )
    .unwrap();
    assert_eq!(oracle.end(), sim.timeline.end());
}

#[test]
fn comparison_reports_differences() {
    let m = MachineConfig::default();
    let k = preset_with_iterations("lbm_like", 256, 1).unwrap();
    let threads = ThreadModel::spawn(&m);
    let a = run_oracle(&k, &m, &SyncPolicy::lock_step(), 64, &threads).unwrap();
    let mut b = a.clone();
    b.slices[2].result.cycles += 1;
    assert!(compare_timelines(&a, &b)
        .unwrap_err()
        .contains("slice records differ"));
    let mut c = a.clone();
    c.intervals.pop();
    assert!(compare_timelines(&a, &c).is_err());
    assert!(compare_timelines(&a, &a).is_ok());
}
