//! Counters, IPC, runtime breakdowns and a parametric energy model computed
//! from finished timelines.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, MetricsError};
use crate::machine::{ClusterId, MachineConfig, PrefetchCounts, SourceCounts, Timing};
use crate::num::Scalar;
use crate::scheduler::{Phase, Run, SliceRecord, Tag, Timeline};

/// Where counters are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// The inner loop of one slice, excluding its outer-loop control ops.
    InnerLoop {
        phase: Phase,
        invocation: u32,
        slice: u64,
    },
    /// Every slice of a phase, outer-loop control included.
    Phase(Phase),
    /// Every slice of both phases. Cycles of the two cores are summed.
    Whole,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::InnerLoop {
                phase,
                invocation,
                slice,
            } => {
                write!(
                    f,
                    "{phase:?} inner loop, invocation {invocation}, slice {slice}"
                )
            }
            Region::Phase(p) => write!(f, "{p:?} phase"),
            Region::Whole => f.write_str("whole run"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionCounters {
    pub region: Region,
    pub cycles: u64,
    pub retired_instructions: u64,
}

impl RegionCounters {
    pub fn ipc(&self) -> Result<f64, MetricsError> {
        if self.cycles == 0 {
            return Err(MetricsError::DivisionByZero);
        }
        Ok(self.retired_instructions as f64 / self.cycles as f64)
    }
}

/// Sums the cycle and instruction counters of exactly the slices in
/// `region`. Lock, wait and sleep intervals lie outside every slice.
pub fn measure_region(tl: &Timeline, region: Region) -> Result<RegionCounters, MetricsError> {
    let mut found = false;
    let (mut cycles, mut retired) = (0, 0);
    for r in &tl.slices {
        let include_outer = match region {
            Region::InnerLoop {
                phase,
                invocation,
                slice,
            } => {
                if r.phase != phase || r.invocation != invocation || r.slice != slice {
                    continue;
                }
                false
            }
            Region::Phase(p) => {
                if r.phase != p {
                    continue;
                }
                true
            }
            Region::Whole => true,
        };
        found = true;
        cycles += r.result.cycles;
        retired += r.result.retired;
        if include_outer {
            cycles += r.result.outer_ops;
            retired += r.result.outer_ops;
        }
    }
    if !found {
        return Err(MetricsError::UnknownRegion(region.to_string()));
    }
    Ok(RegionCounters {
        region,
        cycles,
        retired_instructions: retired,
    })
}

/// A free-running cycle counter that advances once every `cycle_divider`
/// cycles and wraps at `counter_width_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterConfig {
    pub cycle_divider: u64,
    pub counter_width_bits: u32,
    /// Core cycles already counted when the run starts. A large value forces
    /// wraparound inside the run.
    #[serde(default)]
    pub start_cycles: u64,
}

impl Default for CounterConfig {
    fn default() -> Self {
        CounterConfig {
            cycle_divider: 64,
            counter_width_bits: 32,
            start_cycles: 0,
        }
    }
}

impl CounterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cycle_divider == 0 {
            return Err(ConfigError::Scenario(
                "cycle divider must be at least 1".into(),
            ));
        }
        if !(1..=64).contains(&self.counter_width_bits) {
            return Err(ConfigError::Scenario(
                "counter width must be 1 to 64 bits".into(),
            ));
        }
        Ok(())
    }

    fn mask(&self) -> u64 {
        if self.counter_width_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.counter_width_bits) - 1
        }
    }
}

/// Counter value after `cycles` cycles.
pub fn quantize_counter(cycles: u64, cfg: &CounterConfig) -> u64 {
    (cycles / cfg.cycle_divider) & cfg.mask()
}

/// Lower bound of the cycles a counter value stands for, ignoring wraps.
/// The true count lies within one divider above it.
pub fn dequantize_counter(value: u64, cfg: &CounterConfig) -> u64 {
    value * cfg.cycle_divider
}

/// Cycles between two readings of the counter, correct across at most one
/// wraparound. Within `cycle_divider` of the true elapsed cycles.
pub fn counter_delta(start: u64, end: u64, cfg: &CounterConfig) -> u64 {
    (end.wrapping_sub(start) & cfg.mask()) * cfg.cycle_divider
}

/// Like [`measure_region`], but each slice's cycles are reconstructed from
/// counter readings at its inner-loop entry and exit, as a program reading
/// a divided hardware counter would see them.
pub fn measure_region_quantized(
    tl: &Timeline,
    region: Region,
    cfg: &CounterConfig,
    timing: &Timing,
) -> Result<RegionCounters, MetricsError> {
    let exact = measure_region(tl, region)?;
    let mut cycles = 0;
    for r in &tl.slices {
        let selected = match region {
            Region::InnerLoop {
                phase,
                invocation,
                slice,
            } => r.phase == phase && r.invocation == invocation && r.slice == slice,
            Region::Phase(p) => r.phase == p,
            Region::Whole => true,
        };
        if !selected {
            continue;
        }
        let entry = match region {
            Region::InnerLoop { .. } => r.result.inner_start,
            _ => r.result.start,
        };
        cycles += read_counter_between(r, entry, cfg, timing);
    }
    Ok(RegionCounters { cycles, ..exact })
}

fn read_counter_between(r: &SliceRecord, entry: u64, cfg: &CounterConfig, timing: &Timing) -> u64 {
    let core = match r.phase {
        Phase::Access => ClusterId::Little,
        Phase::Execute => ClusterId::Big,
    };
    let tpc = timing.cluster(core).ticks_per_cycle;
    let read = |tick: u64| quantize_counter(cfg.start_cycles + tick / tpc, cfg);
    counter_delta(read(entry), read(r.result.end), cfg)
}

/// Inner-loop counters summed over every slice of `phase`, exact or read
/// through a quantized counter.
pub fn inner_loop_counters(
    tl: &Timeline,
    phase: Phase,
    quantized: Option<(&CounterConfig, &Timing)>,
) -> Result<RegionCounters, MetricsError> {
    let mut total = RegionCounters {
        region: Region::Phase(phase),
        cycles: 0,
        retired_instructions: 0,
    };
    let mut found = false;
    for r in tl.phase_slices(phase) {
        total.cycles += match quantized {
            Some((cfg, timing)) => read_counter_between(r, r.result.inner_start, cfg, timing),
            None => r.result.cycles,
        };
        total.retired_instructions += r.result.retired;
        found = true;
    }
    if !found {
        return Err(MetricsError::UnknownRegion(
            Region::Phase(phase).to_string(),
        ));
    }
    Ok(total)
}

/// Ratio of the DAE region's IPC to the baseline region's IPC.
pub fn ipc_speedup(dae: &RegionCounters, baseline: &RegionCounters) -> Result<f64, MetricsError> {
    Ok(dae.ipc()? / baseline.ipc()?)
}

/// Wall-clock attribution of a run. At each instant the most significant
/// activity on either core wins: slice work, then lock operations, then
/// thread management; anything else is idle. Instants where both cores run
/// slices count for both phases and again in `overlap_ns`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown<T> {
    pub access_ns: T,
    pub execute_ns: T,
    pub sync_ns: T,
    pub thread_ns: T,
    pub idle_ns: T,
    pub overlap_ns: T,
}

impl<T: Scalar> Breakdown<T> {
    /// Equals the run's wall-clock time.
    pub fn accounted_ns(&self) -> T {
        self.access_ns + self.execute_ns + self.sync_ns + self.thread_ns + self.idle_ns
            - self.overlap_ns
    }

    /// Share of phase work done by Access on the LITTLE core.
    pub fn little_time_fraction(&self) -> T {
        let total = self.access_ns + self.execute_ns;
        if total == T::zero() {
            T::zero()
        } else {
            self.access_ns / total
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct TickBreakdown {
    access: u64,
    execute: u64,
    sync: u64,
    thread: u64,
    idle: u64,
    overlap: u64,
}

fn rank(tag: Tag) -> u8 {
    match tag {
        Tag::AccessSlice | Tag::ExecuteSlice => 3,
        Tag::Lock => 2,
        Tag::Spawn | Tag::Signal => 1,
        Tag::LockWait | Tag::Sleep | Tag::Idle => 0,
    }
}

fn tick_breakdown(tl: &Timeline) -> TickBreakdown {
    let mut cuts: Vec<u64> = tl.intervals.iter().flat_map(|i| [i.start, i.end]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let little: Vec<_> = tl.core(ClusterId::Little).collect();
    let big: Vec<_> = tl.core(ClusterId::Big).collect();
    let (mut li, mut bi) = (0, 0);
    let mut b = TickBreakdown::default();
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let len = t1 - t0;
        while li < little.len() && little[li].end <= t0 {
            li += 1;
        }
        while bi < big.len() && big[bi].end <= t0 {
            bi += 1;
        }
        let tag_at = |v: &[&crate::scheduler::Interval], i: usize| {
            v.get(i).filter(|iv| iv.start <= t0).map(|iv| iv.tag)
        };
        let tags = [tag_at(&little, li), tag_at(&big, bi)];
        let a = tags.contains(&Some(Tag::AccessSlice));
        let e = tags.contains(&Some(Tag::ExecuteSlice));
        if a || e {
            if a {
                b.access += len;
            }
            if e {
                b.execute += len;
            }
            if a && e {
                b.overlap += len;
            }
            continue;
        }
        match tags.iter().flatten().map(|&t| rank(t)).max().unwrap_or(0) {
            2 => b.sync += len,
            1 => b.thread += len,
            _ => b.idle += len,
        }
    }
    b
}

pub fn breakdown<T: Scalar>(tl: &Timeline) -> Breakdown<T> {
    let b = tick_breakdown(tl);
    let ns = |t: u64| T::of(tl.ns(t));
    Breakdown {
        access_ns: ns(b.access),
        execute_ns: ns(b.execute),
        sync_ns: ns(b.sync),
        thread_ns: ns(b.thread),
        idle_ns: ns(b.idle),
        overlap_ns: ns(b.overlap),
    }
}

/// Time each core spends executing code of any kind (slices, locks, thread
/// management), as opposed to waiting, sleeping or idling.
pub fn active_ns<T: Scalar>(tl: &Timeline, core: ClusterId) -> T {
    let ticks: u64 = tl
        .core(core)
        .filter(|i| rank(i.tag) > 0)
        .map(|i| i.len())
        .sum();
    T::of(tl.ns(ticks))
}

/// Active power as a function of frequency, plus a flat idle power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound = "T: Scalar + Serialize + DeserializeOwned"
)]
pub struct ClusterPower<T> {
    /// `(frequency_mhz, milliwatts)` points, interpolated linearly and
    /// clamped at the ends.
    pub active_mw: Vec<(u32, T)>,
    pub idle_mw: T,
}

impl<T: Scalar> ClusterPower<T> {
    pub fn active_at(&self, mhz: u32) -> T {
        let pts = &self.active_mw;
        let Some(first) = pts.first() else {
            return T::zero();
        };
        if mhz <= first.0 {
            return first.1;
        }
        for w in pts.windows(2) {
            let ((f0, p0), (f1, p1)) = (w[0], w[1]);
            if mhz <= f1 {
                let x = T::of(f64::from(mhz - f0) / f64::from(f1 - f0));
                return p0 + (p1 - p0) * x;
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Parametric power model for relative energy comparisons only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound = "T: Scalar + Serialize + DeserializeOwned"
)]
pub struct PowerModel<T> {
    pub big: ClusterPower<T>,
    pub little: ClusterPower<T>,
}

impl<T: Scalar> Default for PowerModel<T> {
    fn default() -> Self {
        // Flat tables: 1600/80 mW big, 400/20 mW LITTLE at any frequency.
        let flat = |active: f64, idle: f64| ClusterPower {
            active_mw: vec![(0, T::of(active))],
            idle_mw: T::of(idle),
        };
        PowerModel {
            big: flat(1600.0, 80.0),
            little: flat(400.0, 20.0),
        }
    }
}

impl<T: Scalar> PowerModel<T> {
    pub fn cluster(&self, id: ClusterId) -> &ClusterPower<T> {
        match id {
            ClusterId::Big => &self.big,
            ClusterId::Little => &self.little,
        }
    }

    pub fn validate(&self, machine: &MachineConfig) -> Result<(), ConfigError> {
        for c in [&self.big, &self.little] {
            let ok = |p: T| p >= T::zero() && p.is_finite();
            if !ok(c.idle_mw) || !c.active_mw.iter().all(|&(_, p)| ok(p)) {
                return Err(ConfigError::Power(
                    "powers must be finite and non-negative".into(),
                ));
            }
            if c.active_mw.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(ConfigError::Power("frequency points must increase".into()));
            }
        }
        let big = self.big.active_at(machine.big.core.frequency_mhz);
        let little = self.little.active_at(machine.little.core.frequency_mhz);
        if big <= little {
            return Err(ConfigError::Power(
                "big active power must exceed LITTLE active power at the configured frequencies"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Energy of a run in millijoules and its energy-delay product in
/// millijoule-seconds.
pub fn energy_edp<T: Scalar>(m: &RunMetrics<T>, pm: &PowerModel<T>) -> (T, T) {
    let runtime = m.total_runtime_ns;
    let mut energy_pj = T::zero();
    for (active, mhz, power) in [
        (m.big_active_ns, m.big_mhz, &pm.big),
        (m.little_active_ns, m.little_mhz, &pm.little),
    ] {
        let idle = (runtime - active).max(T::zero());
        energy_pj = energy_pj + active * power.active_at(mhz) + idle * power.idle_mw;
    }
    // mW x ns = 1e-12 J = 1e-9 mJ
    let energy = energy_pj * T::of(1e-9);
    (energy, energy * runtime * T::of(1e-9))
}

/// Everything reported about one run relative to its coupled baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics<T> {
    pub kernel: String,
    pub policy: String,
    pub threads: String,
    pub granularity: u64,
    pub slice_count: u64,
    pub invocations: u32,
    pub baseline_ipc: T,
    pub execute_ipc: T,
    pub ipc_speedup: T,
    pub baseline_runtime_ns: T,
    pub total_runtime_ns: T,
    pub slowdown: T,
    pub breakdown: Breakdown<T>,
    pub little_time_fraction: T,
    /// Execute-phase demand loads by service source.
    pub execute_sources: SourceCounts,
    pub prefetch: PrefetchCounts,
    pub big_active_ns: T,
    pub little_active_ns: T,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub energy_mj: T,
    pub edp: T,
    pub quantized: bool,
}

/// Options for turning runs into metrics.
#[derive(Debug, Clone)]
pub struct MetricsOptions<T> {
    /// Read IPC through a divided, wrapping counter instead of exactly.
    pub counters: Option<CounterConfig>,
    pub power: PowerModel<T>,
}

impl<T: Scalar> Default for MetricsOptions<T> {
    fn default() -> Self {
        MetricsOptions {
            counters: None,
            power: PowerModel::default(),
        }
    }
}

pub fn run_metrics<T: Scalar>(
    run: &Run,
    baseline: &Run,
    machine: &MachineConfig,
    opts: &MetricsOptions<T>,
) -> Result<RunMetrics<T>, MetricsError> {
    let timing = machine.timing();
    let q = opts.counters.as_ref().map(|c| (c, &timing));
    let base = inner_loop_counters(&baseline.timeline, Phase::Execute, q)?;
    let exec = inner_loop_counters(&run.timeline, Phase::Execute, q)?;
    let bd = breakdown::<T>(&run.timeline);
    let mut sources = SourceCounts::default();
    for r in run.phase_slices(Phase::Execute) {
        sources.add(&r.result.sources);
    }
    let mut prefetch = PrefetchCounts::default();
    for r in run.phase_slices(Phase::Access) {
        prefetch.add(&r.result.prefetch);
    }
    let total = T::of(run.runtime_ns());
    let base_total = T::of(baseline.runtime_ns());
    if base_total == T::zero() {
        return Err(MetricsError::DivisionByZero);
    }
    let mut m = RunMetrics {
        kernel: run.kernel.clone(),
        policy: run.policy.label(),
        threads: run.threads.map_or("none", |t| t.name()).to_string(),
        granularity: run.granularity,
        slice_count: run.slice_count,
        invocations: run.invocations,
        baseline_ipc: T::of(base.ipc()?),
        execute_ipc: T::of(exec.ipc()?),
        ipc_speedup: T::of(ipc_speedup(&exec, &base)?),
        baseline_runtime_ns: base_total,
        total_runtime_ns: total,
        slowdown: total / base_total,
        little_time_fraction: bd.little_time_fraction(),
        breakdown: bd,
        execute_sources: sources,
        prefetch,
        big_active_ns: active_ns(&run.timeline, ClusterId::Big),
        little_active_ns: active_ns(&run.timeline, ClusterId::Little),
        big_mhz: machine.big.core.frequency_mhz,
        little_mhz: machine.little.core.frequency_mhz,
        energy_mj: T::zero(),
        edp: T::zero(),
        quantized: opts.counters.is_some(),
    };
    (m.energy_mj, m.edp) = energy_edp(&m, &opts.power);
    Ok(m)
}

/// Frozen CSV column names, in order.
pub const CSV_COLUMNS: [&str; 30] = [
    "kernel",
    "policy",
    "threads",
    "granularity",
    "slice_count",
    "invocations",
    "baseline_ipc",
    "execute_ipc",
    "ipc_speedup",
    "baseline_runtime_ns",
    "total_runtime_ns",
    "slowdown",
    "access_ns",
    "execute_ns",
    "sync_ns",
    "thread_ns",
    "idle_ns",
    "overlap_ns",
    "little_time_fraction",
    "exec_l1",
    "exec_local_l2",
    "exec_remote",
    "exec_memory",
    "exec_mean_load_cycles",
    "prefetch_enqueued",
    "prefetch_redundant",
    "prefetch_dropped",
    "energy_mj",
    "edp",
    "quantized",
];

impl<T: Scalar> RunMetrics<T> {
    /// Field values in [`CSV_COLUMNS`] order.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |v: T| format!("{v}");
        let b = &self.breakdown;
        let s = &self.execute_sources;
        vec![
            self.kernel.clone(),
            self.policy.clone(),
            self.threads.clone(),
            self.granularity.to_string(),
            self.slice_count.to_string(),
            self.invocations.to_string(),
            f(self.baseline_ipc),
            f(self.execute_ipc),
            f(self.ipc_speedup),
            f(self.baseline_runtime_ns),
            f(self.total_runtime_ns),
            f(self.slowdown),
            f(b.access_ns),
            f(b.execute_ns),
            f(b.sync_ns),
            f(b.thread_ns),
            f(b.idle_ns),
            f(b.overlap_ns),
            f(self.little_time_fraction),
            s.l1.to_string(),
            s.local_l2.to_string(),
            s.remote.to_string(),
            s.memory.to_string(),
            format!("{}", s.mean_latency()),
            self.prefetch.enqueued.to_string(),
            self.prefetch.redundant.to_string(),
            self.prefetch.dropped.to_string(),
            f(self.energy_mj),
            f(self.edp),
            self.quantized.to_string(),
        ]
    }
}

/// Writes the header and one row per metrics record.
pub fn write_csv<T: Scalar, W: std::io::Write>(out: W, rows: &[RunMetrics<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
