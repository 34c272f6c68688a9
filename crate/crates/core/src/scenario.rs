//! Scenario files, granularity sweeps with reports, and policy comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::kernel_ir::{parse_kernel, validate_kernel, ValidatedKernel};
use crate::machine::MachineConfig;
use crate::metrics::{run_metrics, write_csv, CounterConfig, MetricsOptions};
use crate::presets::{
    granularity_grid, preset, preset_threads, preset_with_iterations, PRESET_NAMES,
};
use crate::scheduler::{
    perfect_sleeps, run_coupled, run_dae, Phase, Run, SyncPolicy, ThreadModel, TimedParams,
};
use crate::transform::{chunk, make_phase_pair};
use crate::{Metrics, Power};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    LockStep,
    Timed,
    Hybrid,
}

/// Synchronization settings of a scenario. Timed and hybrid sleeps left
/// unset are derived per granularity from a lock-step run (perfect sleeps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSpec {
    pub kind: SyncKind,
    #[serde(default)]
    pub lead_fraction: Option<f64>,
    #[serde(default)]
    pub sleep_access_ns: Option<f64>,
    #[serde(default)]
    pub sleep_execute_ns: Option<f64>,
    #[serde(default)]
    pub jitter_stddev_ns: f64,
    #[serde(default)]
    pub resync_period_slices: Option<u64>,
}

impl Default for SyncSpec {
    fn default() -> Self {
        SyncSpec {
            kind: SyncKind::LockStep,
            lead_fraction: None,
            sleep_access_ns: None,
            sleep_execute_ns: None,
            jitter_stddev_ns: 0.0,
            resync_period_slices: None,
        }
    }
}

/// Default resync period of hybrid runs.
pub const DEFAULT_RESYNC_PERIOD: u64 = 4;

impl SyncSpec {
    fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Scenario(m.into()));
        if self.sleep_access_ns.is_some() != self.sleep_execute_ns.is_some() {
            return bad("set both sleep_access_ns and sleep_execute_ns, or neither");
        }
        match self.kind {
            SyncKind::LockStep
                if self.sleep_access_ns.is_some() || self.resync_period_slices.is_some() =>
            {
                bad("lock_step takes no sleeps or resync period")
            }
            SyncKind::Timed
                if self.lead_fraction.is_some() || self.resync_period_slices.is_some() =>
            {
                bad("timed takes no lead fraction or resync period")
            }
            _ => Ok(()),
        }
    }

    fn needs_lockstep(&self) -> bool {
        self.kind != SyncKind::LockStep && self.sleep_access_ns.is_none()
    }

    /// The policy for one granularity. `lockstep` must be given when sleeps
    /// are derived.
    pub fn policy(&self, seed: u64, lockstep: Option<&Run>) -> Result<SyncPolicy> {
        let lead = self.lead_fraction.unwrap_or(1.0);
        let timed = || match (self.sleep_access_ns, self.sleep_execute_ns, lockstep) {
            (Some(a), Some(e), _) => TimedParams {
                sleep_access_ns: a,
                sleep_execute_ns: e,
                jitter_stddev_ns: self.jitter_stddev_ns,
                rng_seed: seed,
            },
            (_, _, Some(run)) => perfect_sleeps(run, self.jitter_stddev_ns, seed),
            _ => unreachable!("derived sleeps need a lock-step run"),
        };
        let p = match self.kind {
            SyncKind::LockStep => SyncPolicy::LockStep {
                lead_fraction: lead,
            },
            SyncKind::Timed => SyncPolicy::Timed(timed()),
            SyncKind::Hybrid => SyncPolicy::Hybrid {
                timed: timed(),
                resync_period_slices: self.resync_period_slices.unwrap_or(DEFAULT_RESYNC_PERIOD),
                lead_fraction: lead,
            },
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadKind {
    Spawn,
    Pool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One scenario as written in TOML. Relative paths resolve against
/// `base_dir`, the directory of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Report file stem; defaults to the kernel name.
    #[serde(default)]
    pub name: Option<String>,
    /// A preset name or the path of a kernel text file.
    pub kernel: String,
    /// Preset trip count per invocation.
    #[serde(default)]
    pub iterations: Option<u64>,
    /// Preset invocation count.
    #[serde(default)]
    pub invocations: Option<u32>,
    /// Machine TOML; the built-in defaults when absent.
    #[serde(default)]
    pub machine: Option<PathBuf>,
    /// Granularities to sweep; the preset grid when absent.
    #[serde(default)]
    pub granularities: Option<Vec<u64>>,
    #[serde(default)]
    pub sync: SyncSpec,
    /// Defaults to the preset's model, or spawn for kernel files.
    #[serde(default)]
    pub threads: Option<ThreadKind>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub quantized_counters: bool,
    #[serde(default)]
    pub counters: Option<CounterConfig>,
    #[serde(default)]
    pub power: Option<Power>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    /// A scenario for `kernel` with every other field at its default.
    pub fn new(kernel: impl Into<String>) -> Self {
        ScenarioConfig {
            name: None,
            kernel: kernel.into(),
            iterations: None,
            invocations: None,
            machine: None,
            granularities: None,
            sync: SyncSpec::default(),
            threads: None,
            out_dir: default_out_dir(),
            rng_seed: 0,
            quantized_counters: false,
            counters: None,
            power: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_toml(src: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(src).map_err(|e| ConfigError::Scenario(e.message().to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&src, dir)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads and validates everything the scenario refers to.
    pub fn resolve(&self) -> Result<Scenario> {
        let is_preset = PRESET_NAMES.contains(&self.kernel.as_str());
        let kernel = if is_preset {
            match (self.iterations, self.invocations) {
                (None, None) => preset(&self.kernel),
                (n, inv) => {
                    let d = preset(&self.kernel).expect("known preset");
                    let n = n.unwrap_or(d.iterations());
                    if n == 0 {
                        return Err(
                            ConfigError::Scenario("iterations must be positive".into()).into()
                        );
                    }
                    preset_with_iterations(&self.kernel, n, inv.unwrap_or(d.invocations()))
                }
            }
            .expect("known preset")
        } else {
            if self.iterations.is_some() || self.invocations.is_some() {
                return Err(ConfigError::Scenario(
                    "iterations and invocations apply to presets only".into(),
                )
                .into());
            }
            load_kernel(&self.path(Path::new(&self.kernel)))?
        };
        let machine = match &self.machine {
            Some(p) => load_machine(&self.path(p))?,
            None => MachineConfig::default(),
        };
        machine.validate()?;
        let granularities = match &self.granularities {
            Some(g) if g.is_empty() => {
                return Err(ConfigError::Scenario("granularity list is empty".into()).into());
            }
            Some(g) => g.clone(),
            None => granularity_grid(&kernel, &machine),
        };
        for &g in &granularities {
            chunk(&kernel, g)?;
        }
        self.sync.check()?;
        let threads = match self.threads {
            Some(ThreadKind::Spawn) => ThreadModel::spawn(&machine),
            Some(ThreadKind::Pool) => ThreadModel::pool(&machine),
            None if is_preset => preset_threads(&self.kernel, &machine),
            None => ThreadModel::spawn(&machine),
        };
        let counters = match (self.quantized_counters, self.counters) {
            (_, Some(c)) => Some(c),
            (true, None) => Some(CounterConfig::default()),
            (false, None) => None,
        };
        if let Some(c) = &counters {
            c.validate()?;
        }
        let power = self.power.clone().unwrap_or_default();
        power.validate(&machine)?;
        Ok(Scenario {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| kernel.name().to_string()),
            kernel,
            machine,
            granularities,
            sync: self.sync.clone(),
            threads,
            out_dir: self.path(&self.out_dir),
            rng_seed: self.rng_seed,
            opts: MetricsOptions { counters, power },
        })
    }
}

pub fn load_kernel(path: &Path) -> Result<ValidatedKernel> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(validate_kernel(parse_kernel(&src)?)?)
}

pub fn load_machine(path: &Path) -> Result<MachineConfig> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(MachineConfig::from_toml(&src)?)
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kernel: ValidatedKernel,
    pub machine: MachineConfig,
    pub granularities: Vec<u64>,
    pub sync: SyncSpec,
    pub threads: ThreadModel,
    pub out_dir: PathBuf,
    pub rng_seed: u64,
    pub opts: MetricsOptions<f64>,
}

/// Sweep results: the coupled baseline, then one DAE run per granularity in
/// request order, with metrics for each.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub baseline: Run,
    pub runs: Vec<Run>,
    pub rows: Vec<Metrics>,
}

impl SweepReport {
    /// Index of the DAE run with the highest Execute IPC speedup; the
    /// smaller granularity wins ties.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.rows.iter().enumerate().skip(1) {
            if r.ipc_speedup > self.rows[best].ipc_speedup {
                best = i;
            }
        }
        best
    }
}

fn lockstep_run(
    kernel: &ValidatedKernel,
    machine: &MachineConfig,
    g: u64,
    threads: &ThreadModel,
) -> Result<Run> {
    run_dae(
        &make_phase_pair(&chunk(kernel, g)?),
        machine,
        &SyncPolicy::lock_step(),
        threads,
    )
}

impl Scenario {
    /// Runs the coupled baseline and one DAE run per granularity.
    pub fn sweep(&self) -> Result<SweepReport> {
        let (baseline, runs) = rayon::join(
            || run_coupled(&self.kernel, &self.machine),
            || {
                self.granularities
                    .par_iter()
                    .map(|&g| {
                        let lockstep = match self.sync.needs_lockstep() {
                            true => {
                                Some(lockstep_run(&self.kernel, &self.machine, g, &self.threads)?)
                            }
                            false => None,
                        };
                        let policy = self.sync.policy(self.rng_seed, lockstep.as_ref())?;
                        let pair = make_phase_pair(&chunk(&self.kernel, g)?);
                        run_dae(&pair, &self.machine, &policy, &self.threads)
                    })
                    .collect::<Result<Vec<_>>>()
            },
        );
        let runs = runs?;
        let rows = runs
            .iter()
            .map(|r| run_metrics(r, &baseline, &self.machine, &self.opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepReport {
            baseline,
            runs,
            rows,
        })
    }
}

/// Paths of the files written by [`run_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub timeline: PathBuf,
    pub summary: PathBuf,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn csv_bytes(rows: &[Metrics]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_csv(&mut out, rows).map_err(|e| Error::Format(e.to_string()))?;
    Ok(out)
}

/// Validates `cfg`, runs its sweep and writes `<name>.csv`,
/// `<name>_timeline.json` (the best-granularity run) and `<name>_summary.txt`
/// into the output directory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SweepReport, ReportFiles)> {
    let sc = cfg.resolve()?;
    let report = sc.sweep()?;
    let dir = &sc.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let files = ReportFiles {
        csv: dir.join(format!("{}.csv", sc.name)),
        timeline: dir.join(format!("{}_timeline.json", sc.name)),
        summary: dir.join(format!("{}_summary.txt", sc.name)),
    };
    write_file(&files.csv, &csv_bytes(&report.rows)?)?;
    write_file(
        &files.timeline,
        report.runs[report.best()].timeline.to_json().as_bytes(),
    )?;
    write_file(&files.summary, sweep_summary(&sc, &report).as_bytes())?;
    Ok((report, files))
}

/// Plain-text summary: Execute IPC speedup and slowdown per granularity.
pub fn sweep_summary(sc: &Scenario, report: &SweepReport) -> String {
    let k = &sc.kernel;
    let b = &report.rows[0];
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}", sc.name);
    let _ = writeln!(
        s,
        "kernel {}: {} iterations x {} invocations, threads {}, counters {}",
        k.name(),
        k.iterations(),
        k.invocations(),
        sc.threads.name(),
        if sc.opts.counters.is_some() {
            "quantized"
        } else {
            "exact"
        },
    );
    let _ = writeln!(
        s,
        "baseline: runtime {:.1} us, Execute IPC {:.4}",
        b.baseline_runtime_ns / 1e3,
        b.baseline_ipc
    );
    let _ = writeln!(
        s,
        "{:>8} {:>7} {:>28} {:>11} {:>9} {:>11} {:>12}",
        "g", "slices", "policy", "ipc_speedup", "slowdown", "little_frac", "sync_us"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>7} {:>28} {:>11.4} {:>9.3} {:>11.3} {:>12.1}",
            r.granularity,
            r.slice_count,
            r.policy,
            r.ipc_speedup,
            r.slowdown,
            r.little_time_fraction,
            r.breakdown.sync_ns / 1e3
        );
    }
    let best = &report.rows[report.best()];
    let _ = writeln!(
        s,
        "peak IPC speedup {:.4} at g={} (slowdown {:.3}x, LITTLE fraction {:.3})",
        best.ipc_speedup, best.granularity, best.slowdown, best.little_time_fraction
    );
    if let Some(fast) = report.rows.iter().min_by(|a, b| {
        a.slowdown
            .total_cmp(&b.slowdown)
            .then(b.granularity.cmp(&a.granularity))
    }) {
        let _ = writeln!(
            s,
            "lowest slowdown {:.3}x at g={} (IPC speedup {:.4})",
            fast.slowdown, fast.granularity, fast.ipc_speedup
        );
    }
    s
}

/// Runs of one kernel at one granularity under every policy.
#[derive(Debug, Clone)]
pub struct PolicyComparison {
    /// Coupled baseline, LockStep, Timed, Hybrid.
    pub runs: Vec<Run>,
    pub rows: Vec<Metrics>,
}

impl PolicyComparison {
    /// Instructions retired by Execute's inner loops in run `i`.
    pub fn execute_retired(&self, i: usize) -> u64 {
        self.runs[i]
            .phase_slices(Phase::Execute)
            .map(|r| r.result.retired)
            .sum()
    }
}

/// Coupled, LockStep, Timed with perfect sleeps and Hybrid on identical
/// inputs. Sleeps come from the LockStep run, which the oracle reproduces
/// exactly. Timed and Hybrid draw jitter of `jitter_stddev_ns` from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn compare_policies(
    kernel: &ValidatedKernel,
    machine: &MachineConfig,
    g: u64,
    threads: &ThreadModel,
    jitter_stddev_ns: f64,
    resync_period_slices: u64,
    seed: u64,
    opts: &MetricsOptions<f64>,
) -> Result<PolicyComparison> {
    let pair = make_phase_pair(&chunk(kernel, g)?);
    let baseline = run_coupled(kernel, machine);
    let lockstep = run_dae(&pair, machine, &SyncPolicy::lock_step(), threads)?;
    let sleeps = perfect_sleeps(&lockstep, jitter_stddev_ns, seed);
    let timed = run_dae(&pair, machine, &SyncPolicy::Timed(sleeps), threads)?;
    let hybrid = run_dae(
        &pair,
        machine,
        &SyncPolicy::hybrid(sleeps, resync_period_slices),
        threads,
    )?;
    let runs = vec![baseline, lockstep, timed, hybrid];
    let rows = runs
        .iter()
        .map(|r| run_metrics(r, &runs[0], machine, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolicyComparison { runs, rows })
}

/// Plain-text table of a policy comparison.
pub fn policy_summary(c: &PolicyComparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>28} {:>14} {:>11} {:>11} {:>9} {:>12} {:>16}",
        "policy",
        "runtime_us",
        "execute_ipc",
        "ipc_speedup",
        "slowdown",
        "sync_us",
        "execute_retired"
    );
    for (i, r) in c.rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>28} {:>14.1} {:>11.4} {:>11.4} {:>9.3} {:>12.1} {:>16}",
            r.policy,
            r.total_runtime_ns / 1e3,
            r.execute_ipc,
            r.ipc_speedup,
            r.slowdown,
            r.breakdown.sync_ns / 1e3,
            c.execute_retired(i)
        );
    }
    s
}
