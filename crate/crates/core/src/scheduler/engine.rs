use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ConfigError, Error, Result};
use crate::kernel_ir::ValidatedKernel;
use crate::machine::{
    ClusterId, MachineConfig, MemorySystem, SliceExec, SliceProgram, Step, Timing,
};
use crate::scheduler::policy::{SyncPolicy, ThreadModel};
use crate::scheduler::timeline::{Interval, Phase, SliceRecord, Tag, Timeline};
use crate::transform::{chunk, ChunkedKernel, PhasePair};

/// One simulated run: a phase pair under a policy, or the coupled baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub kernel: String,
    pub policy: SyncPolicy,
    pub threads: Option<ThreadModel>,
    pub granularity: u64,
    pub slice_count: u64,
    pub invocations: u32,
    pub degenerate: bool,
    pub timeline: Timeline,
}

impl Run {
    pub fn runtime_ns(&self) -> f64 {
        self.timeline.end_ns()
    }

    pub fn phase_slices(&self, phase: Phase) -> impl Iterator<Item = &SliceRecord> + '_ {
        self.timeline.phase_slices(phase)
    }
}

/// Seeded jitter stream of one phase. Each sleep draws exactly one sample.
#[derive(Debug, Clone)]
pub struct Jitter {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl Jitter {
    pub fn new(seed: u64, phase: Phase, stddev_ns: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(match phase {
            Phase::Access => 0,
            Phase::Execute => 1,
        });
        Jitter {
            rng,
            normal: (stddev_ns > 0.0)
                .then(|| Normal::new(0.0, stddev_ns).expect("valid deviation")),
        }
    }

    /// Sleep length in ticks for a nominal sleep of `base_ns`.
    pub fn sleep_ticks(&mut self, base_ns: f64, timing: &Timing) -> u64 {
        let j = self.normal.map_or(0.0, |n| n.sample(&mut self.rng));
        timing.ns_to_ticks((base_ns + j).max(0.0))
    }
}

enum State {
    /// Choose the next action at this tick.
    Decide(u64),
    /// Blocked on the other phase since this tick.
    Waiting(u64),
    /// Start the next slice at this tick.
    Busy(u64),
    Running(Box<SliceExec>, u64),
    Finished(u64),
}

struct PhaseThread {
    phase: Phase,
    core: ClusterId,
    kernel: ValidatedKernel,
    state: State,
    s: u64,
    jitter: Option<Jitter>,
    sleep_ns: f64,
}

impl PhaseThread {
    fn next_tick(&self) -> Option<u64> {
        match &self.state {
            State::Decide(t) | State::Busy(t) | State::Running(_, t) => Some(*t),
            State::Waiting(_) | State::Finished(_) => None,
        }
    }

    fn tag(&self) -> Tag {
        match self.phase {
            Phase::Access => Tag::AccessSlice,
            Phase::Execute => Tag::ExecuteSlice,
        }
    }
}

struct Engine<'a> {
    machine: &'a MachineConfig,
    timing: Timing,
    mem: MemorySystem,
    policy: SyncPolicy,
    lock_ticks: u64,
    granularity: u64,
    slice_count: u64,
    iterations: u64,
    timeline: Timeline,
    invocation: u32,
    begin: u64,
    a_end: Vec<Option<u64>>,
    a_lead: Vec<Option<u64>>,
    e_end: Vec<Option<u64>>,
    /// Indexed by `ClusterId::index`: LITTLE (Access) first.
    threads: [Option<PhaseThread>; 2],
}

impl Engine<'_> {
    fn push(&mut self, core: ClusterId, tag: Tag, start: u64, end: u64, slice: Option<u64>) {
        self.timeline.push(Interval {
            core,
            tag,
            start,
            end,
            invocation: self.invocation,
            slice,
        });
    }

    fn thread(&mut self, idx: usize) -> &mut PhaseThread {
        self.threads[idx].as_mut().expect("thread exists")
    }

    fn wake(&mut self, idx: usize) {
        if let Some(t) = self.threads[idx].as_mut() {
            if let State::Waiting(since) = t.state {
                t.state = State::Decide(since);
            }
        }
    }

    fn run_invocation(&mut self) {
        loop {
            let next = self
                .threads
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.as_ref().and_then(|t| t.next_tick()).map(|tick| (tick, i)))
                .min();
            let Some((tick, idx)) = next else {
                break;
            };
            let state = std::mem::replace(&mut self.thread(idx).state, State::Finished(0));
            match state {
                State::Decide(t) => self.decide(idx, t),
                State::Busy(t) => self.begin_slice(idx, t),
                State::Running(exec, t) => self.step(idx, exec, t),
                State::Waiting(_) | State::Finished(_) => unreachable!("not schedulable at {tick}"),
            }
        }
        assert!(
            self.threads
                .iter()
                .flatten()
                .all(|t| matches!(t.state, State::Finished(_))),
            "phases deadlocked"
        );
    }

    fn decide(&mut self, idx: usize, t: u64) {
        let (phase, core, s) = {
            let th = self.thread(idx);
            (th.phase, th.core, th.s)
        };
        if s == self.slice_count {
            self.thread(idx).state = State::Finished(t);
            return;
        }
        let state = if self.policy == SyncPolicy::Coupled {
            State::Busy(t)
        } else if self.policy.locks(s) {
            let gate = match phase {
                Phase::Access if s == 0 => Some(self.begin),
                Phase::Access => self.e_end[s as usize - 1],
                Phase::Execute => self.a_lead[s as usize],
            };
            match gate {
                None => State::Waiting(t),
                Some(g) => {
                    let lock_start = t.max(g);
                    self.push(core, Tag::LockWait, t, lock_start, None);
                    self.push(
                        core,
                        Tag::Lock,
                        lock_start,
                        lock_start + self.lock_ticks,
                        None,
                    );
                    State::Busy(lock_start + self.lock_ticks)
                }
            }
        } else if phase == Phase::Access && s == 0 {
            State::Busy(t)
        } else {
            let timing = self.timing;
            let th = self.thread(idx);
            let base = th.sleep_ns;
            let d = th
                .jitter
                .as_mut()
                .expect("timed phases carry jitter")
                .sleep_ticks(base, &timing);
            self.push(core, Tag::Sleep, t, t + d, None);
            State::Busy(t + d)
        };
        self.thread(idx).state = state;
    }

    fn begin_slice(&mut self, idx: usize, t: u64) {
        let (phase, core, s) = {
            let th = self.thread(idx);
            (th.phase, th.core, th.s)
        };
        let start = s * self.granularity;
        let range = start..(start + self.granularity).min(self.iterations);
        let prog =
            SliceProgram::lower(&self.thread(idx).kernel, range).expect("slice range is valid");
        let mut exec = SliceExec::new(prog, core, self.machine, t);
        self.push(core, Tag::Idle, t, exec.result().start, None);
        let lead = self.policy.lead_fraction();
        if phase == Phase::Access && self.policy.locks(s) && lead < 1.0 {
            let k = (lead * f64::from(exec.prefetches())).ceil() as u64;
            exec.watch_prefetches(k);
            self.publish_lead(s, &exec);
        }
        let first = exec.first_tick();
        self.thread(idx).state = State::Running(Box::new(exec), first);
    }

    fn publish_lead(&mut self, s: u64, exec: &SliceExec) {
        if let (Some(tick), None) = (exec.lead_tick(), self.a_lead[s as usize]) {
            self.a_lead[s as usize] = Some(tick);
            self.wake(ClusterId::Big.index());
        }
    }

    fn step(&mut self, idx: usize, mut exec: Box<SliceExec>, t: u64) {
        match exec.step(t, &mut self.mem) {
            Step::At(next) => {
                if self.thread(idx).phase == Phase::Access {
                    let s = self.thread(idx).s;
                    self.publish_lead(s, &exec);
                }
                self.thread(idx).state = State::Running(exec, next);
            }
            Step::Done(end) => {
                let (phase, core, s, tag) = {
                    let th = self.thread(idx);
                    (th.phase, th.core, th.s, th.tag())
                };
                let result = *exec.result();
                self.push(core, tag, result.start, end, Some(s));
                self.timeline.slices.push(SliceRecord {
                    phase,
                    invocation: self.invocation,
                    slice: s,
                    result,
                });
                match phase {
                    Phase::Access => {
                        self.a_end[s as usize] = Some(end);
                        if self.a_lead[s as usize].is_none() {
                            self.a_lead[s as usize] = Some(end);
                        }
                        self.wake(ClusterId::Big.index());
                    }
                    Phase::Execute => {
                        self.e_end[s as usize] = Some(end);
                        self.wake(ClusterId::Little.index());
                    }
                }
                let th = self.thread(idx);
                th.s += 1;
                th.state = State::Decide(end);
            }
        }
    }
}

fn simulate(
    access: Option<&ValidatedKernel>,
    execute: &ValidatedKernel,
    granularity: u64,
    slice_count: u64,
    machine: &MachineConfig,
    policy: SyncPolicy,
    threads: Option<ThreadModel>,
) -> Timeline {
    let timing = machine.timing();
    let timed = policy.timed_params().copied();
    let mk = |phase: Phase, kernel: &ValidatedKernel| PhaseThread {
        phase,
        core: match phase {
            Phase::Access => ClusterId::Little,
            Phase::Execute => ClusterId::Big,
        },
        kernel: kernel.clone(),
        state: State::Finished(0),
        s: 0,
        jitter: timed.map(|t| Jitter::new(t.rng_seed, phase, t.jitter_stddev_ns)),
        sleep_ns: timed.map_or(0.0, |t| match phase {
            Phase::Access => t.sleep_access_ns,
            Phase::Execute => t.sleep_execute_ns,
        }),
    };
    let n = slice_count as usize;
    let mut e = Engine {
        machine,
        timing,
        mem: MemorySystem::new(machine),
        policy,
        lock_ticks: timing.ns_to_ticks(machine.costs.lock_cost_ns),
        granularity,
        slice_count,
        iterations: execute.iterations(),
        timeline: Timeline::new(timing.ticks_per_ns),
        invocation: 0,
        begin: 0,
        a_end: vec![None; n],
        a_lead: vec![None; n],
        e_end: vec![None; n],
        threads: [
            access.map(|k| mk(Phase::Access, k)),
            Some(mk(Phase::Execute, execute)),
        ],
    };
    let thread_ticks = threads.map(|t| timing.ns_to_ticks(t.cost_ns()));
    let thread_tag = match threads {
        Some(ThreadModel::SpawnPerInvocation { .. }) => Tag::Spawn,
        _ => Tag::Signal,
    };
    let mut start = 0;
    for inv in 0..execute.invocations() {
        e.invocation = inv;
        for v in [&mut e.a_end, &mut e.a_lead, &mut e.e_end] {
            v.iter_mut().for_each(|x| *x = None);
        }
        let mut begin = start;
        if let Some(c) = thread_ticks {
            for core in [ClusterId::Little, ClusterId::Big] {
                e.push(core, thread_tag, start, start + c, None);
            }
            begin += c;
        }
        e.begin = begin;
        for th in e.threads.iter_mut().flatten() {
            th.s = 0;
            th.state = State::Decide(begin);
        }
        e.run_invocation();
        let ends: Vec<(ClusterId, u64)> = e
            .threads
            .iter()
            .flatten()
            .map(|th| match th.state {
                State::Finished(t) => (th.core, t),
                _ => unreachable!(),
            })
            .collect();
        start = ends.iter().map(|&(_, t)| t).max().unwrap_or(begin);
        for (core, t) in ends {
            e.push(core, Tag::Idle, t, start, None);
        }
    }
    if access.is_none() {
        e.push(ClusterId::Little, Tag::Idle, 0, start, None);
    }
    e.timeline
}

/// The untransformed loop (one slice per invocation) on the big core alone,
/// with cold caches.
pub fn run_coupled(kernel: &ValidatedKernel, machine: &MachineConfig) -> Run {
    let chunked = chunk(kernel, kernel.iterations()).expect("whole-loop chunk is valid");
    run_coupled_chunked(&chunked, machine)
}

/// The chunked but otherwise untransformed loop on the big core alone.
pub fn run_coupled_chunked(chunked: &ChunkedKernel, machine: &MachineConfig) -> Run {
    let kernel = chunked.base();
    let timeline = simulate(
        None,
        kernel,
        chunked.granularity(),
        chunked.slice_count(),
        machine,
        SyncPolicy::Coupled,
        None,
    );
    debug_assert_eq!(
        timeline.check(
            chunked.slice_count(),
            kernel.invocations(),
            &[Phase::Execute]
        ),
        Ok(())
    );
    Run {
        kernel: kernel.name().to_string(),
        policy: SyncPolicy::Coupled,
        threads: None,
        granularity: chunked.granularity(),
        slice_count: chunked.slice_count(),
        invocations: kernel.invocations(),
        degenerate: false,
        timeline,
    }
}

/// Access on the LITTLE core, Execute on the big core, synchronized by
/// `sync`, with caches cold at the start.
pub fn run_dae(
    pair: &PhasePair,
    machine: &MachineConfig,
    sync: &SyncPolicy,
    threads: &ThreadModel,
) -> Result<Run> {
    if *sync == SyncPolicy::Coupled {
        return Err(
            ConfigError::Policy("the coupled baseline runs through run_coupled".into()).into(),
        );
    }
    sync.validate()?;
    threads.validate()?;
    machine.validate()?;
    let timeline = simulate(
        Some(&pair.access),
        &pair.execute,
        pair.granularity,
        pair.slice_count,
        machine,
        *sync,
        Some(*threads),
    );
    let invocations = pair.execute.invocations();
    timeline
        .check(
            pair.slice_count,
            invocations,
            &[Phase::Access, Phase::Execute],
        )
        .map_err(Error::Format)?;
    if matches!(sync, SyncPolicy::LockStep { lead_fraction } if *lead_fraction == 1.0) {
        assert_lockstep_order(&timeline);
    }
    Ok(Run {
        kernel: pair.execute.name().to_string(),
        policy: *sync,
        threads: Some(*threads),
        granularity: pair.granularity,
        slice_count: pair.slice_count,
        invocations,
        degenerate: pair.degenerate,
        timeline,
    })
}

/// `(start, end)` of every slice of `phase`, indexed by invocation and slice.
fn bounds(tl: &Timeline, phase: Phase) -> Vec<Vec<(u64, u64)>> {
    let mut out: Vec<Vec<(u64, u64)>> = Vec::new();
    for r in tl.phase_slices(phase) {
        let inv = r.invocation as usize;
        if out.len() <= inv {
            out.resize(inv + 1, Vec::new());
        }
        let v = &mut out[inv];
        if v.len() <= r.slice as usize {
            v.resize(r.slice as usize + 1, (0, 0));
        }
        v[r.slice as usize] = (r.result.start, r.result.end);
    }
    out
}

/// Panics unless Execute(s) starts after Access(s) ends and Access(s + 1)
/// starts after Execute(s) ends.
pub fn assert_lockstep_order(tl: &Timeline) {
    let a = bounds(tl, Phase::Access);
    let e = bounds(tl, Phase::Execute);
    for (inv, (a, e)) in a.iter().zip(&e).enumerate() {
        for s in 0..e.len() {
            assert!(
                e[s].0 >= a[s].1,
                "invocation {inv}: execute slice {s} starts before access ends"
            );
            if s + 1 < a.len() {
                assert!(
                    a[s + 1].0 >= e[s].1,
                    "invocation {inv}: access slice {} starts before execute {s} ends",
                    s + 1
                );
            }
        }
    }
}

/// Largest number of slices one phase has started beyond those the other
/// phase has completed, over the whole timeline.
pub fn max_slice_drift(tl: &Timeline) -> u64 {
    // (tick, is_start, phase); ends sort before starts at the same tick.
    let mut events: Vec<(u32, u64, bool, Phase)> = Vec::new();
    for r in &tl.slices {
        events.push((r.invocation, r.result.start, true, r.phase));
        events.push((r.invocation, r.result.end, false, r.phase));
    }
    events.sort_by_key(|&(inv, t, start, phase)| (inv, t, start, phase));
    let mut drift = 0i64;
    let mut cur_inv = u32::MAX;
    let (mut a_started, mut a_done, mut e_started, mut e_done) = (0i64, 0i64, 0i64, 0i64);
    for (inv, _, start, phase) in events {
        if inv != cur_inv {
            cur_inv = inv;
            (a_started, a_done, e_started, e_done) = (0, 0, 0, 0);
        }
        match (phase, start) {
            (Phase::Access, true) => a_started += 1,
            (Phase::Access, false) => a_done += 1,
            (Phase::Execute, true) => e_started += 1,
            (Phase::Execute, false) => e_done += 1,
        }
        drift = drift.max(a_started - e_done).max(e_started - a_done);
    }
    drift.max(0) as u64
}
