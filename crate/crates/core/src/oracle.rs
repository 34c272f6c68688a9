//! Brute-force reference simulator. It advances global time one tick at a
//! time, steps every core on every one of its cycles and keeps its own
//! caches (recency stamps instead of ordered sets), prefetch queues and
//! handshake logic. Only the kernel lowering and the jitter streams are
//! shared with the event-driven simulator.

use crate::error::{Error, OracleError, Result};
use crate::kernel_ir::ValidatedKernel;
use crate::machine::{
    align_up, line_of, ClusterId, CoreKind, DynKind, MachineConfig, PrefetchOutcome, ServiceResult,
    ServiceSource, SliceProgram, SliceResult,
};
use crate::scheduler::{
    Interval, Jitter, Phase, SliceRecord, SyncPolicy, Tag, ThreadModel, Timeline,
};
use crate::transform::{chunk, make_phase_pair, OUTER_LOOP_OPS};

/// Largest trip count the oracle accepts.
pub const ORACLE_LIMIT: u64 = 4096;

#[derive(Debug, Clone, Copy)]
struct Way {
    tag: u64,
    ready: u64,
    stamp: u64,
}

#[derive(Debug, Clone)]
struct StampCache {
    ways: usize,
    sets: Vec<Vec<Way>>,
    clock: u64,
}

impl StampCache {
    fn new(size_bytes: u64, line_bytes: u32, ways: u32) -> Self {
        let n = size_bytes / (u64::from(line_bytes) * u64::from(ways));
        StampCache {
            ways: ways as usize,
            sets: vec![Vec::new(); n as usize],
            clock: 0,
        }
    }

    fn slot(&mut self, line: u64) -> (usize, Option<usize>) {
        let s = (line % self.sets.len() as u64) as usize;
        (s, self.sets[s].iter().position(|w| w.tag == line))
    }

    fn peek(&self, line: u64) -> Option<u64> {
        let s = (line % self.sets.len() as u64) as usize;
        self.sets[s].iter().find(|w| w.tag == line).map(|w| w.ready)
    }

    fn touch(&mut self, line: u64) -> Option<u64> {
        let (s, pos) = self.slot(line);
        let pos = pos?;
        self.clock += 1;
        self.sets[s][pos].stamp = self.clock;
        Some(self.sets[s][pos].ready)
    }

    fn fill(&mut self, line: u64, ready: u64) {
        let (s, pos) = self.slot(line);
        self.clock += 1;
        let stamp = self.clock;
        let set = &mut self.sets[s];
        if let Some(p) = pos {
            set[p].ready = set[p].ready.min(ready);
            set[p].stamp = stamp;
            return;
        }
        if set.len() == self.ways {
            let victim = (0..set.len())
                .min_by_key(|&i| set[i].stamp)
                .expect("full set");
            set.swap_remove(victim);
        }
        set.push(Way {
            tag: line,
            ready,
            stamp,
        });
    }

    fn drop_line(&mut self, line: u64) -> bool {
        let (s, pos) = self.slot(line);
        match pos {
            Some(p) => {
                self.sets[s].swap_remove(p);
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
struct Side {
    l1: StampCache,
    l2: StampCache,
    pending: Vec<u64>,
    depth: usize,
    /// L1, L2, coherence and memory latencies in ticks.
    lat: [u64; 4],
    tpc: u64,
}

#[derive(Debug, Clone)]
struct Memory {
    sides: [Side; 2],
}

impl Memory {
    fn new(m: &MachineConfig) -> Self {
        let timing = m.timing();
        let side = |id: ClusterId| {
            let c = m.cluster(id);
            let t = timing.cluster(id);
            let tpc = t.ticks_per_cycle;
            Side {
                l1: StampCache::new(c.l1d.size_bytes, c.l1d.line_bytes, c.l1d.ways),
                l2: StampCache::new(c.l2.size_bytes, c.l2.line_bytes, c.l2.ways),
                pending: Vec::new(),
                depth: c.prefetch_queue_depth as usize,
                lat: [
                    t.l1_cycles * tpc,
                    t.l2_cycles * tpc,
                    t.coherence_cycles * tpc,
                    t.memory_cycles * tpc,
                ],
                tpc,
            }
        };
        Memory {
            sides: [side(ClusterId::Little), side(ClusterId::Big)],
        }
    }

    fn result(
        &self,
        c: ClusterId,
        source: ServiceSource,
        now: u64,
        complete: u64,
    ) -> ServiceResult {
        ServiceResult {
            source,
            latency_cycles: (complete - now).div_ceil(self.sides[c.index()].tpc),
            complete,
        }
    }

    fn load(&mut self, c: ClusterId, addr: u64, now: u64) -> ServiceResult {
        let line = line_of(addr);
        let remote = self.sides[c.other().index()]
            .l2
            .peek(line)
            .is_some_and(|r| r <= now);
        let me = &mut self.sides[c.index()];
        let [l1, l2, coh, mem] = me.lat;
        let (src, done) = if let Some(r) = me.l1.touch(line) {
            (ServiceSource::L1, r.max(now + l1))
        } else if let Some(r) = me.l2.touch(line) {
            let done = r.max(now + l2);
            me.l1.fill(line, done);
            (ServiceSource::LocalL2, done)
        } else {
            let (src, done) = match remote {
                true => (ServiceSource::RemoteCluster, now + coh),
                false => (ServiceSource::Memory, now + mem),
            };
            me.l2.fill(line, done);
            me.l1.fill(line, done);
            (src, done)
        };
        self.result(c, src, now, done)
    }

    fn store(&mut self, c: ClusterId, addr: u64, now: u64) -> ServiceResult {
        let line = line_of(addr);
        let other = &mut self.sides[c.other().index()];
        let in_l1 = other.l1.drop_line(line);
        let in_l2 = other.l2.drop_line(line);
        let shared = in_l1 || in_l2;
        let me = &mut self.sides[c.index()];
        let [l1, l2, coh, _] = me.lat;
        let (src, done) = if let Some(r) = me.l1.touch(line) {
            match shared {
                true => (ServiceSource::RemoteCluster, r.max(now + coh)),
                false => (ServiceSource::L1, r.max(now + l1)),
            }
        } else if let Some(r) = me.l2.touch(line) {
            let done = r.max(now + if shared { coh } else { l2 });
            me.l1.fill(line, done);
            (ServiceSource::LocalL2, done)
        } else {
            let (src, done) = match shared {
                true => (ServiceSource::RemoteCluster, now + coh),
                false => (ServiceSource::L1, now + l1),
            };
            me.l2.fill(line, done);
            me.l1.fill(line, done);
            (src, done)
        };
        self.result(c, src, now, done)
    }

    fn prefetch(&mut self, c: ClusterId, addr: u64, now: u64) -> PrefetchOutcome {
        let line = line_of(addr);
        let remote = self.sides[c.other().index()]
            .l2
            .peek(line)
            .is_some_and(|r| r <= now);
        let me = &mut self.sides[c.index()];
        let [_, l2, coh, mem] = me.lat;
        let in_flight = me.pending.iter().filter(|&&r| r > now).count();
        if me.l1.peek(line).is_some() {
            return PrefetchOutcome::Redundant;
        }
        if in_flight >= me.depth {
            return PrefetchOutcome::Dropped;
        }
        let ready = match me.l2.touch(line) {
            Some(r) => r.max(now + l2),
            None => {
                let r = now + if remote { coh } else { mem };
                me.l2.fill(line, r);
                r
            }
        };
        me.l1.fill(line, ready);
        me.pending.retain(|&r| r > now);
        me.pending.push(ready);
        PrefetchOutcome::Enqueued
    }

    fn in_l1(&self, c: ClusterId, addr: u64) -> bool {
        self.sides[c.index()].l1.peek(line_of(addr)).is_some()
    }
}

/// One slice on one core, stepped once per core cycle.
struct CycleCore {
    prog: SliceProgram,
    core: ClusterId,
    kind: CoreKind,
    tpc: u64,
    width: usize,
    mlp: usize,
    window: u64,
    r: SliceResult,
    next: usize,
    // in-order
    wait_until: u64,
    waiting_on_memory: bool,
    // out-of-order
    done: Vec<Option<u64>>,
    misses: Vec<u64>,
    chains: Vec<u64>,
    lead_at: Option<u64>,
    lead: Option<u64>,
}

impl CycleCore {
    fn new(prog: SliceProgram, core: ClusterId, m: &MachineConfig, at: u64) -> Self {
        let cfg = &m.cluster(core).core;
        let tpc = m.timing().cluster(core).ticks_per_cycle;
        let start = align_up(at, tpc);
        let n = prog.instrs.len();
        CycleCore {
            core,
            kind: cfg.kind,
            tpc,
            width: cfg.issue_width as usize,
            mlp: cfg.mlp_degree as usize,
            window: u64::from(cfg.window),
            r: SliceResult {
                start,
                inner_start: start + OUTER_LOOP_OPS * tpc,
                retired: prog.instrs.iter().map(|d| u64::from(d.kind.weight())).sum(),
                outer_ops: OUTER_LOOP_OPS,
                ..SliceResult::default()
            },
            next: 0,
            wait_until: 0,
            waiting_on_memory: false,
            done: vec![None; n],
            misses: Vec::new(),
            chains: Vec::new(),
            lead_at: None,
            lead: None,
            prog,
        }
    }

    fn watch_lead(&mut self, k: u64) {
        self.lead_at = Some(k);
        if k == 0 {
            self.lead = Some(self.r.start);
        }
    }

    fn count_prefetch(&mut self, o: PrefetchOutcome, t: u64) {
        self.r.prefetch.record(o);
        if self.lead_at == Some(self.r.prefetch.issued()) {
            self.lead = Some(t + self.tpc);
        }
    }

    /// Runs the cycle starting at tick `t`; returns the end tick once the
    /// slice has nothing left to do.
    fn cycle(&mut self, t: u64, mem: &mut Memory) -> Option<u64> {
        match self.kind {
            CoreKind::InOrder => self.cycle_in_order(t, mem),
            CoreKind::OutOfOrder => self.cycle_ooo(t, mem),
        }
    }

    fn finish(&mut self, t: u64) -> Option<u64> {
        self.r.end = t;
        self.r.cycles = (t - self.r.inner_start) / self.tpc;
        Some(t)
    }

    fn cycle_in_order(&mut self, t: u64, mem: &mut Memory) -> Option<u64> {
        if t < self.wait_until {
            if self.waiting_on_memory {
                self.r.stall_cycles += 1;
            }
            return None;
        }
        let Some(op) = self.prog.instrs.get(self.next) else {
            return self.finish(t);
        };
        self.next += 1;
        let (until, memory) = match op.kind {
            DynKind::Alu(c) => (t + u64::from(c) * self.tpc, false),
            DynKind::Load(a) => {
                let r = mem.load(self.core, a, t);
                self.r.sources.record(&r);
                (r.complete, true)
            }
            DynKind::Store(a) => (mem.store(self.core, a, t).complete, true),
            DynKind::Prefetch(a) => {
                let o = mem.prefetch(self.core, a, t);
                self.count_prefetch(o, t);
                (t + self.tpc, false)
            }
        };
        self.wait_until = until;
        self.waiting_on_memory = memory;
        None
    }

    fn cycle_ooo(&mut self, t: u64, mem: &mut Memory) -> Option<u64> {
        let n = self.prog.instrs.len();
        while self.next < n && self.done[self.next].is_some_and(|d| d <= t) {
            self.next += 1;
        }
        if self.next == n {
            return self.finish(t);
        }
        self.misses.retain(|&d| d > t);
        self.chains.retain(|&d| d > t);
        let free = self.width - self.chains.len();
        let chain_running = !self.chains.is_empty();
        let mut used = 0;
        let mut budget = self.window;
        let mut i = self.next;
        while i < n && used < free {
            let op = &self.prog.instrs[i];
            let w = u64::from(op.kind.weight());
            if i > self.next && w > budget {
                break;
            }
            budget = budget.saturating_sub(w);
            let waiting = op
                .deps
                .iter()
                .any(|&d| self.done[d as usize].is_none_or(|x| x > t));
            if self.done[i].is_none() && !waiting {
                let finish = match op.kind {
                    DynKind::Alu(1) => Some(t + self.tpc),
                    DynKind::Alu(c) => {
                        let d = t + u64::from(c) * self.tpc;
                        self.chains.push(d);
                        Some(d)
                    }
                    DynKind::Load(a) | DynKind::Store(a)
                        if !mem.in_l1(self.core, a) && self.misses.len() >= self.mlp =>
                    {
                        None
                    }
                    DynKind::Load(a) => {
                        let r = mem.load(self.core, a, t);
                        self.r.sources.record(&r);
                        if r.source != ServiceSource::L1 {
                            self.misses.push(r.complete);
                        }
                        Some(r.complete)
                    }
                    DynKind::Store(a) => {
                        let r = mem.store(self.core, a, t);
                        if r.source != ServiceSource::L1 {
                            self.misses.push(r.complete);
                        }
                        Some(r.complete)
                    }
                    DynKind::Prefetch(a) => {
                        let o = mem.prefetch(self.core, a, t);
                        self.count_prefetch(o, t);
                        Some(t + self.tpc)
                    }
                };
                if let Some(d) = finish {
                    self.done[i] = Some(d);
                    used += 1;
                }
            }
            i += 1;
        }
        if used == 0 && !chain_running {
            self.r.stall_cycles += 1;
        }
        None
    }
}

enum Activity {
    /// Free since this tick; decides what to do next.
    Free(u64),
    /// Locking or sleeping until this tick, then starts a slice.
    Until(u64),
    Slice(Box<CycleCore>),
    Done(u64),
}

struct Worker {
    phase: Phase,
    core: ClusterId,
    kernel: ValidatedKernel,
    slice: u64,
    activity: Activity,
    jitter: Option<Jitter>,
    sleep_ns: f64,
}

struct Protocol<'a> {
    machine: &'a MachineConfig,
    policy: SyncPolicy,
    g: u64,
    slices: u64,
    lock: u64,
    invocation: u32,
    begin: u64,
    access_done: Vec<Option<u64>>,
    access_lead: Vec<Option<u64>>,
    execute_done: Vec<Option<u64>>,
    tl: Timeline,
    mem: Memory,
}

impl Protocol<'_> {
    fn mark(&mut self, core: ClusterId, tag: Tag, start: u64, end: u64, slice: Option<u64>) {
        self.tl.push(Interval {
            core,
            tag,
            start,
            end,
            invocation: self.invocation,
            slice,
        });
    }

    fn open_slice(&mut self, w: &mut Worker, at: u64) {
        let lo = w.slice * self.g;
        let hi = (lo + self.g).min(w.kernel.iterations());
        let prog = SliceProgram::lower(&w.kernel, lo..hi).expect("slice lowers");
        let mut c = CycleCore::new(prog, w.core, self.machine, at);
        self.mark(w.core, Tag::Idle, at, c.r.start, None);
        let lead = self.policy.lead_fraction();
        if w.phase == Phase::Access && self.policy.locks(w.slice) && lead < 1.0 {
            let total = c.prog.prefetches as f64;
            c.watch_lead((lead * total).ceil() as u64);
            if let (Some(l), None) = (c.lead, self.access_lead[w.slice as usize]) {
                self.access_lead[w.slice as usize] = Some(l);
            }
        }
        w.activity = Activity::Slice(Box::new(c));
    }

    /// Handles everything `w` does at tick `t`.
    fn tick(&mut self, w: &mut Worker, t: u64) {
        loop {
            match &mut w.activity {
                Activity::Done(_) => return,
                Activity::Free(since) => {
                    let since = *since;
                    if w.slice == self.slices {
                        w.activity = Activity::Done(since);
                        return;
                    }
                    let s = w.slice as usize;
                    if self.policy == SyncPolicy::Coupled
                        || (w.phase == Phase::Access && s == 0 && !self.policy.locks(0))
                    {
                        self.open_slice(w, since);
                    } else if self.policy.locks(w.slice) {
                        let gate = match (w.phase, s) {
                            (Phase::Access, 0) => Some(self.begin),
                            (Phase::Access, _) => self.execute_done[s - 1],
                            (Phase::Execute, _) => self.access_lead[s],
                        };
                        let Some(gate) = gate else { return };
                        let at = gate.max(since);
                        self.mark(w.core, Tag::LockWait, since, at, None);
                        self.mark(w.core, Tag::Lock, at, at + self.lock, None);
                        w.activity = Activity::Until(at + self.lock);
                    } else {
                        let timing = self.machine.timing();
                        let d = w
                            .jitter
                            .as_mut()
                            .expect("timed")
                            .sleep_ticks(w.sleep_ns, &timing);
                        self.mark(w.core, Tag::Sleep, since, since + d, None);
                        w.activity = Activity::Until(since + d);
                    }
                }
                Activity::Until(u) => {
                    let u = *u;
                    if u > t {
                        return;
                    }
                    self.open_slice(w, u);
                }
                Activity::Slice(c) => {
                    if !t.is_multiple_of(c.tpc) || t < c.r.inner_start {
                        return;
                    }
                    let finished = c.cycle(t, &mut self.mem);
                    if w.phase == Phase::Access {
                        if let (Some(l), None) = (c.lead, self.access_lead[w.slice as usize]) {
                            self.access_lead[w.slice as usize] = Some(l);
                        }
                    }
                    let Some(end) = finished else { return };
                    let r = c.r;
                    let s = w.slice;
                    let tag = match w.phase {
                        Phase::Access => Tag::AccessSlice,
                        Phase::Execute => Tag::ExecuteSlice,
                    };
                    self.mark(w.core, tag, r.start, end, Some(s));
                    self.tl.slices.push(SliceRecord {
                        phase: w.phase,
                        invocation: self.invocation,
                        slice: s,
                        result: r,
                    });
                    match w.phase {
                        Phase::Access => {
                            self.access_done[s as usize] = Some(end);
                            self.access_lead[s as usize].get_or_insert(end);
                        }
                        Phase::Execute => self.execute_done[s as usize] = Some(end),
                    }
                    w.slice += 1;
                    w.activity = Activity::Free(end);
                }
            }
        }
    }
}

/// Simulates `kernel` at granularity `g` under `sync`, tick by tick. The
/// coupled policy runs the chunked loop on the big core without thread
/// costs; other policies run the derived phase pair with `threads`.
pub fn run_oracle(
    kernel: &ValidatedKernel,
    machine: &MachineConfig,
    sync: &SyncPolicy,
    g: u64,
    threads: &ThreadModel,
) -> Result<Timeline> {
    if kernel.iterations() > ORACLE_LIMIT {
        return Err(OracleError::TooLarge {
            iterations: kernel.iterations(),
            limit: ORACLE_LIMIT,
        }
        .into());
    }
    machine.validate()?;
    sync.validate()?;
    let chunked = chunk(kernel, g)?;
    let coupled = *sync == SyncPolicy::Coupled;
    let pair = (!coupled).then(|| make_phase_pair(&chunked));
    let timing = machine.timing();
    let timed = sync.timed_params().copied();
    let worker = |phase: Phase, k: &ValidatedKernel| Worker {
        phase,
        core: match phase {
            Phase::Access => ClusterId::Little,
            Phase::Execute => ClusterId::Big,
        },
        kernel: k.clone(),
        slice: 0,
        activity: Activity::Done(0),
        jitter: timed.map(|p| Jitter::new(p.rng_seed, phase, p.jitter_stddev_ns)),
        sleep_ns: timed.map_or(0.0, |p| match phase {
            Phase::Access => p.sleep_access_ns,
            Phase::Execute => p.sleep_execute_ns,
        }),
    };
    let mut access = pair.as_ref().map(|p| worker(Phase::Access, &p.access));
    let mut execute = worker(Phase::Execute, pair.as_ref().map_or(kernel, |p| &p.execute));
    let slices = chunked.slice_count();
    let mut p = Protocol {
        machine,
        policy: *sync,
        g,
        slices,
        lock: timing.ns_to_ticks(machine.costs.lock_cost_ns),
        invocation: 0,
        begin: 0,
        access_done: Vec::new(),
        access_lead: Vec::new(),
        execute_done: Vec::new(),
        tl: Timeline::new(timing.ticks_per_ns),
        mem: Memory::new(machine),
    };
    let overhead = (!coupled).then(|| {
        threads.validate().map(|_| {
            let tag = match threads {
                ThreadModel::SpawnPerInvocation { .. } => Tag::Spawn,
                ThreadModel::Pool { .. } => Tag::Signal,
            };
            (tag, timing.ns_to_ticks(threads.cost_ns()))
        })
    });
    let overhead = overhead.transpose()?;
    let mut t = 0;
    for inv in 0..kernel.invocations() {
        p.invocation = inv;
        p.access_done = vec![None; slices as usize];
        p.access_lead = vec![None; slices as usize];
        p.execute_done = vec![None; slices as usize];
        let start = t;
        if let Some((tag, len)) = overhead {
            p.mark(ClusterId::Little, tag, t, t + len, None);
            p.mark(ClusterId::Big, tag, t, t + len, None);
            t += len;
        }
        p.begin = t;
        for w in access.iter_mut().chain([&mut execute]) {
            w.slice = 0;
            w.activity = Activity::Free(t);
        }
        let finished = |w: &Worker| matches!(w.activity, Activity::Done(_));
        while !(finished(&execute) && access.as_ref().is_none_or(finished)) {
            if let Some(a) = access.as_mut() {
                p.tick(a, t);
            }
            p.tick(&mut execute, t);
            t += 1;
        }
        let end_of = |w: &Worker| match w.activity {
            Activity::Done(e) => e,
            _ => unreachable!(),
        };
        let ends: Vec<(ClusterId, u64)> = access
            .iter()
            .chain([&execute])
            .map(|w| (w.core, end_of(w)))
            .collect();
        t = ends.iter().map(|e| e.1).max().unwrap_or(start);
        for (core, e) in ends {
            p.mark(core, Tag::Idle, e, t, None);
        }
    }
    if access.is_none() {
        p.mark(ClusterId::Little, Tag::Idle, 0, t, None);
    }
    Ok(p.tl)
}

fn per_core(tl: &Timeline, core: ClusterId) -> Vec<Interval> {
    tl.core(core).copied().collect()
}

fn sorted_slices(tl: &Timeline) -> Vec<SliceRecord> {
    let mut v = tl.slices.clone();
    v.sort_by_key(|r| (r.phase, r.invocation, r.slice));
    v
}

/// Describes the first difference between two timelines: slice records
/// first, then each core's interval sequence.
pub fn compare_timelines(sim: &Timeline, oracle: &Timeline) -> Result<(), String> {
    let (a, b) = (sorted_slices(sim), sorted_slices(oracle));
    if a.len() != b.len() {
        return Err(format!(
            "simulator has {} slice records, oracle {}",
            a.len(),
            b.len()
        ));
    }
    for (x, y) in a.iter().zip(&b) {
        if x != y {
            return Err(format!(
                "slice records differ:\n  simulator {x:?}\n  oracle    {y:?}"
            ));
        }
    }
    for core in [ClusterId::Little, ClusterId::Big] {
        let (x, y) = (per_core(sim, core), per_core(oracle, core));
        if let Some((i, (p, q))) = x.iter().zip(&y).enumerate().find(|(_, (p, q))| p != q) {
            return Err(format!(
                "{core:?} interval {i} differs:\n  simulator {p:?}\n  oracle    {q:?}"
            ));
        }
        if x.len() != y.len() {
            return Err(format!(
                "{core:?}: simulator has {} intervals, oracle {}",
                x.len(),
                y.len()
            ));
        }
    }
    Ok(())
}

/// Runs both simulators and fails with [`Error::OracleMismatch`] unless
/// their timelines agree exactly.
pub fn oracle_check(
    kernel: &ValidatedKernel,
    machine: &MachineConfig,
    sync: &SyncPolicy,
    g: u64,
    threads: &ThreadModel,
) -> Result<Timeline> {
    let oracle = run_oracle(kernel, machine, sync, g, threads)?;
    let chunked = chunk(kernel, g)?;
    let sim = if *sync == SyncPolicy::Coupled {
        crate::scheduler::run_coupled_chunked(&chunked, machine)
    } else {
        crate::scheduler::run_dae(&make_phase_pair(&chunked), machine, sync, threads)?
    };
    compare_timelines(&sim.timeline, &oracle).map_err(|m| {
        Error::OracleMismatch(format!("{} g={g} {}: {m}", kernel.name(), sync.label()))
    })?;
    Ok(oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_ir::fixtures::{fig3, indirect, pure_compute};
    use crate::kernel_ir::validate_kernel;

    fn check(k: &ValidatedKernel, sync: SyncPolicy, g: u64) {
        let m = MachineConfig::default();
        if let Err(e) = oracle_check(k, &m, &sync, g, &ThreadModel::spawn(&m)) {
            panic!("{e}");
        }
    }

    #[test]
    fn stamp_cache_evicts_least_recent() {
        let mut c = StampCache::new(2 * 64, 64, 2);
        c.fill(0, 0);
        c.fill(1, 0);
        c.touch(0);
        c.fill(2, 0);
        assert!(c.peek(0).is_some());
        assert!(c.peek(1).is_none());
    }

    #[test]
    fn agrees_on_small_kernels() {
        for k in [
            fig3(200),
            indirect(vec![5, 3, 9, 1, 0, 7, 2, 8]),
            pure_compute(40, 3),
        ] {
            let k = validate_kernel(k).unwrap();
            let n = k.iterations();
            for g in [n, (n / 4).max(1), 3] {
                check(&k, SyncPolicy::Coupled, g);
                check(&k, SyncPolicy::lock_step(), g);
                check(&k, SyncPolicy::timed(300.0, 200.0, 150.0, 9), g);
            }
        }
    }

    #[test]
    fn agrees_with_partial_lead() {
        let k = validate_kernel(fig3(300)).unwrap();
        let m = MachineConfig::default();
        let sync = crate::scheduler::set_overlap(&SyncPolicy::lock_step(), 0.5).unwrap();
        oracle_check(&k, &m, &sync, 64, &ThreadModel::pool(&m)).unwrap();
    }

    #[test]
    fn rejects_large_kernels() {
        let k = validate_kernel(fig3(ORACLE_LIMIT + 1)).unwrap();
        let m = MachineConfig::default();
        let e =
            run_oracle(&k, &m, &SyncPolicy::lock_step(), 64, &ThreadModel::pool(&m)).unwrap_err();
        assert!(matches!(e, Error::Oracle(OracleError::TooLarge { .. })));
    }
}
