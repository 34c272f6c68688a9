use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::kernel_ir::ValidatedKernel;
use crate::machine::config::{ClusterId, CoreKind, MachineConfig};
use crate::machine::memory::{MemorySystem, PrefetchOutcome, ServiceResult, ServiceSource};
use crate::machine::program::{DynKind, SliceProgram};
use crate::transform::OUTER_LOOP_OPS;

/// Demand-load service counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub l1: u64,
    pub local_l2: u64,
    pub remote: u64,
    pub memory: u64,
    /// Sum of load latencies in the accessing core's cycles.
    pub latency_cycles: u64,
}

impl SourceCounts {
    pub fn record(&mut self, r: &ServiceResult) {
        match r.source {
            ServiceSource::L1 => self.l1 += 1,
            ServiceSource::LocalL2 => self.local_l2 += 1,
            ServiceSource::RemoteCluster => self.remote += 1,
            ServiceSource::Memory => self.memory += 1,
        }
        self.latency_cycles += r.latency_cycles;
    }

    pub fn loads(&self) -> u64 {
        self.l1 + self.local_l2 + self.remote + self.memory
    }

    pub fn add(&mut self, o: &SourceCounts) {
        self.l1 += o.l1;
        self.local_l2 += o.local_l2;
        self.remote += o.remote;
        self.memory += o.memory;
        self.latency_cycles += o.latency_cycles;
    }

    pub fn mean_latency(&self) -> f64 {
        if self.loads() == 0 {
            0.0
        } else {
            self.latency_cycles as f64 / self.loads() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefetchCounts {
    pub enqueued: u64,
    pub redundant: u64,
    pub dropped: u64,
}

impl PrefetchCounts {
    pub fn record(&mut self, o: PrefetchOutcome) {
        match o {
            PrefetchOutcome::Enqueued => self.enqueued += 1,
            PrefetchOutcome::Redundant => self.redundant += 1,
            PrefetchOutcome::Dropped => self.dropped += 1,
        }
    }

    pub fn issued(&self) -> u64 {
        self.enqueued + self.redundant + self.dropped
    }

    pub fn add(&mut self, o: &PrefetchCounts) {
        self.enqueued += o.enqueued;
        self.redundant += o.redundant;
        self.dropped += o.dropped;
    }
}

/// Timing of one executed slice. Ticks are global; cycles belong to the
/// executing core. `cycles` and `retired` cover the inner loop only; the
/// outer-loop control ops run first, one per cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceResult {
    pub start: u64,
    pub inner_start: u64,
    pub end: u64,
    pub cycles: u64,
    pub retired: u64,
    pub outer_ops: u64,
    /// Cycles in which the core issued nothing.
    pub stall_cycles: u64,
    pub sources: SourceCounts,
    pub prefetch: PrefetchCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Call `step` again at this tick.
    At(u64),
    /// The slice retired its last op at this tick.
    Done(u64),
}

const NOT_ISSUED: u64 = u64::MAX;

/// Event-driven execution of one slice program on one core. `step` is only
/// ever called on the core's cycle boundaries, at the ticks it asks for; the
/// cycles it skips are cycles in which the core could not have acted.
#[derive(Debug, Clone)]
pub struct SliceExec {
    prog: SliceProgram,
    cluster: ClusterId,
    kind: CoreKind,
    tpc: u64,
    width: usize,
    mlp: usize,
    window: usize,
    result: SliceResult,
    pc: usize,
    complete: Vec<u64>,
    /// Prefix sums of op weights, for the window bound.
    weight_sum: Vec<u64>,
    outstanding: Vec<u64>,
    /// Completion ticks of multi-cycle ALU chains, each holding an issue slot.
    busy: Vec<u64>,
    lead_target: Option<u64>,
    lead_tick: Option<u64>,
}

pub fn align_up(tick: u64, tpc: u64) -> u64 {
    tick.div_ceil(tpc) * tpc
}

impl SliceExec {
    /// Prepares a slice starting at the first cycle boundary at or after
    /// `start`.
    pub fn new(
        prog: SliceProgram,
        cluster: ClusterId,
        machine: &MachineConfig,
        start: u64,
    ) -> Self {
        let core = &machine.cluster(cluster).core;
        let tpc = machine.timing().cluster(cluster).ticks_per_cycle;
        let start = align_up(start, tpc);
        let n = prog.len();
        SliceExec {
            cluster,
            kind: core.kind,
            tpc,
            width: core.issue_width as usize,
            mlp: core.mlp_degree as usize,
            window: core.window as usize,
            result: SliceResult {
                start,
                inner_start: start + OUTER_LOOP_OPS * tpc,
                retired: prog.retired,
                outer_ops: OUTER_LOOP_OPS,
                ..SliceResult::default()
            },
            pc: 0,
            complete: if core.kind == CoreKind::OutOfOrder {
                vec![NOT_ISSUED; n]
            } else {
                Vec::new()
            },
            weight_sum: if core.kind == CoreKind::OutOfOrder {
                std::iter::once(0)
                    .chain(prog.instrs.iter().scan(0u64, |acc, d| {
                        *acc += u64::from(d.kind.weight());
                        Some(*acc)
                    }))
                    .collect()
            } else {
                Vec::new()
            },
            outstanding: Vec::new(),
            busy: Vec::new(),
            lead_target: None,
            lead_tick: None,
            prog,
        }
    }

    /// Records the tick at which `count` prefetches have been issued (the end
    /// of the issuing cycle).
    pub fn watch_prefetches(&mut self, count: u64) {
        self.lead_target = Some(count);
        if count == 0 {
            self.lead_tick = Some(self.result.start);
        }
    }

    pub fn lead_tick(&self) -> Option<u64> {
        self.lead_tick
    }

    pub fn first_tick(&self) -> u64 {
        self.result.inner_start
    }

    pub fn prefetches(&self) -> u32 {
        self.prog.prefetches
    }

    pub fn cluster(&self) -> ClusterId {
        self.cluster
    }

    pub fn result(&self) -> &SliceResult {
        &self.result
    }

    fn note_prefetch(&mut self, o: PrefetchOutcome, now: u64) {
        self.result.prefetch.record(o);
        if self.lead_target == Some(self.result.prefetch.issued()) {
            self.lead_tick = Some(now + self.tpc);
        }
    }

    fn finish(&mut self, now: u64) -> Step {
        self.result.end = now;
        self.result.cycles = (now - self.result.inner_start) / self.tpc;
        Step::Done(now)
    }

    pub fn step(&mut self, now: u64, mem: &mut MemorySystem) -> Step {
        debug_assert_eq!(now % self.tpc, 0);
        match self.kind {
            CoreKind::InOrder => self.step_in_order(now, mem),
            CoreKind::OutOfOrder => self.step_ooo(now, mem),
        }
    }

    fn step_in_order(&mut self, now: u64, mem: &mut MemorySystem) -> Step {
        let Some(instr) = self.prog.instrs.get(self.pc) else {
            return self.finish(now);
        };
        let kind = instr.kind;
        let done = match kind {
            DynKind::Alu(c) => now + u64::from(c) * self.tpc,
            DynKind::Load(a) => {
                let r = mem.load(self.cluster, a, now);
                self.result.sources.record(&r);
                r.complete
            }
            DynKind::Store(a) => mem.store(self.cluster, a, now).complete,
            DynKind::Prefetch(a) => {
                let o = mem.prefetch(self.cluster, a, now);
                self.note_prefetch(o, now);
                now + self.tpc
            }
        };
        self.pc += 1;
        let next = align_up(done, self.tpc);
        self.result.stall_cycles += (next - now) / self.tpc - u64::from(kind.weight());
        Step::At(next)
    }

    fn step_ooo(&mut self, now: u64, mem: &mut MemorySystem) -> Step {
        let n = self.prog.len();
        while self.pc < n && self.complete[self.pc] <= now {
            self.pc += 1;
        }
        if self.pc == n {
            return self.finish(now);
        }
        self.outstanding.retain(|&c| c > now);
        self.busy.retain(|&c| c > now);
        let head = self.pc;
        let limit = self.weight_sum[head] + self.window as u64;
        let end = (self.weight_sum.partition_point(|&w| w <= limit) - 1).clamp(head + 1, n);
        let slots = self.width - self.busy.len();
        let was_busy = !self.busy.is_empty();
        let mut issued = 0;
        for i in head..end {
            if issued == slots {
                break;
            }
            if self.complete[i] != NOT_ISSUED {
                continue;
            }
            let instr = &self.prog.instrs[i];
            if instr.deps.iter().any(|&d| self.complete[d as usize] > now) {
                continue;
            }
            let done = match instr.kind {
                DynKind::Alu(1) => now + self.tpc,
                DynKind::Alu(c) => {
                    let done = now + u64::from(c) * self.tpc;
                    self.busy.push(done);
                    done
                }
                DynKind::Load(a) => {
                    if !mem.in_l1(self.cluster, a) && self.outstanding.len() >= self.mlp {
                        continue;
                    }
                    let r = mem.load(self.cluster, a, now);
                    self.result.sources.record(&r);
                    if r.source != ServiceSource::L1 {
                        self.outstanding.push(r.complete);
                    }
                    r.complete
                }
                DynKind::Store(a) => {
                    if !mem.in_l1(self.cluster, a) && self.outstanding.len() >= self.mlp {
                        continue;
                    }
                    let r = mem.store(self.cluster, a, now);
                    if r.source != ServiceSource::L1 {
                        self.outstanding.push(r.complete);
                    }
                    r.complete
                }
                DynKind::Prefetch(a) => {
                    let o = mem.prefetch(self.cluster, a, now);
                    self.note_prefetch(o, now);
                    now + self.tpc
                }
            };
            self.complete[i] = done;
            issued += 1;
        }
        // With every free slot used, more may issue next cycle. Otherwise
        // nothing new can issue before some op in the window completes.
        let next = if issued > 0 && issued == slots {
            now + self.tpc
        } else {
            let soonest = self.complete[head..end]
                .iter()
                .copied()
                .filter(|&c| c > now && c != NOT_ISSUED)
                .min()
                .expect("an unfinished window has a pending op");
            align_up(soonest, self.tpc)
        };
        let busy_until = self.busy.iter().copied().max().unwrap_or(0);
        let active = u64::from(issued > 0 || was_busy);
        let skipped_idle = (next - (now + self.tpc).max(busy_until.min(next))) / self.tpc;
        self.result.stall_cycles += 1 - active + skipped_idle;
        Step::At(next)
    }

    /// Runs the slice to completion with no other activity in the machine.
    pub fn run(mut self, mem: &mut MemorySystem) -> SliceResult {
        let mut t = self.first_tick();
        loop {
            match self.step(t, mem) {
                Step::At(next) => t = next,
                Step::Done(_) => return self.result,
            }
        }
    }
}

/// Executes iterations `range` of `kernel` on `cluster`'s core starting at
/// tick `start`, against (and updating) the given cache state.
pub fn run_slice(
    kernel: &ValidatedKernel,
    range: Range<u64>,
    cluster: ClusterId,
    machine: &MachineConfig,
    mem: &mut MemorySystem,
    start: u64,
) -> Result<SliceResult, KernelError> {
    let prog = SliceProgram::lower(kernel, range)?;
    Ok(SliceExec::new(prog, cluster, machine, start).run(mem))
}
