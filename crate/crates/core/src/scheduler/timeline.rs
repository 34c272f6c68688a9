use serde::{Deserialize, Serialize};

use crate::machine::{ClusterId, SliceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Access,
    Execute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    AccessSlice,
    ExecuteSlice,
    /// A lock or unlock operation.
    Lock,
    /// Blocked on the other phase's lock.
    LockWait,
    Sleep,
    /// Spawning and joining the phase threads.
    Spawn,
    /// Waking pooled threads.
    Signal,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub core: ClusterId,
    pub tag: Tag,
    pub start: u64,
    pub end: u64,
    pub invocation: u32,
    pub slice: Option<u64>,
}

impl Interval {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub phase: Phase,
    pub invocation: u32,
    pub slice: u64,
    pub result: SliceResult,
}

/// Everything both cores did, in ticks. Each core's intervals are contiguous
/// from 0 to [`Timeline::end`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub ticks_per_ns: u64,
    pub intervals: Vec<Interval>,
    pub slices: Vec<SliceRecord>,
}

#[derive(Serialize)]
struct Event<'a> {
    core: &'a str,
    tag: Tag,
    start_ns: f64,
    end_ns: f64,
    start_tick: u64,
    end_tick: u64,
    invocation: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    slice: Option<u64>,
}

impl Timeline {
    pub fn new(ticks_per_ns: u64) -> Self {
        Timeline {
            ticks_per_ns,
            intervals: Vec::new(),
            slices: Vec::new(),
        }
    }

    pub fn end(&self) -> u64 {
        self.intervals.iter().map(|i| i.end).max().unwrap_or(0)
    }

    pub fn end_ns(&self) -> f64 {
        self.ns(self.end())
    }

    pub fn ns(&self, ticks: u64) -> f64 {
        ticks as f64 / self.ticks_per_ns as f64
    }

    pub fn core(&self, core: ClusterId) -> impl Iterator<Item = &Interval> + '_ {
        self.intervals.iter().filter(move |i| i.core == core)
    }

    pub fn phase_slices(&self, phase: Phase) -> impl Iterator<Item = &SliceRecord> + '_ {
        self.slices.iter().filter(move |r| r.phase == phase)
    }

    /// Appends an interval, merging it into an adjacent one with the same tag
    /// and slice.
    pub(crate) fn push(&mut self, iv: Interval) {
        if iv.is_empty() {
            return;
        }
        if let Some(last) = self.intervals.iter_mut().rev().find(|l| l.core == iv.core) {
            debug_assert_eq!(
                last.end, iv.start,
                "intervals of {:?} must be contiguous",
                iv.core
            );
            if last.end == iv.start
                && last.tag == iv.tag
                && last.slice == iv.slice
                && last.invocation == iv.invocation
            {
                last.end = iv.end;
                return;
            }
        }
        self.intervals.push(iv);
    }

    /// Checks contiguity and that every slice of every invocation appears
    /// exactly once per phase.
    pub fn check(
        &self,
        slice_count: u64,
        invocations: u32,
        phases: &[Phase],
    ) -> Result<(), String> {
        let end = self.end();
        for core in [ClusterId::Little, ClusterId::Big] {
            let mut t = 0;
            for iv in self.core(core) {
                if iv.start != t || iv.end <= iv.start {
                    return Err(format!("{core:?}: gap or overlap at tick {t}: {iv:?}"));
                }
                t = iv.end;
            }
            if t != end {
                return Err(format!("{core:?} ends at {t}, timeline at {end}"));
            }
        }
        for &phase in phases {
            let tag = match phase {
                Phase::Access => Tag::AccessSlice,
                Phase::Execute => Tag::ExecuteSlice,
            };
            for inv in 0..invocations {
                let mut seen: Vec<u64> = self
                    .intervals
                    .iter()
                    .filter(|i| i.tag == tag && i.invocation == inv)
                    .filter_map(|i| i.slice)
                    .collect();
                seen.sort_unstable();
                if seen != (0..slice_count).collect::<Vec<_>>() {
                    return Err(format!("{phase:?} invocation {inv}: slices {seen:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let events: Vec<Event<'_>> = self
            .intervals
            .iter()
            .map(|i| Event {
                core: match i.core {
                    ClusterId::Big => "big",
                    ClusterId::Little => "little",
                },
                tag: i.tag,
                start_ns: self.ns(i.start),
                end_ns: self.ns(i.end),
                start_tick: i.start,
                end_tick: i.end,
                invocation: i.invocation,
                slice: i.slice,
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "ticks_per_ns": self.ticks_per_ns,
            "events": events,
        }))
        .expect("timeline serializes")
    }
}
