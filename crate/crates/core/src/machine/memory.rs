use serde::{Deserialize, Serialize};

use crate::machine::cache::Cache;
use crate::machine::config::{ClusterId, MachineConfig, Timing, LINE_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServiceSource {
    L1,
    LocalL2,
    RemoteCluster,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceResult {
    pub source: ServiceSource,
    /// Cycles of the accessing core until the data is usable.
    pub latency_cycles: u64,
    /// Tick at which the data is usable.
    pub complete: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchOutcome {
    Enqueued,
    /// The line was already resident or in flight; counts as enqueued.
    Redundant,
    Dropped,
}

impl PrefetchOutcome {
    pub fn is_enqueued(self) -> bool {
        !matches!(self, PrefetchOutcome::Dropped)
    }
}

#[derive(Debug, Clone)]
struct ClusterCaches {
    l1: Cache,
    l2: Cache,
    /// Arrival ticks of prefetches that may still be in flight.
    inflight: Vec<u64>,
    queue_depth: usize,
}

/// Caches of both clusters plus the prefetch queues. Lines become visible to
/// the other cluster only once their data has arrived.
#[derive(Debug, Clone)]
pub struct MemorySystem {
    timing: Timing,
    clusters: [ClusterCaches; 2],
}

pub fn line_of(address: u64) -> u64 {
    address / u64::from(LINE_BYTES)
}

impl MemorySystem {
    pub fn new(machine: &MachineConfig) -> Self {
        let mk = |id: ClusterId| {
            let c = machine.cluster(id);
            ClusterCaches {
                l1: Cache::new(&c.l1d),
                l2: Cache::new(&c.l2),
                inflight: Vec::new(),
                queue_depth: c.prefetch_queue_depth as usize,
            }
        };
        MemorySystem {
            timing: machine.timing(),
            clusters: [mk(ClusterId::Little), mk(ClusterId::Big)],
        }
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    fn latencies(&self, c: ClusterId) -> [u64; 4] {
        let t = self.timing.cluster(c);
        let tpc = t.ticks_per_cycle;
        [
            t.l1_cycles * tpc,
            t.l2_cycles * tpc,
            t.coherence_cycles * tpc,
            t.memory_cycles * tpc,
        ]
    }

    /// Whether the line is in the cluster's L1, arrived or not.
    pub fn in_l1(&self, c: ClusterId, address: u64) -> bool {
        self.clusters[c.index()].l1.contains(line_of(address))
    }

    pub fn l1(&self, c: ClusterId) -> &Cache {
        &self.clusters[c.index()].l1
    }

    pub fn l2(&self, c: ClusterId) -> &Cache {
        &self.clusters[c.index()].l2
    }

    fn remote_visible(&self, c: ClusterId, line: u64, now: u64) -> bool {
        self.clusters[c.other().index()]
            .l2
            .probe(line)
            .is_some_and(|l| l.ready <= now)
    }

    /// Demand load at tick `now`: L1, local L2, the other cluster's L2, then
    /// memory. The line ends up in the local L1 and L2.
    pub fn load(&mut self, c: ClusterId, address: u64, now: u64) -> ServiceResult {
        let line = line_of(address);
        let [l1, l2, coh, mem] = self.latencies(c);
        let remote = self.remote_visible(c, line, now);
        let local = &mut self.clusters[c.index()];
        let (source, complete) = if let Some(hit) = local.l1.touch(line) {
            (ServiceSource::L1, (now + l1).max(hit.ready))
        } else if let Some(hit) = local.l2.touch(line) {
            let complete = (now + l2).max(hit.ready);
            local.l1.insert(line, complete);
            (ServiceSource::LocalL2, complete)
        } else {
            let (source, complete) = if remote {
                (ServiceSource::RemoteCluster, now + coh)
            } else {
                (ServiceSource::Memory, now + mem)
            };
            local.l2.insert(line, complete);
            local.l1.insert(line, complete);
            (source, complete)
        };
        let tpc = self.timing.cluster(c).ticks_per_cycle;
        ServiceResult {
            source,
            latency_cycles: (complete - now).div_ceil(tpc),
            complete,
        }
    }

    /// Store at tick `now`: write-allocate into the local L1 and L2 without
    /// waiting for a fill. A copy held by the other cluster must be
    /// invalidated first, which costs a coherence round trip.
    pub fn store(&mut self, c: ClusterId, address: u64, now: u64) -> ServiceResult {
        let line = line_of(address);
        let [l1, l2, coh, _] = self.latencies(c);
        let other = &mut self.clusters[c.other().index()];
        let shared = other.l1.invalidate(line) | other.l2.invalidate(line);
        let local = &mut self.clusters[c.index()];
        let (source, complete) = if let Some(hit) = local.l1.touch(line) {
            if shared {
                (ServiceSource::RemoteCluster, (now + coh).max(hit.ready))
            } else {
                (ServiceSource::L1, (now + l1).max(hit.ready))
            }
        } else if let Some(hit) = local.l2.touch(line) {
            let lat = if shared { coh } else { l2 };
            let complete = (now + lat).max(hit.ready);
            local.l1.insert(line, complete);
            (ServiceSource::LocalL2, complete)
        } else {
            let (source, complete) = if shared {
                (ServiceSource::RemoteCluster, now + coh)
            } else {
                (ServiceSource::L1, now + l1)
            };
            local.l2.insert(line, complete);
            local.l1.insert(line, complete);
            (source, complete)
        };
        let tpc = self.timing.cluster(c).ticks_per_cycle;
        ServiceResult {
            source,
            latency_cycles: (complete - now).div_ceil(tpc),
            complete,
        }
    }

    /// Non-blocking prefetch hint into the issuing cluster's L1 and L2.
    pub fn prefetch(&mut self, c: ClusterId, address: u64, now: u64) -> PrefetchOutcome {
        let line = line_of(address);
        let [_, l2, coh, mem] = self.latencies(c);
        let remote = self.remote_visible(c, line, now);
        let local = &mut self.clusters[c.index()];
        local.inflight.retain(|&r| r > now);
        if local.l1.contains(line) {
            return PrefetchOutcome::Redundant;
        }
        if local.inflight.len() >= local.queue_depth {
            return PrefetchOutcome::Dropped;
        }
        let ready = if let Some(hit) = local.l2.touch(line) {
            (now + l2).max(hit.ready)
        } else {
            let ready = now + if remote { coh } else { mem };
            local.l2.insert(line, ready);
            ready
        };
        local.l1.insert(line, ready);
        local.inflight.push(ready);
        PrefetchOutcome::Enqueued
    }

    /// Prefetches still in flight at `now`.
    pub fn inflight(&self, c: ClusterId, now: u64) -> usize {
        self.clusters[c.index()]
            .inflight
            .iter()
            .filter(|&&r| r > now)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> MemorySystem {
        MemorySystem::new(&MachineConfig::default())
    }

    #[test]
    fn second_access_hits_l1() {
        let mut m = sys();
        let first = m.load(ClusterId::Big, 0x4000, 0);
        assert_eq!(first.source, ServiceSource::Memory);
        assert_eq!(first.latency_cycles, 190);
        let again = m.load(ClusterId::Big, 0x4008, first.complete);
        assert_eq!(again.source, ServiceSource::L1);
        assert_eq!(again.latency_cycles, 4);
    }

    #[test]
    fn remote_l2_services_at_coherence_latency() {
        let mut m = sys();
        let fill = m.load(ClusterId::Little, 0x4000, 0);
        let r = m.load(ClusterId::Big, 0x4000, fill.complete);
        assert_eq!(r.source, ServiceSource::RemoteCluster);
        assert_eq!(r.latency_cycles, 70);
        // Read sharing: the LITTLE copy survives.
        assert!(m.l2(ClusterId::Little).contains(line_of(0x4000)));
    }

    #[test]
    fn remote_line_in_flight_is_not_visible() {
        let mut m = sys();
        m.prefetch(ClusterId::Little, 0x4000, 0);
        let r = m.load(ClusterId::Big, 0x4000, 10);
        assert_eq!(r.source, ServiceSource::Memory);
    }

    #[test]
    fn prefetch_then_late_load_hits() {
        let mut m = sys();
        assert_eq!(
            m.prefetch(ClusterId::Big, 0x4000, 0),
            PrefetchOutcome::Enqueued
        );
        let r = m.load(ClusterId::Big, 0x4000, 2000);
        assert_eq!(r.source, ServiceSource::L1);
        assert_eq!(r.complete, 2000 + 4 * 7);
    }

    #[test]
    fn prefetch_then_early_load_waits_residual() {
        let mut m = sys();
        m.prefetch(ClusterId::Big, 0x4000, 0);
        let mem_ticks = 190 * 7;
        let r = m.load(ClusterId::Big, 0x4000, 700);
        assert_eq!(r.complete, mem_ticks);
        assert_eq!(r.latency_cycles, (mem_ticks - 700) / 7);
    }

    #[test]
    fn full_queue_drops() {
        let mut m = sys();
        let depth = MachineConfig::default().little.prefetch_queue_depth as u64;
        for k in 0..depth {
            assert_eq!(
                m.prefetch(ClusterId::Little, k * 64, 0),
                PrefetchOutcome::Enqueued
            );
        }
        assert_eq!(
            m.prefetch(ClusterId::Little, 8 * 64, 0),
            PrefetchOutcome::Dropped
        );
        assert_eq!(
            m.prefetch(ClusterId::Little, 0, 0),
            PrefetchOutcome::Redundant
        );
        let r = m.load(ClusterId::Little, 8 * 64, 10);
        assert_eq!(r.source, ServiceSource::Memory);
        // Slots free up once data arrives.
        assert_eq!(
            m.prefetch(ClusterId::Little, 9 * 64, 1330),
            PrefetchOutcome::Enqueued
        );
    }

    #[test]
    fn store_invalidates_remote_copy() {
        let mut m = sys();
        m.load(ClusterId::Little, 0x4000, 0);
        let r = m.store(ClusterId::Big, 0x4000, 5000);
        assert_eq!(r.source, ServiceSource::RemoteCluster);
        assert_eq!(r.latency_cycles, 70);
        assert!(!m.l2(ClusterId::Little).contains(line_of(0x4000)));
        assert!(m.in_l1(ClusterId::Big, 0x4000));
    }

    #[test]
    fn store_to_shared_line_pays_upgrade() {
        let mut m = sys();
        let a = m.load(ClusterId::Big, 0x4000, 0);
        assert_eq!(
            m.store(ClusterId::Big, 0x4000, a.complete).latency_cycles,
            4
        );
        m.load(ClusterId::Little, 0x4000, a.complete);
        let r = m.store(ClusterId::Big, 0x4000, 100_000);
        assert_eq!(r.latency_cycles, 70);
        assert_eq!(
            m.store(ClusterId::Big, 0x4000, r.complete).source,
            ServiceSource::L1
        );
    }

    #[test]
    fn store_miss_allocates_without_fill() {
        let mut m = sys();
        let r = m.store(ClusterId::Big, 0x8000, 0);
        assert_eq!(r.latency_cycles, 4);
        assert!(m.in_l1(ClusterId::Big, 0x8000));
        assert!(m.l2(ClusterId::Big).contains(line_of(0x8000)));
    }
}
