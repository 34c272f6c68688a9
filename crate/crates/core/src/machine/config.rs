use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const LINE_BYTES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreKind {
    InOrder,
    OutOfOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreConfig {
    pub kind: CoreKind,
    pub frequency_mhz: u32,
    pub f_min_mhz: u32,
    pub f_max_mhz: u32,
    /// Ops issued per cycle; 1 for in-order cores.
    pub issue_width: u32,
    /// Outstanding L1 load misses; 1 for in-order cores.
    pub mlp_degree: u32,
    /// Instructions the out-of-order core may look ahead past the oldest
    /// incomplete one.
    pub window: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub size_bytes: u64,
    pub line_bytes: u32,
    pub ways: u32,
    pub hit_latency_ns: f64,
}

impl CacheConfig {
    pub fn sets(&self) -> u64 {
        self.size_bytes / (u64::from(self.line_bytes) * u64::from(self.ways))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub name: String,
    pub core: CoreConfig,
    pub l1d: CacheConfig,
    pub l2: CacheConfig,
    pub prefetch_queue_depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySystemConfig {
    /// Service time of a miss satisfied by the other cluster's L2.
    pub coherence_latency_ns: f64,
    pub memory_latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncCosts {
    /// One lock or unlock operation.
    pub lock_cost_ns: f64,
    /// Spawning and joining the two phase threads, per loop invocation.
    pub spawn_join_cost_ns: f64,
    /// Waking pooled threads, per loop invocation.
    pub signal_cost_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub big: ClusterConfig,
    pub little: ClusterConfig,
    pub memory: MemorySystemConfig,
    pub costs: SyncCosts,
}

/// Shipped defaults, also available as `data/exynos5422.toml`.
pub const DEFAULT_MACHINE_TOML: &str = include_str!("../../data/exynos5422.toml");

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig::exynos5422()
    }
}

impl MachineConfig {
    /// Exynos 5422-like part: Cortex-A15 cluster at 2 GHz with a 2 MB L2,
    /// Cortex-A7 cluster at 1.4 GHz with a 512 kB L2, 32 kB L1d on both.
    pub fn exynos5422() -> Self {
        let cache = |size_bytes, ways, hit_latency_ns| CacheConfig {
            size_bytes,
            line_bytes: LINE_BYTES,
            ways,
            hit_latency_ns,
        };
        MachineConfig {
            big: ClusterConfig {
                name: "big".into(),
                core: CoreConfig {
                    kind: CoreKind::OutOfOrder,
                    frequency_mhz: 2000,
                    f_min_mhz: 200,
                    f_max_mhz: 2000,
                    issue_width: 3,
                    mlp_degree: 6,
                    window: 64,
                },
                l1d: cache(32 * 1024, 2, 2.0),
                l2: cache(2 * 1024 * 1024, 16, 8.0),
                prefetch_queue_depth: 8,
            },
            little: ClusterConfig {
                name: "LITTLE".into(),
                core: CoreConfig {
                    kind: CoreKind::InOrder,
                    frequency_mhz: 1400,
                    f_min_mhz: 200,
                    f_max_mhz: 1400,
                    issue_width: 1,
                    mlp_degree: 1,
                    window: 1,
                },
                l1d: cache(32 * 1024, 4, 2.0),
                l2: cache(512 * 1024, 8, 8.0),
                prefetch_queue_depth: 2,
            },
            memory: MemorySystemConfig {
                coherence_latency_ns: 35.0,
                memory_latency_ns: 95.0,
            },
            costs: SyncCosts {
                lock_cost_ns: 750.0,
                spawn_join_cost_ns: 30_000.0,
                signal_cost_ns: 200.0,
            },
        }
    }

    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: MachineConfig =
            toml::from_str(src).map_err(|e| ConfigError::Machine(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("machine config serializes")
    }

    /// Scales every cache, coherence and memory latency by `factor`.
    pub fn scale_latencies(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for c in [&mut m.big, &mut m.little] {
            c.l1d.hit_latency_ns *= factor;
            c.l2.hit_latency_ns *= factor;
        }
        m.memory.coherence_latency_ns *= factor;
        m.memory.memory_latency_ns *= factor;
        m
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Machine(m));
        for c in [&self.big, &self.little] {
            let core = &c.core;
            if core.frequency_mhz == 0
                || core.frequency_mhz < core.f_min_mhz
                || core.frequency_mhz > core.f_max_mhz
            {
                return bad(format!(
                    "{}: frequency {} MHz outside [{}, {}]",
                    c.name, core.frequency_mhz, core.f_min_mhz, core.f_max_mhz
                ));
            }
            if core.mlp_degree == 0 || core.issue_width == 0 || core.window == 0 {
                return bad(format!(
                    "{}: width, MLP degree and window must be ≥ 1",
                    c.name
                ));
            }
            if core.kind == CoreKind::InOrder && (core.issue_width != 1 || core.mlp_degree != 1) {
                return bad(format!(
                    "{}: in-order cores have width 1 and MLP degree 1",
                    c.name
                ));
            }
            for (level, cache) in [("L1d", &c.l1d), ("L2", &c.l2)] {
                if cache.line_bytes != LINE_BYTES {
                    return bad(format!(
                        "{}: {level} line size must be {LINE_BYTES} bytes",
                        c.name
                    ));
                }
                if cache.ways == 0
                    || cache.sets() == 0
                    || cache.sets() * u64::from(cache.ways) * u64::from(cache.line_bytes)
                        != cache.size_bytes
                {
                    return bad(format!(
                        "{}: {level} geometry does not divide evenly",
                        c.name
                    ));
                }
                if cache.hit_latency_ns.is_nan() || cache.hit_latency_ns <= 0.0 {
                    return bad(format!("{}: {level} hit latency must be positive", c.name));
                }
            }
            if c.l1d.size_bytes > c.l2.size_bytes {
                return bad(format!("{}: L1d larger than L2", c.name));
            }
        }
        let mem = &self.memory;
        if mem.coherence_latency_ns.partial_cmp(&mem.memory_latency_ns) != Some(Ordering::Less) {
            return bad("coherence latency must be below memory latency".into());
        }
        let costs = &self.costs;
        if [
            costs.lock_cost_ns,
            costs.spawn_join_cost_ns,
            costs.signal_cost_ns,
        ]
        .iter()
        .any(|&c| c.is_nan() || c < 0.0)
        {
            return bad("synchronization costs must be non-negative".into());
        }
        // Latency ordering must survive the conversion to whole cycles.
        let t = self.timing();
        for cl in [&t.big, &t.little] {
            if !(cl.l1_cycles < cl.l2_cycles
                && cl.l2_cycles < cl.coherence_cycles
                && cl.coherence_cycles < cl.memory_cycles)
            {
                return bad(format!(
                    "latency ordering L1 < L2 < coherence < memory violated in cycles: {cl:?}"
                ));
            }
        }
        Ok(())
    }

    pub fn cluster(&self, id: ClusterId) -> &ClusterConfig {
        match id {
            ClusterId::Big => &self.big,
            ClusterId::Little => &self.little,
        }
    }

    /// Integer time base shared by both clusters.
    pub fn timing(&self) -> Timing {
        let fb = u64::from(self.big.core.frequency_mhz);
        let fl = u64::from(self.little.core.frequency_mhz);
        let tick_mhz = lcm(lcm(fb, fl), 1000);
        let ticks_per_ns = tick_mhz / 1000;
        let mk = |c: &ClusterConfig| {
            let f = u64::from(c.core.frequency_mhz);
            let cycles = |ns: f64| ((ns * f as f64 / 1000.0) - 1e-9).ceil().max(1.0) as u64;
            ClusterTiming {
                ticks_per_cycle: tick_mhz / f,
                l1_cycles: cycles(c.l1d.hit_latency_ns),
                l2_cycles: cycles(c.l2.hit_latency_ns),
                coherence_cycles: cycles(self.memory.coherence_latency_ns),
                memory_cycles: cycles(self.memory.memory_latency_ns),
            }
        };
        Timing {
            ticks_per_ns,
            big: mk(&self.big),
            little: mk(&self.little),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterId {
    Little,
    Big,
}

impl ClusterId {
    pub fn other(self) -> Self {
        match self {
            ClusterId::Big => ClusterId::Little,
            ClusterId::Little => ClusterId::Big,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ClusterId::Little => 0,
            ClusterId::Big => 1,
        }
    }
}

/// Per-cluster latencies in that cluster's core cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterTiming {
    pub ticks_per_cycle: u64,
    pub l1_cycles: u64,
    pub l2_cycles: u64,
    pub coherence_cycles: u64,
    pub memory_cycles: u64,
}

/// Simulated time is counted in ticks: the least common multiple of both
/// core clocks and 1 GHz, so that every core cycle and every whole
/// nanosecond is an integer number of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub ticks_per_ns: u64,
    pub big: ClusterTiming,
    pub little: ClusterTiming,
}

impl Timing {
    pub fn cluster(&self, id: ClusterId) -> &ClusterTiming {
        match id {
            ClusterId::Big => &self.big,
            ClusterId::Little => &self.little,
        }
    }

    pub fn ns_to_ticks(&self, ns: f64) -> u64 {
        (ns * self.ticks_per_ns as f64).round().max(0.0) as u64
    }

    pub fn ticks_to_ns(&self, ticks: u64) -> f64 {
        ticks as f64 / self.ticks_per_ns as f64
    }
}
