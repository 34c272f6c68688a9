use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::machine::MachineConfig;

/// Parameters of the sleep-based handshake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedParams {
    /// Access sleeps this long after each slice.
    pub sleep_access_ns: f64,
    /// Execute sleeps this long before each slice.
    pub sleep_execute_ns: f64,
    /// Standard deviation of the zero-mean Gaussian added to every sleep.
    #[serde(default)]
    pub jitter_stddev_ns: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn full_lead() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyncPolicy {
    /// The untransformed loop on the big core alone.
    Coupled,
    /// Two-lock strict alternation. Execute is released once Access has
    /// issued `lead_fraction` of the slice's prefetches.
    LockStep {
        #[serde(default = "full_lead")]
        lead_fraction: f64,
    },
    Timed(TimedParams),
    /// Timed, except that every slice whose index is a multiple of the
    /// period goes through the lock-step handshake.
    Hybrid {
        #[serde(flatten)]
        timed: TimedParams,
        resync_period_slices: u64,
        #[serde(default = "full_lead")]
        lead_fraction: f64,
    },
}

impl SyncPolicy {
    pub fn lock_step() -> Self {
        SyncPolicy::LockStep { lead_fraction: 1.0 }
    }

    pub fn timed(
        sleep_access_ns: f64,
        sleep_execute_ns: f64,
        jitter_stddev_ns: f64,
        rng_seed: u64,
    ) -> Self {
        SyncPolicy::Timed(TimedParams {
            sleep_access_ns,
            sleep_execute_ns,
            jitter_stddev_ns,
            rng_seed,
        })
    }

    pub fn hybrid(timed: TimedParams, resync_period_slices: u64) -> Self {
        SyncPolicy::Hybrid {
            timed,
            resync_period_slices,
            lead_fraction: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyncPolicy::Coupled => "coupled",
            SyncPolicy::LockStep { .. } => "lockstep",
            SyncPolicy::Timed(_) => "timed",
            SyncPolicy::Hybrid { .. } => "hybrid",
        }
    }

    /// Short label including the parameters that distinguish runs.
    pub fn label(&self) -> String {
        match self {
            SyncPolicy::Coupled => "coupled".into(),
            SyncPolicy::LockStep { lead_fraction } if *lead_fraction == 1.0 => "lockstep".into(),
            SyncPolicy::LockStep { lead_fraction } => format!("lockstep(lead={lead_fraction})"),
            SyncPolicy::Timed(t) => format!("timed(jitter={})", t.jitter_stddev_ns),
            SyncPolicy::Hybrid {
                timed,
                resync_period_slices,
                ..
            } => format!(
                "hybrid(P={resync_period_slices},jitter={})",
                timed.jitter_stddev_ns
            ),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Policy(m.into()));
        let check_timed = |t: &TimedParams| {
            if !(t.sleep_access_ns >= 0.0 && t.sleep_execute_ns >= 0.0) {
                return bad("sleep durations must be non-negative");
            }
            if !t.jitter_stddev_ns.is_finite() || t.jitter_stddev_ns < 0.0 {
                return bad("jitter standard deviation must be finite and non-negative");
            }
            Ok(())
        };
        let check_lead = |f: f64| {
            if (0.0..=1.0).contains(&f) {
                Ok(())
            } else {
                bad("lead fraction must lie in [0, 1]")
            }
        };
        match self {
            SyncPolicy::Coupled => Ok(()),
            SyncPolicy::LockStep { lead_fraction } => check_lead(*lead_fraction),
            SyncPolicy::Timed(t) => check_timed(t),
            SyncPolicy::Hybrid {
                timed,
                resync_period_slices,
                lead_fraction,
            } => {
                if *resync_period_slices == 0 {
                    return bad("resync period must be at least one slice");
                }
                check_timed(timed)?;
                check_lead(*lead_fraction)
            }
        }
    }

    pub fn lead_fraction(&self) -> f64 {
        match self {
            SyncPolicy::LockStep { lead_fraction } | SyncPolicy::Hybrid { lead_fraction, .. } => {
                *lead_fraction
            }
            _ => 1.0,
        }
    }

    pub fn timed_params(&self) -> Option<&TimedParams> {
        match self {
            SyncPolicy::Timed(t) | SyncPolicy::Hybrid { timed: t, .. } => Some(t),
            _ => None,
        }
    }

    /// Whether slice `s` goes through the two-lock handshake.
    pub fn locks(&self, s: u64) -> bool {
        match self {
            SyncPolicy::Coupled | SyncPolicy::Timed(_) => false,
            SyncPolicy::LockStep { .. } => true,
            SyncPolicy::Hybrid {
                resync_period_slices,
                ..
            } => s.is_multiple_of(*resync_period_slices),
        }
    }
}

/// Lets Execute start a slice once Access has issued `lead_fraction` of that
/// slice's prefetches. A fraction of 1 is plain lock-step.
pub fn set_overlap(policy: &SyncPolicy, lead_fraction: f64) -> Result<SyncPolicy, ConfigError> {
    let mut p = *policy;
    match &mut p {
        SyncPolicy::LockStep { lead_fraction: f }
        | SyncPolicy::Hybrid {
            lead_fraction: f, ..
        } => *f = lead_fraction,
        _ => {
            return Err(ConfigError::Policy(format!(
                "overlap needs a locking policy, not {}",
                policy.name()
            )))
        }
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThreadModel {
    /// Both phase threads are created and joined around every invocation.
    SpawnPerInvocation { spawn_join_cost_ns: f64 },
    /// Threads persist; each invocation only signals them.
    Pool { signal_cost_ns: f64 },
}

impl ThreadModel {
    pub fn spawn(machine: &MachineConfig) -> Self {
        ThreadModel::SpawnPerInvocation {
            spawn_join_cost_ns: machine.costs.spawn_join_cost_ns,
        }
    }

    pub fn pool(machine: &MachineConfig) -> Self {
        ThreadModel::Pool {
            signal_cost_ns: machine.costs.signal_cost_ns,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThreadModel::SpawnPerInvocation { .. } => "spawn",
            ThreadModel::Pool { .. } => "pool",
        }
    }

    pub fn cost_ns(&self) -> f64 {
        match self {
            ThreadModel::SpawnPerInvocation { spawn_join_cost_ns } => *spawn_join_cost_ns,
            ThreadModel::Pool { signal_cost_ns } => *signal_cost_ns,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cost_ns() >= 0.0 && self.cost_ns().is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Policy(
                "thread costs must be finite and non-negative".into(),
            ))
        }
    }
}
