//! Decoupled access-execute (DAE) on a simulated big.LITTLE machine.
//!
//! [`kernel_ir`] describes hot loops, [`transform`] chunks them and derives
//! the Access and Execute phases, [`machine`] models the two clusters,
//! [`scheduler`] runs the phases against each other under a synchronization
//! policy, and [`metrics`] turns timelines into IPC, runtime breakdowns and
//! energy figures.

pub mod error;
pub mod kernel_ir;
pub mod machine;
pub mod metrics;
pub mod num;
pub mod oracle;
pub mod presets;
pub mod scenario;
pub mod scheduler;
pub mod transform;

pub use error::{Error, Result};
pub use num::Scalar;

/// Scalar used by reports and the command line.
pub type Real = f64;
pub type Metrics = metrics::RunMetrics<Real>;
pub type Power = metrics::PowerModel<Real>;
