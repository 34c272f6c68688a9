use thiserror::Error;

use crate::kernel_ir::InstrId;

/// Kernel validation and address-evaluation failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("kernel `{0}` has an empty body")]
    EmptyBody(String),
    #[error("kernel `{0}` must run at least one iteration")]
    ZeroIterations(String),
    #[error("kernel `{0}` must run at least one invocation")]
    ZeroInvocations(String),
    #[error("duplicate instruction id {0}")]
    DuplicateId(InstrId),
    #[error("duplicate array `{0}`")]
    DuplicateArray(String),
    #[error("instruction {user} uses {used} before it is defined")]
    UseBeforeDef { user: InstrId, used: InstrId },
    #[error("instruction {instr} references unknown array `{array}`")]
    UnknownArray { instr: InstrId, array: String },
    #[error("instruction {instr} addresses `{array}` out of bounds at iteration {iteration} (index {index})")]
    OutOfBoundsAddress {
        instr: InstrId,
        array: String,
        iteration: u64,
        index: i64,
    },
    #[error("arrays `{0}` and `{1}` overlap")]
    OverlappingArrays(String, String),
    #[error("array `{0}` is malformed: {1}")]
    BadArray(String, String),
    #[error("instruction {0} is a prefetch; prefetches are produced by the transform only")]
    PrefetchInSource(InstrId),
    #[error("instruction {0} has a zero op cost")]
    ZeroCost(InstrId),
    #[error("instruction {user}: {used} cannot be used here ({why})")]
    BadOperand {
        user: InstrId,
        used: InstrId,
        why: &'static str,
    },
    #[error("instruction {instr}: indirect source array `{array}` declares no contents")]
    MissingContents { instr: InstrId, array: String },
    #[error("instruction {0} has an empty predicate pattern")]
    EmptyPredicate(InstrId),
    #[error("iteration range {start}..{end} is outside 0..{iterations}")]
    RangeOutOfBounds {
        start: u64,
        end: u64,
        iterations: u64,
    },
    #[error("address of instruction {instr} needs {missing}, which is not being evaluated")]
    MissingDependency { instr: InstrId, missing: InstrId },
}

/// Kernel text format errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("granularity {granularity} outside 1..={iterations}")]
    GranularityOutOfRange { granularity: u64, iterations: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid machine configuration: {0}")]
    Machine(String),
    #[error("invalid synchronization policy: {0}")]
    Policy(String),
    #[error("invalid power model: {0}")]
    Power(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("region {0} does not exist in the timeline")]
    UnknownRegion(String),
    #[error("cannot compute IPC over zero cycles")]
    DivisionByZero,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle is limited to {limit} iterations per invocation, kernel has {iterations}")]
    TooLarge { iterations: u64, limit: u64 },
}

/// Top-level error for scenario runs and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
