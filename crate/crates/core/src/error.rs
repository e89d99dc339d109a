use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Snapshots or deltas that do not line up (shape, absence pattern,
    /// stage numbering).
    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid action sequence: {0}")]
    Allocation(String),

    #[error("action {action} is out of range for {signals} signals")]
    ActionOutOfRange { action: usize, signals: usize },

    /// A test needs both the control arm and the treated arm.
    #[error("action {0} does not occur in the allocation")]
    MissingAction(usize),

    #[error("{count} constrained permutations exceed the enumeration cap of {cap}")]
    EnumerationCap { count: f64, cap: u64 },

    #[error("unknown task id {0:?}")]
    UnknownTask(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("object id {id} out of range for {objects} objects")]
    ObjectOutOfRange { id: usize, objects: usize },

    #[error("mirror plane does not intersect the arena: {0}")]
    MirrorOutsideArena(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
