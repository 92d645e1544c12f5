use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("node id {id} out of bounds for {num_nodes} nodes (line {line})")]
    Bounds { id: u64, num_nodes: usize, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("supra-graph is disconnected between window members {from} and {to}: no node is active in both snapshots")]
    Disconnected { from: usize, to: usize },

    #[error("lanczos did not converge after {iterations} iterations (residuals {residuals:?})")]
    Convergence { iterations: usize, residuals: Vec<f64> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("snapshot {0} has no positive pairs to score")]
    EmptySnapshot(usize),

    #[error("training: {0}")]
    Training(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
