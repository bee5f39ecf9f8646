use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{name}`: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("malformed block graph: {0}")]
    MalformedGraph(String),

    #[error("graph with {size} blocks exceeds the cap of {cap}")]
    GraphTooLarge { size: usize, cap: usize },

    #[error("local policy has no action for graph class {class}")]
    UndefinedPolicy { class: usize },

    #[error("no agent can append a block from state {state}")]
    DegenerateState { state: usize },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last residual {last:.3e})")]
    IterationLimit {
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("best-response iteration entered a cycle of length {cycle_len} after {iterations} iterations")]
    PolicyCycle {
        iterations: usize,
        cycle_len: usize,
        trace: Vec<String>,
    },

    #[error("best-response iteration did not converge in {0} iterations")]
    BestResponseLimit(usize),

    #[error("chain has {classes} recurrent classes reachable from the initial state")]
    AmbiguousStationary { classes: usize },

    #[error("stationary solve failed to reach residual {target:.1e} (got {residual:.3e})")]
    StationaryAccuracy { residual: f64, target: f64 },

    #[error("PoW efficiency undefined: no blocks are ever removed")]
    UndefinedEfficiency,

    #[error("policy file line {line}: {msg}")]
    PolicyFile { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
