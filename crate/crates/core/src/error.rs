use thiserror::Error;

use crate::mdp::ActionVec;
use crate::projection::ProjectionReport;

pub type Result<T> = std::result::Result<T, AcrlError>;

#[derive(Debug, Error)]
pub enum AcrlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("action {action:?} is infeasible for {env}")]
    InfeasibleAction { env: String, action: Vec<f64> },

    #[error("acceptance-rejection exhausted after {} proposals", rejected.len())]
    SamplingExhausted { rejected: Vec<ActionVec> },

    #[error("proposal does not dominate target: acceptance ratio {ratio}")]
    ProposalNotDominating { ratio: f64 },

    #[error("projection did not converge (residual {})", report.residual)]
    NoConvergence { report: ProjectionReport },

    #[error("constraint {0} has no closed-form convex projection")]
    NotProjectable(&'static str),

    #[error("replay buffer has no real transitions yet")]
    NotWarmedUp,

    #[error("non-finite {what} loss")]
    NonFiniteLoss { what: &'static str },

    #[error("unknown environment id {0:?}")]
    UnknownEnv(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
