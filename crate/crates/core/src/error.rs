use std::path::PathBuf;

use thiserror::Error;

use crate::model::MicrogridId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fleet is empty")]
    EmptyFleet,

    #[error("window mismatch for microgrid {id}: expected {expected} readings, found {found}")]
    WindowMismatch {
        id: MicrogridId,
        expected: usize,
        found: usize,
    },

    #[error("fleet is not homogeneous: microgrid {id} has a different sign profile")]
    NotHomogeneous { id: MicrogridId },

    #[error("invalid number of communities K={k} for {n} microgrids")]
    InvalidK { k: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("aggregate net energy of the fleet is negative at t={t} ({total} mW); no self-sufficient partition exists")]
    Infeasible { t: usize, total: i64 },

    #[error("search budget exhausted without a feasible solution (best violation {best_violation_mw} mW)")]
    BudgetExhausted {
        best_violation_mw: i64,
        best: Box<crate::sec::TabuOutcome>,
    },

    #[error("no microgrid has positive net energy at every timestamp")]
    NoPositiveMicrogrids,

    #[error("benchmark SSE is zero")]
    DegenerateBenchmark,

    #[error("window of {window} readings exceeds trace length {available}")]
    WindowTooLong { window: usize, available: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate microgrid id {0}")]
    DuplicateId(MicrogridId),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
