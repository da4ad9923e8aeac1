use thiserror::Error;

use crate::ah::AhTrace;
use crate::kn::KnState;
use crate::objective::ObjectiveError;
use crate::space::SpaceError;
use crate::sr::SrTrace;

/// Whatever a solver had computed when its objective failed.
#[derive(Debug, Clone)]
pub enum Partial {
    Kn(KnState),
    Sr(SrTrace),
    Ah(AhTrace),
    Baseline { best: Option<(u64, f64)> },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("objective failed after {evaluations} evaluations: {source}")]
    Objective {
        #[source]
        source: ObjectiveError,
        evaluations: u64,
        partial: Box<Partial>,
    },
}

impl SolveError {
    pub(crate) fn objective(source: ObjectiveError, evaluations: u64, partial: Partial) -> Self {
        SolveError::Objective { source, evaluations, partial: Box::new(partial) }
    }

    pub fn objective_error(&self) -> Option<&ObjectiveError> {
        match self {
            SolveError::Objective { source, .. } => Some(source),
            _ => None,
        }
    }
}
