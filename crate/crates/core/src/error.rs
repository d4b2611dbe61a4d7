use thiserror::Error;

use crate::backend::BackendError;
use crate::cbi::CbiError;
use crate::contagion::ContagionError;
use crate::metrics::MetricsError;
use crate::regulation::RegulationError;
use crate::report::ReportError;
use crate::testbed::TestbedError;

/// Any error from the crate, with a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Cbi(#[from] CbiError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Regulation(#[from] RegulationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Contagion(#[from] ContagionError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

impl Error {
    /// 1 for invalid input, 2 for backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(e) => backend_code(e),
            Error::Regulation(e) => regulation_code(e),
            Error::Contagion(ContagionError::Backend(e)) => backend_code(e),
            Error::Contagion(ContagionError::Regulation(e)) => regulation_code(e),
            Error::Contagion(ContagionError::Scorer { .. }) => EXIT_BACKEND,
            Error::Report(e) => e.exit_code(),
            _ => EXIT_VALIDATION,
        }
    }
}

pub(crate) fn backend_code(e: &BackendError) -> i32 {
    match e {
        BackendError::Config(_) => EXIT_VALIDATION,
        _ => EXIT_BACKEND,
    }
}

pub(crate) fn regulation_code(e: &RegulationError) -> i32 {
    match e {
        RegulationError::Backend(b) => backend_code(b),
        RegulationError::TooManyFailures { .. } => EXIT_BACKEND,
        _ => EXIT_VALIDATION,
    }
}
