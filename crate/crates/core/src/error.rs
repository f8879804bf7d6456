use thiserror::Error;

use crate::bandit::BanditError;
use crate::dynamics::DynamicsError;
use crate::experiments::ExperimentError;
use crate::function::{FunctionError, ParseError};
use crate::gheat::GHeatError;
use crate::measures::MeasureError;
use crate::variance::VarianceError;

/// Any error raised by the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    GHeat(#[from] GHeatError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
}

impl Error {
    /// The leading error name of the message, e.g. `StateEscape`.
    pub fn name(&self) -> String {
        let msg = self.to_string();
        msg.split(|c: char| !c.is_ascii_alphanumeric())
            .next()
            .unwrap_or_default()
            .to_string()
    }
}
