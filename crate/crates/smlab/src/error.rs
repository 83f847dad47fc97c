//! Crate-wide error type, aggregating the per-module error enums.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
    #[error(transparent)]
    Operator(#[from] crate::operator::OperatorError),
    #[error(transparent)]
    Calculus(#[from] crate::calculus::CalculusError),
    #[error(transparent)]
    Multiplier(#[from] crate::multiplier::MultiplierError),
    #[error(transparent)]
    Martingale(#[from] crate::martingale::MartingaleError),
    #[error(transparent)]
    Experiment(#[from] crate::experiments::ExperimentError),
}
