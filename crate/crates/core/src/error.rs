//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atom index {index} out of range (N = {n_atoms})")]
    IndexOutOfRange { index: usize, n_atoms: usize },

    #[error("species `{0}` is not in the active model's species set")]
    UnknownSpecies(String),

    #[error("malformed configuration file: {0}")]
    MalformedFile(String),

    #[error("packing failed: could not place atom {placed} of {requested} within {attempts} attempts")]
    PackingFailure {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("energy diverged: {0}")]
    EnergyDiverged(String),

    #[error("non-finite energy encountered: {0}")]
    NonFiniteEnergy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
