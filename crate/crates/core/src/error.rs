use std::path::PathBuf;

use crate::terrain::Pose;

/// Errors raised across the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("footprint of pose ({x:.3}, {y:.3}) leaves the terrain; nearest valid pose is ({:.3}, {:.3})", suggestion.x, suggestion.y)]
    OutOfBounds { x: f64, y: f64, suggestion: Pose },

    #[error("training diverged; last finite loss {last_finite_loss}")]
    Diverged { last_finite_loss: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("every candidate of generation {generation} had a non-finite fitness")]
    AllFitnessNonFinite { generation: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("mission {mission}: {source}")]
    Mission {
        mission: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
