use thiserror::Error;

use crate::compiler::{CompileError, SpecError};
use crate::layers::LayerError;
use crate::layout::LayoutError;
use crate::models::ModelError;
use crate::presets::PresetError;
use crate::sampling::SamplingError;
use crate::stats::StatsError;
use crate::tables::TableError;
use crate::transform::TransformError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Preset(#[from] PresetError),
}

impl Error {
    /// True for failures caused by the check specification rather than by
    /// the data or model inputs.
    pub fn is_spec_error(&self) -> bool {
        match self {
            Error::Spec(_) => true,
            Error::Compile(e) => e.is_spec_error(),
            Error::Preset(PresetError::MissingPredictor { .. } | PresetError::MissingQuantity { .. }) => false,
            Error::Preset(_) => true,
            _ => false,
        }
    }
}
