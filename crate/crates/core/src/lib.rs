//! Compiler for model-check visualizations.
//!
//! A check is described declaratively by a [`VmcSpec`] with four components:
//! what to sample from a fitted model, how to transform the observed data,
//! which marks represent model draws and observations, and how the two are
//! laid out for comparison. [`compile`] runs the pipeline
//! (sample, transform, translate, construct) and produces a Vega-Lite
//! chart or a set of animation frames.

pub mod compiler;
pub mod error;
pub mod layers;
pub mod layout;
pub mod models;
pub mod presets;
pub mod sampling;
pub mod stats;
pub mod tables;
pub mod transform;

pub use compiler::{compile, emit, parse_spec, validate_output, ChartSpec, CompileOutput, FrameSet, VmcSpec};
pub use error::{Error, Result};
pub use models::ModelBundle;
pub use sampling::QuantityId;
pub use tables::{DrawsTable, ObservedTable, PredictorValue};
