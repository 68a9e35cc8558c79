//! Laboratory front end for the feedback-stabilised Cahn-Hilliard solver:
//! experiment configuration, the shared run pipeline, CSV/SVG emission and
//! the CLI surface (see [`cli`]).

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::LabError;
