pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hpo;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod profile;
pub mod seed;
pub mod series;
pub mod synth;
pub mod wrangle;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::Pipeline;
