//! Spatial-audio toolkit: mono-to-binaural rendering through spherical
//! harmonics and HRIRs, interaural metrics, heatmap spatial features, a toy
//! dual-channel conditional flow-matching model, and the batch pipeline that
//! ties them together.

pub mod ambisonic;
pub mod audio;
pub mod error;
pub mod flow;
pub mod heatmap;
pub mod hrir;
pub mod metrics;
pub mod pipeline;
pub mod renderer;

pub use error::{Error, Result};
