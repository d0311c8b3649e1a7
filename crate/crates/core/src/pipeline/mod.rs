//! Dataset construction: manifests, clip filters, batch rendering and
//! scoring, and the command line.

mod batch;
pub mod cli;
mod manifest;
mod preprocess;

pub use batch::{
    batch_features, batch_metrics, batch_render, clip_trajectory, features_name, metric_inputs_from_dir,
    metric_inputs_from_manifest, output_name, validate_manifest, BatchRenderConfig, ClipMetrics, ClipValidation,
    DirectionSource, FeatureClipLog, MetricInput, MetricsAggregate, MetricsBatch, RenderClipLog, RenderLog,
    RENDER_LOG,
};
pub use manifest::{ClipEntry, ClipManifest};
pub use preprocess::{
    duration_filter, preprocess, quality_stats, silence_fraction, ClipReport, ClipStatus, PreprocessConfig,
    PreprocessReport, CLIP_LEVEL,
};

use crate::error::{Error, Result};

/// Environment variable capping the number of batch worker threads.
pub const THREADS_ENV: &str = "SV2A_THREADS";

/// Worker pool sized by `SV2A_THREADS`, or by rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}
