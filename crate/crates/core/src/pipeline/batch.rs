//! Per-clip batch stages. Clips run in parallel on the current rayon pool;
//! results are always reported in input order, and one failing clip never
//! stops the others.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{ClipEntry, ClipManifest};
use crate::ambisonic::Trajectory;
use crate::audio::{read_wav, write_wav, WavContents, WavEncoding};
use crate::error::{Error, Result};
use crate::heatmap::{extract_features, FeatureConfig, HeatmapSequence, DEFAULT_HEATMAP_FPS};
use crate::metrics::{spatial_report, MetricConfig, SpatialMetricsReport};
use crate::renderer::{direction_from_features, render_trajectory, RenderConfig, DEFAULT_FIELD_OF_VIEW};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".sv2a-write-probe");
    std::fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRenderConfig {
    pub render: RenderConfig,
    pub field_of_view: f64,
    pub heatmap_fps: f64,
    pub features: FeatureConfig,
    pub encoding: WavEncoding,
}

impl Default for BatchRenderConfig {
    fn default() -> Self {
        Self {
            render: RenderConfig::default(),
            field_of_view: DEFAULT_FIELD_OF_VIEW,
            heatmap_fps: DEFAULT_HEATMAP_FPS,
            features: FeatureConfig::default(),
            encoding: WavEncoding::Float32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSource {
    Trajectory,
    Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderClipLog {
    pub id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction_source: Option<DirectionSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderLog {
    pub rendered: usize,
    pub failed: usize,
    pub clips: Vec<RenderClipLog>,
}

pub const RENDER_LOG: &str = "render_log.json";

pub fn output_name(id: &str) -> String {
    format!("{id}_binaural.wav")
}

/// Direction trajectory of a clip: its trajectory file, or else one derived
/// from its heatmaps.
pub fn clip_trajectory(
    manifest: &ClipManifest,
    entry: &ClipEntry,
    cfg: &BatchRenderConfig,
) -> Result<(Trajectory, DirectionSource)> {
    if let Some(t) = &entry.trajectory {
        return Ok((Trajectory::load_csv(manifest.resolve(t))?, DirectionSource::Trajectory));
    }
    if let Some(h) = &entry.heatmap {
        let seq = HeatmapSequence::load(manifest.resolve(h), cfg.heatmap_fps)?;
        let features = extract_features(&seq, &cfg.features)?;
        return Ok((direction_from_features(&features, cfg.field_of_view)?, DirectionSource::Heatmap));
    }
    Err(Error::InvalidArgument(format!("clip {} has neither a trajectory nor a heatmap", entry.id)))
}

fn render_clip(
    manifest: &ClipManifest,
    entry: &ClipEntry,
    cfg: &BatchRenderConfig,
    out_dir: &Path,
) -> Result<(String, DirectionSource)> {
    let mono = read_wav(manifest.resolve(&entry.audio))?.to_mono();
    let (trajectory, source) = clip_trajectory(manifest, entry, cfg)?;
    let out = render_trajectory(&mono, &trajectory, &cfg.render)?;
    let name = output_name(&entry.id);
    write_wav(out_dir.join(&name), &WavContents::Stereo(out), cfg.encoding)?;
    Ok((name, source))
}

/// Renders every clip to `<id>_binaural.wav` in `out_dir` and writes
/// `render_log.json` there. Only an unusable output directory is fatal.
pub fn batch_render(manifest: &ClipManifest, cfg: &BatchRenderConfig, out_dir: &Path) -> Result<RenderLog> {
    cfg.render.validate()?;
    ensure_dir(out_dir)?;
    let clips: Vec<RenderClipLog> = manifest
        .entries
        .par_iter()
        .map(|e| match render_clip(manifest, e, cfg, out_dir) {
            Ok((name, source)) => RenderClipLog {
                id: e.id.clone(),
                ok: true,
                output: Some(name),
                direction_source: Some(source),
                error: None,
            },
            Err(err) => {
                log::warn!("{}: render failed: {err}", e.id);
                RenderClipLog {
                    id: e.id.clone(),
                    ok: false,
                    output: None,
                    direction_source: None,
                    error: Some(err.to_string()),
                }
            }
        })
        .collect();
    let rendered = clips.iter().filter(|c| c.ok).count();
    let log = RenderLog {
        rendered,
        failed: clips.len() - rendered,
        clips,
    };
    write_json(&out_dir.join(RENDER_LOG), &log)?;
    Ok(log)
}

/// A named stereo file to score.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricInput {
    pub id: String,
    pub path: PathBuf,
}

/// Every `.wav` file in `dir`, sorted by file name; ids are file stems.
pub fn metric_inputs_from_dir(dir: &Path) -> Result<Vec<MetricInput>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push(MetricInput { id, path });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn metric_inputs_from_manifest(manifest: &ClipManifest) -> Vec<MetricInput> {
    manifest
        .entries
        .iter()
        .map(|e| MetricInput {
            id: e.id.clone(),
            path: manifest.resolve(&e.audio),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipMetrics {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SpatialMetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean of each metric over the clips that produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsAggregate {
    pub iacc: f64,
    pub ild_db: f64,
    pub itd_ms: f64,
    pub isd: f64,
    pub ipd_rad: f64,
    pub count: usize,
    pub failed: usize,
}

impl MetricsAggregate {
    fn from_clips(clips: &[ClipMetrics]) -> Self {
        let reports: Vec<&SpatialMetricsReport> = clips.iter().filter_map(|c| c.report.as_ref()).collect();
        let n = reports.len();
        let mut sums = [0.0; 5];
        for r in &reports {
            for (s, v) in sums.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        let mean = |i: usize| if n == 0 { f64::NAN } else { sums[i] / n as f64 };
        Self {
            iacc: mean(0),
            ild_db: mean(1),
            itd_ms: mean(2),
            isd: mean(3),
            ipd_rad: mean(4),
            count: n,
            failed: clips.len() - n,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.iacc, self.ild_db, self.itd_ms, self.isd, self.ipd_rad]
    }

    /// Writes `metric,mean,count` rows.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "mean", "count"])?;
        for (name, v) in SpatialMetricsReport::METRIC_NAMES.iter().zip(self.values()) {
            w.write_record([name.to_string(), v.to_string(), self.count.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<aggregate csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsBatch {
    pub clips: Vec<ClipMetrics>,
    pub aggregate: MetricsAggregate,
}

/// Report of one input and whether it was read as a stereo file.
fn score(input: &MetricInput, cfg: &MetricConfig) -> (Result<SpatialMetricsReport>, bool) {
    match read_wav(&input.path) {
        Ok(WavContents::Stereo(b)) => (spatial_report(&b, cfg), true),
        Ok(WavContents::Mono(_)) => (Err(Error::UnsupportedChannels(1)), false),
        Err(e) => (Err(e), false),
    }
}

/// Scores every input. Fails with [`Error::NoStereoInputs`] when no input
/// could be read as a stereo file.
pub fn batch_metrics(inputs: &[MetricInput], cfg: &MetricConfig) -> Result<MetricsBatch> {
    let results: Vec<(ClipMetrics, bool)> = inputs
        .par_iter()
        .map(|input| {
            let (result, stereo) = score(input, cfg);
            let clip = match result {
                Ok(r) => ClipMetrics {
                    id: input.id.clone(),
                    report: Some(r),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{}: metrics failed: {e}", input.id);
                    ClipMetrics {
                        id: input.id.clone(),
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            (clip, stereo)
        })
        .collect();
    if !results.iter().any(|(_, stereo)| *stereo) {
        return Err(Error::NoStereoInputs);
    }
    let clips: Vec<ClipMetrics> = results.into_iter().map(|(c, _)| c).collect();
    let aggregate = MetricsAggregate::from_clips(&clips);
    Ok(MetricsBatch { clips, aggregate })
}

impl MetricsBatch {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureClipLog {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn features_name(id: &str) -> String {
    format!("{id}_features.csv")
}

/// Writes `<id>_features.csv` for every clip with a heatmap; clips without
/// one are skipped.
pub fn batch_features(
    manifest: &ClipManifest,
    cfg: &FeatureConfig,
    heatmap_fps: f64,
    out_dir: &Path,
) -> Result<Vec<FeatureClipLog>> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    Ok(manifest
        .entries
        .par_iter()
        .filter_map(|e| e.heatmap.as_ref().map(|h| (e, h)))
        .map(|(e, h)| {
            let name = features_name(&e.id);
            let result = HeatmapSequence::load(manifest.resolve(h), heatmap_fps)
                .and_then(|seq| extract_features(&seq, cfg))
                .and_then(|f| {
                    let path = out_dir.join(&name);
                    let file = std::fs::File::create(&path).map_err(|err| Error::io(&path, err))?;
                    f.write_csv(std::io::BufWriter::new(file))
                });
            match result {
                Ok(()) => FeatureClipLog {
                    id: e.id.clone(),
                    output: Some(name),
                    error: None,
                },
                Err(err) => {
                    log::warn!("{}: features failed: {err}", e.id);
                    FeatureClipLog {
                        id: e.id.clone(),
                        output: None,
                        error: Some(err.to_string()),
                    }
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipValidation {
    pub id: String,
    pub issues: Vec<String>,
}

/// Checks that every referenced file exists and parses.
pub fn validate_manifest(manifest: &ClipManifest, heatmap_fps: f64) -> Vec<ClipValidation> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let mut issues = Vec::new();
            if let Err(err) = read_wav(manifest.resolve(&e.audio)) {
                issues.push(format!("audio: {err}"));
            }
            if let Some(h) = &e.heatmap {
                if let Err(err) = HeatmapSequence::load(manifest.resolve(h), heatmap_fps) {
                    issues.push(format!("heatmap: {err}"));
                }
            }
            if let Some(t) = &e.trajectory {
                if let Err(err) = Trajectory::load_csv(manifest.resolve(t)) {
                    issues.push(format!("trajectory: {err}"));
                }
            }
            ClipValidation {
                id: e.id.clone(),
                issues,
            }
        })
        .collect()
}
