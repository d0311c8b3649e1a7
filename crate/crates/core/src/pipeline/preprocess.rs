//! Clip filters: unreadable audio, short clips, mostly silent clips, plus a
//! clipping / DC-offset quality flag that never rejects.

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{ClipEntry, ClipManifest};
use crate::audio::{frame_rms, read_wav, AudioBuffer};
use crate::error::{Error, Result};

/// Samples at or above this magnitude count as clipped (PCM-16 full scale).
pub const CLIP_LEVEL: f64 = 32767.0 / 32768.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Clips shorter than this are rejected; exactly this long is kept.
    pub min_seconds: f64,
    pub silence_frame: usize,
    pub silence_hop: usize,
    pub silence_threshold_dbfs: f64,
    /// Clips with a larger silent-frame fraction are rejected.
    pub max_silence_fraction: f64,
    pub max_clipping_fraction: f64,
    pub max_dc_offset: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_seconds: 10.0,
            silence_frame: 400,
            silence_hop: 160,
            silence_threshold_dbfs: -50.0,
            max_silence_fraction: 0.8,
            max_clipping_fraction: 0.01,
            max_dc_offset: 0.02,
        }
    }
}

/// Keep iff the clip lasts at least `min_seconds`.
pub fn duration_filter(duration_secs: f64, min_seconds: f64) -> bool {
    duration_secs >= min_seconds
}

/// Fraction of frames whose RMS is below `threshold_dbfs`.
pub fn silence_fraction(audio: &AudioBuffer, frame: usize, hop: usize, threshold_dbfs: f64) -> Result<f64> {
    let rms = frame_rms(audio.samples(), frame, hop)?;
    if rms.is_empty() {
        return Err(Error::TooShort {
            needed: frame,
            got: audio.len(),
        });
    }
    let silent = rms
        .iter()
        .filter(|&&r| r <= 0.0 || 20.0 * r.log10() < threshold_dbfs)
        .count();
    Ok(silent as f64 / rms.len() as f64)
}

/// Fraction of samples at full scale and the mean sample value.
pub fn quality_stats(audio: &AudioBuffer) -> (f64, f64) {
    if audio.is_empty() {
        return (0.0, 0.0);
    }
    let n = audio.len() as f64;
    let clipped = audio.samples().iter().filter(|s| s.abs() >= CLIP_LEVEL).count();
    let dc = audio.samples().iter().sum::<f64>() / n;
    (clipped as f64 / n, dc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStatus {
    Kept,
    RejectedUnreadable,
    RejectedShort,
    RejectedSilent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipReport {
    pub id: String,
    pub status: ClipStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silence_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipping_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dc_offset: Option<f64>,
    pub quality_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub total: usize,
    pub kept: usize,
    pub rejected_short: usize,
    pub rejected_silent: usize,
    pub rejected_unreadable: usize,
    pub quality_flagged: usize,
    pub clips: Vec<ClipReport>,
}

impl PreprocessReport {
    fn from_clips(clips: Vec<ClipReport>) -> Self {
        let count = |s: ClipStatus| clips.iter().filter(|c| c.status == s).count();
        Self {
            total: clips.len(),
            kept: count(ClipStatus::Kept),
            rejected_short: count(ClipStatus::RejectedShort),
            rejected_silent: count(ClipStatus::RejectedSilent),
            rejected_unreadable: count(ClipStatus::RejectedUnreadable),
            quality_flagged: clips.iter().filter(|c| c.quality_flag).count(),
            clips,
        }
    }
}

fn assess(manifest: &ClipManifest, entry: &ClipEntry, cfg: &PreprocessConfig) -> ClipReport {
    let mut report = ClipReport {
        id: entry.id.clone(),
        status: ClipStatus::Kept,
        reason: None,
        duration_s: None,
        silence_fraction: None,
        clipping_fraction: None,
        dc_offset: None,
        quality_flag: false,
    };
    let audio = match read_wav(manifest.resolve(&entry.audio)) {
        Ok(a) => a,
        Err(e) => {
            log::warn!("{}: unreadable: {e}", entry.id);
            report.status = ClipStatus::RejectedUnreadable;
            report.reason = Some(e.to_string());
            return report;
        }
    };
    let duration = audio.duration_secs();
    report.duration_s = Some(duration);
    if !duration_filter(duration, cfg.min_seconds) {
        report.status = ClipStatus::RejectedShort;
        report.reason = Some(format!("{duration} s is shorter than {} s", cfg.min_seconds));
        return report;
    }
    let mono = audio.to_mono();
    let silence = match silence_fraction(&mono, cfg.silence_frame, cfg.silence_hop, cfg.silence_threshold_dbfs) {
        Ok(f) => f,
        Err(e) => {
            report.status = ClipStatus::RejectedUnreadable;
            report.reason = Some(e.to_string());
            return report;
        }
    };
    report.silence_fraction = Some(silence);
    let (clipping, dc) = quality_stats(&mono);
    report.clipping_fraction = Some(clipping);
    report.dc_offset = Some(dc);
    report.quality_flag = clipping > cfg.max_clipping_fraction || dc.abs() > cfg.max_dc_offset;
    if silence > cfg.max_silence_fraction {
        report.status = ClipStatus::RejectedSilent;
        report.reason = Some(format!("{:.1}% of frames are silent", 100.0 * silence));
    }
    report
}

/// Applies the filters to every clip (in parallel on the current rayon
/// pool) and returns the kept clips in manifest order with the report.
pub fn preprocess(manifest: &ClipManifest, cfg: &PreprocessConfig) -> (ClipManifest, PreprocessReport) {
    let clips: Vec<ClipReport> = manifest
        .entries
        .par_iter()
        .map(|e| assess(manifest, e, cfg))
        .collect();
    let kept = manifest
        .entries
        .iter()
        .zip(&clips)
        .filter(|(_, c)| c.status == ClipStatus::Kept)
        .map(|(e, _)| e.clone())
        .collect();
    let filtered = ClipManifest {
        entries: kept,
        base_dir: manifest.base_dir.clone(),
    };
    (filtered, PreprocessReport::from_clips(clips))
}
