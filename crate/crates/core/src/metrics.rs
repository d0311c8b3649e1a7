//! Interaural spatialization metrics of binaural signals.
//!
//! * IACC: peak absolute normalized cross-correlation within ±`max_lag`.
//! * ILD: mean absolute per-frame energy ratio in dB.
//! * ITD: mean absolute per-frame cross-correlation peak lag in ms.
//! * ISD: mean absolute log10 magnitude difference over STFT bins.
//! * IPD: `|L|·|R|`-weighted mean absolute phase difference over STFT bins.
//!
//! Cross-correlations are normalized by the energies of the overlapping
//! parts, so a pure delay within the lag window correlates perfectly. A lag
//! `τ > 0` means the right channel lags the left. Frames whose mean power
//! (over both channels) falls below `silence_gate_db` dBFS are skipped.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{stft, BinauralBuffer, Spectrogram, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub max_lag_ms: f64,
    pub silence_gate_db: f64,
    pub stft_frame: usize,
    pub stft_hop: usize,
    pub epsilon: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            frame_size: 400,
            hop: 160,
            max_lag_ms: 1.0,
            silence_gate_db: -60.0,
            stft_frame: 512,
            stft_hop: 160,
            epsilon: 1e-10,
        }
    }
}

impl MetricConfig {
    /// Lag window in samples at `sample_rate`.
    pub fn max_lag(&self, sample_rate: u32) -> Result<usize> {
        let lag = (self.max_lag_ms * sample_rate as f64 / 1000.0).round();
        if !(lag >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lag window of {} ms is below one sample at {sample_rate} Hz",
                self.max_lag_ms
            )));
        }
        Ok(lag as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size == 0 || self.hop == 0 || self.stft_frame == 0 || self.stft_hop == 0 {
            return Err(Error::InvalidArgument("frame sizes and hops must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Report with one value per metric, serialized as a flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialMetricsReport {
    pub iacc: f64,
    pub ild_db: f64,
    pub itd_ms: f64,
    pub isd: f64,
    pub ipd_rad: f64,
    pub frames_used: usize,
}

impl SpatialMetricsReport {
    pub const METRIC_NAMES: [&'static str; 5] = ["iacc", "ild_db", "itd_ms", "isd", "ipd_rad"];

    pub fn values(&self) -> [f64; 5] {
        [self.iacc, self.ild_db, self.itd_ms, self.isd, self.ipd_rad]
    }
}

/// A per-frame value tagged with its frame index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameValue {
    pub frame: usize,
    pub value: f64,
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Overlap-normalized cross-correlation of `l[i]` with `r[i + lag]`.
fn normalized_xcorr(l: &[f64], r: &[f64], lag: i64) -> f64 {
    let n = l.len().min(r.len());
    let shift = lag.unsigned_abs() as usize;
    if shift >= n {
        return 0.0;
    }
    let (a, b) = if lag >= 0 {
        (&l[..n - shift], &r[shift..n])
    } else {
        (&l[shift..n], &r[..n - shift])
    };
    let (ea, eb) = (energy(a), energy(b));
    if ea <= 0.0 || eb <= 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (ea * eb).sqrt()
}

/// Lags in search order `0, −1, +1, −2, +2, …` so that strict comparison
/// breaks ties toward the smaller `|lag|`.
fn lag_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|k| [-k, k]))
}

/// Lag of the largest correlation and the largest absolute correlation.
fn xcorr_peak(l: &[f64], r: &[f64], max_lag: usize) -> (i64, f64) {
    let mut best_lag = (0, f64::NEG_INFINITY);
    let mut best_abs = 0.0f64;
    for lag in lag_order(max_lag) {
        let c = normalized_xcorr(l, r, lag);
        if c > best_lag.1 {
            best_lag = (lag, c);
        }
        best_abs = best_abs.max(c.abs());
    }
    (best_lag.0, best_abs)
}

fn check_nonzero(b: &BinauralBuffer) -> Result<()> {
    if b.left().energy() <= 0.0 && b.right().energy() <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(())
}

pub fn iacc(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let max_lag = cfg.max_lag(b.sample_rate())?;
    if b.len() <= max_lag {
        return Err(Error::TooShort {
            needed: max_lag + 1,
            got: b.len(),
        });
    }
    check_nonzero(b)?;
    let (_, peak) = xcorr_peak(b.left().samples(), b.right().samples(), max_lag);
    Ok(peak.clamp(0.0, 1.0))
}

/// Start offsets of the analysis frames that pass the silence gate.
fn voiced_frames(b: &BinauralBuffer, frame: usize, hop: usize, gate_db: f64) -> Result<Vec<usize>> {
    if b.len() < frame {
        return Err(Error::TooShort {
            needed: frame,
            got: b.len(),
        });
    }
    let (l, r) = (b.left().samples(), b.right().samples());
    let count = (b.len() - frame) / hop + 1;
    Ok((0..count)
        .map(|k| k * hop)
        .filter(|&s| {
            let power = (energy(&l[s..s + frame]) + energy(&r[s..s + frame])) / (2 * frame) as f64;
            power > 0.0 && 10.0 * power.log10() >= gate_db
        })
        .collect())
}

fn mean(values: impl Iterator<Item = f64>) -> Result<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(Error::AllFramesGated);
    }
    Ok(sum / n as f64)
}

/// Signed per-frame ILD `10·log10(E_l / E_r)` of voiced frames; positive
/// means the left ear is louder.
pub fn ild_frames(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<Vec<FrameValue>> {
    cfg.validate()?;
    let (l, r) = (b.left().samples(), b.right().samples());
    let f = cfg.frame_size;
    Ok(voiced_frames(b, f, cfg.hop, cfg.silence_gate_db)?
        .into_iter()
        .map(|s| {
            let el = energy(&l[s..s + f]).max(cfg.epsilon);
            let er = energy(&r[s..s + f]).max(cfg.epsilon);
            FrameValue {
                frame: s / cfg.hop,
                value: 10.0 * (el / er).log10(),
            }
        })
        .collect())
}

pub fn ild(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<f64> {
    mean(ild_frames(b, cfg)?.into_iter().map(|v| v.value.abs()))
}

/// Signed per-frame cross-correlation peak lag in samples; positive means
/// the right ear lags.
pub fn itd_frames(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<Vec<FrameValue>> {
    cfg.validate()?;
    let max_lag = cfg.max_lag(b.sample_rate())?;
    if cfg.frame_size < 2 * max_lag {
        return Err(Error::InvalidArgument(format!(
            "frame size {} is shorter than twice the lag window {max_lag}",
            cfg.frame_size
        )));
    }
    let (l, r) = (b.left().samples(), b.right().samples());
    let f = cfg.frame_size;
    Ok(voiced_frames(b, f, cfg.hop, cfg.silence_gate_db)?
        .into_iter()
        .map(|s| FrameValue {
            frame: s / cfg.hop,
            value: xcorr_peak(&l[s..s + f], &r[s..s + f], max_lag).0 as f64,
        })
        .collect())
}

pub fn itd(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<f64> {
    let lags = itd_frames(b, cfg)?;
    let ms_per_sample = 1000.0 / b.sample_rate() as f64;
    mean(lags.into_iter().map(|v| v.value.abs() * ms_per_sample))
}

/// STFTs of both channels restricted to frames passing the silence gate.
fn voiced_spectra(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<(Spectrogram, Spectrogram, Vec<usize>)> {
    cfg.validate()?;
    let window = Window::Hann;
    let sl = stft(b.left().samples(), cfg.stft_frame, cfg.stft_hop, window)?;
    let sr = stft(b.right().samples(), cfg.stft_frame, cfg.stft_hop, window)?;
    let frames = voiced_frames(b, cfg.stft_frame, cfg.stft_hop, cfg.silence_gate_db)?
        .into_iter()
        .map(|s| s / cfg.stft_hop)
        .collect();
    Ok((sl, sr, frames))
}

pub fn isd(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<f64> {
    let (sl, sr, frames) = voiced_spectra(b, cfg)?;
    let eps = cfg.epsilon;
    mean(frames.iter().flat_map(|&k| {
        sl.frames[k]
            .iter()
            .zip(&sr.frames[k])
            .map(move |(a, c)| ((a.norm() + eps).log10() - (c.norm() + eps).log10()).abs())
    }))
}

/// Phase of `a` relative to `c`, wrapped to `(−π, π]`.
fn phase_difference(a: Complex64, c: Complex64) -> f64 {
    let d = (a * c.conj()).arg();
    if d <= -std::f64::consts::PI {
        d + 2.0 * std::f64::consts::PI
    } else {
        d
    }
}

pub fn ipd(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<f64> {
    let (sl, sr, frames) = voiced_spectra(b, cfg)?;
    if frames.is_empty() {
        return Err(Error::AllFramesGated);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &k in &frames {
        for (a, c) in sl.frames[k].iter().zip(&sr.frames[k]) {
            let w = a.norm() * c.norm();
            num += w * phase_difference(*a, *c).abs();
            den += w;
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok((num / den).clamp(0.0, std::f64::consts::PI))
}

/// All five metrics; `frames_used` counts the voiced analysis frames.
pub fn spatial_report(b: &BinauralBuffer, cfg: &MetricConfig) -> Result<SpatialMetricsReport> {
    let frames_used = voiced_frames(b, cfg.frame_size, cfg.hop, cfg.silence_gate_db)?.len();
    Ok(SpatialMetricsReport {
        iacc: iacc(b, cfg)?,
        ild_db: ild(b, cfg)?,
        itd_ms: itd(b, cfg)?,
        isd: isd(b, cfg)?,
        ipd_rad: ipd(b, cfg)?,
        frames_used,
    })
}
