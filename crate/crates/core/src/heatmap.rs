//! Spatial features of sound-localization heatmaps.
//!
//! Pixel coordinates are 1-based: column `x` runs `1..=W` left to right and
//! row `y` runs `1..=H` top to bottom. Internally the values are stored
//! row-major and 0-based, so every coordinate below carries a `+1`.
//!
//! Per frame the five features are
//!
//! * `s_h = cx / W`, the horizontal centroid relative to the width;
//! * `s_area`, the fraction of pixels at or above a max-relative threshold;
//! * `s_var = var_x + var_y`, the variances of the column and row marginals;
//! * `s_lr = (right mass - left mass) / total mass`;
//! * `s_shape = var_x / (var_y + ε)`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Frame rate assumed for heatmap files, which do not record one.
pub const DEFAULT_HEATMAP_FPS: f64 = 25.0;

/// A non-negative `H × W` map.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Heatmap {
    /// `values` is row-major: `values[y * width + x]` with 0-based `x`, `y`.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("heatmap dimensions must be positive".into()));
        }
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} heatmap needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "heatmap values must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at 1-based pixel `(x, y)`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(y - 1) * self.width + (x - 1)]
    }

    /// Sets the value at 1-based pixel `(x, y)`.
    pub fn set(&mut self, x: usize, y: usize, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid heatmap value {value}")));
        }
        self.values[(y - 1) * self.width + (x - 1)] = value;
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// `M(x) = Σ_y M(x, y)` for `x = 1..=W`.
    pub fn column_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for row in self.values.chunks_exact(self.width) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// `M(y) = Σ_x M(x, y)` for `y = 1..=H`.
    pub fn row_marginal(&self) -> Vec<f64> {
        self.values.chunks_exact(self.width).map(|r| r.iter().sum()).collect()
    }

    pub fn mirrored(&self) -> Self {
        let values = self
            .values
            .chunks_exact(self.width)
            .flat_map(|row| row.iter().rev().copied())
            .collect();
        Self {
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|v| v * factor).collect())
    }

    fn nonzero_total(&self) -> Result<f64> {
        let total = self.total();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::ZeroHeatmap)
        }
    }
}

/// Thresholding and stabilizer settings for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Mask threshold as a fraction of the frame maximum.
    pub mask_threshold_rel: f64,
    /// Added to `var_y` in the shape ratio.
    pub shape_epsilon: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            mask_threshold_rel: 0.5,
            shape_epsilon: 1e-8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_threshold_rel > 0.0 && self.mask_threshold_rel <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mask threshold must be in (0, 1], got {}",
                self.mask_threshold_rel
            )));
        }
        if !(self.shape_epsilon >= 0.0) {
            return Err(Error::InvalidArgument("shape epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Intensity-weighted centroid `(cx, cy)` in 1-based pixel coordinates.
pub fn centroid(h: &Heatmap) -> Result<(f64, f64)> {
    let total = h.nonzero_total()?;
    let weighted = |marginal: Vec<f64>| {
        marginal
            .iter()
            .enumerate()
            .map(|(i, m)| (i + 1) as f64 * m)
            .sum::<f64>()
            / total
    };
    Ok((weighted(h.column_marginal()), weighted(h.row_marginal())))
}

pub fn horizontal_position(h: &Heatmap) -> Result<f64> {
    Ok(centroid(h)?.0 / h.width as f64)
}

/// Fraction of pixels with `M ≥ threshold · max M`. An all-zero map has no
/// active pixels.
pub fn area_fraction(h: &Heatmap, cfg: &FeatureConfig) -> f64 {
    let max = h.max();
    if max <= 0.0 {
        return 0.0;
    }
    let threshold = cfg.mask_threshold_rel * max;
    let active = h.values.iter().filter(|&&v| v >= threshold).count();
    active as f64 / h.values.len() as f64
}

fn marginal_variance(marginal: &[f64], center: f64) -> f64 {
    let mass: f64 = marginal.iter().sum();
    marginal
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let d = (i + 1) as f64 - center;
            m * d * d
        })
        .sum::<f64>()
        / mass
}

/// `(var_x, var_y, var_x + var_y)` from the column and row marginals.
pub fn spatial_variance(h: &Heatmap) -> Result<(f64, f64, f64)> {
    let (cx, cy) = centroid(h)?;
    let var_x = marginal_variance(&h.column_marginal(), cx);
    let var_y = marginal_variance(&h.row_marginal(), cy);
    Ok((var_x, var_y, var_x + var_y))
}

/// Right-half mass minus left-half mass over total mass. For odd widths the
/// middle column counts half to each side, which cancels out.
pub fn lr_energy_bias(h: &Heatmap) -> Result<f64> {
    let total = h.nonzero_total()?;
    let cols = h.column_marginal();
    let half = h.width / 2;
    let left: f64 = cols[..half].iter().sum();
    let right: f64 = cols[h.width - half..].iter().sum();
    Ok(((right - left) / total).clamp(-1.0, 1.0))
}

pub fn shape_ratio(h: &Heatmap, cfg: &FeatureConfig) -> Result<f64> {
    let (var_x, var_y, _) = spatial_variance(h)?;
    Ok(var_x / (var_y + cfg.shape_epsilon))
}

/// The five per-frame features, in the order they are concatenated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialFeatureVector {
    pub s_h: f64,
    pub s_area: f64,
    pub s_var: f64,
    pub s_lr: f64,
    pub s_shape: f64,
}

impl SpatialFeatureVector {
    pub const DIM: usize = 5;

    /// Fill value for frames without any heatmap mass.
    pub const NEUTRAL: SpatialFeatureVector = SpatialFeatureVector {
        s_h: 0.5,
        s_area: 0.0,
        s_var: 0.0,
        s_lr: 0.0,
        s_shape: 0.0,
    };

    pub fn to_array(&self) -> [f64; 5] {
        [self.s_h, self.s_area, self.s_var, self.s_lr, self.s_shape]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            s_h: a[0],
            s_area: a[1],
            s_var: a[2],
            s_lr: a[3],
            s_shape: a[4],
        }
    }
}

/// Features of one heatmap; all-zero maps give [`SpatialFeatureVector::NEUTRAL`].
pub fn frame_features(h: &Heatmap, cfg: &FeatureConfig) -> Result<SpatialFeatureVector> {
    cfg.validate()?;
    if h.total() <= 0.0 {
        return Ok(SpatialFeatureVector::NEUTRAL);
    }
    let (var_x, var_y, s_var) = spatial_variance(h)?;
    Ok(SpatialFeatureVector {
        s_h: horizontal_position(h)?,
        s_area: area_fraction(h, cfg),
        s_var,
        s_lr: lr_energy_bias(h)?,
        s_shape: var_x / (var_y + cfg.shape_epsilon),
    })
}

/// Per-frame feature vectors with the rate of the heatmaps they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFeatureSequence {
    pub frames: Vec<SpatialFeatureVector>,
    pub frame_rate: f64,
}

impl SpatialFeatureSequence {
    pub fn new(frames: Vec<SpatialFeatureVector>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid frame rate {frame_rate}")));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Writes `frame,s_h,s_area,s_var,s_lr,s_shape` rows.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["frame", "s_h", "s_area", "s_var", "s_lr", "s_shape"])?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(f.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<features csv>", e))?;
        Ok(())
    }
}

/// A sequence of equally sized heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSequence {
    frames: Vec<Heatmap>,
    frame_rate: f64,
}

impl HeatmapSequence {
    pub fn new(frames: Vec<Heatmap>, frame_rate: f64) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Empty("heatmap sequence"));
        };
        if frames.iter().any(|f| f.height != first.height || f.width != first.width) {
            return Err(Error::Shape("heatmap frames differ in size".into()));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid frame rate {frame_rate}")));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Heatmap] {
        &self.frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    /// Reads the `hmap 1 <T> <H> <W>` text format.
    pub fn load(path: impl AsRef<Path>, frame_rate: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file), &path.display().to_string(), frame_rate)
    }

    pub fn read(reader: impl BufRead, name: &str, frame_rate: f64) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: name.to_string(),
            line,
            msg,
        };
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((n, Err(e))) => Err(err(n, e.to_string())),
                None => Err(err(0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (n, header) = next("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "hmap" || fields[1] != "1" {
            return Err(err(n, format!("malformed header `{header}`, expected `hmap 1 <T> <H> <W>`")));
        }
        let dim = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(err(n, format!("invalid dimension `{s}`"))),
            }
        };
        let (t, h, w) = (dim(fields[2])?, dim(fields[3])?, dim(fields[4])?);

        let mut frames = Vec::with_capacity(t);
        for frame in 0..t {
            let mut values = Vec::with_capacity(h * w);
            for _ in 0..h {
                let (n, line) = next(&format!("row of frame {frame}"))?;
                let before = values.len();
                for tok in line.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| err(n, format!("invalid number `{tok}`")))?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(err(n, format!("heatmap values must be finite and non-negative, got {tok}")));
                    }
                    values.push(v);
                }
                if values.len() - before != w {
                    return Err(err(n, format!("expected {w} columns, got {}", values.len() - before)));
                }
            }
            frames.push(Heatmap::new(h, w, values)?);
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, format!("trailing data after {t} frames")));
        }
        Self::new(frames, frame_rate)
    }

    /// Writes the text format with 9 significant digits per value.
    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        let mut out = format!("hmap 1 {} {} {}\n", self.len(), self.height(), self.width());
        for f in &self.frames {
            for row in f.values.chunks_exact(f.width) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        writer
            .write_all(out.as_bytes())
            .map_err(|e| Error::io("<heatmap>", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(file))
    }
}

/// Features for every frame, all-zero frames filled with the neutral vector.
pub fn extract_features(seq: &HeatmapSequence, cfg: &FeatureConfig) -> Result<SpatialFeatureSequence> {
    let frames = seq
        .frames
        .iter()
        .map(|h| frame_features(h, cfg))
        .collect::<Result<Vec<_>>>()?;
    SpatialFeatureSequence::new(frames, seq.frame_rate)
}
