//! Real spherical-harmonic encoding (ACN channel order, SN3D normalization),
//! virtual loudspeaker layouts and mode-matching projection onto them.
//!
//! Given the `M × K` matrix `D` whose row `m` is the SH encoding of speaker
//! direction `m`, the speaker feeds are `s' = D (DᵀD)⁻¹ Ψ`, i.e. the
//! transpose of the pseudo-inverse `(DᵀD)⁻¹Dᵀ` applied to the coefficient
//! vector. This is the minimum-norm set of feeds whose re-encoding
//! `Dᵀ s'` equals `Ψ`.
//!
//! For layouts lying entirely in the horizontal plane the vertical channels
//! carry no information (`Dᵀ D` is singular there), so only the sectoral
//! channels (`|m| = l`) take part in the solve and the others get zero gain.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::Deserialize;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Highest supported SH order.
pub const MAX_ORDER: usize = 2;

const RIDGE: f64 = 1e-12;
const PIVOT_TOLERANCE: f64 = 1e-10;
const HORIZONTAL_TOLERANCE: f64 = 1e-12;

/// A direction on the sphere. Azimuth is counterclockwise from the front, so
/// positive azimuth is the listener's left; elevation is positive upwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: wrap_angle(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn front() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Cartesian unit vector (x front, y left, z up).
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        [ca * ce, sa * ce, se]
    }

    /// Great-circle angle to another direction, in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        dot.clamp(-1.0, 1.0).acos()
    }

    pub fn rotated(&self, delta_azimuth: f64) -> Self {
        Self::new(self.azimuth + delta_azimuth, self.elevation)
    }

    /// True when both directions map to the same point of the sphere (up to
    /// rounding of the unit vectors).
    pub fn coincides(&self, other: &Direction) -> bool {
        let a = self.unit_vector();
        let b = other.unit_vector();
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    fn is_horizontal(&self) -> bool {
        self.elevation.abs() < HORIZONTAL_TOLERANCE
    }
}

/// Number of SH channels for an order.
pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(())
}

/// ACN indices of the sectoral (`|m| = l`) channels, the only ones that are
/// non-constant on the horizontal plane.
fn horizontal_channels(order: usize) -> Vec<usize> {
    let mut out = vec![0];
    for l in 1..=order {
        out.push(l * l); // m = -l
        out.push(l * l + 2 * l); // m = +l
    }
    out.sort_unstable();
    out
}

/// SH coefficients of one direction or one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ShVector {
    order: usize,
    coefficients: Vec<f64>,
}

impl ShVector {
    pub fn new(order: usize, coefficients: Vec<f64>) -> Result<Self> {
        check_order(order)?;
        if coefficients.len() != channel_count(order) {
            return Err(Error::Shape(format!(
                "order {order} needs {} coefficients, got {}",
                channel_count(order),
                coefficients.len()
            )));
        }
        Ok(Self { order, coefficients })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// Real SH basis in ACN order with SN3D normalization. First order is
/// `(W, Y, Z, X) = (1, sin az cos el, sin el, cos az cos el)`.
pub fn sh_encode(direction: Direction, order: usize) -> Result<ShVector> {
    check_order(order)?;
    let (sa, ca) = direction.azimuth.sin_cos();
    let (se, ce) = direction.elevation.sin_cos();
    let mut c = Vec::with_capacity(channel_count(order));
    c.push(1.0);
    if order >= 1 {
        c.extend_from_slice(&[sa * ce, se, ca * ce]);
    }
    if order >= 2 {
        let k = 3.0f64.sqrt() / 2.0;
        let (s2a, c2a) = (2.0 * direction.azimuth).sin_cos();
        let s2e = (2.0 * direction.elevation).sin();
        c.extend_from_slice(&[
            k * s2a * ce * ce,
            k * sa * s2e,
            0.5 * (3.0 * se * se - 1.0),
            k * ca * s2e,
            k * c2a * ce * ce,
        ]);
    }
    Ok(ShVector {
        order,
        coefficients: c,
    })
}

/// Block size and crossfade length for time-varying directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSchedule {
    pub block_size: usize,
    pub crossfade: usize,
}

impl Default for BlockSchedule {
    fn default() -> Self {
        Self {
            block_size: 1024,
            crossfade: 256,
        }
    }
}

impl BlockSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.crossfade >= self.block_size {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= crossfade < block_size, got crossfade {} and block size {}",
                self.crossfade, self.block_size
            )));
        }
        Ok(())
    }

    pub fn blocks_for(&self, samples: usize) -> usize {
        samples.div_ceil(self.block_size)
    }
}

/// A time series of SH coefficient vectors, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShSignal {
    order: usize,
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl ShSignal {
    pub fn new(order: usize, channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        check_order(order)?;
        if channels.len() != channel_count(order) {
            return Err(Error::Shape(format!(
                "order {order} needs {} channels, got {}",
                channel_count(order),
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::Shape("SH channels differ in length".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            order,
            channels,
            sample_rate,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, acn: usize) -> &[f64] {
        &self.channels[acn]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// The coefficient vector at sample `n`.
    pub fn frame(&self, n: usize) -> ShVector {
        ShVector {
            order: self.order,
            coefficients: self.channels.iter().map(|c| c[n]).collect(),
        }
    }

    /// Sample-wise sum of two signals of equal order, rate and length.
    pub fn add(&self, other: &ShSignal) -> Result<ShSignal> {
        if self.order != other.order || self.len() != other.len() {
            return Err(Error::Shape("SH signals differ in order or length".into()));
        }
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch(self.sample_rate, other.sample_rate));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(ShSignal {
            order: self.order,
            channels,
            sample_rate: self.sample_rate,
        })
    }
}

/// Encodes a mono signal along a block-wise direction schedule:
/// `Ψ(t) = Y(ϑ(t))·s(t)`. `directions[k]` holds for block `k`; at each block
/// boundary the gains ramp linearly from the previous block's over
/// `schedule.crossfade` samples, weight `j / crossfade` for the `j`-th sample.
pub fn encode_mono(
    signal: &AudioBuffer,
    directions: &[Direction],
    schedule: BlockSchedule,
    order: usize,
) -> Result<ShSignal> {
    check_order(order)?;
    schedule.validate()?;
    if directions.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let needed = schedule.blocks_for(signal.len());
    if directions.len() < needed {
        return Err(Error::TrajectoryGap(format!(
            "{} blocks needed, trajectory covers {}",
            needed,
            directions.len()
        )));
    }
    let gains = directions[..needed.max(1)]
        .iter()
        .map(|d| sh_encode(*d, order).map(|v| v.coefficients))
        .collect::<Result<Vec<_>>>()?;

    let k = channel_count(order);
    let n = signal.len();
    let s = signal.samples();
    let mut channels = vec![vec![0.0; n]; k];
    for block in 0..needed {
        let start = block * schedule.block_size;
        let end = (start + schedule.block_size).min(n);
        let cur = &gains[block];
        let fade_end = if block > 0 && gains[block - 1] != *cur {
            (start + schedule.crossfade).min(end)
        } else {
            start
        };
        if fade_end > start {
            let prev = &gains[block - 1];
            for i in start..fade_end {
                let w = (i - start) as f64 / schedule.crossfade as f64;
                for ch in 0..k {
                    channels[ch][i] = (prev[ch] + w * (cur[ch] - prev[ch])) * s[i];
                }
            }
        }
        for ch in 0..k {
            let g = cur[ch];
            for i in fade_end..end {
                channels[ch][i] = g * s[i];
            }
        }
    }
    ShSignal::new(order, channels, signal.sample_rate())
}

/// Encodes a mono signal from a single fixed direction.
pub fn encode_static(signal: &AudioBuffer, direction: Direction, order: usize) -> Result<ShSignal> {
    let g = sh_encode(direction, order)?.coefficients;
    let channels = g
        .iter()
        .map(|&gain| signal.samples().iter().map(|s| gain * s).collect())
        .collect();
    ShSignal::new(order, channels, signal.sample_rate())
}

/// A time-stamped direction trajectory. Each point holds from its timestamp
/// until the next one; the last point holds indefinitely.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<(f64, Direction)>,
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    time_s: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl Trajectory {
    pub fn new(points: Vec<(f64, Direction)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument(format!(
                    "trajectory timestamps must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if points.iter().any(|(t, _)| !t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite trajectory timestamp".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(direction: Direction) -> Self {
        Self {
            points: vec![(0.0, direction)],
        }
    }

    pub fn points(&self) -> &[(f64, Direction)] {
        &self.points
    }

    /// Direction in effect at time `t`, or `None` before the first point.
    pub fn direction_at(&self, t: f64) -> Option<Direction> {
        let idx = self.points.partition_point(|(ts, _)| *ts <= t);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    /// Samples the trajectory at every block start.
    pub fn to_blocks(&self, samples: usize, sample_rate: u32, schedule: BlockSchedule) -> Result<Vec<Direction>> {
        schedule.validate()?;
        (0..schedule.blocks_for(samples).max(1))
            .map(|b| {
                let t = (b * schedule.block_size) as f64 / sample_rate as f64;
                self.direction_at(t).ok_or_else(|| {
                    Error::TrajectoryGap(format!(
                        "no direction before t = {t} s (trajectory starts at {} s)",
                        self.points[0].0
                    ))
                })
            })
            .collect()
    }

    /// Reads a CSV file with header `time_s,azimuth_deg,elevation_deg`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv(reader: impl std::io::Read, name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_s", "azimuth_deg", "elevation_deg"] {
            return Err(Error::Parse {
                path: name.to_string(),
                line: 1,
                msg: "expected header `time_s,azimuth_deg,elevation_deg`".into(),
            });
        }
        let mut points = Vec::new();
        for (i, row) in rdr.deserialize::<TrajectoryRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: name.to_string(),
                line: i + 2,
                msg: e.to_string(),
            })?;
            points.push((row.time_s, Direction::from_degrees(row.azimuth_deg, row.elevation_deg)));
        }
        Self::new(points)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "azimuth_deg", "elevation_deg"])?;
        for (t, d) in &self.points {
            w.write_record([
                t.to_string(),
                d.azimuth().to_degrees().to_string(),
                d.elevation().to_degrees().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trajectory csv>", e))?;
        Ok(())
    }
}

/// Virtual loudspeaker directions, pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerLayout {
    directions: Vec<Direction>,
}

impl SpeakerLayout {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::Empty("speaker layout"));
        }
        for (i, a) in directions.iter().enumerate() {
            if directions[..i].iter().any(|b| a.coincides(b)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate speaker direction at index {i}"
                )));
            }
        }
        Ok(Self { directions })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn is_horizontal(&self) -> bool {
        self.directions.iter().all(Direction::is_horizontal)
    }

    pub fn rotated(&self, delta_azimuth: f64) -> Self {
        Self {
            directions: self.directions.iter().map(|d| d.rotated(delta_azimuth)).collect(),
        }
    }
}

/// `M` speakers on the horizontal plane at azimuths `2πm/M`.
pub fn ring_layout(speakers: usize) -> Result<SpeakerLayout> {
    if speakers < 2 {
        return Err(Error::InvalidArgument(format!(
            "ring layout needs at least 2 speakers, got {speakers}"
        )));
    }
    SpeakerLayout::new(
        (0..speakers)
            .map(|m| Direction::new(2.0 * PI * m as f64 / speakers as f64, 0.0))
            .collect(),
    )
}

/// The SH evaluation matrix of a layout together with its projection
/// operator `P = D (DᵀD + λI)⁻¹`, restricted to the active channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeMatrix {
    order: usize,
    layout: SpeakerLayout,
    encoding: Vec<Vec<f64>>,
    active: Vec<usize>,
    projection: Vec<Vec<f64>>,
}

impl DecodeMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn layout(&self) -> &SpeakerLayout {
        &self.layout
    }

    /// Row `m` is `sh_encode(ϑ'_m)`, all `(order+1)²` channels.
    pub fn encoding(&self) -> &[Vec<f64>] {
        &self.encoding
    }

    /// ACN channels that take part in the projection.
    pub fn active_channels(&self) -> &[usize] {
        &self.active
    }

    /// `M × (order+1)²` projection; columns of inactive channels are zero.
    pub fn projection(&self) -> &[Vec<f64>] {
        &self.projection
    }

    /// Speaker gains for a single coefficient vector.
    pub fn speaker_gains(&self, sh: &ShVector) -> Result<Vec<f64>> {
        if sh.order != self.order {
            return Err(Error::OrderMismatch {
                signal: sh.order,
                decoder: self.order,
            });
        }
        Ok(self
            .projection
            .iter()
            .map(|row| row.iter().zip(&sh.coefficients).map(|(p, c)| p * c).sum())
            .collect())
    }
}

/// Cholesky factor of a symmetric positive definite matrix; fails when a
/// pivot drops below the singularity tolerance.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > PIVOT_TOLERANCE) {
                    return Err(Error::SingularLayout { pivot: sum });
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

/// Builds `D` for a layout and solves the normal equations for the
/// projection operator.
pub fn decode_matrix(layout: &SpeakerLayout, order: usize) -> Result<DecodeMatrix> {
    check_order(order)?;
    let encoding = layout
        .directions
        .iter()
        .map(|d| sh_encode(*d, order).map(|v| v.coefficients))
        .collect::<Result<Vec<_>>>()?;
    let active = if layout.is_horizontal() {
        horizontal_channels(order)
    } else {
        (0..channel_count(order)).collect()
    };
    let k = active.len();

    let mut gram = vec![vec![0.0; k]; k];
    for (i, &ci) in active.iter().enumerate() {
        for (j, &cj) in active.iter().enumerate() {
            gram[i][j] = encoding.iter().map(|row| row[ci] * row[cj]).sum();
        }
        gram[i][i] += RIDGE;
    }
    let l = cholesky(&gram)?;
    // columns of the inverse Gram matrix
    let inverse: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            cholesky_solve(&l, &e)
        })
        .collect();

    let full = channel_count(order);
    let projection = encoding
        .iter()
        .map(|row| {
            let mut p = vec![0.0; full];
            for (j, &cj) in active.iter().enumerate() {
                p[cj] = active
                    .iter()
                    .enumerate()
                    .map(|(i, &ci)| row[ci] * inverse[j][i])
                    .sum();
            }
            p
        })
        .collect();
    Ok(DecodeMatrix {
        order,
        layout: layout.clone(),
        encoding,
        active,
        projection,
    })
}

/// Per-sample projection of an SH signal onto the speakers: output `m` is
/// `s'_m(t) = Σ_k P[m][k] Ψ_k(t)`.
pub fn project_to_speakers(sh: &ShSignal, dm: &DecodeMatrix) -> Result<Vec<AudioBuffer>> {
    if sh.order != dm.order {
        return Err(Error::OrderMismatch {
            signal: sh.order,
            decoder: dm.order,
        });
    }
    dm.projection
        .iter()
        .map(|row| {
            let mut out = vec![0.0; sh.len()];
            for (&p, ch) in row.iter().zip(&sh.channels) {
                if p == 0.0 {
                    continue;
                }
                for (o, x) in out.iter_mut().zip(ch) {
                    *o += p * x;
                }
            }
            AudioBuffer::new(out, sh.sample_rate)
        })
        .collect()
}
