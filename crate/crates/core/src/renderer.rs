//! Mono to binaural rendering through virtual loudspeakers.
//!
//! The source is encoded to spherical harmonics, projected onto a speaker
//! layout, and each speaker feed is convolved with the HRIR pair for its
//! direction. The ear signals are the sums over speakers:
//!
//! ```text
//! l(t) = Σ_m h_l(ϑ_m) ∗ s_m(t)      r(t) = Σ_m h_r(ϑ_m) ∗ s_m(t)
//! ```

use crate::ambisonic::{
    decode_matrix, encode_mono, project_to_speakers, ring_layout, BlockSchedule, Direction, SpeakerLayout,
    Trajectory,
};
use crate::audio::{fft_convolve_slices, AudioBuffer, BinauralBuffer};
use crate::error::{Error, Result};
use crate::heatmap::SpatialFeatureSequence;
use crate::hrir::{HeadModelConfig, HrirPair, HrirSet};

/// Default horizontal field of view for mapping image position to azimuth.
pub const DEFAULT_FIELD_OF_VIEW: f64 = std::f64::consts::FRAC_PI_2;

/// Source of the per-speaker impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub enum HrirSource {
    /// Spherical-head model synthesized at the input sample rate.
    Analytic(HeadModelConfig),
    /// A fixed set; its sample rate must match the input.
    Set(HrirSet),
}

impl HrirSource {
    fn resolve(&self, sample_rate: u32) -> Result<HrirSet> {
        match self {
            HrirSource::Analytic(cfg) => HrirSet::analytic(*cfg, sample_rate),
            HrirSource::Set(set) => {
                if set.sample_rate() != sample_rate {
                    return Err(Error::SampleRateMismatch(set.sample_rate(), sample_rate));
                }
                Ok(set.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub order: usize,
    pub layout: SpeakerLayout,
    pub hrir_source: HrirSource,
    pub schedule: BlockSchedule,
    /// Scale both channels by one factor so the output peak is 1.
    pub normalize_output: bool,
    /// Cut the convolution tail so the output has the input's length.
    pub trim_output: bool,
}

impl Default for RenderConfig {
    /// Second order on a five-speaker horizontal ring with the analytic head
    /// model.
    fn default() -> Self {
        Self {
            order: 2,
            layout: ring_layout(5).expect("five speakers form a valid ring"),
            hrir_source: HrirSource::Analytic(HeadModelConfig::default()),
            schedule: BlockSchedule::default(),
            normalize_output: false,
            trim_output: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.layout.len() < 2 {
            return Err(Error::InvalidArgument("a layout needs at least two speakers".into()));
        }
        Ok(())
    }

    /// Order-1 configuration on an `m`-speaker ring.
    pub fn first_order(speakers: usize) -> Result<Self> {
        Ok(Self {
            order: 1,
            layout: ring_layout(speakers)?,
            ..Self::default()
        })
    }
}

/// HRIR pairs for every speaker of the layout, in layout order.
pub fn speaker_hrirs(cfg: &RenderConfig, sample_rate: u32) -> Result<Vec<HrirPair>> {
    let set = cfg.hrir_source.resolve(sample_rate)?;
    cfg.layout.directions().iter().map(|d| set.lookup(*d)).collect()
}

fn add_into(acc: &mut [f64], part: &[f64]) {
    for (a, p) in acc.iter_mut().zip(part) {
        *a += p;
    }
}

fn render_blocks(mono: &AudioBuffer, directions: &[Direction], cfg: &RenderConfig) -> Result<BinauralBuffer> {
    cfg.validate()?;
    if mono.is_empty() {
        return Err(Error::Empty("mono input"));
    }
    let rate = mono.sample_rate();
    let hrirs = speaker_hrirs(cfg, rate)?;
    let dm = decode_matrix(&cfg.layout, cfg.order)?;
    let sh = encode_mono(mono, directions, cfg.schedule, cfg.order)?;
    let feeds = project_to_speakers(&sh, &dm)?;

    let n = mono.len();
    let ir_len = hrirs.iter().map(HrirPair::max_len).max().unwrap_or(1);
    let full = n + ir_len - 1;
    let mut left = vec![0.0; full];
    let mut right = vec![0.0; full];
    for (feed, pair) in feeds.iter().zip(&hrirs) {
        if feed.samples().iter().all(|&s| s == 0.0) {
            continue;
        }
        add_into(&mut left, &fft_convolve_slices(feed.samples(), &pair.left)?);
        add_into(&mut right, &fft_convolve_slices(feed.samples(), &pair.right)?);
    }
    if cfg.trim_output {
        left.truncate(n);
        right.truncate(n);
    }
    let out = BinauralBuffer::from_samples(left, right, rate)?;
    if cfg.normalize_output {
        let peak = out.peak();
        if peak > 0.0 {
            return Ok(out.scaled(1.0 / peak));
        }
    }
    Ok(out)
}

/// Renders a source fixed at one direction.
pub fn render_static(mono: &AudioBuffer, direction: Direction, cfg: &RenderConfig) -> Result<BinauralBuffer> {
    let blocks = cfg.schedule.blocks_for(mono.len()).max(1);
    render_blocks(mono, &vec![direction; blocks], cfg)
}

/// Renders a moving source. The trajectory is sampled at each block start
/// and block transitions are crossfaded.
pub fn render_trajectory(mono: &AudioBuffer, trajectory: &Trajectory, cfg: &RenderConfig) -> Result<BinauralBuffer> {
    cfg.schedule.validate()?;
    let blocks = trajectory.to_blocks(mono.len(), mono.sample_rate(), cfg.schedule)?;
    render_blocks(mono, &blocks, cfg)
}

/// Horizontal trajectory from per-frame image position:
/// `azimuth = (0.5 − s_h) · field_of_view`, so the left image edge maps to
/// `+fov/2`. Frame `k` starts at `k / frame_rate` seconds.
pub fn direction_from_features(features: &SpatialFeatureSequence, field_of_view: f64) -> Result<Trajectory> {
    if features.is_empty() {
        return Err(Error::Empty("feature sequence"));
    }
    if !field_of_view.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid field of view {field_of_view}")));
    }
    let points = features
        .frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let az = (0.5 - f.s_h) * field_of_view;
            (k as f64 / features.frame_rate, Direction::new(az, 0.0))
        })
        .collect();
    Trajectory::new(points)
}
