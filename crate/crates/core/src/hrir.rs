//! Head-related impulse responses: an analytic spherical-head model and
//! measured sets loaded from a JSON manifest of stereo WAV files.
//!
//! The analytic model gives each ear a single scaled impulse. The far ear is
//! delayed by the Woodworth spherical-head formula `τ(θ) = (a/c)(θ + sin θ)`
//! (θ the lateral angle from the median plane), rounded to whole samples.
//! Each ear's gain in dB varies linearly with `cos Δ`, Δ being the angle
//! between the source and that ear's axis: 0 dB on-axis, minus the
//! contralateral attenuation directly opposite.

use std::path::Path;

use serde::Deserialize;

use crate::ambisonic::Direction;
use crate::audio::{read_wav, WavContents};
use crate::error::{Error, Result};

/// A left/right impulse response pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
}

impl HrirPair {
    pub fn new(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Empty("impulse response"));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            left,
            right,
            sample_rate,
        })
    }

    pub fn max_len(&self) -> usize {
        self.left.len().max(self.right.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadModelConfig {
    /// Head radius in meters.
    pub head_radius: f64,
    /// Speed of sound in m/s.
    pub speed_of_sound: f64,
    /// Attenuation at the ear facing away from the source, in dB.
    pub contralateral_attenuation_db: f64,
    /// Impulse response length in samples.
    pub ir_length: usize,
    /// Delay of the near ear, in samples.
    pub reference_delay: usize,
}

impl Default for HeadModelConfig {
    fn default() -> Self {
        Self {
            head_radius: 0.0875,
            speed_of_sound: 343.0,
            contralateral_attenuation_db: 6.0,
            ir_length: 64,
            reference_delay: 0,
        }
    }
}

impl HeadModelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let positive = self.head_radius > 0.0 && self.speed_of_sound > 0.0 && self.ir_length > 0;
        if !positive || !(self.contralateral_attenuation_db >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid head model {self:?}")));
        }
        let needed = self.reference_delay + self.max_delay_samples(sample_rate) + 1;
        if self.ir_length < needed {
            return Err(Error::InvalidArgument(format!(
                "ir_length {} cannot hold the maximum delay at {sample_rate} Hz ({needed} samples needed)",
                self.ir_length
            )));
        }
        Ok(())
    }

    /// Woodworth far-ear delay in seconds for a lateral angle in `[0, π/2]`.
    pub fn woodworth_delay(&self, lateral: f64) -> f64 {
        self.head_radius / self.speed_of_sound * (lateral + lateral.sin())
    }

    /// Far-ear delay in whole samples for a direction.
    pub fn delay_samples(&self, direction: Direction, sample_rate: u32) -> usize {
        let lateral = lateral_angle(direction);
        (self.woodworth_delay(lateral) * sample_rate as f64).round() as usize
    }

    fn max_delay_samples(&self, sample_rate: u32) -> usize {
        (self.woodworth_delay(std::f64::consts::FRAC_PI_2) * sample_rate as f64).round() as usize
    }

    /// Broadband gain (linear) of an ear whose axis makes angle Δ with the
    /// source, given `cos Δ`.
    pub fn ear_gain(&self, cos_delta: f64) -> f64 {
        let db = -self.contralateral_attenuation_db * (1.0 - cos_delta) / 2.0;
        10f64.powf(db / 20.0)
    }
}

/// Angle between the source and the median plane, in `[0, π/2]`.
pub fn lateral_angle(direction: Direction) -> f64 {
    direction.unit_vector()[1].abs().clamp(0.0, 1.0).asin()
}

/// Synthesizes the analytic HRIR pair for a direction.
pub fn analytic_hrir(direction: Direction, sample_rate: u32, cfg: &HeadModelConfig) -> Result<HrirPair> {
    cfg.validate(sample_rate)?;
    // y > 0: the source is on the left, so the right ear is the far ear
    let y = direction.unit_vector()[1];
    let far = cfg.delay_samples(direction, sample_rate);
    let (delay_left, delay_right) = if y >= 0.0 { (0, far) } else { (far, 0) };

    let mut left = vec![0.0; cfg.ir_length];
    let mut right = vec![0.0; cfg.ir_length];
    left[cfg.reference_delay + delay_left] = cfg.ear_gain(y);
    right[cfg.reference_delay + delay_right] = cfg.ear_gain(-y);
    HrirPair::new(left, right, sample_rate)
}

/// Where a set's responses come from.
#[derive(Debug, Clone, PartialEq)]
pub enum HrirSet {
    /// Exact synthesis at every queried direction.
    Analytic { config: HeadModelConfig, sample_rate: u32 },
    /// Nearest-neighbour lookup in measured responses.
    Measured {
        entries: Vec<(Direction, HrirPair)>,
        sample_rate: u32,
    },
}

impl HrirSet {
    pub fn analytic(config: HeadModelConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        Ok(HrirSet::Analytic { config, sample_rate })
    }

    pub fn measured(entries: Vec<(Direction, HrirPair)>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::Empty("HRIR set"));
        };
        let sample_rate = first.1.sample_rate;
        for (i, (d, pair)) in entries.iter().enumerate() {
            if pair.sample_rate != sample_rate {
                return Err(Error::SampleRateMismatch(sample_rate, pair.sample_rate));
            }
            if entries[..i].iter().any(|(o, _)| o.coincides(d)) {
                return Err(Error::DuplicateDirection {
                    azimuth_deg: d.azimuth().to_degrees(),
                    elevation_deg: d.elevation().to_degrees(),
                });
            }
        }
        Ok(HrirSet::Measured { entries, sample_rate })
    }

    pub fn sample_rate(&self) -> u32 {
        match self {
            HrirSet::Analytic { sample_rate, .. } | HrirSet::Measured { sample_rate, .. } => *sample_rate,
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            HrirSet::Analytic { .. } => None,
            HrirSet::Measured { entries, .. } => Some(entries.len()),
        }
    }

    /// Response for a direction: exact synthesis for the analytic model, the
    /// great-circle nearest entry for measured sets (ties go to the smaller
    /// `(azimuth, elevation)`).
    pub fn lookup(&self, direction: Direction) -> Result<HrirPair> {
        match self {
            HrirSet::Analytic { config, sample_rate } => analytic_hrir(direction, *sample_rate, config),
            HrirSet::Measured { entries, .. } => {
                let best = entries
                    .iter()
                    .min_by(|a, b| {
                        a.0.angle_to(&direction)
                            .total_cmp(&b.0.angle_to(&direction))
                            .then(a.0.azimuth().total_cmp(&b.0.azimuth()))
                            .then(a.0.elevation().total_cmp(&b.0.elevation()))
                    })
                    .expect("measured sets are non-empty");
                Ok(best.1.clone())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    azimuth_deg: f64,
    elevation_deg: f64,
    file: String,
}

/// Loads a measured set from a JSON array of
/// `{"azimuth_deg", "elevation_deg", "file"}` objects. Files are resolved
/// relative to the manifest and must be 2-channel (left, right).
pub fn load_hrir_manifest(path: impl AsRef<Path>) -> Result<HrirSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let file = base.join(&item.file);
        let pair = match read_wav(&file)? {
            WavContents::Stereo(b) => {
                let rate = b.sample_rate();
                let (l, r) = b.into_channels();
                HrirPair::new(l.into_samples(), r.into_samples(), rate)?
            }
            WavContents::Mono(_) => {
                return Err(Error::InvalidArgument(format!(
                    "{}: HRIR files must have 2 channels",
                    file.display()
                )))
            }
        };
        entries.push((Direction::from_degrees(item.azimuth_deg, item.elevation_deg), pair));
    }
    HrirSet::measured(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_wav, AudioBuffer, BinauralBuffer, WavEncoding};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn peak(ir: &[f64]) -> (usize, f64) {
        ir.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .next()
            .unwrap()
    }

    #[test]
    fn front_is_symmetric() {
        let p = analytic_hrir(Direction::front(), 16_000, &HeadModelConfig::default()).unwrap();
        assert_eq!(p.left, p.right);
        assert_eq!(peak(&p.left).0, 0);
    }

    #[test]
    fn hard_left_delay_and_gain() {
        let cfg = HeadModelConfig::default();
        // (0.0875 / 343)(π/2 + 1) s = 0.6558 ms = 10.49 samples at 16 kHz
        let tau = 0.0875 / 343.0 * (FRAC_PI_2 + 1.0);
        assert!((tau * 1e3 - 0.6558).abs() < 1e-4);
        let p = analytic_hrir(Direction::new(FRAC_PI_2, 0.0), 16_000, &cfg).unwrap();
        let (li, lg) = peak(&p.left);
        let (ri, rg) = peak(&p.right);
        assert_eq!((li, ri), (0, 10));
        assert!((lg - 1.0).abs() < 1e-12);
        assert!((rg - 10f64.powf(-6.0 / 20.0)).abs() < 1e-12);
        assert!((rg / lg - 0.5012).abs() < 1e-4);
    }

    #[test]
    fn mirror_symmetry_and_monotonic_itd() {
        let cfg = HeadModelConfig::default();
        let mut last = 0;
        for i in 0..=90 {
            let az = (i as f64).to_radians();
            let a = analytic_hrir(Direction::new(az, 0.0), 16_000, &cfg).unwrap();
            let b = analytic_hrir(Direction::new(-az, 0.0), 16_000, &cfg).unwrap();
            assert_eq!(a.left, b.right);
            assert_eq!(a.right, b.left);
            let d = cfg.delay_samples(Direction::new(az, 0.0), 16_000);
            assert!(d >= last);
            last = d;
            for ir in [&a.left, &a.right] {
                assert!(ir.iter().map(|v| v * v).sum::<f64>() <= 1.0);
            }
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = HeadModelConfig {
            ir_length: 4,
            ..Default::default()
        };
        assert!(analytic_hrir(Direction::front(), 16_000, &cfg).is_err());
        let cfg = HeadModelConfig {
            head_radius: -1.0,
            ..Default::default()
        };
        assert!(HrirSet::analytic(cfg, 16_000).is_err());
    }

    #[test]
    fn analytic_lookup_is_exact_synthesis() {
        let cfg = HeadModelConfig::default();
        let set = HrirSet::analytic(cfg, 16_000).unwrap();
        let d = Direction::new(0.37, 0.1);
        assert_eq!(set.lookup(d).unwrap(), analytic_hrir(d, 16_000, &cfg).unwrap());
    }

    fn pair(v: f64) -> HrirPair {
        HrirPair::new(vec![v, 0.0], vec![0.0, v], 16_000).unwrap()
    }

    #[test]
    fn nearest_lookup() {
        let set = HrirSet::measured(vec![
            (Direction::from_degrees(90.0, 0.0), pair(1.0)),
            (Direction::from_degrees(-90.0, 0.0), pair(2.0)),
        ])
        .unwrap();
        // 10° vs 170° of great-circle distance
        assert_eq!(set.lookup(Direction::from_degrees(80.0, 0.0)).unwrap(), pair(1.0));
        assert_eq!(set.lookup(Direction::from_degrees(-90.0, 0.0)).unwrap(), pair(2.0));
        // equidistant: smaller azimuth wins
        assert_eq!(set.lookup(Direction::front()).unwrap(), pair(2.0));
        assert!(HrirSet::measured(vec![]).is_err());
        assert!(matches!(
            HrirSet::measured(vec![
                (Direction::new(PI, 0.0), pair(1.0)),
                (Direction::new(-PI, 0.0), pair(2.0)),
            ]),
            Err(Error::DuplicateDirection { .. })
        ));
    }

    fn write_pair(dir: &Path, name: &str, l: Vec<f64>, r: Vec<f64>) {
        let b = BinauralBuffer::from_samples(l, r, 16_000).unwrap();
        write_wav(dir.join(name), &WavContents::Stereo(b), WavEncoding::Float32).unwrap();
    }

    #[test]
    fn manifest_loading() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        write_pair(dir, "l.wav", vec![1.0, 0.5, 0.0], vec![0.0, 0.0, 0.25]);
        write_pair(dir, "r.wav", vec![0.0, 0.0, 0.25], vec![1.0, 0.5, 0.0]);
        let manifest = dir.join("hrir.json");
        std::fs::write(
            &manifest,
            r#"[{"azimuth_deg": 90, "elevation_deg": 0, "file": "l.wav"},
                {"azimuth_deg": -90, "elevation_deg": 0, "file": "r.wav"}]"#,
        )
        .unwrap();
        let set = load_hrir_manifest(&manifest).unwrap();
        assert_eq!(set.len(), Some(2));
        let p = set.lookup(Direction::from_degrees(90.0, 0.0)).unwrap();
        assert_eq!(p.left, vec![1.0, 0.5, 0.0]);
        assert_eq!(p.right, vec![0.0, 0.0, 0.25]);

        std::fs::write(
            &manifest,
            r#"[{"azimuth_deg": 90, "elevation_deg": 0, "file": "missing.wav"}]"#,
        )
        .unwrap();
        let err = load_hrir_manifest(&manifest).unwrap_err();
        assert!(err.to_string().contains("missing.wav"));

        let mono = AudioBuffer::new(vec![1.0], 16_000).unwrap();
        write_wav(dir.join("m.wav"), &WavContents::Mono(mono), WavEncoding::Float32).unwrap();
        std::fs::write(&manifest, r#"[{"azimuth_deg": 0, "elevation_deg": 0, "file": "m.wav"}]"#).unwrap();
        assert!(load_hrir_manifest(&manifest).is_err());

        std::fs::write(
            &manifest,
            r#"[{"azimuth_deg": 90, "elevation_deg": 0, "file": "l.wav"},
                {"azimuth_deg": 90, "elevation_deg": 0, "file": "r.wav"}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_hrir_manifest(&manifest),
            Err(Error::DuplicateDirection { .. })
        ));
    }
}
