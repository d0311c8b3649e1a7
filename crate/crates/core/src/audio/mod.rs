//! Sampled-signal containers plus the DSP primitives shared by the rest of
//! the crate: WAV I/O, FFT convolution, STFT and framewise RMS.

mod dsp;
mod wav;

pub use dsp::{convolve_direct, fft_convolve, fft_convolve_slices, frame_rms, stft, Spectrogram, Window};
pub use wav::{read_wav, write_wav, WavContents, WavEncoding};

use crate::error::{Error, Result};

/// Default sample rate used throughout the toolkit.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono signal with its sample rate. Samples are kept as `f64`; files are
/// the only quantization boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Two equally long channels sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralBuffer {
    left: AudioBuffer,
    right: AudioBuffer,
}

impl BinauralBuffer {
    pub fn new(left: AudioBuffer, right: AudioBuffer) -> Result<Self> {
        if left.sample_rate != right.sample_rate {
            return Err(Error::SampleRateMismatch(left.sample_rate, right.sample_rate));
        }
        if left.len() != right.len() {
            return Err(Error::LengthMismatch(left.len(), right.len()));
        }
        Ok(Self { left, right })
    }

    pub fn from_samples(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(
            AudioBuffer::new(left, sample_rate)?,
            AudioBuffer::new(right, sample_rate)?,
        )
    }

    /// Duplicates a mono signal into both channels.
    pub fn from_mono(mono: &AudioBuffer) -> Self {
        Self {
            left: mono.clone(),
            right: mono.clone(),
        }
    }

    pub fn left(&self) -> &AudioBuffer {
        &self.left
    }

    pub fn right(&self) -> &AudioBuffer {
        &self.right
    }

    pub fn sample_rate(&self) -> u32 {
        self.left.sample_rate
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }

    pub fn peak(&self) -> f64 {
        self.left.peak().max(self.right.peak())
    }

    /// Multiplies both channels by the same factor.
    pub fn scaled(&self, gain: f64) -> Self {
        let scale = |b: &AudioBuffer| AudioBuffer {
            samples: b.samples.iter().map(|s| s * gain).collect(),
            sample_rate: b.sample_rate,
        };
        Self {
            left: scale(&self.left),
            right: scale(&self.right),
        }
    }

    /// Average of the two channels.
    pub fn downmix(&self) -> AudioBuffer {
        AudioBuffer {
            samples: self
                .left
                .samples
                .iter()
                .zip(&self.right.samples)
                .map(|(l, r)| 0.5 * (l + r))
                .collect(),
            sample_rate: self.left.sample_rate,
        }
    }

    pub fn into_channels(self) -> (AudioBuffer, AudioBuffer) {
        (self.left, self.right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_rejected() {
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn binaural_requires_matching_channels() {
        let a = AudioBuffer::new(vec![0.0; 4], 16_000).unwrap();
        let b = AudioBuffer::new(vec![0.0; 5], 16_000).unwrap();
        let c = AudioBuffer::new(vec![0.0; 4], 8_000).unwrap();
        assert!(matches!(
            BinauralBuffer::new(a.clone(), b),
            Err(Error::LengthMismatch(4, 5))
        ));
        assert!(matches!(
            BinauralBuffer::new(a, c),
            Err(Error::SampleRateMismatch(16_000, 8_000))
        ));
    }

    #[test]
    fn swap_and_downmix() {
        let b = BinauralBuffer::from_samples(vec![1.0, 0.0], vec![0.0, 1.0], 16_000).unwrap();
        assert_eq!(b.swapped().left().samples(), &[0.0, 1.0]);
        assert_eq!(b.downmix().samples(), &[0.5, 0.5]);
    }
}
