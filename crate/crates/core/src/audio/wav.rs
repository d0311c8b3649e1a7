use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, BinauralBuffer};
use crate::error::{Error, Result};

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

/// Decoded contents of a WAV file, keeping its channel count.
#[derive(Debug, Clone, PartialEq)]
pub enum WavContents {
    Mono(AudioBuffer),
    Stereo(BinauralBuffer),
}

impl WavContents {
    pub fn sample_rate(&self) -> u32 {
        match self {
            WavContents::Mono(b) => b.sample_rate(),
            WavContents::Stereo(b) => b.sample_rate(),
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            WavContents::Mono(b) => b.len(),
            WavContents::Stereo(b) => b.len(),
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate() as f64
    }

    /// Mono view: the signal itself, or the channel average for stereo.
    pub fn to_mono(&self) -> AudioBuffer {
        match self {
            WavContents::Mono(b) => b.clone(),
            WavContents::Stereo(b) => b.downmix(),
        }
    }
}

const PCM16_SCALE: f64 = 32768.0;

/// Reads a PCM-16 or IEEE float-32 WAV file with one or two channels.
/// PCM samples are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<WavContents> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    };
    let rate = spec.sample_rate;
    if spec.channels == 1 {
        return Ok(WavContents::Mono(AudioBuffer::new(interleaved, rate)?));
    }
    let (left, right): (Vec<f64>, Vec<f64>) = interleaved
        .chunks_exact(2)
        .map(|frame| (frame[0], frame[1]))
        .unzip();
    Ok(WavContents::Stereo(BinauralBuffer::from_samples(left, right, rate)?))
}

fn quantize_pcm16(x: f64) -> i16 {
    (x * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes a mono or stereo (interleaved left, right) WAV file.
pub fn write_wav(path: impl AsRef<Path>, contents: &WavContents, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    if contents.frames() == 0 {
        return Err(Error::Empty("cannot write an empty buffer"));
    }
    let channels: Vec<&[f64]> = match contents {
        WavContents::Mono(b) => vec![b.samples()],
        WavContents::Stereo(b) => vec![b.left().samples(), b.right().samples()],
    };
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: contents.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for i in 0..contents.frames() {
        for ch in &channels {
            match encoding {
                WavEncoding::Pcm16 => writer.write_sample(quantize_pcm16(ch[i])),
                WavEncoding::Float32 => writer.write_sample(ch[i] as f32),
            }
            .map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}
