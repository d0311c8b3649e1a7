use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Analysis window applied to each STFT frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Complex STFT frames, `frames[t][f]` for `f < frame_size / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub frame_size: usize,
    pub hop: usize,
    pub window: Window,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }
}

/// Reference O(N·K) convolution.
pub fn convolve_direct(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return vec![0.0; (signal.len() + kernel.len()).saturating_sub(1)];
    }
    let mut out = vec![0.0; signal.len() + kernel.len() - 1];
    for (i, s) in signal.iter().enumerate() {
        for (j, k) in kernel.iter().enumerate() {
            out[i + j] += s * k;
        }
    }
    out
}

/// Linear convolution through a zero-padded FFT whose size is the next power
/// of two at or above `N + K - 1`.
pub fn fft_convolve_slices(signal: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    if kernel.is_empty() {
        return Err(Error::Empty("convolution kernel"));
    }
    let out_len = signal.len() + kernel.len() - 1;
    if signal.is_empty() {
        return Ok(vec![0.0; out_len]);
    }
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let pad = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); size];
        for (dst, &s) in v.iter_mut().zip(x) {
            dst.re = s;
        }
        v
    };
    let mut a = pad(signal);
    let mut b = pad(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let norm = 1.0 / size as f64;
    Ok(a[..out_len].iter().map(|c| c.re * norm).collect())
}

/// Convolves a buffer with a kernel; the output has `N + K - 1` samples.
pub fn fft_convolve(signal: &AudioBuffer, kernel: &[f64]) -> Result<AudioBuffer> {
    let out = fft_convolve_slices(signal.samples(), kernel)?;
    AudioBuffer::new(out, signal.sample_rate())
}

/// Short-time Fourier transform. Frame `t`, bin `f` holds
/// `Σ_n w(n)·x(t·hop + n)·exp(-i2πfn/frame_size)`; tail samples that do not
/// fill a frame are dropped.
pub fn stft(signal: &[f64], frame_size: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    if frame_size == 0 || hop == 0 {
        return Err(Error::InvalidArgument("frame size and hop must be positive".into()));
    }
    if signal.len() < frame_size {
        return Err(Error::TooShort {
            needed: frame_size,
            got: signal.len(),
        });
    }
    let num_frames = 1 + (signal.len() - frame_size) / hop;
    let bins = frame_size / 2 + 1;
    let w = window.coefficients(frame_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_size];
    let mut frames = Vec::with_capacity(num_frames);
    for t in 0..num_frames {
        let start = t * hop;
        for (n, c) in buf.iter_mut().enumerate() {
            *c = Complex64::new(w[n] * signal[start + n], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..bins].to_vec());
    }
    Ok(Spectrogram {
        frames,
        frame_size,
        hop,
        window,
    })
}

/// Root-mean-square of each full frame. Short tail frames are dropped.
pub fn frame_rms(signal: &[f64], frame_size: usize, hop: usize) -> Result<Vec<f64>> {
    if frame_size == 0 || hop == 0 {
        return Err(Error::InvalidArgument("frame size and hop must be positive".into()));
    }
    if signal.len() < frame_size {
        return Ok(Vec::new());
    }
    let count = 1 + (signal.len() - frame_size) / hop;
    Ok((0..count)
        .map(|k| {
            let frame = &signal[k * hop..k * hop + frame_size];
            (frame.iter().map(|s| s * s).sum::<f64>() / frame_size as f64).sqrt()
        })
        .collect())
}
