//! Conditioning vectors for the velocity field.
//!
//! * `C_g = f_text ⊕ f_vis ⊕ e(t)`, shared by every frame;
//! * `C_f = f_sync[k] ⊕ C_g`, per latent frame;
//! * `C_s = LayerNorm(ConvMLP(UpSample(S_sound)))`, per latent frame.
//!
//! The network appends its own `e(t)`, so the per-frame vector it receives
//! ([`ConditioningBundle::frame_inputs`]) holds the time-independent parts
//! `f_sync ⊕ f_text ⊕ f_vis ⊕ C_s`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::Dense;
use crate::error::{Error, Result};
use crate::heatmap::{SpatialFeatureSequence, SpatialFeatureVector};

/// Latent frame rate of the audio codec the toy model stands in for.
pub const DEFAULT_LATENT_FPS: f64 = 31.25;
/// Latent channel count per frame.
pub const DEFAULT_LATENT_DIM: usize = 20;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Fourier features `(sin 2π2ᵏt, cos 2π2ᵏt)` for `k = 0..dim/2`.
pub fn timestep_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!("embedding dimension must be even, got {dim}")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let phase = 2.0 * std::f64::consts::PI * (1u64 << k) as f64 * t;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    Ok(out)
}

/// `T × d` latent frames of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    frames: Vec<Vec<f64>>,
    frame_rate: f64,
}

impl LatentSequence {
    pub fn new(frames: Vec<Vec<f64>>, frame_rate: f64) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Empty("latent sequence"));
        };
        let d = first.len();
        if d == 0 || frames.iter().any(|f| f.len() != d) {
            return Err(Error::Shape("latent frames must share a positive dimension".into()));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("latent values must be finite".into()));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid frame rate {frame_rate}")));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
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

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }
}

/// Text, visual, and synchronization features with their declared sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub text_dim: usize,
    pub vis_dim: usize,
    pub sync_dim: usize,
    pub embed_dim: usize,
    pub f_text: Vec<f64>,
    pub f_vis: Vec<f64>,
    pub f_sync: Vec<Vec<f64>>,
    pub s_sound: Option<SpatialFeatureSequence>,
}

impl ConditioningBundle {
    fn check(&self) -> Result<()> {
        if self.f_text.len() != self.text_dim {
            return Err(Error::Shape(format!("f_text has {} values, declared {}", self.f_text.len(), self.text_dim)));
        }
        if self.f_vis.len() != self.vis_dim {
            return Err(Error::Shape(format!("f_vis has {} values, declared {}", self.f_vis.len(), self.vis_dim)));
        }
        if let Some(bad) = self.f_sync.iter().find(|f| f.len() != self.sync_dim) {
            return Err(Error::Shape(format!("f_sync frame has {} values, declared {}", bad.len(), self.sync_dim)));
        }
        Ok(())
    }

    /// `C_g = f_text ⊕ f_vis ⊕ e(t)`.
    pub fn assemble_global_cond(&self, t: f64) -> Result<Vec<f64>> {
        self.check()?;
        let mut out = Vec::with_capacity(self.text_dim + self.vis_dim + self.embed_dim);
        out.extend_from_slice(&self.f_text);
        out.extend_from_slice(&self.f_vis);
        out.extend(timestep_embedding(t, self.embed_dim)?);
        Ok(out)
    }

    /// `C_f[k] = f_sync[k] ⊕ C_g` for each of `frames` latent frames.
    pub fn assemble_frame_cond(&self, t: f64, frames: usize) -> Result<Vec<Vec<f64>>> {
        self.check_frames(frames)?;
        let global = self.assemble_global_cond(t)?;
        Ok(self
            .f_sync
            .iter()
            .map(|s| s.iter().chain(&global).copied().collect())
            .collect())
    }

    fn check_frames(&self, frames: usize) -> Result<()> {
        if self.f_sync.len() != frames {
            return Err(Error::LengthMismatch(self.f_sync.len(), frames));
        }
        Ok(())
    }

    /// Time-independent per-frame network condition
    /// `f_sync[k] ⊕ f_text ⊕ f_vis ⊕ C_s[k]`. `C_s` is empty when the
    /// bundle carries no spatial features.
    pub fn frame_inputs(&self, frames: usize, proj: &SpatialProjection) -> Result<Vec<Vec<f64>>> {
        self.check()?;
        self.check_frames(frames)?;
        let cs = self
            .s_sound
            .as_ref()
            .map(|s| spatial_condition_frames(s, frames, proj))
            .transpose()?;
        Ok((0..frames)
            .map(|k| {
                let mut v = self.f_sync[k].clone();
                v.extend_from_slice(&self.f_text);
                v.extend_from_slice(&self.f_vis);
                if let Some(cs) = &cs {
                    v.extend_from_slice(&cs[k]);
                }
                v
            })
            .collect())
    }
}

/// Number of frames after resampling `frames` from `source_rate` to
/// `target_rate`.
pub fn upsampled_len(frames: usize, source_rate: f64, target_rate: f64) -> usize {
    ((frames as f64 * target_rate / source_rate).round() as usize).max(1)
}

/// Endpoint-anchored linear interpolation: output frame `j` of `out_len`
/// samples the input at position `j·(T−1)/(out_len−1)`.
pub fn upsample(frames: &[Vec<f64>], out_len: usize) -> Result<Vec<Vec<f64>>> {
    let t = frames.len();
    if t == 0 {
        return Err(Error::Empty("feature sequence"));
    }
    if out_len == 0 {
        return Err(Error::InvalidArgument("output length must be positive".into()));
    }
    if t == 1 || out_len == 1 {
        return Ok(vec![frames[0].clone(); out_len]);
    }
    Ok((0..out_len)
        .map(|j| {
            let pos = j as f64 * (t - 1) as f64 / (out_len - 1) as f64;
            let i = (pos.floor() as usize).min(t - 2);
            let w = pos - i as f64;
            frames[i]
                .iter()
                .zip(&frames[i + 1])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect()
        })
        .collect())
}

/// Weights of the spatial-feature projection: a kernel-3 temporal
/// convolution over the five features, a two-layer tanh perceptron, and a
/// layer norm with scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialProjection {
    /// `conv[o][i][k]` for output feature `o`, input `i`, tap `k` (centre 1).
    pub conv: Vec<[[f64; 3]; SpatialFeatureVector::DIM]>,
    pub conv_bias: Vec<f64>,
    pub hidden: Dense,
    pub output: Dense,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SpatialProjection {
    pub const DEFAULT_HIDDEN: usize = 32;
    pub const DEFAULT_OUT: usize = 16;

    /// Gaussian-initialized weights, unit scale, zero shift.
    pub fn seeded(hidden: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument("projection sizes must be positive".into()));
        }
        let d = SpatialFeatureVector::DIM;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_layer = Dense::seeded(3 * d, d, &mut rng);
        let conv = (0..d)
            .map(|o| {
                let mut taps = [[0.0; 3]; SpatialFeatureVector::DIM];
                for (i, row) in taps.iter_mut().enumerate() {
                    for (k, w) in row.iter_mut().enumerate() {
                        *w = conv_layer.weights[o * 3 * d + i * 3 + k];
                    }
                }
                taps
            })
            .collect();
        Ok(Self {
            conv,
            conv_bias: vec![0.0; d],
            hidden: Dense::seeded(d, hidden, &mut rng),
            output: Dense::seeded(hidden, out_dim, &mut rng),
            gamma: vec![1.0; out_dim],
            beta: vec![0.0; out_dim],
        })
    }

    pub fn out_dim(&self) -> usize {
        self.gamma.len()
    }

    /// Same-length convolution; edge frames are replicated so a constant
    /// sequence stays constant.
    fn convolve(&self, x: &[[f64; 5]]) -> Vec<[f64; 5]> {
        let t = x.len();
        (0..t)
            .map(|n| {
                let taps = [n.saturating_sub(1), n, (n + 1).min(t - 1)];
                let mut out = [0.0; 5];
                for (o, v) in out.iter_mut().enumerate() {
                    *v = self.conv_bias[o];
                    for i in 0..5 {
                        for (k, &src) in taps.iter().enumerate() {
                            *v += self.conv[o][i][k] * x[src][i];
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// Per-frame standardization over features, then `γ·x̂ + β`.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| g * (v - mean) * inv + b)
        .collect()
}

fn spatial_condition_frames(s: &SpatialFeatureSequence, out_len: usize, proj: &SpatialProjection) -> Result<Vec<Vec<f64>>> {
    if s.is_empty() {
        return Err(Error::Empty("spatial feature sequence"));
    }
    let rows: Vec<Vec<f64>> = s.frames.iter().map(|f| f.to_array().to_vec()).collect();
    let up: Vec<[f64; 5]> = upsample(&rows, out_len)?
        .into_iter()
        .map(|r| [r[0], r[1], r[2], r[3], r[4]])
        .collect();
    Ok(proj
        .convolve(&up)
        .iter()
        .map(|c| {
            let h: Vec<f64> = proj.hidden.forward(c).into_iter().map(f64::tanh).collect();
            layer_norm(&proj.output.forward(&h), &proj.gamma, &proj.beta)
        })
        .collect())
}

/// `C_s` at `target_rate` frames per second.
pub fn spatial_condition(
    s_sound: &SpatialFeatureSequence,
    target_rate: f64,
    proj: &SpatialProjection,
) -> Result<Vec<Vec<f64>>> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid target rate {target_rate}")));
    }
    if s_sound.is_empty() {
        return Err(Error::Empty("spatial feature sequence"));
    }
    let out_len = upsampled_len(s_sound.len(), s_sound.frame_rate, target_rate);
    spatial_condition_frames(s_sound, out_len, proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle() -> ConditioningBundle {
        ConditioningBundle {
            text_dim: 2,
            vis_dim: 2,
            sync_dim: 1,
            embed_dim: 4,
            f_text: vec![1.0, 2.0],
            f_vis: vec![3.0, 4.0],
            f_sync: vec![vec![10.0], vec![20.0], vec![30.0]],
            s_sound: None,
        }
    }

    #[test]
    fn embedding_examples() {
        assert_eq!(timestep_embedding(0.0, 4).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let e = timestep_embedding(0.5, 2).unwrap();
        assert!(e[0].abs() < 1e-15 && (e[1] + 1.0).abs() < 1e-15);
        assert!(timestep_embedding(0.1, 3).is_err());
        assert!(timestep_embedding(0.1, 0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn embedding_bounded(t in 0.0f64..=1.0) {
            prop_assert!(timestep_embedding(t, 16).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn global_condition() {
        let zero = ConditioningBundle {
            f_text: vec![0.0; 2],
            f_vis: vec![0.0; 2],
            ..bundle()
        };
        assert_eq!(zero.assemble_global_cond(0.0).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);

        let g = bundle().assemble_global_cond(0.25).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(&g[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&g[4..], &timestep_embedding(0.25, 4).unwrap()[..]);

        let mut swapped = bundle();
        swapped.f_text.reverse();
        let h = swapped.assemble_global_cond(0.25).unwrap();
        assert_eq!(&h[..2], &[2.0, 1.0]);
        assert_eq!(&h[2..], &g[2..]);

        let bad = ConditioningBundle {
            f_text: vec![1.0],
            ..bundle()
        };
        assert!(matches!(bad.assemble_global_cond(0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn frame_condition() {
        let b = bundle();
        let f = b.assemble_frame_cond(0.25, 3).unwrap();
        let g = b.assemble_global_cond(0.25).unwrap();
        for (k, row) in f.iter().enumerate() {
            assert_eq!(row[0], 10.0 * (k + 1) as f64);
            assert_eq!(&row[1..], &g[..]);
        }
        let zero = ConditioningBundle {
            f_text: vec![0.0; 2],
            f_vis: vec![0.0; 2],
            f_sync: vec![vec![0.0]; 2],
            ..bundle()
        };
        let f = zero.assemble_frame_cond(0.0, 2).unwrap();
        assert_eq!(f[1], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(b.assemble_frame_cond(0.0, 4), Err(Error::LengthMismatch(3, 4))));
    }

    #[test]
    fn frame_inputs_concatenate_spatial_condition() {
        let proj = SpatialProjection::seeded(8, 4, 1).unwrap();
        let mut b = bundle();
        b.s_sound = Some(SpatialFeatureSequence::new(vec![SpatialFeatureVector::NEUTRAL; 2], 25.0).unwrap());
        let rows = b.frame_inputs(3, &proj).unwrap();
        assert!(rows.iter().all(|r| r.len() == 1 + 2 + 2 + 4));
        assert_eq!(&rows[2][..5], &[30.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn upsample_two_frames_to_four() {
        let (a, b) = (3.0, 9.0);
        let out = upsample(&[vec![a], vec![b]], 4).unwrap();
        let expected = [a, (2.0 * a + b) / 3.0, (a + 2.0 * b) / 3.0, b];
        for (o, e) in out.iter().zip(expected) {
            assert!((o[0] - e).abs() < 1e-12);
        }
        assert_eq!(out[0][0], a);
        assert_eq!(out[3][0], b);
        assert_eq!(upsampled_len(25, 25.0, 31.25), 31);
        assert!(upsample(&[], 3).is_err());
    }

    fn seq(frames: Vec<[f64; 5]>) -> SpatialFeatureSequence {
        SpatialFeatureSequence::new(frames.into_iter().map(SpatialFeatureVector::from_array).collect(), 25.0).unwrap()
    }

    #[test]
    fn layer_norm_standardizes() {
        let proj = SpatialProjection::seeded(32, 16, 7).unwrap();
        let s = seq((0..10).map(|k| [k as f64 / 10.0, 0.2, 3.0 + k as f64, -0.4, 1.5]).collect());
        let cs = spatial_condition(&s, DEFAULT_LATENT_FPS, &proj).unwrap();
        assert_eq!(cs.len(), 13);
        for row in &cs {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
    }

    #[test]
    fn constant_features_give_constant_condition() {
        let proj = SpatialProjection::seeded(32, 16, 3).unwrap();
        let s = seq(vec![[0.3, 0.01, 0.0, -1.0, 0.0]; 7]);
        let cs = spatial_condition(&s, DEFAULT_LATENT_FPS, &proj).unwrap();
        assert!(cs.iter().all(|r| r == &cs[0]));
        let empty = SpatialFeatureSequence::new(vec![], 25.0).unwrap();
        assert!(spatial_condition(&empty, DEFAULT_LATENT_FPS, &proj).is_err());
        assert!(spatial_condition(&s, 0.0, &proj).is_err());
    }

    #[test]
    fn latent_sequence_validation() {
        assert!(LatentSequence::new(vec![vec![0.0; 20]; 3], DEFAULT_LATENT_FPS).is_ok());
        assert!(LatentSequence::new(vec![vec![0.0; 2], vec![0.0; 3]], DEFAULT_LATENT_FPS).is_err());
        assert!(LatentSequence::new(vec![vec![f64::NAN]], DEFAULT_LATENT_FPS).is_err());
        assert!(LatentSequence::new(vec![], DEFAULT_LATENT_FPS).is_err());
    }
}
