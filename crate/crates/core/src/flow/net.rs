//! Perceptron velocity fields.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::condition::timestep_embedding;
use crate::error::{Error, Result};

/// A velocity field `v(x, t, C)` on `dim`-dimensional states with
/// `cond_dim`-dimensional conditions.
pub trait VelocityField {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>>;
}

/// Fully connected layer, `weights` row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    /// Weights drawn from `N(0, 1/inputs)`, zero biases.
    pub fn seeded(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / inputs.max(1) as f64).sqrt()).expect("positive std");
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            biases: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Input and layer sizes of a [`VelocityFieldNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub dim: usize,
    pub embed_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
}

impl NetShape {
    pub fn input_dim(&self) -> usize {
        self.dim + self.embed_dim + self.cond_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("state dimension and hidden width must be positive".into()));
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!("embedding dimension must be even, got {}", self.embed_dim)));
        }
        Ok(())
    }
}

/// Activations of one forward pass, kept for the backward pass.
pub(crate) struct Trace {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

/// Two tanh hidden layers on `x ⊕ e(t) ⊕ C`, linear output of size `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldNet {
    shape: NetShape,
    layers: [Dense; 3],
}

impl VelocityFieldNet {
    pub fn seeded(shape: NetShape, rng: &mut impl Rng) -> Result<Self> {
        shape.validate()?;
        let layers = [
            Dense::seeded(shape.input_dim(), shape.hidden, rng),
            Dense::seeded(shape.hidden, shape.hidden, rng),
            Dense::seeded(shape.hidden, shape.dim, rng),
        ];
        Ok(Self { shape, layers })
    }

    /// Builds a net from explicit layers, checking their sizes.
    pub fn from_layers(shape: NetShape, layers: [Dense; 3]) -> Result<Self> {
        shape.validate()?;
        let expected = [
            (shape.input_dim(), shape.hidden),
            (shape.hidden, shape.hidden),
            (shape.hidden, shape.dim),
        ];
        for (l, (i, o)) in layers.iter().zip(expected) {
            if l.inputs != i || l.outputs != o || l.weights.len() != i * o || l.biases.len() != o {
                return Err(Error::Shape(format!(
                    "layer {}x{} does not fit the {}x{} slot",
                    l.outputs, l.inputs, o, i
                )));
            }
        }
        Ok(Self { shape, layers })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn layers(&self) -> &[Dense; 3] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flat parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch(params.len(), self.param_count()));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub(crate) fn input(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.shape.dim {
            return Err(Error::LengthMismatch(x.len(), self.shape.dim));
        }
        if cond.len() != self.shape.cond_dim {
            return Err(Error::LengthMismatch(cond.len(), self.shape.cond_dim));
        }
        let mut input = Vec::with_capacity(self.shape.input_dim());
        input.extend_from_slice(x);
        input.extend(timestep_embedding(t, self.shape.embed_dim)?);
        input.extend_from_slice(cond);
        Ok(input)
    }

    pub(crate) fn trace(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Trace> {
        let input = self.input(x, t, cond)?;
        let h1: Vec<f64> = self.layers[0].forward(&input).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = self.layers[1].forward(&h1).into_iter().map(f64::tanh).collect();
        let out = self.layers[2].forward(&h2);
        Ok(Trace { input, h1, h2, out })
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂out` for one traced input.
    pub(crate) fn accumulate_grad(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let [l0, l1, l2] = &self.layers;
        let (g0, rest) = grad.split_at_mut(l0.param_count());
        let (g1, g2) = rest.split_at_mut(l1.param_count());

        let d_h2 = backprop_dense(l2, &trace.h2, d_out, g2);
        let d_z2: Vec<f64> = d_h2.iter().zip(&trace.h2).map(|(d, h)| d * (1.0 - h * h)).collect();
        let d_h1 = backprop_dense(l1, &trace.h1, &d_z2, g1);
        let d_z1: Vec<f64> = d_h1.iter().zip(&trace.h1).map(|(d, h)| d * (1.0 - h * h)).collect();
        backprop_dense(l0, &trace.input, &d_z1, g0);
    }
}

/// Adds the weight and bias gradients of `y = Wx + b` into `grad` and
/// returns `∂L/∂x`.
fn backprop_dense(layer: &Dense, x: &[f64], d_y: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let (gw, gb) = grad.split_at_mut(layer.weights.len());
    let mut d_x = vec![0.0; layer.inputs];
    for (o, &dy) in d_y.iter().enumerate() {
        gb[o] += dy;
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
        for i in 0..layer.inputs {
            grow[i] += dy * x[i];
            d_x[i] += dy * row[i];
        }
    }
    d_x
}

impl VelocityField for VelocityFieldNet {
    fn dim(&self) -> usize {
        self.shape.dim
    }

    fn cond_dim(&self) -> usize {
        self.shape.cond_dim
    }

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x, t, cond)?.out)
    }
}

/// One channel's view of a binaural model. Shared nets receive a trailing
/// channel flag in their condition.
#[derive(Debug, Clone, Copy)]
pub struct ChannelField<'a> {
    pub net: &'a VelocityFieldNet,
    pub flag: Option<f64>,
}

impl ChannelField<'_> {
    pub(crate) fn full_cond(&self, cond: &[f64]) -> Vec<f64> {
        let mut c = cond.to_vec();
        c.extend(self.flag);
        c
    }
}

impl VelocityField for ChannelField<'_> {
    fn dim(&self) -> usize {
        self.net.dim()
    }

    fn cond_dim(&self) -> usize {
        self.net.cond_dim() - usize::from(self.flag.is_some())
    }

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        self.net.velocity(x, t, &self.full_cond(cond))
    }
}

/// Whether the two channels use separate nets or one net with a flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightSharing {
    #[default]
    Separate,
    Shared,
}

pub const LEFT_FLAG: f64 = 0.0;
pub const RIGHT_FLAG: f64 = 1.0;

/// Left and right velocity fields.
#[derive(Debug, Clone, PartialEq)]
pub enum BinauralModel {
    Separate {
        left: VelocityFieldNet,
        right: VelocityFieldNet,
    },
    /// One net whose condition ends with [`LEFT_FLAG`] or [`RIGHT_FLAG`].
    Shared(VelocityFieldNet),
}

impl BinauralModel {
    /// `shape.cond_dim` is the condition size seen by callers; shared nets
    /// get one extra input for the channel flag.
    pub fn seeded(shape: NetShape, sharing: WeightSharing, rng: &mut impl Rng) -> Result<Self> {
        Ok(match sharing {
            WeightSharing::Separate => BinauralModel::Separate {
                left: VelocityFieldNet::seeded(shape, rng)?,
                right: VelocityFieldNet::seeded(shape, rng)?,
            },
            WeightSharing::Shared => BinauralModel::Shared(VelocityFieldNet::seeded(
                NetShape {
                    cond_dim: shape.cond_dim + 1,
                    ..shape
                },
                rng,
            )?),
        })
    }

    pub fn sharing(&self) -> WeightSharing {
        match self {
            BinauralModel::Separate { .. } => WeightSharing::Separate,
            BinauralModel::Shared(_) => WeightSharing::Shared,
        }
    }

    pub fn left(&self) -> ChannelField<'_> {
        match self {
            BinauralModel::Separate { left, .. } => ChannelField { net: left, flag: None },
            BinauralModel::Shared(net) => ChannelField {
                net,
                flag: Some(LEFT_FLAG),
            },
        }
    }

    pub fn right(&self) -> ChannelField<'_> {
        match self {
            BinauralModel::Separate { right, .. } => ChannelField { net: right, flag: None },
            BinauralModel::Shared(net) => ChannelField {
                net,
                flag: Some(RIGHT_FLAG),
            },
        }
    }

    pub fn nets(&self) -> Vec<&VelocityFieldNet> {
        match self {
            BinauralModel::Separate { left, right } => vec![left, right],
            BinauralModel::Shared(net) => vec![net],
        }
    }

    pub fn dim(&self) -> usize {
        self.left().dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.left().cond_dim()
    }

    pub fn params(&self) -> Vec<f64> {
        self.nets().iter().flat_map(|n| n.params()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let total: usize = self.nets().iter().map(|n| n.param_count()).sum();
        if params.len() != total {
            return Err(Error::LengthMismatch(params.len(), total));
        }
        match self {
            BinauralModel::Separate { left, right } => {
                let (a, b) = params.split_at(left.param_count());
                left.set_params(a)?;
                right.set_params(b)
            }
            BinauralModel::Shared(net) => net.set_params(params),
        }
    }
}
