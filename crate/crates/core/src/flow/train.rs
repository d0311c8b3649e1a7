//! Adam training of a binaural model and Euler sampling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::{BinauralModel, ChannelField, NetShape, VelocityField, WeightSharing};
use super::objective::{backward, BinauralSample, CfmSample};
use crate::error::{Error, Result};

/// A data point: target states for both channels and their condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedExample {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    #[serde(default)]
    pub cond: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub hidden_width: usize,
    pub embed_dim: usize,
    pub sharing: WeightSharing,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Training aborts once a batch loss exceeds this value.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            steps: 2000,
            seed: 0,
            hidden_width: 64,
            embed_dim: 8,
            sharing: WeightSharing::Separate,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            divergence_limit: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidArgument("batch size and hidden width must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    /// Network shape for `dim`-dimensional states and `cond_dim` conditions.
    pub fn shape(&self, dim: usize, cond_dim: usize) -> NetShape {
        NetShape {
            dim,
            embed_dim: self.embed_dim,
            cond_dim,
            hidden: self.hidden_width,
        }
    }

    /// Model initialized from this config's seed.
    pub fn init_model(&self, dim: usize, cond_dim: usize) -> Result<BinauralModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        BinauralModel::seeded(self.shape(dim, cond_dim), self.sharing, &mut rng)
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: usize) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn check_dataset(data: &[PairedExample], model: &BinauralModel) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.left.len() != model.dim() || ex.right.len() != model.dim() || ex.cond.len() != model.cond_dim() {
            return Err(Error::Shape(format!(
                "example {i} does not match the model (dim {}, condition {})",
                model.dim(),
                model.cond_dim()
            )));
        }
    }
    Ok(())
}

/// Draws a paired batch: uniform examples, `x₀ ~ N(0, I)` per channel,
/// `t ~ U[0, 1)` shared by both channels.
pub fn draw_batch(data: &[PairedExample], batch_size: usize, rng: &mut impl Rng) -> Vec<BinauralSample> {
    (0..batch_size)
        .map(|_| {
            let ex = &data[rng.gen_range(0..data.len())];
            let t: f64 = rng.gen();
            let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
            let x0_left = noise(ex.left.len());
            let x0_right = noise(ex.right.len());
            BinauralSample {
                left: CfmSample {
                    x0: x0_left,
                    x1: ex.left.clone(),
                    t,
                    cond: ex.cond.clone(),
                },
                right: CfmSample {
                    x0: x0_right,
                    x1: ex.right.clone(),
                    t,
                    cond: ex.cond.clone(),
                },
            }
        })
        .collect()
}

fn channel_batch(field: ChannelField<'_>, batch: impl Iterator<Item = CfmSample>) -> Vec<CfmSample> {
    batch
        .map(|mut s| {
            s.cond = field.full_cond(&s.cond);
            s
        })
        .collect()
}

/// Binaural loss and its gradient over the model's flat parameters.
pub fn binaural_backward(model: &BinauralModel, batch: &[BinauralSample]) -> Result<(f64, Vec<f64>)> {
    let (l, r) = (model.left(), model.right());
    let left = channel_batch(l, batch.iter().map(|s| s.left.clone()));
    let right = channel_batch(r, batch.iter().map(|s| s.right.clone()));
    let (loss_l, grad_l) = backward(l.net, &left)?;
    let (loss_r, grad_r) = backward(r.net, &right)?;
    let grad = match model {
        BinauralModel::Separate { .. } => grad_l.into_iter().chain(grad_r).collect(),
        BinauralModel::Shared(_) => grad_l.iter().zip(&grad_r).map(|(a, b)| a + b).collect(),
    };
    Ok((loss_l + loss_r, grad))
}

/// Per-step binaural losses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Writes `step,loss` rows, steps counted from 1.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "loss"])?;
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), l.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<loss trace>", e))?;
        Ok(())
    }
}

/// Trains `model` in place with Adam on the binaural objective. The run is
/// single-threaded and fully determined by `cfg.seed`.
pub fn train(model: &mut BinauralModel, data: &[PairedExample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_dataset(data, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut params = model.params();
    let mut adam = Adam::new(cfg, params.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = draw_batch(data, cfg.batch_size, &mut rng);
        let (loss, grad) = binaural_backward(model, &batch)?;
        if !loss.is_finite() || loss > cfg.divergence_limit {
            return Err(Error::Diverged { step: step + 1, loss });
        }
        losses.push(loss);
        adam.update(&mut params, &grad);
        model.set_params(&params)?;
    }
    Ok(TrainReport { losses })
}

/// Explicit Euler integration from `t = 0` to `t = 1`:
/// `x ← x + v(x, k/steps, C) / steps`.
pub fn sample_euler(field: &dyn VelocityField, x0: &[f64], cond: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("Euler sampling needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    for k in 0..steps {
        let v = field.velocity(&x, k as f64 * dt, cond)?;
        if v.len() != x.len() {
            return Err(Error::LengthMismatch(v.len(), x.len()));
        }
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k + 1));
        }
    }
    Ok(x)
}

/// Left and right samples from seeded standard-normal starting points.
pub fn sample_binaural(
    model: &BinauralModel,
    cond: &[f64],
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    (0..count)
        .map(|_| {
            let x0l: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let x0r: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            Ok((
                sample_euler(&model.left(), &x0l, cond, steps)?,
                sample_euler(&model.right(), &x0r, cond, steps)?,
            ))
        })
        .collect()
}

/// Binaural loss of `model` on a fresh seeded batch.
pub fn evaluate(model: &BinauralModel, data: &[PairedExample], batch_size: usize, seed: u64) -> Result<f64> {
    check_dataset(data, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = draw_batch(data, batch_size, &mut rng);
    super::objective::binaural_cfm_loss(&model.left(), &model.right(), &batch)
}

/// The one-dimensional task whose every target is `value` on both channels.
pub fn constant_task(value: f64) -> Vec<PairedExample> {
    vec![PairedExample {
        left: vec![value],
        right: vec![value],
        cond: vec![],
    }]
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(Vec<f64>);

    impl VelocityField for Constant {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn cond_dim(&self) -> usize {
            0
        }
        fn velocity(&self, _: &[f64], _: f64, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn small() -> TrainConfig {
        TrainConfig {
            steps: 50,
            batch_size: 16,
            hidden_width: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn euler_on_constant_fields() {
        let x0 = [0.5, -1.25];
        for steps in [1, 2, 4, 8, 64] {
            assert_eq!(sample_euler(&Constant(vec![2.0, -0.5]), &x0, &[], steps).unwrap(), vec![2.5, -1.75]);
        }
        for steps in [3, 7, 10, 32, 100] {
            let x = sample_euler(&Constant(vec![0.3, 1.7]), &x0, &[], steps).unwrap();
            assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 0.45).abs() < 1e-12);
        }
        assert_eq!(sample_euler(&Constant(vec![0.0, 0.0]), &x0, &[], 13).unwrap(), x0);
        assert!(sample_euler(&Constant(vec![0.0, 0.0]), &x0, &[], 0).is_err());
        assert!(matches!(
            sample_euler(&Constant(vec![f64::INFINITY, 0.0]), &x0, &[], 4),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small();
        let data = constant_task(3.0);
        let mut a = cfg.init_model(1, 0).unwrap();
        let mut b = cfg.init_model(1, 0).unwrap();
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small()
        };
        for sharing in [WeightSharing::Separate, WeightSharing::Shared] {
            let cfg = TrainConfig { sharing, ..cfg };
            let mut m = cfg.init_model(1, 0).unwrap();
            let before = m.clone();
            train(&mut m, &constant_task(3.0), &cfg).unwrap();
            assert_eq!(m, before);
        }
    }

    #[test]
    fn loss_decreases_on_constant_task() {
        let cfg = TrainConfig {
            steps: 300,
            ..small()
        };
        let mut m = cfg.init_model(1, 0).unwrap();
        let data = constant_task(3.0);
        let before = evaluate(&m, &data, 512, 9).unwrap();
        train(&mut m, &data, &cfg).unwrap();
        let after = evaluate(&m, &data, 512, 9).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn divergence_guard() {
        let cfg = TrainConfig {
            divergence_limit: 1e-6,
            ..small()
        };
        let mut m = cfg.init_model(1, 0).unwrap();
        assert!(matches!(
            train(&mut m, &constant_task(3.0), &cfg),
            Err(Error::Diverged { step: 1, .. })
        ));
    }

    #[test]
    fn dataset_shape_is_checked() {
        let cfg = small();
        let mut m = cfg.init_model(2, 0).unwrap();
        assert!(matches!(train(&mut m, &constant_task(3.0), &cfg), Err(Error::Shape(_))));
        assert!(train(&mut m, &[], &cfg).is_err());
    }

    #[test]
    fn loss_trace_csv() {
        let report = TrainReport { losses: vec![1.5, 0.25] };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,loss\n1,1.5\n2,0.25\n");
    }
}
