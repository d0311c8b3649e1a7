//! Conditional flow-matching objective on the linear path
//! `x_t = (1−t)·x₀ + t·x₁`, whose target velocity is `u = x₁ − x₀`.

use super::net::{VelocityField, VelocityFieldNet};
use crate::error::{Error, Result};

fn check_pair(x0: &[f64], x1: &[f64]) -> Result<()> {
    if x0.len() != x1.len() {
        return Err(Error::LengthMismatch(x0.len(), x1.len()));
    }
    Ok(())
}

pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    check_pair(x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
    }
    Ok(x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b).collect())
}

pub fn target_velocity(x0: &[f64], x1: &[f64]) -> Result<Vec<f64>> {
    check_pair(x0, x1)?;
    Ok(x0.iter().zip(x1).map(|(a, b)| b - a).collect())
}

/// One training example of a single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmSample {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    pub cond: Vec<f64>,
}

/// Left and right examples drawn with a common `t` and condition.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralSample {
    pub left: CfmSample,
    pub right: CfmSample,
}

fn squared_error(v: &[f64], u: &[f64]) -> f64 {
    v.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Mean over the batch of `‖v(x_t, t, C) − u‖²`.
pub fn cfm_loss(net: &dyn VelocityField, batch: &[CfmSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for s in batch {
        let xt = interpolate(&s.x0, &s.x1, s.t)?;
        let u = target_velocity(&s.x0, &s.x1)?;
        let v = net.velocity(&xt, s.t, &s.cond)?;
        if v.len() != u.len() {
            return Err(Error::LengthMismatch(v.len(), u.len()));
        }
        total += squared_error(&v, &u);
    }
    Ok(total / batch.len() as f64)
}

/// Splits a paired batch into its left and right halves.
pub fn split_channels(batch: &[BinauralSample]) -> Result<(Vec<CfmSample>, Vec<CfmSample>)> {
    for (i, s) in batch.iter().enumerate() {
        if s.left.t != s.right.t || s.left.cond != s.right.cond {
            return Err(Error::InvalidArgument(format!(
                "example {i}: left and right must share t and condition"
            )));
        }
    }
    Ok(batch.iter().map(|s| (s.left.clone(), s.right.clone())).unzip())
}

/// Sum of the left loss under `net_l` and the right loss under `net_r`.
pub fn binaural_cfm_loss(net_l: &dyn VelocityField, net_r: &dyn VelocityField, batch: &[BinauralSample]) -> Result<f64> {
    let (left, right) = split_channels(batch)?;
    Ok(cfm_loss(net_l, &left)? + cfm_loss(net_r, &right)?)
}

/// [`cfm_loss`] of `net` and its exact gradient with respect to the flat
/// parameter vector ([`VelocityFieldNet::params`] order).
pub fn backward(net: &VelocityFieldNet, batch: &[CfmSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut total = 0.0;
    for s in batch {
        let xt = interpolate(&s.x0, &s.x1, s.t)?;
        let u = target_velocity(&s.x0, &s.x1)?;
        let trace = net.trace(&xt, s.t, &s.cond)?;
        total += squared_error(&trace.out, &u);
        let d_out: Vec<f64> = trace.out.iter().zip(&u).map(|(v, u)| 2.0 * (v - u) * scale).collect();
        net.accumulate_grad(&trace, &d_out, &mut grad);
    }
    Ok((total / batch.len() as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::net::{BinauralModel, NetShape, WeightSharing};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Returns the conditional target for states on the path from a fixed `x0`.
    struct Oracle {
        x0: Vec<f64>,
        x1: Vec<f64>,
        offset: f64,
    }

    impl VelocityField for Oracle {
        fn dim(&self) -> usize {
            self.x0.len()
        }
        fn cond_dim(&self) -> usize {
            0
        }
        fn velocity(&self, _: &[f64], _: f64, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.x0.iter().zip(&self.x1).map(|(a, b)| b - a + self.offset).collect())
        }
    }

    fn sample(rng: &mut ChaCha8Rng, dim: usize, cond: usize) -> CfmSample {
        CfmSample {
            x0: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            x1: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            t: rng.gen(),
            cond: (0..cond).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn interpolation_examples() {
        let (x0, x1) = ([1.5, -2.0], [0.25, 7.0]);
        assert_eq!(interpolate(&x0, &x1, 0.0).unwrap(), x0);
        assert_eq!(interpolate(&x0, &x1, 1.0).unwrap(), x1);
        assert_eq!(interpolate(&[0.0], &[2.0], 0.5).unwrap(), vec![1.0]);
        assert!(interpolate(&[0.0], &[1.0, 2.0], 0.5).is_err());
        assert!(interpolate(&[0.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(target_velocity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(target_velocity(&[0.0, 0.0], &[2.0, -3.0]).unwrap(), vec![2.0, -3.0]);
        assert!(target_velocity(&[0.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn velocity_is_path_derivative(
            x0 in prop::collection::vec(-5.0f64..5.0, 3),
            x1 in prop::collection::vec(-5.0f64..5.0, 3),
            t in 0.01f64..0.99,
        ) {
            let h = 1e-3;
            let a = interpolate(&x0, &x1, t + h).unwrap();
            let b = interpolate(&x0, &x1, t - h).unwrap();
            let u = target_velocity(&x0, &x1).unwrap();
            for i in 0..3 {
                prop_assert!(((a[i] - b[i]) / (2.0 * h) - u[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rigged_losses() {
        let x0 = vec![0.5, -1.0, 2.0];
        let x1 = vec![3.0, 0.0, -1.0];
        let batch: Vec<CfmSample> = [0.0, 0.3, 0.9]
            .iter()
            .map(|&t| CfmSample {
                x0: x0.clone(),
                x1: x1.clone(),
                t,
                cond: vec![],
            })
            .collect();
        let perfect = Oracle {
            x0: x0.clone(),
            x1: x1.clone(),
            offset: 0.0,
        };
        assert_eq!(cfm_loss(&perfect, &batch).unwrap(), 0.0);
        let off = Oracle { offset: 0.25, ..perfect };
        assert!((cfm_loss(&off, &batch).unwrap() - 0.0625 * 3.0).abs() < 1e-15);
        assert!(matches!(cfm_loss(&off, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn loss_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = NetShape {
            dim: 3,
            embed_dim: 4,
            cond_dim: 2,
            hidden: 8,
        };
        let net = VelocityFieldNet::seeded(shape, &mut rng).unwrap();
        let batch: Vec<CfmSample> = (0..5).map(|_| sample(&mut rng, 3, 2)).collect();
        let mut direct = 0.0;
        for s in &batch {
            let xt: Vec<f64> = (0..3).map(|i| (1.0 - s.t) * s.x0[i] + s.t * s.x1[i]).collect();
            let v = net.velocity(&xt, s.t, &s.cond).unwrap();
            for i in 0..3 {
                let u = s.x1[i] - s.x0[i];
                direct += (v[i] - u) * (v[i] - u);
            }
        }
        direct /= 5.0;
        assert!((cfm_loss(&net, &batch).unwrap() - direct).abs() < 1e-12);
        assert_eq!(backward(&net, &batch).unwrap().0, cfm_loss(&net, &batch).unwrap());
    }

    #[test]
    fn binaural_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = NetShape {
            dim: 2,
            embed_dim: 4,
            cond_dim: 1,
            hidden: 8,
        };
        for sharing in [WeightSharing::Separate, WeightSharing::Shared] {
            let model = BinauralModel::seeded(shape, sharing, &mut rng).unwrap();
            let batch: Vec<BinauralSample> = (0..6)
                .map(|_| {
                    let left = sample(&mut rng, 2, 1);
                    let mut right = sample(&mut rng, 2, 1);
                    right.t = left.t;
                    right.cond = left.cond.clone();
                    BinauralSample { left, right }
                })
                .collect();
            let (l, r) = split_channels(&batch).unwrap();
            let total = binaural_cfm_loss(&model.left(), &model.right(), &batch).unwrap();
            let parts = cfm_loss(&model.left(), &l).unwrap() + cfm_loss(&model.right(), &r).unwrap();
            assert_eq!(total.to_bits(), parts.to_bits());

            let mut unpaired = batch.clone();
            unpaired[2].right.t += 0.1;
            assert!(binaural_cfm_loss(&model.left(), &model.right(), &unpaired).is_err());
        }

        // identical channels through one net: twice the mono loss
        let net = VelocityFieldNet::seeded(shape, &mut rng).unwrap();
        let mono: Vec<CfmSample> = (0..4).map(|_| sample(&mut rng, 2, 1)).collect();
        let paired: Vec<BinauralSample> = mono
            .iter()
            .map(|s| BinauralSample {
                left: s.clone(),
                right: s.clone(),
            })
            .collect();
        assert_eq!(
            binaural_cfm_loss(&net, &net, &paired).unwrap(),
            2.0 * cfm_loss(&net, &mono).unwrap()
        );
    }

    #[test]
    fn perfect_binaural_is_zero() {
        let s = CfmSample {
            x0: vec![1.0],
            x1: vec![2.0],
            t: 0.4,
            cond: vec![],
        };
        let rigged = Oracle {
            x0: vec![1.0],
            x1: vec![2.0],
            offset: 0.0,
        };
        let batch = [BinauralSample {
            left: s.clone(),
            right: s,
        }];
        assert_eq!(binaural_cfm_loss(&rigged, &rigged, &batch).unwrap(), 0.0);
    }

    fn finite_difference_check(net: &mut VelocityFieldNet, batch: &[CfmSample]) {
        let (_, grad) = backward(net, batch).unwrap();
        let params = net.params();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] = params[i] + h;
            net.set_params(&p).unwrap();
            let up = cfm_loss(net, batch).unwrap();
            p[i] = params[i] - h;
            net.set_params(&p).unwrap();
            let down = cfm_loss(net, batch).unwrap();
            let fd = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-6);
            assert!((grad[i] - fd).abs() / denom < 1e-4, "param {i}: {} vs {fd}", grad[i]);
        }
        net.set_params(&params).unwrap();
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shape = NetShape {
            dim: 2,
            embed_dim: 4,
            cond_dim: 3,
            hidden: 8,
        };
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = VelocityFieldNet::seeded(shape, &mut rng).unwrap();
            let mut p = net.params();
            for v in &mut p {
                *v += rng.gen_range(-0.5..0.5);
            }
            net.set_params(&p).unwrap();
            let batch: Vec<CfmSample> = (0..4).map(|_| sample(&mut rng, 2, 3)).collect();
            finite_difference_check(&mut net, &batch);
        }
    }

    #[test]
    fn zero_loss_gives_zero_output_gradient() {
        // With zero output weights and the bias equal to the common target,
        // every residual vanishes.
        let shape = NetShape {
            dim: 2,
            embed_dim: 2,
            cond_dim: 0,
            hidden: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = VelocityFieldNet::seeded(shape, &mut rng).unwrap();
        let n = net.param_count();
        let mut p = net.params();
        let out_start = n - (8 * 2 + 2);
        for v in &mut p[out_start..n - 2] {
            *v = 0.0;
        }
        p[n - 2] = 1.0;
        p[n - 1] = -2.0;
        net.set_params(&p).unwrap();
        let batch: Vec<CfmSample> = (0..3)
            .map(|k| CfmSample {
                x0: vec![k as f64, 0.5],
                x1: vec![k as f64 + 1.0, -1.5],
                t: 0.2 * k as f64,
                cond: vec![],
            })
            .collect();
        let (loss, grad) = backward(&net, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad[out_start..].iter().all(|g| *g == 0.0));
        let (_, again) = backward(&net, &batch).unwrap();
        assert_eq!(grad, again);
    }
}
