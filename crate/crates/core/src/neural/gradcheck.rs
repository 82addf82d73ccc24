//! Central-difference validation of the hand-written gradients.

use super::params::NetworkParams;

/// Relative error between analytic and numeric derivatives with a floor so
/// near-zero pairs compare absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-10 {
                0.0
            } else {
                (a - n).abs() / scale.max(1e-6)
            }
        })
        .fold(0.0, f64::max)
}

/// Compare analytic gradients against central differences of `loss` over
/// every parameter; returns the max relative error.
///
/// `loss` must be a pure function of the parameters.
pub fn gradient_check<F>(
    params: &NetworkParams,
    analytic: &[f64],
    eps: f64,
    mut loss: F,
) -> f64
where
    F: FnMut(&NetworkParams) -> f64,
{
    let mut work = params.clone();
    let mut numeric = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + eps;
        let plus = loss(&work);
        work.data_mut()[i] = orig - eps;
        let minus = loss(&work);
        work.data_mut()[i] = orig;
        numeric[i] = (plus - minus) / (2.0 * eps);
    }
    max_relative_error(analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::{ChannelAttention, Conv2d, Dense, GlobalAvgPool, SpatialAttention};
    use crate::neural::net::{ActorArch, CriticArch, NetSpec};
    use crate::neural::params::{Init, ParamBuilder};
    use crate::neural::tensor::Tensor;
    use crate::seeding::rng_from_seed;
    use rand::Rng;

    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dense_layer_passes() {
        let mut rng = rng_from_seed(1);
        let mut b = ParamBuilder::new(&mut rng);
        let layer = Dense::new("d", 6, 4, Init::HeNormal { fan_in: 6 }, &mut b);
        let params = b.finish();
        let x = rand_vec(6, 2);
        let weights = rand_vec(4, 3);

        let (y, cache) = layer.forward(&params, &x).unwrap();
        let _ = y;
        let mut grads = vec![0.0; params.len()];
        layer.backward(&params, &cache, &weights, &mut grads);
        let err = gradient_check(&params, &grads, EPS, |p| {
            let (y, _) = layer.forward(p, &x).unwrap();
            y.iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
        });
        assert!(err < TOL, "dense gradcheck err {err}");
    }

    #[test]
    fn conv_layer_passes() {
        let mut rng = rng_from_seed(4);
        let mut b = ParamBuilder::new(&mut rng);
        let conv = Conv2d::new("c", 2, 3, 3, 2, 1, &mut b);
        let params = b.finish();
        let input = Tensor::from_vec(&[2, 6, 6], rand_vec(72, 5));
        let (out, cache) = conv.forward(&params, &input).unwrap();
        let weights = rand_vec(out.numel(), 6);
        let mut grads = vec![0.0; params.len()];
        let upstream = Tensor::from_vec(out.shape(), weights.clone());
        conv.backward(&params, &cache, &upstream, &mut grads);
        let err = gradient_check(&params, &grads, EPS, |p| {
            let (y, _) = conv.forward(p, &input).unwrap();
            y.data().iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
        });
        assert!(err < TOL, "conv gradcheck err {err}");
    }

    #[test]
    fn attention_blocks_pass() {
        let mut rng = rng_from_seed(7);
        let mut b = ParamBuilder::new(&mut rng);
        let ca = ChannelAttention::new("ca", 4, 2, &mut b);
        let sa = SpatialAttention::new("sa", 3, &mut b);
        let params = b.finish();
        let input = Tensor::from_vec(&[4, 4, 4], rand_vec(64, 8));
        let weights = rand_vec(64, 9);

        let (y, c1) = ca.forward(&params, &input).unwrap();
        let (_, c2) = sa.forward(&params, &y).unwrap();
        let upstream = Tensor::from_vec(&[4, 4, 4], weights.clone());
        let mut grads = vec![0.0; params.len()];
        let g = sa.backward(&params, &c2, &upstream, &mut grads);
        ca.backward(&params, &c1, &g, &mut grads);
        let err = gradient_check(&params, &grads, EPS, |p| {
            let (y, _) = ca.forward(p, &input).unwrap();
            let (z, _) = sa.forward(p, &y).unwrap();
            z.data().iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
        });
        assert!(err < TOL, "attention gradcheck err {err}");
    }

    #[test]
    fn pooling_passes() {
        // Pooling has no parameters; check the input gradient instead.
        let pool = GlobalAvgPool;
        let input = Tensor::from_vec(&[3, 4, 4], rand_vec(48, 10));
        let weights = rand_vec(3, 11);
        let (_, cache) = pool.forward(&input);
        let gin = pool.backward(&cache, &weights);
        let mut numeric = vec![0.0; input.numel()];
        for i in 0..input.numel() {
            let mut plus = input.clone();
            plus.data_mut()[i] += EPS;
            let mut minus = input.clone();
            minus.data_mut()[i] -= EPS;
            let f = |t: &Tensor| {
                let (y, _) = pool.forward(t);
                y.iter().zip(weights.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            numeric[i] = (f(&plus) - f(&minus)) / (2.0 * EPS);
        }
        let err = max_relative_error(gin.data(), &numeric);
        assert!(err < TOL, "pool gradcheck err {err}");
    }

    #[test]
    fn tiny_actor_and_critic_pass() {
        // A scaled-down spec keeps this unit test quick; the full desk nets
        // are checked in the acceptance suite.
        let spec = NetSpec {
            branch: vec![crate::neural::net::ConvSpec {
                in_ch: 1,
                out_ch: 3,
                kernel: 3,
                stride: 2,
                pad: 1,
            }],
            fusion: vec![crate::neural::net::ConvSpec {
                in_ch: 6,
                out_ch: 6,
                kernel: 3,
                stride: 2,
                pad: 1,
            }],
            attn_reduction: 2,
            spatial_kernel: 3,
            shared_widths: vec![8],
            head_widths: vec![4],
        };
        let mut rng = rng_from_seed(12);
        let (actor, params) = ActorArch::build(&spec, (8, 8), &mut rng).unwrap();
        let s1 = rand_vec(64, 13);
        let s2 = rand_vec(64, 14);
        let (_, tape) = actor.forward(&params, &s1, &s2).unwrap();
        let dout = [1.0, 0.7, -0.5];
        let mut grads = vec![0.0; params.len()];
        actor.backward(&params, &tape, dout, &mut grads);
        let err = gradient_check(&params, &grads, EPS, |p| {
            let (y, _) = actor.forward(p, &s1, &s2).unwrap();
            y[0] * dout[0] + y[1] * dout[1] + y[2] * dout[2]
        });
        assert!(err < TOL, "actor gradcheck err {err}");

        let (critic, cparams) = CriticArch::build(&spec, (8, 8), 3, &mut rng).unwrap();
        let action = [0.3, -0.6, 0.9];
        let (_, tape) = critic.forward(&cparams, &s1, &s2, &action).unwrap();
        let mut grads = vec![0.0; cparams.len()];
        let d_action = critic.backward(&cparams, &tape, 1.0, &mut grads);
        let err = gradient_check(&cparams, &grads, EPS, |p| {
            let (q, _) = critic.forward(p, &s1, &s2, &action).unwrap();
            q
        });
        assert!(err < TOL, "critic gradcheck err {err}");

        // Action-input gradient via finite differences.
        for i in 0..3 {
            let mut plus = action;
            plus[i] += EPS;
            let mut minus = action;
            minus[i] -= EPS;
            let (qp, _) = critic.forward(&cparams, &s1, &s2, &plus).unwrap();
            let (qm, _) = critic.forward(&cparams, &s1, &s2, &minus).unwrap();
            let numeric = (qp - qm) / (2.0 * EPS);
            let scale = d_action[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (d_action[i] - numeric).abs() / scale < TOL,
                "action grad {i}: {} vs {numeric}",
                d_action[i]
            );
        }
    }
}
