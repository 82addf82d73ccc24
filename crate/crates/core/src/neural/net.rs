//! Actor and critic architectures.
//!
//! Both share a torso: two convolution branches (one per state matrix),
//! channel concatenation, fusion convolutions, channel + spatial attention,
//! and global average pooling. The actor continues through shared dense
//! layers into three tanh-squashed scalar heads; the critic concatenates the
//! pooled features with the action before its dense stack and linear head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    relu_backward, relu_forward, ChannelAttention, ChannelAttnCache, Conv2d, ConvCache, Dense,
    DenseCache, GlobalAvgPool, PoolCache, SpatialAttention, SpatialAttnCache,
};
use super::params::{Init, NetworkParams, ParamBuilder};
use super::tensor::Tensor;
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    fn strided(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: 3,
            stride: 2,
            pad: 1,
        }
    }
}

/// Declarative description of the shared architecture family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub branch: Vec<ConvSpec>,
    pub fusion: Vec<ConvSpec>,
    pub attn_reduction: usize,
    pub spatial_kernel: usize,
    /// Hidden widths of the shared dense stack.
    pub shared_widths: Vec<usize>,
    /// Hidden widths of each scalar head.
    pub head_widths: Vec<usize>,
}

impl NetSpec {
    /// Reference-scale configuration; constructed and shape-checked in
    /// tests but far too large to train on a desktop CPU.
    pub fn paper() -> Self {
        Self {
            branch: vec![ConvSpec::strided(1, 128), ConvSpec::strided(128, 256)],
            fusion: vec![ConvSpec::strided(512, 1024), ConvSpec::strided(1024, 2048)],
            attn_reduction: 16,
            spatial_kernel: 7,
            shared_widths: vec![4096, 2048],
            head_widths: vec![512, 128],
        }
    }

    /// Small configuration sized for CPU training on a 20x20 grid. The
    /// fusion stage keeps stride 1: on a map this coarse the 5x5 feature
    /// grid ahead of pooling is what carries bearing information.
    pub fn desk() -> Self {
        Self {
            branch: vec![ConvSpec::strided(1, 8), ConvSpec::strided(8, 16)],
            fusion: vec![ConvSpec {
                in_ch: 32,
                out_ch: 32,
                kernel: 3,
                stride: 1,
                pad: 1,
            }],
            attn_reduction: 8,
            spatial_kernel: 3,
            shared_widths: vec![64, 32],
            head_widths: vec![16],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, NeuralError> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(NeuralError::InvalidSpec(format!(
                "unknown net preset '{other}'"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.branch.is_empty() || self.fusion.is_empty() {
            return Err(NeuralError::InvalidSpec(
                "branch and fusion stacks must be non-empty".into(),
            ));
        }
        if self.branch[0].in_ch != 1 {
            return Err(NeuralError::InvalidSpec(
                "branch input must be single-channel".into(),
            ));
        }
        for pair in self.branch.windows(2) {
            if pair[0].out_ch != pair[1].in_ch {
                return Err(NeuralError::InvalidSpec("branch channel chain broken".into()));
            }
        }
        if self.fusion[0].in_ch != 2 * self.branch.last().unwrap().out_ch {
            return Err(NeuralError::InvalidSpec(
                "fusion input must equal concatenated branch output".into(),
            ));
        }
        for pair in self.fusion.windows(2) {
            if pair[0].out_ch != pair[1].in_ch {
                return Err(NeuralError::InvalidSpec("fusion channel chain broken".into()));
            }
        }
        if self.spatial_kernel % 2 == 0 {
            return Err(NeuralError::InvalidSpec("spatial kernel must be odd".into()));
        }
        if self.shared_widths.is_empty() || self.head_widths.is_empty() {
            return Err(NeuralError::InvalidSpec("dense stacks must be non-empty".into()));
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        self.fusion.last().unwrap().out_ch
    }
}

/// Convolutional trunk shared by actor and critic.
struct Torso {
    branch1: Vec<Conv2d>,
    branch2: Vec<Conv2d>,
    fusion: Vec<Conv2d>,
    chan_attn: ChannelAttention,
    spat_attn: SpatialAttention,
    pool: GlobalAvgPool,
    grid: (usize, usize),
}

pub(crate) struct TorsoTape {
    branch1: Vec<(ConvCache, Vec<bool>)>,
    branch2: Vec<(ConvCache, Vec<bool>)>,
    fusion: Vec<(ConvCache, Vec<bool>)>,
    chan: ChannelAttnCache,
    spat: SpatialAttnCache,
    pool: PoolCache,
    branch_out_numel: usize,
}

impl Torso {
    fn new(spec: &NetSpec, grid: (usize, usize), builder: &mut ParamBuilder) -> Self {
        let mk_stack = |tag: &str, specs: &[ConvSpec], builder: &mut ParamBuilder| {
            specs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    Conv2d::new(
                        &format!("{tag}{i}"),
                        c.in_ch,
                        c.out_ch,
                        c.kernel,
                        c.stride,
                        c.pad,
                        builder,
                    )
                })
                .collect::<Vec<_>>()
        };
        let branch1 = mk_stack("branch1.conv", &spec.branch, builder);
        let branch2 = mk_stack("branch2.conv", &spec.branch, builder);
        let fusion = mk_stack("fusion.conv", &spec.fusion, builder);
        let fused_ch = spec.pooled_dim();
        let chan_attn = ChannelAttention::new("attn.channel", fused_ch, spec.attn_reduction, builder);
        let spat_attn = SpatialAttention::new("attn.spatial", spec.spatial_kernel, builder);
        Self {
            branch1,
            branch2,
            fusion,
            chan_attn,
            spat_attn,
            pool: GlobalAvgPool,
            grid,
        }
    }

    fn run_stack(
        stack: &[Conv2d],
        params: &NetworkParams,
        input: Tensor,
    ) -> Result<(Tensor, Vec<(ConvCache, Vec<bool>)>), NeuralError> {
        let mut caches = Vec::with_capacity(stack.len());
        let mut x = input;
        for conv in stack {
            let (mut y, cache) = conv.forward(params, &x)?;
            let mask = relu_forward(y.data_mut());
            caches.push((cache, mask));
            x = y;
        }
        Ok((x, caches))
    }

    fn backward_stack(
        stack: &[Conv2d],
        params: &NetworkParams,
        caches: &[(ConvCache, Vec<bool>)],
        mut grad: Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        for (conv, (cache, mask)) in stack.iter().zip(caches.iter()).rev() {
            relu_backward(grad.data_mut(), mask);
            grad = conv.backward(params, cache, &grad, grads);
        }
        grad
    }

    fn forward(
        &self,
        params: &NetworkParams,
        s1: &[f64],
        s2: &[f64],
    ) -> Result<(Vec<f64>, TorsoTape), NeuralError> {
        let (h, w) = self.grid;
        if s1.len() != h * w || s2.len() != h * w {
            return Err(NeuralError::ShapeMismatch {
                layer: "torso.input".into(),
                expected: format!("[{h} x {w}] per channel"),
                got: format!("[{}], [{}]", s1.len(), s2.len()),
            });
        }
        let x1 = Tensor::from_vec(&[1, h, w], s1.to_vec());
        let x2 = Tensor::from_vec(&[1, h, w], s2.to_vec());
        let (y1, c1) = Self::run_stack(&self.branch1, params, x1)?;
        let (y2, c2) = Self::run_stack(&self.branch2, params, x2)?;
        let branch_out_numel = y1.numel();
        // Channel concat.
        let (bc, bh, bw) = (y1.shape()[0], y1.shape()[1], y1.shape()[2]);
        let mut fused = Vec::with_capacity(2 * branch_out_numel);
        fused.extend_from_slice(y1.data());
        fused.extend_from_slice(y2.data());
        let fused = Tensor::from_vec(&[2 * bc, bh, bw], fused);
        let (z, cf) = Self::run_stack(&self.fusion, params, fused)?;
        let (za, chan_cache) = self.chan_attn.forward(params, &z)?;
        let (zs, spat_cache) = self.spat_attn.forward(params, &za)?;
        let (pooled, pool_cache) = self.pool.forward(&zs);
        Ok((
            pooled,
            TorsoTape {
                branch1: c1,
                branch2: c2,
                fusion: cf,
                chan: chan_cache,
                spat: spat_cache,
                pool: pool_cache,
                branch_out_numel,
            },
        ))
    }

    fn backward(
        &self,
        params: &NetworkParams,
        tape: &TorsoTape,
        grad_pooled: &[f64],
        grads: &mut [f64],
    ) {
        let g = self.pool.backward(&tape.pool, grad_pooled);
        let g = self.spat_attn.backward(params, &tape.spat, &g, grads);
        let g = self.chan_attn.backward(params, &tape.chan, &g, grads);
        let g = Self::backward_stack(&self.fusion, params, &tape.fusion, g, grads);
        // Split the concat back into branches.
        let n = tape.branch_out_numel;
        let shape = [g.shape()[0] / 2, g.shape()[1], g.shape()[2]];
        let g1 = Tensor::from_vec(&shape, g.data()[..n].to_vec());
        let g2 = Tensor::from_vec(&shape, g.data()[n..].to_vec());
        let _ = Self::backward_stack(&self.branch1, params, &tape.branch1, g1, grads);
        let _ = Self::backward_stack(&self.branch2, params, &tape.branch2, g2, grads);
    }
}

fn dense_stack(tag: &str, in_dim: usize, widths: &[usize], builder: &mut ParamBuilder) -> Vec<Dense> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut prev = in_dim;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(Dense::new(
            &format!("{tag}{i}"),
            prev,
            w,
            Init::HeNormal { fan_in: prev },
            builder,
        ));
        prev = w;
    }
    layers
}

fn run_dense_relu(
    stack: &[Dense],
    params: &NetworkParams,
    input: &[f64],
) -> Result<(Vec<f64>, Vec<(DenseCache, Vec<bool>)>), NeuralError> {
    let mut caches = Vec::with_capacity(stack.len());
    let mut x = input.to_vec();
    for layer in stack {
        let (mut y, cache) = layer.forward(params, &x)?;
        let mask = relu_forward(&mut y);
        caches.push((cache, mask));
        x = y;
    }
    Ok((x, caches))
}

fn backward_dense_relu(
    stack: &[Dense],
    params: &NetworkParams,
    caches: &[(DenseCache, Vec<bool>)],
    mut grad: Vec<f64>,
    grads: &mut [f64],
) -> Vec<f64> {
    for (layer, (cache, mask)) in stack.iter().zip(caches.iter()).rev() {
        relu_backward(&mut grad, mask);
        grad = layer.backward(params, cache, &grad, grads);
    }
    grad
}

/// Policy network: state matrices in, three tanh-squashed scalars out.
pub struct ActorArch {
    torso: Torso,
    shared: Vec<Dense>,
    heads: Vec<Vec<Dense>>,
    head_out: Vec<Dense>,
}

pub struct ActorTape {
    torso: TorsoTape,
    shared: Vec<(DenseCache, Vec<bool>)>,
    heads: Vec<Vec<(DenseCache, Vec<bool>)>>,
    head_out: Vec<DenseCache>,
    outputs: [f64; 3],
    raw: [f64; 3],
}

impl ActorTape {
    /// Head outputs before tanh squashing.
    pub fn raw_outputs(&self) -> [f64; 3] {
        self.raw
    }
}

impl ActorArch {
    pub fn build(
        spec: &NetSpec,
        grid: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<(Self, NetworkParams), NeuralError> {
        spec.validate()?;
        let mut builder = ParamBuilder::new(rng);
        let torso = Torso::new(spec, grid, &mut builder);
        let shared = dense_stack("actor.shared", spec.pooled_dim(), &spec.shared_widths, &mut builder);
        let shared_out = *spec.shared_widths.last().unwrap();
        let mut heads = Vec::with_capacity(3);
        let mut head_out = Vec::with_capacity(3);
        for name in ["velocity", "vertical", "horizontal"] {
            let stack = dense_stack(
                &format!("actor.head.{name}"),
                shared_out,
                &spec.head_widths,
                &mut builder,
            );
            let last_in = *spec.head_widths.last().unwrap();
            head_out.push(Dense::new(
                &format!("actor.head.{name}.out"),
                last_in,
                1,
                Init::Uniform { bound: 3e-3 },
                &mut builder,
            ));
            heads.push(stack);
        }
        Ok((
            Self {
                torso,
                shared,
                heads,
                head_out,
            },
            builder.finish(),
        ))
    }

    /// Normalized action in `[-1, 1]^3`.
    pub fn forward(
        &self,
        params: &NetworkParams,
        s1: &[f64],
        s2: &[f64],
    ) -> Result<([f64; 3], ActorTape), NeuralError> {
        let (pooled, torso_tape) = self.torso.forward(params, s1, s2)?;
        let (feat, shared_caches) = run_dense_relu(&self.shared, params, &pooled)?;
        let mut outputs = [0.0; 3];
        let mut raws = [0.0; 3];
        let mut head_caches = Vec::with_capacity(3);
        let mut out_caches = Vec::with_capacity(3);
        for i in 0..3 {
            let (hid, hc) = run_dense_relu(&self.heads[i], params, &feat)?;
            let (raw, oc) = self.head_out[i].forward(params, &hid)?;
            raws[i] = raw[0];
            outputs[i] = raw[0].tanh();
            head_caches.push(hc);
            out_caches.push(oc);
        }
        Ok((
            outputs,
            ActorTape {
                torso: torso_tape,
                shared: shared_caches,
                heads: head_caches,
                head_out: out_caches,
                outputs,
                raw: raws,
            },
        ))
    }

    /// Accumulate `d(loss)/d(params)` for upstream gradient `d_out` on the
    /// three normalized outputs.
    pub fn backward(
        &self,
        params: &NetworkParams,
        tape: &ActorTape,
        d_out: [f64; 3],
        grads: &mut [f64],
    ) {
        self.backward_raw(params, tape, d_out, [0.0; 3], grads)
    }

    /// Like [`Self::backward`] with an extra upstream gradient applied
    /// directly to the pre-tanh head outputs (used by saturation
    /// regularizers).
    pub fn backward_raw(
        &self,
        params: &NetworkParams,
        tape: &ActorTape,
        d_out: [f64; 3],
        d_raw_extra: [f64; 3],
        grads: &mut [f64],
    ) {
        let shared_out = self.shared.last().map(|l| l.out_dim).unwrap_or(0);
        let mut d_feat = vec![0.0; shared_out];
        for i in 0..3 {
            let y = tape.outputs[i];
            let d_raw = vec![d_out[i] * (1.0 - y * y) + d_raw_extra[i]];
            let d_hid = self.head_out[i].backward(params, &tape.head_out[i], &d_raw, grads);
            let d = backward_dense_relu(&self.heads[i], params, &tape.heads[i], d_hid, grads);
            for (a, b) in d_feat.iter_mut().zip(d.iter()) {
                *a += b;
            }
        }
        let d_pooled = backward_dense_relu(&self.shared, params, &tape.shared, d_feat, grads);
        self.torso.backward(params, &tape.torso, &d_pooled, grads);
    }
}

/// Action-value network: state matrices plus action in, scalar Q out.
pub struct CriticArch {
    torso: Torso,
    shared: Vec<Dense>,
    head: Vec<Dense>,
    head_out: Dense,
    action_dim: usize,
}

pub struct CriticTape {
    torso: TorsoTape,
    shared: Vec<(DenseCache, Vec<bool>)>,
    head: Vec<(DenseCache, Vec<bool>)>,
    head_out: DenseCache,
    pooled_dim: usize,
}

impl CriticArch {
    pub fn build(
        spec: &NetSpec,
        grid: (usize, usize),
        action_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Self, NetworkParams), NeuralError> {
        spec.validate()?;
        let mut builder = ParamBuilder::new(rng);
        let torso = Torso::new(spec, grid, &mut builder);
        let shared = dense_stack(
            "critic.shared",
            spec.pooled_dim() + action_dim,
            &spec.shared_widths,
            &mut builder,
        );
        let shared_out = *spec.shared_widths.last().unwrap();
        let head = dense_stack("critic.head", shared_out, &spec.head_widths, &mut builder);
        let head_out = Dense::new(
            "critic.head.out",
            *spec.head_widths.last().unwrap(),
            1,
            Init::Uniform { bound: 3e-3 },
            &mut builder,
        );
        Ok((
            Self {
                torso,
                shared,
                head,
                head_out,
                action_dim,
            },
            builder.finish(),
        ))
    }

    pub fn forward(
        &self,
        params: &NetworkParams,
        s1: &[f64],
        s2: &[f64],
        action: &[f64],
    ) -> Result<(f64, CriticTape), NeuralError> {
        if action.len() != self.action_dim {
            return Err(NeuralError::ShapeMismatch {
                layer: "critic.action".into(),
                expected: format!("[{}]", self.action_dim),
                got: format!("[{}]", action.len()),
            });
        }
        let (pooled, torso_tape) = self.torso.forward(params, s1, s2)?;
        let pooled_dim = pooled.len();
        let mut joint = pooled;
        joint.extend_from_slice(action);
        let (feat, shared_caches) = run_dense_relu(&self.shared, params, &joint)?;
        let (hid, head_caches) = run_dense_relu(&self.head, params, &feat)?;
        let (q, out_cache) = self.head_out.forward(params, &hid)?;
        Ok((
            q[0],
            CriticTape {
                torso: torso_tape,
                shared: shared_caches,
                head: head_caches,
                head_out: out_cache,
                pooled_dim,
            },
        ))
    }

    /// Accumulate parameter gradients for upstream `d_q`; returns the
    /// gradient with respect to the action input (the policy-gradient
    /// chain-rule hook).
    pub fn backward(
        &self,
        params: &NetworkParams,
        tape: &CriticTape,
        d_q: f64,
        grads: &mut [f64],
    ) -> Vec<f64> {
        let d_hid = self
            .head_out
            .backward(params, &tape.head_out, &[d_q], grads);
        let d_feat = backward_dense_relu(&self.head, params, &tape.head, d_hid, grads);
        let d_joint = backward_dense_relu(&self.shared, params, &tape.shared, d_feat, grads);
        let (d_pooled, d_action) = d_joint.split_at(tape.pooled_dim);
        self.torso.backward(params, &tape.torso, d_pooled, grads);
        d_action.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use rand::Rng;

    #[test]
    fn desk_actor_shapes_and_bounds() {
        let spec = NetSpec::desk();
        let mut rng = rng_from_seed(0);
        let (actor, params) = ActorArch::build(&spec, (20, 20), &mut rng).unwrap();
        let s1 = vec![0.1; 400];
        let s2 = vec![0.2; 400];
        let (out, _) = actor.forward(&params, &s1, &s2).unwrap();
        for v in out {
            assert!((-1.0..=1.0).contains(&v));
        }
        // Deterministic forward.
        let (out2, _) = actor.forward(&params, &s1, &s2).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn desk_critic_shapes() {
        let spec = NetSpec::desk();
        let mut rng = rng_from_seed(1);
        let (critic, params) = CriticArch::build(&spec, (20, 20), 3, &mut rng).unwrap();
        let s1 = vec![0.1; 400];
        let s2 = vec![0.0; 400];
        let (q, _) = critic.forward(&params, &s1, &s2, &[0.3, -0.2, 0.9]).unwrap();
        assert!(q.is_finite());
        assert!(critic
            .forward(&params, &s1, &s2, &[0.3, -0.2])
            .is_err());
    }

    #[test]
    fn input_shape_mismatch_is_reported() {
        let spec = NetSpec::desk();
        let mut rng = rng_from_seed(2);
        let (actor, params) = ActorArch::build(&spec, (20, 20), &mut rng).unwrap();
        let err = match actor.forward(&params, &[0.0; 10], &[0.0; 400]) {
            Err(e) => e,
            Ok(_) => panic!("expected shape error"),
        };
        assert!(err.to_string().contains("torso.input"));
    }

    #[test]
    fn param_copy_gives_bitwise_equal_outputs() {
        let spec = NetSpec::desk();
        let mut rng = rng_from_seed(3);
        let (actor, params) = ActorArch::build(&spec, (20, 20), &mut rng).unwrap();
        let copy = params.clone();
        let mut gen = rng_from_seed(4);
        let s1: Vec<f64> = (0..400).map(|_| gen.gen_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..400).map(|_| gen.gen_range(0.0..1.0)).collect();
        let (a, _) = actor.forward(&params, &s1, &s2).unwrap();
        let (b, _) = actor.forward(&copy, &s1, &s2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_spec_constructs_and_shape_checks() {
        let spec = NetSpec::paper();
        spec.validate().unwrap();
        assert_eq!(spec.pooled_dim(), 2048);
        let mut rng = rng_from_seed(5);
        let (actor, params) = ActorArch::build(&spec, (100, 100), &mut rng).unwrap();
        // Reference scale: ~44M parameters.
        assert!(params.len() > 40_000_000, "got {}", params.len());
        let s1 = vec![0.05; 10_000];
        let s2 = vec![0.01; 10_000];
        let (out, _) = actor.forward(&params, &s1, &s2).unwrap();
        for v in out {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn spec_validation_rejects_broken_chains() {
        let mut spec = NetSpec::desk();
        spec.fusion[0].in_ch = 7;
        assert!(spec.validate().is_err());
        assert!(NetSpec::by_name("nope").is_err());
        assert!(NetSpec::by_name("desk").is_ok());
    }
}
