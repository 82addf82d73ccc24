//! Layer primitives with hand-written reverse-mode gradients.
//!
//! Each layer's `forward` returns the output plus a cache of whatever the
//! backward pass needs; `backward` accumulates parameter gradients into a
//! flat slice aligned with [`super::NetworkParams`] storage and returns the
//! gradient with respect to the layer input.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::params::{BlockId, Init, NetworkParams, ParamBuilder};
use super::tensor::Tensor;
use super::NeuralError;

fn block_slice<'a>(grads: &'a mut [f64], params: &NetworkParams, id: BlockId) -> &'a mut [f64] {
    let info = params.block_info(id);
    &mut grads[info.offset..info.offset + info.len]
}

pub(crate) fn relu_forward(x: &mut [f64]) -> Vec<bool> {
    let mut mask = vec![false; x.len()];
    for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
        if *v > 0.0 {
            *m = true;
        } else {
            *v = 0.0;
        }
    }
    mask
}

pub(crate) fn relu_backward(grad: &mut [f64], mask: &[bool]) {
    for (g, &m) in grad.iter_mut().zip(mask.iter()) {
        if !m {
            *g = 0.0;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer `y = W x + b`, weights stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    w: BlockId,
    b: BlockId,
    name: String,
}

pub struct DenseCache {
    input: Vec<f64>,
}

impl Dense {
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        builder: &mut ParamBuilder,
    ) -> Self {
        let w = builder.register(&format!("{name}.w"), &[out_dim, in_dim], init);
        let b = builder.register(&format!("{name}.b"), &[out_dim], Init::Zero);
        Self {
            in_dim,
            out_dim,
            w,
            b,
            name: name.to_string(),
        }
    }

    pub fn forward(
        &self,
        params: &NetworkParams,
        input: &[f64],
    ) -> Result<(Vec<f64>, DenseCache), NeuralError> {
        if input.len() != self.in_dim {
            return Err(NeuralError::ShapeMismatch {
                layer: self.name.clone(),
                expected: format!("[{}]", self.in_dim),
                got: format!("[{}]", input.len()),
            });
        }
        let w = params.block(self.w);
        let b = params.block(self.b);
        let mut out = vec![0.0; self.out_dim];
        for o in 0..self.out_dim {
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input.iter()) {
                acc += wi * xi;
            }
            out[o] = acc;
        }
        Ok((
            out,
            DenseCache {
                input: input.to_vec(),
            },
        ))
    }

    pub fn backward(
        &self,
        params: &NetworkParams,
        cache: &DenseCache,
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Vec<f64> {
        let w = params.block(self.w);
        {
            let dw = block_slice(grads, params, self.w);
            for o in 0..self.out_dim {
                let g = grad_out[o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, xi) in row.iter_mut().zip(cache.input.iter()) {
                    *d += g * xi;
                }
            }
        }
        {
            let db = block_slice(grads, params, self.b);
            for (d, g) in db.iter_mut().zip(grad_out.iter()) {
                *d += g;
            }
        }
        let mut grad_in = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = grad_out[o];
            if g == 0.0 {
                continue;
            }
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            for (gi, wi) in grad_in.iter_mut().zip(row.iter()) {
                *gi += g * wi;
            }
        }
        grad_in
    }
}

/// Strided 2-D convolution over `[C, H, W]` maps, im2col + GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    w: BlockId,
    b: BlockId,
    name: String,
}

pub struct ConvCache {
    input_shape: [usize; 3],
    col: Vec<f64>,
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        builder: &mut ParamBuilder,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let w = builder.register(
            &format!("{name}.w"),
            &[out_ch, fan_in],
            Init::HeNormal { fan_in },
        );
        let b = builder.register(&format!("{name}.b"), &[out_ch], Init::Zero);
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            w,
            b,
            name: name.to_string(),
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, input: &Tensor) -> (Vec<f64>, (usize, usize)) {
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let patch = c_in * k * k;
        let data = input.data();
        let mut col = vec![0.0; patch * oh * ow];
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let base = row * oh * ow;
                    for i in 0..oh {
                        let src_i = (i * self.stride + ki) as isize - self.pad as isize;
                        if src_i < 0 || src_i >= h as isize {
                            continue;
                        }
                        let src_row = (c * h + src_i as usize) * w;
                        for j in 0..ow {
                            let src_j = (j * self.stride + kj) as isize - self.pad as isize;
                            if src_j < 0 || src_j >= w as isize {
                                continue;
                            }
                            col[base + i * ow + j] = data[src_row + src_j as usize];
                        }
                    }
                }
            }
        }
        (col, (oh, ow))
    }

    fn col2im(&self, dcol: &[f64], shape: [usize; 3], out_hw: (usize, usize)) -> Tensor {
        let [c_in, h, w] = shape;
        let (oh, ow) = out_hw;
        let k = self.kernel;
        let mut grad = Tensor::zeros(&shape);
        let gdata = grad.data_mut();
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let base = row * oh * ow;
                    for i in 0..oh {
                        let src_i = (i * self.stride + ki) as isize - self.pad as isize;
                        if src_i < 0 || src_i >= h as isize {
                            continue;
                        }
                        let dst_row = (c * h + src_i as usize) * w;
                        for j in 0..ow {
                            let src_j = (j * self.stride + kj) as isize - self.pad as isize;
                            if src_j < 0 || src_j >= w as isize {
                                continue;
                            }
                            gdata[dst_row + src_j as usize] += dcol[base + i * ow + j];
                        }
                    }
                }
            }
        }
        grad
    }

    pub fn forward(
        &self,
        params: &NetworkParams,
        input: &Tensor,
    ) -> Result<(Tensor, ConvCache), NeuralError> {
        if input.shape().len() != 3 || input.shape()[0] != self.in_ch {
            return Err(NeuralError::ShapeMismatch {
                layer: self.name.clone(),
                expected: format!("[{}, h, w]", self.in_ch),
                got: format!("{:?}", input.shape()),
            });
        }
        let (col, (oh, ow)) = self.im2col(input);
        let patch = self.in_ch * self.kernel * self.kernel;
        let hw = oh * ow;
        let mut out = Tensor::zeros(&[self.out_ch, oh, ow]);
        {
            let wv = ArrayView2::from_shape((self.out_ch, patch), params.block(self.w)).unwrap();
            let cv = ArrayView2::from_shape((patch, hw), &col[..]).unwrap();
            let mut ov = ArrayViewMut2::from_shape((self.out_ch, hw), out.data_mut()).unwrap();
            general_mat_mul(1.0, &wv, &cv, 0.0, &mut ov);
        }
        let bias = params.block(self.b);
        let odata = out.data_mut();
        for c in 0..self.out_ch {
            let b = bias[c];
            for v in &mut odata[c * hw..(c + 1) * hw] {
                *v += b;
            }
        }
        let cache = ConvCache {
            input_shape: [input.shape()[0], input.shape()[1], input.shape()[2]],
            col,
            out_hw: (oh, ow),
        };
        Ok((out, cache))
    }

    pub fn backward(
        &self,
        params: &NetworkParams,
        cache: &ConvCache,
        grad_out: &Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        let (oh, ow) = cache.out_hw;
        let hw = oh * ow;
        let patch = self.in_ch * self.kernel * self.kernel;
        {
            // dW += dY . col^T
            let gy = ArrayView2::from_shape((self.out_ch, hw), grad_out.data()).unwrap();
            let cv = ArrayView2::from_shape((patch, hw), &cache.col[..]).unwrap();
            let dw = block_slice(grads, params, self.w);
            let mut dwv = ArrayViewMut2::from_shape((self.out_ch, patch), dw).unwrap();
            general_mat_mul(1.0, &gy, &cv.t(), 1.0, &mut dwv);
        }
        {
            let db = block_slice(grads, params, self.b);
            for c in 0..self.out_ch {
                db[c] += grad_out.data()[c * hw..(c + 1) * hw].iter().sum::<f64>();
            }
        }
        // dcol = W^T . dY, then scatter back to the input layout.
        let mut dcol = vec![0.0; patch * hw];
        {
            let wv = ArrayView2::from_shape((self.out_ch, patch), params.block(self.w)).unwrap();
            let gy = ArrayView2::from_shape((self.out_ch, hw), grad_out.data()).unwrap();
            let mut dcv = ArrayViewMut2::from_shape((patch, hw), &mut dcol[..]).unwrap();
            general_mat_mul(1.0, &wv.t(), &gy, 0.0, &mut dcv);
        }
        self.col2im(&dcol, cache.input_shape, cache.out_hw)
    }
}

/// Squeeze-excite channel gate: GAP descriptor -> bottleneck MLP -> sigmoid
/// scale per channel.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub channels: usize,
    fc1: Dense,
    fc2: Dense,
}

pub struct ChannelAttnCache {
    input: Tensor,
    fc1_cache: DenseCache,
    fc1_mask: Vec<bool>,
    fc2_cache: DenseCache,
    gate: Vec<f64>,
}

impl ChannelAttention {
    pub fn new(name: &str, channels: usize, reduction: usize, builder: &mut ParamBuilder) -> Self {
        let hidden = (channels / reduction).max(1);
        let fc1 = Dense::new(
            &format!("{name}.fc1"),
            channels,
            hidden,
            Init::HeNormal { fan_in: channels },
            builder,
        );
        let fc2 = Dense::new(
            &format!("{name}.fc2"),
            hidden,
            channels,
            Init::HeNormal { fan_in: hidden },
            builder,
        );
        Self { channels, fc1, fc2 }
    }

    pub fn forward(
        &self,
        params: &NetworkParams,
        input: &Tensor,
    ) -> Result<(Tensor, ChannelAttnCache), NeuralError> {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let hw = (h * w) as f64;
        let mut desc = vec![0.0; c];
        for ch in 0..c {
            desc[ch] = input.data()[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / hw;
        }
        let (mut hid, fc1_cache) = self.fc1.forward(params, &desc)?;
        let fc1_mask = relu_forward(&mut hid);
        let (logits, fc2_cache) = self.fc2.forward(params, &hid)?;
        let gate: Vec<f64> = logits.iter().map(|&v| sigmoid(v)).collect();
        let mut out = input.clone();
        let odata = out.data_mut();
        for ch in 0..c {
            let g = gate[ch];
            for v in &mut odata[ch * h * w..(ch + 1) * h * w] {
                *v *= g;
            }
        }
        Ok((
            out,
            ChannelAttnCache {
                input: input.clone(),
                fc1_cache,
                fc1_mask,
                fc2_cache,
                gate,
            },
        ))
    }

    pub fn backward(
        &self,
        params: &NetworkParams,
        cache: &ChannelAttnCache,
        grad_out: &Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        let shape = cache.input.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        // Gate path: dg[c] = sum_hw dY * X, then back through sigmoid + MLP.
        let mut dgate = vec![0.0; c];
        for ch in 0..c {
            let x = &cache.input.data()[ch * hw..(ch + 1) * hw];
            let gy = &grad_out.data()[ch * hw..(ch + 1) * hw];
            dgate[ch] = x.iter().zip(gy.iter()).map(|(a, b)| a * b).sum();
        }
        let dlogits: Vec<f64> = dgate
            .iter()
            .zip(cache.gate.iter())
            .map(|(dg, &g)| dg * g * (1.0 - g))
            .collect();
        let mut dhid = self.fc2.backward(params, &cache.fc2_cache, &dlogits, grads);
        relu_backward(&mut dhid, &cache.fc1_mask);
        let ddesc = self.fc1.backward(params, &cache.fc1_cache, &dhid, grads);
        // Direct path plus the GAP contribution.
        let mut grad_in = Tensor::zeros(shape);
        let gdata = grad_in.data_mut();
        for ch in 0..c {
            let g = cache.gate[ch];
            let spread = ddesc[ch] / hw as f64;
            let gy = &grad_out.data()[ch * hw..(ch + 1) * hw];
            for (gi, gyv) in gdata[ch * hw..(ch + 1) * hw].iter_mut().zip(gy.iter()) {
                *gi = gyv * g + spread;
            }
        }
        grad_in
    }
}

/// Spatial gate: per-pixel channel mean and max -> small conv -> sigmoid
/// scale per pixel.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    conv: Conv2d,
}

pub struct SpatialAttnCache {
    input: Tensor,
    argmax: Vec<usize>,
    conv_cache: ConvCache,
    gate: Vec<f64>,
}

impl SpatialAttention {
    pub fn new(name: &str, kernel: usize, builder: &mut ParamBuilder) -> Self {
        let conv = Conv2d::new(
            &format!("{name}.conv"),
            2,
            1,
            kernel,
            1,
            (kernel - 1) / 2,
            builder,
        );
        Self { conv }
    }

    pub fn forward(
        &self,
        params: &NetworkParams,
        input: &Tensor,
    ) -> Result<(Tensor, SpatialAttnCache), NeuralError> {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let hw = h * w;
        let mut stacked = Tensor::zeros(&[2, h, w]);
        let mut argmax = vec![0usize; hw];
        {
            let data = input.data();
            let sdata = stacked.data_mut();
            for p in 0..hw {
                let mut sum = 0.0;
                let mut best = f64::NEG_INFINITY;
                let mut best_c = 0;
                for ch in 0..c {
                    let v = data[ch * hw + p];
                    sum += v;
                    if v > best {
                        best = v;
                        best_c = ch;
                    }
                }
                sdata[p] = sum / c as f64;
                sdata[hw + p] = best;
                argmax[p] = best_c;
            }
        }
        let (logits, conv_cache) = self.conv.forward(params, &stacked)?;
        let gate: Vec<f64> = logits.data().iter().map(|&v| sigmoid(v)).collect();
        let mut out = input.clone();
        let odata = out.data_mut();
        for ch in 0..c {
            for p in 0..hw {
                odata[ch * hw + p] *= gate[p];
            }
        }
        Ok((
            out,
            SpatialAttnCache {
                input: input.clone(),
                argmax,
                conv_cache,
                gate,
            },
        ))
    }

    pub fn backward(
        &self,
        params: &NetworkParams,
        cache: &SpatialAttnCache,
        grad_out: &Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        let shape = cache.input.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let mut dgate = vec![0.0; hw];
        for ch in 0..c {
            let x = &cache.input.data()[ch * hw..(ch + 1) * hw];
            let gy = &grad_out.data()[ch * hw..(ch + 1) * hw];
            for p in 0..hw {
                dgate[p] += x[p] * gy[p];
            }
        }
        let dlogits: Vec<f64> = dgate
            .iter()
            .zip(cache.gate.iter())
            .map(|(dg, &g)| dg * g * (1.0 - g))
            .collect();
        let dlogits_t = Tensor::from_vec(&[1, h, w], dlogits);
        let dstacked = self
            .conv
            .backward(params, &cache.conv_cache, &dlogits_t, grads);
        let mut grad_in = Tensor::zeros(shape);
        {
            let gdata = grad_in.data_mut();
            let gy = grad_out.data();
            for ch in 0..c {
                for p in 0..hw {
                    gdata[ch * hw + p] = gy[ch * hw + p] * cache.gate[p];
                }
            }
            let ds = dstacked.data();
            for p in 0..hw {
                let dmean = ds[p] / c as f64;
                for ch in 0..c {
                    gdata[ch * hw + p] += dmean;
                }
                gdata[cache.argmax[p] * hw + p] += ds[hw + p];
            }
        }
        grad_in
    }
}

/// Global average pooling `[C, H, W] -> [C]`.
#[derive(Debug, Clone, Copy)]
pub struct GlobalAvgPool;

pub struct PoolCache {
    shape: [usize; 3],
}

impl GlobalAvgPool {
    pub fn forward(&self, input: &Tensor) -> (Vec<f64>, PoolCache) {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let hw = h * w;
        let out: Vec<f64> = (0..c)
            .map(|ch| input.data()[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        (out, PoolCache { shape: [c, h, w] })
    }

    pub fn backward(&self, cache: &PoolCache, grad_out: &[f64]) -> Tensor {
        let [c, h, w] = cache.shape;
        let hw = h * w;
        let mut grad = Tensor::zeros(&[c, h, w]);
        let gdata = grad.data_mut();
        for ch in 0..c {
            let v = grad_out[ch] / hw as f64;
            for g in &mut gdata[ch * hw..(ch + 1) * hw] {
                *g = v;
            }
        }
        grad
    }
}
