//! Layers with explicit forward/backward passes.
//!
//! `forward` is the inference path (`&self`, batch-norm in eval mode, no
//! dropout). `forward_train` caches what `backward` needs. Batch reductions
//! run over fixed-size chunks whose partial sums are added in chunk order,
//! so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tensor::{matmul, Cache, Scalar, Tensor};

/// Samples per partial sum in batch reductions.
const CHUNK: usize = 4;

#[derive(Debug, Clone)]
pub struct Param<S> {
    pub value: Vec<S>,
    pub grad: Vec<S>,
    pub shape: Vec<usize>,
}

impl<S: Scalar> Param<S> {
    pub fn filled(shape: &[usize], v: S) -> Self {
        let n = shape.iter().product();
        Self {
            value: vec![v; n],
            grad: vec![S::zero(); n],
            shape: shape.to_vec(),
        }
    }

    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, bound: f64) {
        for v in &mut self.value {
            *v = S::from_f64_lossy(rng.gen_range(-bound..bound));
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }
}

/// A named tensor exposed to optimizers and serializers.
pub enum Slot<'a, S> {
    Param(&'a mut Param<S>),
    Buffer(&'a mut Vec<S>),
}

pub type Visitor<'v, S> = dyn FnMut(&str, Slot<'_, S>) + 'v;

fn im2col<S: Scalar>(x: &[S], geo: &ConvGeometry, cols: &mut [S]) {
    let ConvGeometry { c, h, w, k, stride, pad, oh, ow } = *geo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        line.fill(S::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<S: Scalar>(cols: &[S], geo: &ConvGeometry, dx: &mut [S]) {
    let ConvGeometry { c, h, w, k, stride, pad, oh, ow } = *geo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &src[oy * ow..(oy + 1) * ow];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in line.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// Square-kernel 2-D convolution. Weights are `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// When false, backward skips the input gradient (first layer).
    pub input_grad: bool,
    cache: Cache<Tensor<S>>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize, bias: bool) -> Self {
        Self {
            weight: Param::filled(&[cout, cin, kernel, kernel], S::zero()),
            bias: bias.then(|| Param::filled(&[cout], S::zero())),
            cin,
            cout,
            kernel,
            stride,
            pad,
            input_grad: true,
            cache: Cache::default(),
        }
    }

    /// He-uniform weights, zero bias.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.cin * self.kernel * self.kernel) as f64;
        self.weight.fill_uniform(rng, (6.0 / fan_in).sqrt());
    }

    fn geometry(&self, x: &Tensor<S>) -> ConvGeometry {
        let [_, c, h, w] = x.shape;
        assert_eq!(c, self.cin, "conv input channels");
        assert!(h + 2 * self.pad >= self.kernel && w + 2 * self.pad >= self.kernel, "conv input too small");
        ConvGeometry {
            c,
            h,
            w,
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            oh: (h + 2 * self.pad - self.kernel) / self.stride + 1,
            ow: (w + 2 * self.pad - self.kernel) / self.stride + 1,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let geo = self.geometry(x);
        let n = x.batch();
        let hw = geo.oh * geo.ow;
        let kk = geo.c * geo.k * geo.k;
        let mut out = Tensor::zeros([n, self.cout, geo.oh, geo.ow]);
        if n == 0 {
            return out;
        }
        let weight = &self.weight.value;
        let bias = self.bias.as_ref().map(|b| &b.value);
        out.data
            .par_chunks_mut(self.cout * hw)
            .zip(x.data.par_chunks(x.sample_len()))
            .for_each_init(
                || vec![S::zero(); kk * hw],
                |cols, (o, xi)| {
                    im2col(xi, &geo, cols);
                    matmul(self.cout, kk, hw, weight, false, cols, false, o, false);
                    if let Some(b) = bias {
                        for (row, &bv) in o.chunks_mut(hw).zip(b) {
                            row.iter_mut().for_each(|v| *v += bv);
                        }
                    }
                },
            );
        out
    }

    pub fn forward_train(&mut self, x: Tensor<S>) -> Tensor<S> {
        let y = self.forward(&x);
        self.cache.put(x);
        y
    }

    pub fn backward(&mut self, gy: Tensor<S>) -> Option<Tensor<S>> {
        let x = self.cache.take("conv");
        let geo = self.geometry(&x);
        let n = x.batch();
        let hw = geo.oh * geo.ow;
        let kk = geo.c * geo.k * geo.k;
        let cout = self.cout;
        let in_len = x.sample_len();
        assert_eq!(gy.shape, [n, cout, geo.oh, geo.ow], "conv grad shape");

        let mut dx = self.input_grad.then(|| Tensor::zeros(x.shape));
        let n_chunks = n.div_ceil(CHUNK);
        let dx_chunks: Vec<Option<&mut [S]>> = match dx.as_mut() {
            Some(t) => t.data.chunks_mut(CHUNK * in_len).map(Some).collect(),
            None => (0..n_chunks).map(|_| None).collect(),
        };
        let weight = &self.weight.value;
        let partials: Vec<(Vec<S>, Vec<S>)> = dx_chunks
            .into_par_iter()
            .enumerate()
            .map(|(ci, mut dxc)| {
                let start = ci * CHUNK;
                let end = (start + CHUNK).min(n);
                let mut dw = vec![S::zero(); cout * kk];
                let mut db = vec![S::zero(); cout];
                let mut cols = vec![S::zero(); kk * hw];
                let mut dcols = vec![S::zero(); if dxc.is_some() { kk * hw } else { 0 }];
                for i in start..end {
                    let gi = gy.sample(i);
                    im2col(x.sample(i), &geo, &mut cols);
                    matmul(cout, hw, kk, gi, false, &cols, true, &mut dw, true);
                    for (b, row) in db.iter_mut().zip(gi.chunks(hw)) {
                        *b += row.iter().copied().sum::<S>();
                    }
                    if let Some(d) = dxc.as_deref_mut() {
                        matmul(kk, cout, hw, weight, true, gi, false, &mut dcols, false);
                        let off = (i - start) * in_len;
                        col2im(&dcols, &geo, &mut d[off..off + in_len]);
                    }
                }
                (dw, db)
            })
            .collect();
        for (dw, db) in partials {
            add_into(&mut self.weight.grad, &dw);
            if let Some(b) = self.bias.as_mut() {
                add_into(&mut b.grad, &db);
            }
        }
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, S>) {
        f(&format!("{prefix}.weight"), Slot::Param(&mut self.weight));
        if let Some(b) = self.bias.as_mut() {
            f(&format!("{prefix}.bias"), Slot::Param(b));
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

fn add_into<S: Scalar>(acc: &mut [S], v: &[S]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

struct BnCache<S> {
    xhat: Tensor<S>,
    inv_std: Vec<f64>,
}

/// Batch normalization over the channel axis; also serves feature vectors
/// (`H = W = 1`).
#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: f64,
    pub eps: f64,
    cache: Cache<BnCache<S>>,
}

impl<S> std::fmt::Debug for BnCache<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BnCache")
    }
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], S::one()),
            beta: Param::filled(&[channels], S::zero()),
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: Cache::default(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&self, mut x: Tensor<S>) -> Tensor<S> {
        let [_, c, h, w] = x.shape;
        assert_eq!(c, self.channels(), "batch-norm channels");
        let hw = h * w;
        let coef: Vec<(S, S)> = (0..c)
            .map(|ch| {
                let inv = 1.0 / (self.running_var[ch].as_f64() + self.eps).sqrt();
                let scale = self.gamma.value[ch].as_f64() * inv;
                let shift = self.beta.value[ch].as_f64() - self.running_mean[ch].as_f64() * scale;
                (S::from_f64_lossy(scale), S::from_f64_lossy(shift))
            })
            .collect();
        if x.data.is_empty() {
            return x;
        }
        let len = x.sample_len();
        x.data.par_chunks_mut(len).for_each(|s| {
            for (plane, &(a, b)) in s.chunks_mut(hw).zip(&coef) {
                plane.iter_mut().for_each(|v| *v = *v * a + b);
            }
        });
        x
    }

    pub fn forward_train(&mut self, x: Tensor<S>) -> Tensor<S> {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.channels(), "batch-norm channels");
        let hw = h * w;
        let m = (n * hw) as f64;
        assert!(n * hw > 0, "batch-norm needs a non-empty batch");
        let stats: Vec<(f64, f64)> = (0..c)
            .into_par_iter()
            .map(|ch| {
                let planes = || (0..n).flat_map(|i| x.data[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter());
                let mean = planes().map(|v| v.as_f64()).sum::<f64>() / m;
                let var = planes().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / m;
                (mean, var)
            })
            .collect();
        let inv_std: Vec<f64> = stats.iter().map(|&(_, var)| 1.0 / (var + self.eps).sqrt()).collect();
        let mut xhat = x;
        let coef: Vec<(S, S)> = stats
            .iter()
            .zip(&inv_std)
            .map(|(&(mean, _), &inv)| (S::from_f64_lossy(inv), S::from_f64_lossy(-mean * inv)))
            .collect();
        let len = xhat.sample_len();
        xhat.data.par_chunks_mut(len).for_each(|s| {
            for (plane, &(a, b)) in s.chunks_mut(hw).zip(&coef) {
                plane.iter_mut().for_each(|v| *v = *v * a + b);
            }
        });
        let mut y = xhat.clone();
        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        y.data.par_chunks_mut(len).for_each(|s| {
            for (ch, plane) in s.chunks_mut(hw).enumerate() {
                plane.iter_mut().for_each(|v| *v = *v * gamma[ch] + beta[ch]);
            }
        });
        let mom = self.momentum;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (ch, &(mean, var)) in stats.iter().enumerate() {
            let rm = self.running_mean[ch].as_f64();
            let rv = self.running_var[ch].as_f64();
            self.running_mean[ch] = S::from_f64_lossy((1.0 - mom) * rm + mom * mean);
            self.running_var[ch] = S::from_f64_lossy((1.0 - mom) * rv + mom * var * unbias);
        }
        self.cache.put(BnCache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, mut gy: Tensor<S>) -> Tensor<S> {
        let BnCache { xhat, inv_std } = self.cache.take("batch-norm");
        let [n, c, h, w] = xhat.shape;
        assert_eq!(gy.shape, xhat.shape, "batch-norm grad shape");
        let hw = h * w;
        let m = (n * hw) as f64;
        let sums: Vec<(f64, f64)> = (0..c)
            .into_par_iter()
            .map(|ch| {
                let mut db = 0.0;
                let mut dg = 0.0;
                for i in 0..n {
                    let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                    for (g, xh) in gy.data[r.clone()].iter().zip(&xhat.data[r]) {
                        db += g.as_f64();
                        dg += g.as_f64() * xh.as_f64();
                    }
                }
                (db, dg)
            })
            .collect();
        let coef: Vec<(S, S, S)> = (0..c)
            .map(|ch| {
                let (db, dg) = sums[ch];
                let k = self.gamma.value[ch].as_f64() * inv_std[ch] / m;
                // dx = k * (m * dy - db - xhat * dg)
                (S::from_f64_lossy(k * m), S::from_f64_lossy(-k * db), S::from_f64_lossy(-k * dg))
            })
            .collect();
        let len = gy.sample_len();
        gy.data
            .par_chunks_mut(len)
            .zip(xhat.data.par_chunks(len))
            .for_each(|(g, xh)| {
                for ((gp, xp), &(a, b, d)) in g.chunks_mut(hw).zip(xh.chunks(hw)).zip(&coef) {
                    for (gv, &xv) in gp.iter_mut().zip(xp) {
                        *gv = a * *gv + b + d * xv;
                    }
                }
            });
        for (ch, &(db, dg)) in sums.iter().enumerate() {
            self.beta.grad[ch] += S::from_f64_lossy(db);
            self.gamma.grad[ch] += S::from_f64_lossy(dg);
        }
        gy
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, S>) {
        f(&format!("{prefix}.weight"), Slot::Param(&mut self.gamma));
        f(&format!("{prefix}.bias"), Slot::Param(&mut self.beta));
        f(&format!("{prefix}.running_mean"), Slot::Buffer(&mut self.running_mean));
        f(&format!("{prefix}.running_var"), Slot::Buffer(&mut self.running_var));
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Cache<Vec<bool>>,
}

pub fn relu<S: Scalar>(mut x: Tensor<S>) -> Tensor<S> {
    x.data.iter_mut().for_each(|v| {
        if *v <= S::zero() {
            *v = S::zero()
        }
    });
    x
}

impl Relu {
    pub fn forward_train<S: Scalar>(&mut self, mut x: Tensor<S>) -> Tensor<S> {
        let mask: Vec<bool> = x.data.iter().map(|&v| v > S::zero()).collect();
        for (v, &keep) in x.data.iter_mut().zip(&mask) {
            if !keep {
                *v = S::zero();
            }
        }
        self.mask.put(mask);
        x
    }

    pub fn backward<S: Scalar>(&mut self, mut gy: Tensor<S>) -> Tensor<S> {
        let mask = self.mask.take("relu");
        assert_eq!(mask.len(), gy.data.len(), "relu grad shape");
        for (g, keep) in gy.data.iter_mut().zip(mask) {
            if !keep {
                *g = S::zero();
            }
        }
        gy
    }

    pub fn clear_cache(&mut self) {
        self.mask.clear();
    }
}

/// Max pooling; padded positions never win.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Cache<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
            cache: Cache::default(),
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        assert!(h + 2 * self.pad >= self.kernel && w + 2 * self.pad >= self.kernel, "pool input too small");
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn run<S: Scalar>(&self, x: &Tensor<S>) -> (Tensor<S>, Vec<u32>) {
        let [n, c, h, w] = x.shape;
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut arg = vec![0u32; out.data.len()];
        if out.data.is_empty() {
            return (out, arg);
        }
        out.data
            .par_chunks_mut(oh * ow)
            .zip(arg.par_chunks_mut(oh * ow))
            .zip(x.data.par_chunks(h * w))
            .for_each(|((o, a), plane)| {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = S::neg_infinity();
                        let mut best_i = 0usize;
                        for ky in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let idx = iy as usize * w + ix as usize;
                                if plane[idx] > best {
                                    best = plane[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        o[oy * ow + ox] = best;
                        a[oy * ow + ox] = best_i as u32;
                    }
                }
            });
        (out, arg)
    }

    pub fn forward<S: Scalar>(&self, x: &Tensor<S>) -> Tensor<S> {
        self.run(x).0
    }

    pub fn forward_train<S: Scalar>(&mut self, x: Tensor<S>) -> Tensor<S> {
        let (y, arg) = self.run(&x);
        self.cache.put((arg, x.shape));
        y
    }

    pub fn backward<S: Scalar>(&mut self, gy: Tensor<S>) -> Tensor<S> {
        let (arg, shape) = self.cache.take("max-pool");
        let [_, _, h, w] = shape;
        let ohw = gy.shape[2] * gy.shape[3];
        let mut dx = Tensor::zeros(shape);
        if dx.data.is_empty() {
            return dx;
        }
        dx.data
            .par_chunks_mut(h * w)
            .zip(gy.data.par_chunks(ohw))
            .zip(arg.par_chunks(ohw))
            .for_each(|((d, g), a)| {
                for (&gv, &i) in g.iter().zip(a) {
                    d[i as usize] += gv;
                }
            });
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Mean over the spatial axes, giving `[N, C, 1, 1]`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let [n, c, h, w] = x.shape;
    let hw = h * w;
    let inv = S::from_f64_lossy(1.0 / hw as f64);
    let data = x.data.chunks(hw).map(|p| p.iter().copied().sum::<S>() * inv).collect();
    Tensor::from_vec([n, c, 1, 1], data)
}

pub fn global_avg_pool_backward<S: Scalar>(gy: &Tensor<S>, in_shape: [usize; 4]) -> Tensor<S> {
    let hw = in_shape[2] * in_shape[3];
    let inv = S::from_f64_lossy(1.0 / hw as f64);
    let data = gy.data.iter().flat_map(|&g| std::iter::repeat_n(g * inv, hw)).collect();
    Tensor::from_vec(in_shape, data)
}

/// Fully connected layer on `[N, F, 1, 1]` inputs. Weights are `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub weight: Param<S>,
    pub bias: Param<S>,
    cache: Cache<Tensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::filled(&[outputs, inputs], S::zero()),
            bias: Param::filled(&[outputs], S::zero()),
            cache: Cache::default(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    /// He-uniform weights for layers followed by ReLU.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.inputs() as f64;
        self.weight.fill_uniform(rng, (6.0 / fan_in).sqrt());
    }

    /// Small uniform weights with the given standard deviation.
    pub fn init_small<R: Rng>(&mut self, rng: &mut R, std: f64) {
        self.weight.fill_uniform(rng, std * 3f64.sqrt());
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let n = x.batch();
        assert_eq!(x.sample_len(), self.inputs(), "linear input width");
        let (i, o) = (self.inputs(), self.outputs());
        let mut y = Tensor::zeros([n, o, 1, 1]);
        matmul(n, i, o, &x.data, false, &self.weight.value, true, &mut y.data, false);
        for row in y.data.chunks_mut(o) {
            add_into(row, &self.bias.value);
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor<S>) -> Tensor<S> {
        let y = self.forward(&x);
        self.cache.put(x);
        y
    }

    pub fn backward(&mut self, gy: Tensor<S>) -> Tensor<S> {
        let x = self.cache.take("linear");
        let n = x.batch();
        let (i, o) = (self.inputs(), self.outputs());
        assert_eq!(gy.shape, [n, o, 1, 1], "linear grad shape");
        matmul(o, n, i, &gy.data, true, &x.data, false, &mut self.weight.grad, true);
        for row in gy.data.chunks(o) {
            add_into(&mut self.bias.grad, row);
        }
        let mut dx = Tensor::zeros(x.shape);
        matmul(n, o, i, &gy.data, false, &self.weight.value, false, &mut dx.data, false);
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, S>) {
        f(&format!("{prefix}.weight"), Slot::Param(&mut self.weight));
        f(&format!("{prefix}.bias"), Slot::Param(&mut self.bias));
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Inverted dropout with a seeded mask.
#[derive(Debug, Clone)]
pub struct Dropout<S> {
    pub p: f64,
    mask: Cache<Vec<S>>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        Self {
            p,
            mask: Cache::default(),
        }
    }

    pub fn forward_train(&mut self, mut x: Tensor<S>, seed: u64) -> Tensor<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = S::from_f64_lossy(1.0 / (1.0 - self.p));
        let mask: Vec<S> = (0..x.data.len())
            .map(|_| if rng.gen::<f64>() < self.p { S::zero() } else { keep })
            .collect();
        for (v, &m) in x.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask.put(mask);
        x
    }

    pub fn backward(&mut self, mut gy: Tensor<S>) -> Tensor<S> {
        let mask = self.mask.take("dropout");
        for (g, m) in gy.data.iter_mut().zip(mask) {
            *g *= m;
        }
        gy
    }

    pub fn clear_cache(&mut self) {
        self.mask.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let [n, c, h, w] = x.shape;
        let (k, s, p) = (conv.kernel, conv.stride, conv.pad);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        let mut y = Tensor::zeros([n, conv.cout, oh, ow]);
        for b in 0..n {
            for o in 0..conv.cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |bb| bb.value[o]);
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data[((b * c + ci) * h + iy as usize) * w + ix as usize];
                                    acc += xv * conv.weight.value[((o * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        y.data[((b * conv.cout + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn ramp(shape: [usize; 4]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect())
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 2, 0), (7, 2, 3)] {
            let mut conv = Conv2d::<f64>::new(2, 3, k, s, p, true);
            conv.init(&mut rng);
            conv.bias.as_mut().unwrap().fill_uniform(&mut rng, 1.0);
            let x = ramp([2, 2, 9, 8]);
            let got = conv.forward(&x);
            let want = naive_conv(&x, &conv);
            assert_eq!(got.shape, want.shape);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_batch_norm_is_identity_at_init() {
        let bn = BatchNorm::<f64>::new(3);
        let x = ramp([2, 3, 2, 2]);
        let y = bn.forward(x.clone());
        for (a, b) in x.data.iter().zip(&y.data) {
            assert!((a / (1.0f64 + 1e-5).sqrt() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn train_batch_norm_standardizes() {
        let mut bn = BatchNorm::<f64>::new(2);
        let y = bn.forward_train(ramp([4, 2, 3, 3]));
        for ch in 0..2 {
            let v: Vec<f64> = (0..4).flat_map(|i| y.data[(i * 2 + ch) * 9..(i * 2 + ch + 1) * 9].to_vec()).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn max_pool_picks_first_maximum() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0f64, 3.0, 3.0, 0.0]);
        let mut pool = MaxPool2d::new(2, 2, 0);
        let y = pool.forward_train(x);
        assert_eq!(y.data, vec![3.0]);
        let dx = pool.backward(Tensor::from_vec([1, 1, 1, 1], vec![1.0]));
        assert_eq!(dx.data, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_mask_is_seeded() {
        let x = Tensor::from_vec([1, 64, 1, 1], vec![1.0f64; 64]);
        let mut d = Dropout::new(0.5);
        let a = d.forward_train(x.clone(), 9);
        let b = d.forward_train(x.clone(), 9);
        let c = d.forward_train(x, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn linear_forward() {
        let mut l = Linear::<f64>::new(2, 3);
        l.weight.value = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        l.bias.value = vec![0.5, 0.0, -1.0];
        let y = l.forward(&Tensor::from_vec([1, 2, 1, 1], vec![2.0, 3.0]));
        assert_eq!(y.data, vec![2.5, 3.0, 4.0]);
    }
}
