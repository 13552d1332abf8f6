//! Forward and backward kernels for each layer kind.
//!
//! Convolution lowers each sample to an im2col matrix and runs a plain
//! row-major matrix product; loops are ordered so the innermost one walks
//! contiguous memory.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

fn expect_rank<T: Scalar>(t: &Tensor<T>, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Shape(format!(
            "{what} expects rank-{rank} input, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Geometry of one valid-padding convolution.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn new<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Self> {
        expect_rank(input, 4, "conv2d")?;
        expect_rank(weights, 4, "conv2d weights")?;
        let (batch, in_c, in_h, in_w) = (
            input.shape()[0],
            input.shape()[1],
            input.shape()[2],
            input.shape()[3],
        );
        let (out_c, w_in, kh, kw) = (
            weights.shape()[0],
            weights.shape()[1],
            weights.shape()[2],
            weights.shape()[3],
        );
        if w_in != in_c {
            return Err(Error::Shape(format!(
                "conv2d input has {in_c} channels, weights expect {w_in}"
            )));
        }
        if bias.shape() != [out_c] {
            return Err(Error::Shape(format!(
                "conv2d bias shape {:?}, expected [{out_c}]",
                bias.shape()
            )));
        }
        if kh > in_h || kw > in_w {
            return Err(Error::Shape(format!(
                "conv2d kernel {kh}x{kw} larger than input {in_h}x{in_w}"
            )));
        }
        Ok(ConvGeom {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            out_h: in_h - kh + 1,
            out_w: in_w - kw + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// cols[k][p] with k = (c, i, j) and p = (y, x).
    fn im2col<T: Scalar>(&self, sample: &[T], cols: &mut [T]) {
        let p_len = self.pixels();
        for c in 0..self.in_c {
            let plane = &sample[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let k = (c * self.kh + i) * self.kw + j;
                    let row = &mut cols[k * p_len..(k + 1) * p_len];
                    for y in 0..self.out_h {
                        let src =
                            &plane[(y + i) * self.in_w + j..(y + i) * self.in_w + j + self.out_w];
                        row[y * self.out_w..(y + 1) * self.out_w].copy_from_slice(src);
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, cols: &[T], sample_grad: &mut [T]) {
        let p_len = self.pixels();
        for c in 0..self.in_c {
            let plane =
                &mut sample_grad[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let k = (c * self.kh + i) * self.kw + j;
                    let row = &cols[k * p_len..(k + 1) * p_len];
                    for y in 0..self.out_h {
                        let dst = &mut plane
                            [(y + i) * self.in_w + j..(y + i) * self.in_w + j + self.out_w];
                        for (d, &s) in dst
                            .iter_mut()
                            .zip(&row[y * self.out_w..(y + 1) * self.out_w])
                        {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Valid-padding, stride-1 convolution. `weights` is `[out, in, kh, kw]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input, weights, bias)?;
    let (k_len, p_len) = (g.patch_len(), g.pixels());
    let mut out = Tensor::zeros(&[g.batch, g.out_c, g.out_h, g.out_w])?;
    let mut cols = vec![T::zero(); k_len * p_len];
    let w = weights.data();
    for n in 0..g.batch {
        g.im2col(input.item(n), &mut cols);
        let out_n = &mut out.data_mut()[n * g.out_c * p_len..(n + 1) * g.out_c * p_len];
        for o in 0..g.out_c {
            let row = &mut out_n[o * p_len..(o + 1) * p_len];
            row.fill(bias.data()[o]);
            for k in 0..k_len {
                axpy(w[o * k_len + k], &cols[k * p_len..(k + 1) * p_len], row);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ParamGrads<T> {
    /// Gradient with respect to the layer input, when requested.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ParamGrads<T>> {
    let zero_bias = Tensor::zeros(&[weights.shape()[0]])?;
    let g = ConvGeom::new(input, weights, &zero_bias)?;
    if grad_out.shape() != [g.batch, g.out_c, g.out_h, g.out_w] {
        return Err(Error::Shape(format!(
            "conv2d upstream gradient {:?}, expected {:?}",
            grad_out.shape(),
            [g.batch, g.out_c, g.out_h, g.out_w]
        )));
    }
    let (k_len, p_len) = (g.patch_len(), g.pixels());
    let mut dw = weights.zeros_like();
    let mut db = zero_bias;
    let mut din = if need_input_grad {
        Some(input.zeros_like())
    } else {
        None
    };
    let mut cols = vec![T::zero(); k_len * p_len];
    let mut dcols = vec![T::zero(); k_len * p_len];
    let w = weights.data();
    for n in 0..g.batch {
        g.im2col(input.item(n), &mut cols);
        let g_n = grad_out.item(n);
        for o in 0..g.out_c {
            let g_row = &g_n[o * p_len..(o + 1) * p_len];
            db.data_mut()[o] = db.data()[o] + g_row.iter().copied().sum::<T>();
            let dw_row = &mut dw.data_mut()[o * k_len..(o + 1) * k_len];
            for (k, dwk) in dw_row.iter_mut().enumerate() {
                *dwk = *dwk + dot(g_row, &cols[k * p_len..(k + 1) * p_len]);
            }
        }
        if let Some(din) = din.as_mut() {
            dcols.fill(T::zero());
            for o in 0..g.out_c {
                let g_row = &g_n[o * p_len..(o + 1) * p_len];
                for k in 0..k_len {
                    axpy(
                        w[o * k_len + k],
                        g_row,
                        &mut dcols[k * p_len..(k + 1) * p_len],
                    );
                }
            }
            let step = g.in_c * g.in_h * g.in_w;
            g.col2im_add(&dcols, &mut din.data_mut()[n * step..(n + 1) * step]);
        }
    }
    Ok(ParamGrads {
        input: din,
        weights: dw,
        bias: db,
    })
}

/// 2x2 stride-2 max pooling. Returns pooled output and, for every output
/// element, the flat input offset of its window maximum.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    expect_rank(input, 4, "maxpool2x2")?;
    let [n, c, h, w] = [
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    ];
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "maxpool2x2 needs spatial dims >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow])?;
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let src = input.data();
    let dst = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for off in [1, w, w + 1] {
                    let cand = base + 2 * y * w + 2 * x + off;
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[o] = src[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool2x2 upstream gradient has {} elements, expected {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut din = Tensor::zeros(input_shape)?;
    let d = din.data_mut();
    for (&src, &g) in argmax.iter().zip(grad_out.data()) {
        d[src] = d[src] + g;
    }
    Ok(din)
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes the upstream gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} vs input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must be in (0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout in the training phase. Returns the output and the keep mask.
pub fn dropout_forward_train<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Vec<bool>)> {
    check_rate(rate)?;
    let keep_prob = 1.0 - rate;
    let scale = T::of(keep_prob);
    let mask: Vec<bool> = (0..input.len())
        .map(|_| rng.next_f64() < keep_prob)
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &k)| if k { x / scale } else { T::zero() })
        .collect();
    Ok((Tensor::from_vec(input.shape(), data)?, mask))
}

pub fn dropout_backward<T: Scalar>(
    mask: &[bool],
    rate: f64,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if mask.len() != grad_out.len() {
        return Err(Error::Shape("dropout mask/gradient length mismatch".into()));
    }
    let scale = T::of(1.0 - rate);
    let data = grad_out
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &k)| if k { g / scale } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

fn dense_dims<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(usize, usize, usize)> {
    expect_rank(input, 2, "dense")?;
    expect_rank(weights, 2, "dense weights")?;
    let (n, f) = (input.shape()[0], input.shape()[1]);
    let (wf, m) = (weights.shape()[0], weights.shape()[1]);
    if wf != f {
        return Err(Error::Shape(format!(
            "dense input has {f} features, weights expect {wf}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [m] {
            return Err(Error::Shape(format!(
                "dense bias shape {:?}, expected [{m}]",
                b.shape()
            )));
        }
    }
    Ok((n, f, m))
}

/// `y = x W + b` with `x: [N, F]`, `W: [F, M]`.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, f, m) = dense_dims(input, weights, Some(bias))?;
    let mut out = Tensor::zeros(&[n, m])?;
    let w = weights.data();
    for r in 0..n {
        let x = &input.data()[r * f..(r + 1) * f];
        let y = &mut out.data_mut()[r * m..(r + 1) * m];
        y.copy_from_slice(bias.data());
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, &w[i * m..(i + 1) * m], y);
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ParamGrads<T>> {
    let (n, f, m) = dense_dims(input, weights, None)?;
    if grad_out.shape() != [n, m] {
        return Err(Error::Shape(format!(
            "dense upstream gradient {:?}, expected [{n}, {m}]",
            grad_out.shape()
        )));
    }
    let w = weights.data();
    let mut dw = weights.zeros_like();
    let mut db = Tensor::zeros(&[m])?;
    let mut dx = if need_input_grad {
        Some(input.zeros_like())
    } else {
        None
    };
    for r in 0..n {
        let x = &input.data()[r * f..(r + 1) * f];
        let g = &grad_out.data()[r * m..(r + 1) * m];
        for (b, &gi) in db.data_mut().iter_mut().zip(g) {
            *b = *b + gi;
        }
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, g, &mut dw.data_mut()[i * m..(i + 1) * m]);
        }
        if let Some(dx) = dx.as_mut() {
            let row = &mut dx.data_mut()[r * f..(r + 1) * f];
            for (i, d) in row.iter_mut().enumerate() {
                *d = dot(g, &w[i * m..(i + 1) * m]);
            }
        }
    }
    Ok(ParamGrads {
        input: dx,
        weights: dw,
        bias: db,
    })
}

pub fn flatten_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank(input, 4, "flatten")?;
    let n = input.shape()[0];
    let features = input.len() / n;
    input.clone().reshape(&[n, features])
}

pub fn flatten_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    grad_out.clone().reshape(input_shape)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank(input, 2, "softmax")?;
    let k = input.shape()[1];
    let mut out = input.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of softmax: `dx = p * (g - sum(g * p))` per row.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if probs.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "softmax gradient {:?} vs output {:?}",
            grad_out.shape(),
            probs.shape()
        )));
    }
    let k = probs.shape()[1];
    let mut dx = grad_out.clone();
    for (p, d) in probs.data().chunks(k).zip(dx.data_mut().chunks_mut(k)) {
        let s = dot(p, d);
        for (di, &pi) in d.iter_mut().zip(p) {
            *di = pi * (*di - s);
        }
    }
    Ok(dx)
}
