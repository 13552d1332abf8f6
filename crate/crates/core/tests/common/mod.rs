//! Gradient checks and reference kernels shared by the integration suites.
#![allow(dead_code)]

use signcraft::nn::ops;
use signcraft::nn::{LayerSpec, Model, ModelSpec, Phase};
use signcraft::train::cross_entropy;
use signcraft::{Rng, Tensor};

pub const STEP: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(lo, hi).unwrap()).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error between `analytic` and the central difference of
/// `f` with respect to every element of `x`.
pub fn worst_error(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

/// Conv2D: gradients for input, weights and bias under the loss `<r, conv(x)>`.
pub fn conv_check(rng: &mut Rng) -> f64 {
    let (n, c, o) = (dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 4));
    let (h, w) = (dim(rng, 3, 7), dim(rng, 3, 7));
    let (kh, kw) = (dim(rng, 1, 3.min(h)), dim(rng, 1, 3.min(w)));
    let x = rand_tensor(rng, &[n, c, h, w], -1.0, 1.0);
    let wt = rand_tensor(rng, &[o, c, kh, kw], -1.0, 1.0);
    let b = rand_tensor(rng, &[o], -1.0, 1.0);
    let r = rand_tensor(rng, &[n, o, h - kh + 1, w - kw + 1], -1.0, 1.0);
    let g = ops::conv2d_backward(&x, &wt, &r, true).unwrap();
    let loss = |x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&ops::conv2d_forward(x, wt, b).unwrap(), &r)
    };
    worst_error(&x, g.input.as_ref().unwrap(), |p| loss(p, &wt, &b))
        .max(worst_error(&wt, &g.weights, |p| loss(&x, p, &b)))
        .max(worst_error(&b, &g.bias, |p| loss(&x, &wt, p)))
}

pub fn dense_check(rng: &mut Rng) -> f64 {
    let (n, f, m) = (dim(rng, 1, 4), dim(rng, 1, 12), dim(rng, 1, 8));
    let x = rand_tensor(rng, &[n, f], -1.0, 1.0);
    let wt = rand_tensor(rng, &[f, m], -1.0, 1.0);
    let b = rand_tensor(rng, &[m], -1.0, 1.0);
    let r = rand_tensor(rng, &[n, m], -1.0, 1.0);
    let g = ops::dense_backward(&x, &wt, &r, true).unwrap();
    let loss = |x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&ops::dense_forward(x, wt, b).unwrap(), &r)
    };
    worst_error(&x, g.input.as_ref().unwrap(), |p| loss(p, &wt, &b))
        .max(worst_error(&wt, &g.weights, |p| loss(&x, p, &b)))
        .max(worst_error(&b, &g.bias, |p| loss(&x, &wt, p)))
}

/// Inputs stay at least 1e-2 away from the kink so the finite difference never
/// straddles it.
pub fn relu_check(rng: &mut Rng) -> f64 {
    let shape = [
        dim(rng, 1, 3),
        dim(rng, 1, 4),
        dim(rng, 1, 5),
        dim(rng, 1, 5),
    ];
    let mut x = rand_tensor(rng, &shape, -1.0, 1.0);
    for v in x.data_mut() {
        if v.abs() < 1e-2 {
            *v += 0.05;
        }
    }
    let r = rand_tensor(rng, &shape, -1.0, 1.0);
    let g = ops::relu_backward(&x, &r).unwrap();
    worst_error(&x, &g, |p| dot(&ops::relu_forward(p), &r))
}

/// Every element is distinct by at least 1e-3, so no window has a near-tie
/// that the perturbation could flip.
pub fn maxpool_check(rng: &mut Rng) -> f64 {
    let shape = [
        dim(rng, 1, 2),
        dim(rng, 1, 3),
        dim(rng, 2, 9),
        dim(rng, 2, 9),
    ];
    let len: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..len).map(|i| i as f64 * 1e-2).collect();
    rng.shuffle(&mut values);
    let x = Tensor::from_vec(&shape, values).unwrap();
    let (out, argmax) = ops::maxpool2x2_forward(&x).unwrap();
    let r = rand_tensor(rng, out.shape(), -1.0, 1.0);
    let g = ops::maxpool2x2_backward(x.shape(), &argmax, &r).unwrap();
    worst_error(&x, &g, |p| dot(&ops::maxpool2x2_forward(p).unwrap().0, &r))
}

/// Fused softmax + cross-entropy: `(p - y) / N` against the loss of raw logits.
pub fn softmax_ce_check(rng: &mut Rng) -> f64 {
    let (n, k) = (dim(rng, 1, 5), dim(rng, 2, 10));
    let z = rand_tensor(rng, &[n, k], -3.0, 3.0);
    let mut y = Tensor::<f64>::zeros(&[n, k]).unwrap();
    for row in 0..n {
        let label = rng.below(k as u64) as usize;
        y.data_mut()[row * k + label] = 1.0;
    }
    let loss = |z: &Tensor<f64>| cross_entropy(&ops::softmax(z).unwrap(), &y).unwrap().0;
    let (_, grad) = cross_entropy(&ops::softmax(&z).unwrap(), &y).unwrap();
    worst_error(&z, &grad, loss)
}

/// End-to-end check through a small conv net without dropout.
pub fn network_check(rng: &mut Rng) -> f64 {
    let spec = ModelSpec {
        input_shape: [2, 8, 8],
        layers: vec![
            LayerSpec::conv(2, 3, 3),
            LayerSpec::ReLU,
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::dense(27, 5),
            LayerSpec::ReLU,
            LayerSpec::dense(5, 3),
            LayerSpec::Softmax,
        ],
        class_count: 3,
    };
    let mut model: Model<f64> = Model::new(spec, rng).unwrap();
    let x = rand_tensor(rng, &[2, 2, 8, 8], -1.0, 1.0);
    let mut y = Tensor::<f64>::zeros(&[2, 3]).unwrap();
    y.data_mut()[1] = 1.0;
    y.data_mut()[3] = 1.0;
    let loss = |m: &Model<f64>| {
        let (p, _) = m.forward(&x, Phase::Train, &mut Rng::new(0)).unwrap();
        cross_entropy(&p, &y).unwrap().0
    };
    let (p, cache) = model.forward(&x, Phase::Train, &mut Rng::new(0)).unwrap();
    let (_, g_logits) = cross_entropy(&p, &y).unwrap();
    let grads = model.backward_from_logits(&cache, &g_logits).unwrap();
    let mut worst: f64 = 0.0;
    for (layer, layer_grads) in grads.iter().enumerate() {
        for (t, analytic) in layer_grads.iter().enumerate() {
            for i in 0..analytic.len() {
                let orig = model.layers[layer].params[t].data()[i];
                model.layers[layer].params[t].data_mut()[i] = orig + STEP;
                let up = loss(&model);
                model.layers[layer].params[t].data_mut()[i] = orig - STEP;
                let down = loss(&model);
                model.layers[layer].params[t].data_mut()[i] = orig;
                worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * STEP)));
            }
        }
    }
    worst
}

/// Direct six-loop valid convolution, stride 1.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [o, _, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let (oh, ow) = (h - kh + 1, wd - kw + 1);
    let mut out = vec![0.0; n * o * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b.data()[oi];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                acc += x.data()[((ni * c + ci) * h + y + dy) * wd + xo + dx]
                                    * w.data()[((oi * c + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out[((ni * o + oi) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, o, oh, ow], out).unwrap()
}

/// Worst absolute difference between the library conv and [`naive_conv`] on
/// one random configuration with N<=2, C<=4, H,W<=16, filters<=8.
pub fn conv_oracle_gap(rng: &mut Rng) -> f64 {
    let (n, c, o) = (dim(rng, 1, 2), dim(rng, 1, 4), dim(rng, 1, 8));
    let (h, w) = (dim(rng, 1, 16), dim(rng, 1, 16));
    let (kh, kw) = (dim(rng, 1, h.min(5)), dim(rng, 1, w.min(5)));
    let x = rand_tensor(rng, &[n, c, h, w], -1.0, 1.0);
    let wt = rand_tensor(rng, &[o, c, kh, kw], -1.0, 1.0);
    let b = rand_tensor(rng, &[o], -1.0, 1.0);
    let ours = ops::conv2d_forward(&x, &wt, &b).unwrap();
    let reference = naive_conv(&x, &wt, &b);
    assert_eq!(ours.shape(), reference.shape());
    ours.data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
