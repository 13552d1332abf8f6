use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    MaxPool2x2,
    ReLU,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv2D {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            padding: Padding::Valid,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            in_features,
            out_features,
        }
    }

    /// Lower-case kind name used in summaries.
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::MaxPool2x2 => "max_pool2x2",
            LayerSpec::ReLU => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                if [in_channels, out_channels, kernel_h, kernel_w].contains(&0) {
                    return Err(Error::InvalidParameter(format!(
                        "conv2d dimensions must be >= 1: {self:?}"
                    )));
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "dense dimensions must be >= 1: {self:?}"
                    )));
                }
            }
            LayerSpec::Dropout { rate } if rate <= 0.0 || rate >= 1.0 || rate.is_nan() => {
                return Err(Error::InvalidParameter(format!(
                    "dropout rate must be in (0, 1), got {rate}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Shapes of the learnable tensors, weights first.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel_h, kernel_w],
                vec![out_channels],
            ],
            LayerSpec::Dense {
                in_features,
                out_features,
            } => vec![vec![in_features, out_features], vec![out_features]],
            _ => Vec::new(),
        }
    }

    /// Number of learnable scalars.
    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2D {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            LayerSpec::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Output shape (without the batch axis) for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let rank_err = |want: usize| {
            Error::Shape(format!(
                "{} expects rank-{want} input, got {input:?}",
                self.kind_name()
            ))
        };
        match *self {
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let [c, h, w] = <[usize; 3]>::try_from(input).map_err(|_| rank_err(3))?;
                if c != in_channels {
                    return Err(Error::Shape(format!(
                        "conv2d expects {in_channels} channels, got {c}"
                    )));
                }
                if kernel_h > h || kernel_w > w {
                    return Err(Error::Shape(format!(
                        "conv2d kernel {kernel_h}x{kernel_w} exceeds input {h}x{w}"
                    )));
                }
                Ok(vec![out_channels, h - kernel_h + 1, w - kernel_w + 1])
            }
            LayerSpec::MaxPool2x2 => {
                let [c, h, w] = <[usize; 3]>::try_from(input).map_err(|_| rank_err(3))?;
                if h < 2 || w < 2 {
                    return Err(Error::Shape(format!(
                        "max_pool2x2 needs spatial dims >= 2, got {h}x{w}"
                    )));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerSpec::Flatten => {
                if input.len() != 3 {
                    return Err(rank_err(3));
                }
                Ok(vec![input.iter().product()])
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(Error::Shape(format!(
                        "dense expects [{in_features}] features, got {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(rank_err(1));
                }
                Ok(input.to_vec())
            }
            LayerSpec::ReLU | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

/// Learnable parameters of one layer plus its Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T = f32> {
    pub params: Vec<Tensor<T>>,
    pub adam_m: Vec<Tensor<T>>,
    pub adam_v: Vec<Tensor<T>>,
    pub frozen: bool,
}

impl<T: Scalar> LayerState<T> {
    pub fn empty() -> Self {
        LayerState {
            params: Vec::new(),
            adam_m: Vec::new(),
            adam_v: Vec::new(),
            frozen: false,
        }
    }

    /// Wraps existing parameters with zeroed moments.
    pub fn from_params(params: Vec<Tensor<T>>) -> Self {
        let zeros: Vec<_> = params.iter().map(Tensor::zeros_like).collect();
        LayerState {
            adam_m: zeros.clone(),
            adam_v: zeros,
            params,
            frozen: false,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> LayerState<U> {
        LayerState {
            params: self.params.iter().map(Tensor::cast).collect(),
            adam_m: self.adam_m.iter().map(Tensor::cast).collect(),
            adam_v: self.adam_v.iter().map(Tensor::cast).collect(),
            frozen: self.frozen,
        }
    }
}

/// He-normal weights (stddev `sqrt(2 / fan_in)`), zero biases, zero moments.
pub fn init_params<T: Scalar>(spec: &LayerSpec, rng: &mut Rng) -> Result<LayerState<T>> {
    spec.validate()?;
    if !spec.is_parametric() {
        return Ok(LayerState::empty());
    }
    let shapes = spec.param_shapes();
    let std = (2.0 / spec.fan_in() as f64).sqrt();
    let w_len: usize = shapes[0].iter().product();
    let mut w = Vec::with_capacity(w_len);
    for _ in 0..w_len {
        w.push(T::of(rng.normal(0.0, std)?));
    }
    let weights = Tensor::from_vec(&shapes[0], w)?;
    let bias = Tensor::zeros(&shapes[1])?;
    Ok(LayerState::from_params(vec![weights, bias]))
}
