use std::fmt;

use serde::{Deserialize, Serialize};

use super::layer::{init_params, LayerSpec, LayerState};
use super::ops;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Architecture descriptor: input geometry, ordered layers, class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
}

impl ModelSpec {
    /// The LeNet-style network used throughout:
    /// conv(3->32) relu pool conv(32->64) relu pool flatten dropout(0.25)
    /// dense(2304->64) relu dropout(0.5) dense(64->K) softmax.
    pub fn canonical(class_count: usize) -> Self {
        ModelSpec {
            input_shape: [3, 32, 32],
            layers: vec![
                LayerSpec::conv(3, 32, 3),
                LayerSpec::ReLU,
                LayerSpec::MaxPool2x2,
                LayerSpec::conv(32, 64, 3),
                LayerSpec::ReLU,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::dense(6 * 6 * 64, 64),
                LayerSpec::ReLU,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::dense(64, class_count),
                LayerSpec::Softmax,
            ],
            class_count,
        }
    }

    /// Per-layer output shapes (batch axis omitted).
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.to_vec();
        if shape.contains(&0) {
            return Err(Error::InvalidShape(shape));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", layer.kind_name())))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::InvalidArchitecture(
                "class_count must be >= 1".into(),
            ));
        }
        self.infer_shapes()?;
        self.head_index().map(|_| ())
    }

    /// Index of the Dense layer feeding the final Softmax.
    pub fn head_index(&self) -> Result<usize> {
        let n = self.layers.len();
        if n < 2 || self.layers[n - 1] != LayerSpec::Softmax {
            return Err(Error::InvalidArchitecture(
                "final layer must be Softmax".into(),
            ));
        }
        match self.layers[n - 2] {
            LayerSpec::Dense { out_features, .. } if out_features == self.class_count => Ok(n - 2),
            LayerSpec::Dense { out_features, .. } => Err(Error::InvalidArchitecture(format!(
                "head has {out_features} outputs but class_count is {}",
                self.class_count
            ))),
            _ => Err(Error::InvalidArchitecture(
                "Softmax must be preceded by a Dense head".into(),
            )),
        }
    }

    /// Summary with every layer counted as trainable.
    pub fn summary(&self) -> Result<Summary> {
        Summary::build(self, &vec![false; self.layers.len()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub trainable: bool,
}

/// Layer table with total and trainable parameter counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub total_params: usize,
    pub trainable_params: usize,
}

impl Summary {
    fn build(spec: &ModelSpec, frozen: &[bool]) -> Result<Self> {
        let shapes = spec.infer_shapes()?;
        let mut counters = std::collections::HashMap::new();
        let mut rows = Vec::with_capacity(spec.layers.len());
        for ((layer, shape), &frozen) in spec.layers.iter().zip(shapes).zip(frozen) {
            let k = counters.entry(layer.kind_name()).or_insert(0usize);
            *k += 1;
            rows.push(SummaryRow {
                name: format!("{}_{}", layer.kind_name(), k),
                output_shape: shape,
                params: layer.param_count(),
                trainable: !frozen,
            });
        }
        let total_params = rows.iter().map(|r| r.params).sum();
        let trainable_params = rows.iter().filter(|r| r.trainable).map(|r| r.params).sum();
        Ok(Summary {
            rows,
            total_params,
            trainable_params,
        })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape_str = |s: &[usize]| {
            let parts: Vec<String> = s.iter().map(usize::to_string).collect();
            format!("[{}]", parts.join(", "))
        };
        writeln!(f, "{:<16} {:<18} {:>10}", "layer", "output shape", "params")?;
        writeln!(f, "{}", "-".repeat(46))?;
        for r in &self.rows {
            let mark = if r.trainable || r.params == 0 {
                ""
            } else {
                " (frozen)"
            };
            writeln!(
                f,
                "{:<16} {:<18} {:>10}{mark}",
                r.name,
                shape_str(&r.output_shape),
                r.params
            )?;
        }
        writeln!(f, "{}", "-".repeat(46))?;
        writeln!(f, "total params: {}", self.total_params)?;
        writeln!(f, "trainable params: {}", self.trainable_params)?;
        write!(
            f,
            "non-trainable params: {}",
            self.total_params - self.trainable_params
        )
    }
}

/// Per-layer values the backward pass needs.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv {
        input: Tensor<T>,
    },
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Relu {
        input: Tensor<T>,
    },
    Dropout {
        mask: Option<Vec<bool>>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Tensor<T>,
    },
    Softmax {
        output: Tensor<T>,
    },
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// Gradients per layer, aligned with `LayerState::params`; empty for layers
/// without parameters or that the backward pass skipped.
pub type Gradients<T> = Vec<Vec<Tensor<T>>>;

/// A model: architecture, per-layer state, and the Adam step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub spec: ModelSpec,
    pub layers: Vec<LayerState<T>>,
    pub step: u64,
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized model; layers draw from `rng` in order.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| init_params(l, rng))
            .collect::<Result<_>>()?;
        Ok(Model {
            spec,
            layers,
            step: 0,
        })
    }

    pub fn canonical(class_count: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(ModelSpec::canonical(class_count), rng)
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn summary(&self) -> Result<Summary> {
        let frozen: Vec<bool> = self.layers.iter().map(|l| l.frozen).collect();
        Summary::build(&self.spec, &frozen)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(LayerState::cast).collect(),
            step: self.step,
        }
    }

    /// Runs all layers; returns class probabilities `[N, K]` and the cache for
    /// [`Model::backward_from_logits`]. Dropout draws from `rng` in train phase only.
    pub fn forward(
        &self,
        batch: &Tensor<T>,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if batch.rank() != 4 || batch.shape()[1..] != self.spec.input_shape {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match model input {:?}",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, (spec, state)) in self.spec.layers.iter().zip(&self.layers).enumerate() {
            let at = |e: Error| match e {
                Error::Shape(m) => Error::Shape(format!("layer {i} ({}): {m}", spec.kind_name())),
                other => other,
            };
            let (y, cache) = match *spec {
                LayerSpec::Conv2D { .. } => {
                    let y =
                        ops::conv2d_forward(&x, &state.params[0], &state.params[1]).map_err(at)?;
                    (y, LayerCache::Conv { input: x })
                }
                LayerSpec::MaxPool2x2 => {
                    let (y, argmax) = ops::maxpool2x2_forward(&x).map_err(at)?;
                    let input_shape = x.shape().to_vec();
                    (
                        y,
                        LayerCache::Pool {
                            input_shape,
                            argmax,
                        },
                    )
                }
                LayerSpec::ReLU => (ops::relu_forward(&x), LayerCache::Relu { input: x }),
                LayerSpec::Dropout { rate } => match phase {
                    Phase::Eval => (x, LayerCache::Dropout { mask: None }),
                    Phase::Train => {
                        let (y, mask) = ops::dropout_forward_train(&x, rate, rng)?;
                        (y, LayerCache::Dropout { mask: Some(mask) })
                    }
                },
                LayerSpec::Flatten => {
                    let y = ops::flatten_forward(&x).map_err(at)?;
                    let input_shape = x.shape().to_vec();
                    (y, LayerCache::Flatten { input_shape })
                }
                LayerSpec::Dense { .. } => {
                    let y =
                        ops::dense_forward(&x, &state.params[0], &state.params[1]).map_err(at)?;
                    (y, LayerCache::Dense { input: x })
                }
                LayerSpec::Softmax => {
                    let y = ops::softmax(&x).map_err(at)?;
                    (y.clone(), LayerCache::Softmax { output: y })
                }
            };
            caches.push(cache);
            x = y;
        }
        Ok((x, ForwardCache { layers: caches }))
    }

    /// Eval-phase probabilities.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        // the rng is untouched in eval phase
        Ok(self.forward(batch, Phase::Eval, &mut Rng::new(0))?.0)
    }

    /// Lowest layer index whose parameters need gradients, if any.
    fn first_trainable(&self) -> Option<usize> {
        self.spec
            .layers
            .iter()
            .zip(&self.layers)
            .position(|(s, st)| s.is_parametric() && !st.frozen)
    }

    /// Backpropagates a gradient taken with respect to the pre-softmax logits
    /// (the fused softmax + cross-entropy form). Frozen layers get no gradients;
    /// propagation stops below the lowest trainable layer.
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        let head = self.spec.head_index()?;
        self.backward_below(cache, grad_logits.clone(), head)
    }

    /// Backpropagates a gradient taken with respect to the output probabilities.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_probs: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        let last = self.layers.len() - 1;
        let LayerCache::Softmax { output } = &cache.layers[last] else {
            return Err(Error::InvalidArchitecture(
                "final layer must be Softmax".into(),
            ));
        };
        let g = ops::softmax_backward(output, grad_probs)?;
        self.backward_below(cache, g, last - 1)
    }

    fn backward_below(
        &self,
        cache: &ForwardCache<T>,
        mut grad: Tensor<T>,
        top: usize,
    ) -> Result<Gradients<T>> {
        let mut grads: Gradients<T> = vec![Vec::new(); self.layers.len()];
        let Some(stop) = self.first_trainable() else {
            return Ok(grads);
        };
        for i in (stop..=top).rev() {
            let state = &self.layers[i];
            let need_input = i > stop;
            grad = match &cache.layers[i] {
                LayerCache::Conv { input } => {
                    let g = ops::conv2d_backward(input, &state.params[0], &grad, need_input)?;
                    if !state.frozen {
                        grads[i] = vec![g.weights, g.bias];
                    }
                    match g.input {
                        Some(x) => x,
                        None => break,
                    }
                }
                LayerCache::Dense { input } => {
                    let g = ops::dense_backward(input, &state.params[0], &grad, need_input)?;
                    if !state.frozen {
                        grads[i] = vec![g.weights, g.bias];
                    }
                    match g.input {
                        Some(x) => x,
                        None => break,
                    }
                }
                LayerCache::Pool {
                    input_shape,
                    argmax,
                } => ops::maxpool2x2_backward(input_shape, argmax, &grad)?,
                LayerCache::Relu { input } => ops::relu_backward(input, &grad)?,
                LayerCache::Dropout { mask } => match (mask, &self.spec.layers[i]) {
                    (Some(mask), LayerSpec::Dropout { rate }) => {
                        ops::dropout_backward(mask, *rate, &grad)?
                    }
                    _ => grad,
                },
                LayerCache::Flatten { input_shape } => ops::flatten_backward(input_shape, &grad)?,
                LayerCache::Softmax { output } => ops::softmax_backward(output, &grad)?,
            };
        }
        Ok(grads)
    }
}
