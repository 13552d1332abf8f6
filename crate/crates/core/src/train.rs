//! Loss, Adam, and the epoch loop.
//!
//! A batch is processed in fixed chunks of [`CHUNK`] samples. Each chunk draws
//! its dropout masks from its own RNG stream and produces a partial gradient;
//! partials are summed in chunk order. The result is therefore identical for
//! any worker-thread count.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Gradients, LayerState, Model, Phase};
use crate::parallel;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Samples per parallel work unit.
pub const CHUNK: usize = 8;

/// Probabilities are clamped to this before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

const TRAIN_STREAM: u64 = 0x0074_7261_696e;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` when there was no validation split.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochMetrics>,
}

impl History {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

pub fn one_hot(label: usize, num_classes: usize) -> Result<Vec<f32>> {
    if label >= num_classes {
        return Err(Error::Index {
            index: label,
            len: num_classes,
        });
    }
    let mut v = vec![0.0; num_classes];
    v[label] = 1.0;
    Ok(v)
}

/// Index of the first maximum.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean categorical cross-entropy and its gradient with respect to the
/// pre-softmax logits, `(p - y) / N`.
pub fn cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if probs.shape() != targets.shape() || probs.rank() != 2 {
        return Err(Error::Shape(format!(
            "cross_entropy: probabilities {:?} vs targets {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let n = probs.shape()[0];
    let inv_n = T::of(1.0 / n as f64);
    let mut loss = 0.0;
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        if y != T::zero() {
            loss -= y.to_f64() * p.to_f64().max(LOG_CLAMP).ln();
        }
    }
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &y)| (p - y) * inv_n)
        .collect();
    Ok((loss / n as f64, Tensor::from_vec(probs.shape(), data)?))
}

/// Label-indexed form: summed loss, correct-prediction count, and the logit
/// gradient `(p - y) / denom`.
fn loss_and_grad<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    denom: usize,
) -> (f64, usize, Tensor<T>) {
    let k = probs.shape()[1];
    let scale = T::of(1.0 / denom as f64);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, (g, &label)) in probs
        .data()
        .chunks(k)
        .zip(grad.data_mut().chunks_mut(k).zip(labels))
    {
        loss -= row[label].to_f64().max(LOG_CLAMP).ln();
        if argmax(row) == label {
            correct += 1;
        }
        g[label] = g[label] - T::one();
        for v in g.iter_mut() {
            *v = *v * scale;
        }
    }
    (loss, correct, grad)
}

/// One Adam update of a layer at step `t` (1-based). Frozen layers are left
/// untouched, moments included.
pub fn adam_step<T: Scalar>(
    state: &mut LayerState<T>,
    grads: &[Tensor<T>],
    t: u64,
    config: &TrainConfig,
) -> Result<()> {
    if t < 1 {
        return Err(Error::InvalidStep(t));
    }
    if state.frozen {
        return Ok(());
    }
    if grads.len() != state.params.len() {
        return Err(Error::Shape(format!(
            "adam: {} gradients for {} parameter tensors",
            grads.len(),
            state.params.len()
        )));
    }
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - config.beta1), T::of(1.0 - config.beta2));
    let c1 = T::of(1.0 - config.beta1.powi(t as i32));
    let c2 = T::of(1.0 - config.beta2.powi(t as i32));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != state.params[i].shape() {
            return Err(Error::Shape(format!(
                "adam: gradient {:?} for parameter {:?}",
                g.shape(),
                state.params[i].shape()
            )));
        }
        let p = state.params[i].data_mut();
        let m = state.adam_m[i].data_mut();
        let v = state.adam_v[i].data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Advances the model's step counter and applies Adam to every layer that
/// received gradients.
pub fn apply_gradients<T: Scalar>(
    model: &mut Model<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
) -> Result<()> {
    model.step += 1;
    let t = model.step;
    for (state, g) in model.layers.iter_mut().zip(grads) {
        if !g.is_empty() {
            adam_step(state, g, t, config)?;
        }
    }
    Ok(())
}

fn add_grads<T: Scalar>(acc: &mut Gradients<T>, other: Gradients<T>) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(other) {
        if a.is_empty() {
            *a = b;
        } else {
            for (x, y) in a.iter_mut().zip(&b) {
                x.add_assign(y)?;
            }
        }
    }
    Ok(())
}

struct ChunkOut {
    loss: f64,
    correct: usize,
    grads: Option<Gradients<f32>>,
    probs: Option<Tensor<f32>>,
}

fn chunk_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    (0..len.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(len))
        .collect()
}

/// Forward (and backward in train phase) over one batch of sample indices.
fn process_batch(
    model: &Model<f32>,
    data: &Dataset,
    indices: &[usize],
    phase: Phase,
    batch_seed: u64,
    keep_probs: bool,
) -> Result<Vec<ChunkOut>> {
    let ranges = chunk_ranges(indices.len());
    parallel::map_indexed(ranges.len(), parallel::worker_threads(), |c| {
        let idx = &indices[ranges[c].clone()];
        let x = data.batch(idx)?;
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let mut rng = Rng::stream(batch_seed, c as u64);
        let (probs, cache) = model.forward(&x, phase, &mut rng)?;
        let (loss, correct, grad_logits) = loss_and_grad(&probs, &labels, indices.len());
        let grads = match phase {
            Phase::Train => Some(model.backward_from_logits(&cache, &grad_logits)?),
            Phase::Eval => None,
        };
        Ok(ChunkOut {
            loss,
            correct,
            grads,
            probs: keep_probs.then_some(probs),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Dataset-weighted mean loss.
    pub loss: f64,
    pub accuracy: f64,
}

/// One pass over `data`.
///
/// Train phase: shuffles with `rng`, then forward, loss, backward, and an
/// Adam step per batch (the last batch may be short). Eval phase: forward
/// only with dropout disabled, in dataset order.
pub fn run_epoch(
    model: &mut Model<f32>,
    data: &Dataset,
    config: &TrainConfig,
    rng: &mut Rng,
    phase: Phase,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.class_count() != model.class_count() {
        return Err(Error::ClassMismatch(format!(
            "dataset has {} classes, model head has {}",
            data.class_count(),
            model.class_count()
        )));
    }
    config.validate()?;
    let order = match phase {
        Phase::Train => rng.shuffle_indices(data.len()),
        Phase::Eval => (0..data.len()).collect(),
    };
    let mut loss = 0.0;
    let mut correct = 0;
    for batch in order.chunks(config.batch_size) {
        let seed = rng.next_u64();
        let mut grads: Option<Gradients<f32>> = None;
        for out in process_batch(model, data, batch, phase, seed, false)? {
            loss += out.loss;
            correct += out.correct;
            if let Some(g) = out.grads {
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => add_grads(acc, g)?,
                }
            }
        }
        if let Some(g) = grads {
            apply_gradients(model, &g, config)?;
        }
    }
    let n = data.len() as f64;
    Ok(EpochStats {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// [`fit`] with a callback after each epoch.
pub fn fit_with(
    model: &mut Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<History> {
    config.validate()?;
    if train.class_names != val.class_names && !val.is_empty() {
        return Err(Error::ClassMismatch(
            "train and validation splits have different class lists".into(),
        ));
    }
    let mut rng = Rng::stream(config.seed, TRAIN_STREAM);
    let mut history = History::default();
    for epoch in 1..=config.epochs {
        let mut epoch_rng = rng.fork();
        let tr = run_epoch(model, train, config, &mut epoch_rng, Phase::Train)?;
        let va = if val.is_empty() {
            None
        } else {
            Some(run_epoch(
                model,
                val,
                config,
                &mut Rng::new(0),
                Phase::Eval,
            )?)
        };
        let m = EpochMetrics {
            epoch,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.map(|s| s.loss),
            val_acc: va.map(|s| s.accuracy),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} val_loss {} val_acc {}",
            config.epochs,
            m.train_loss,
            m.train_acc,
            m.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            m.val_acc.map_or("-".into(), |v| format!("{v:.4}")),
        );
        on_epoch(&m);
        history.epochs.push(m);
    }
    Ok(history)
}

/// Trains for `config.epochs` epochs, evaluating on `val` (may be empty)
/// after each.
pub fn fit(
    model: &mut Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<History> {
    fit_with(model, train, val, config, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePrediction {
    pub true_label: usize,
    pub predicted: usize,
    /// Probability of the predicted class.
    pub confidence: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[i][j]` counts samples of class `i` predicted as `j`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<SamplePrediction>,
}

pub fn evaluate(model: &Model<f32>, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.class_count();
    if data.class_count() != k {
        return Err(Error::ClassMismatch(format!(
            "dataset has {} classes, model head has {k}",
            data.class_count()
        )));
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(data.len());
    let mut confusion = vec![vec![0; k]; k];
    for out in process_batch(model, data, &order, Phase::Eval, 0, true)? {
        loss += out.loss;
        let probs = out.probs.expect("probabilities requested");
        for row in probs.data().chunks(k) {
            let i = predictions.len();
            let predicted = argmax(row);
            let true_label = data.labels[i];
            confusion[true_label][predicted] += 1;
            predictions.push(SamplePrediction {
                true_label,
                predicted,
                confidence: row[predicted],
            });
        }
    }
    let correct = predictions
        .iter()
        .filter(|p| p.true_label == p.predicted)
        .count();
    let n = data.len() as f64;
    Ok(EvalReport {
        loss: loss / n,
        accuracy: correct as f64 / n,
        confusion,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, ModelSpec};

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(2, 5).unwrap(), vec![0., 0., 1., 0., 0.]);
        assert_eq!(one_hot(0, 1).unwrap(), vec![1.]);
        assert!(matches!(one_hot(5, 5), Err(Error::Index { .. })));
        for n in 1..=50 {
            for k in 0..n {
                assert_eq!(argmax(&one_hot(k, n).unwrap()), k);
            }
        }
    }

    fn probs(rows: &[&[f64]]) -> Tensor<f64> {
        let k = rows[0].len();
        Tensor::from_vec(&[rows.len(), k], rows.concat()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = cross_entropy(&probs(&[&[1., 0., 0.]]), &probs(&[&[1., 0., 0.]])).unwrap();
        assert!(l.abs() < 1e-9);
        let (l, _) = cross_entropy(&probs(&[&[0.25, 0.75]]), &probs(&[&[0., 1.]])).unwrap();
        assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((l - 0.287682).abs() < 1e-6);
        let u = vec![1.0 / 43.0; 43];
        let mut y = vec![0.0; 43];
        y[7] = 1.0;
        let (l, _) = cross_entropy(&probs(&[&u]), &probs(&[&y])).unwrap();
        assert!((l - 43f64.ln()).abs() < 1e-9);
        assert!((l - 3.7612).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_clamps_zero() {
        let (l, _) = cross_entropy(&probs(&[&[1., 0.]]), &probs(&[&[0., 1.]])).unwrap();
        assert!((l - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_shape_mismatch() {
        let r = cross_entropy(&probs(&[&[0.5, 0.5]]), &probs(&[&[1., 0., 0.]]));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    fn layer(values: &[f64]) -> LayerState<f64> {
        LayerState::from_params(vec![
            Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()
        ])
    }

    #[test]
    fn adam_first_step() {
        let mut s = layer(&[0.0]);
        let g = vec![Tensor::from_vec(&[1], vec![1.0]).unwrap()];
        adam_step(&mut s, &g, 1, &TrainConfig::default()).unwrap();
        assert!((s.params[0].data()[0] + 0.001).abs() < 1e-8);
    }

    #[test]
    fn adam_zero_gradient_only_decays() {
        let cfg = TrainConfig::default();
        let g = vec![Tensor::zeros(&[2]).unwrap()];
        for t in [1, 7, 1000] {
            let mut fresh = layer(&[1.5, -2.0]);
            adam_step(&mut fresh, &g, t, &cfg).unwrap();
            assert_eq!(fresh, layer(&[1.5, -2.0]));
        }
        let mut s = layer(&[1.5, -2.0]);
        s.adam_m[0] = Tensor::from_vec(&[2], vec![0.2, 0.4]).unwrap();
        s.adam_v[0] = Tensor::from_vec(&[2], vec![0.01, 0.04]).unwrap();
        adam_step(&mut s, &g, 3, &cfg).unwrap();
        assert_eq!(s.adam_m[0].data(), &[0.9 * 0.2, 0.9 * 0.4]);
        assert_eq!(s.adam_v[0].data(), &[0.999 * 0.01, 0.999 * 0.04]);
    }

    #[test]
    fn adam_frozen_untouched() {
        let mut s = layer(&[0.3, 0.7]);
        s.frozen = true;
        let before = s.clone();
        let g = vec![Tensor::from_vec(&[2], vec![5.0, -3.0]).unwrap()];
        for t in 1..=10 {
            adam_step(&mut s, &g, t, &TrainConfig::default()).unwrap();
        }
        assert_eq!(s, before);
    }

    #[test]
    fn adam_rejects_step_zero() {
        let mut s = layer(&[0.0]);
        let g = vec![Tensor::zeros(&[1]).unwrap()];
        assert!(matches!(
            adam_step(&mut s, &g, 0, &TrainConfig::default()),
            Err(Error::InvalidStep(0))
        ));
    }

    #[test]
    fn adam_sign_symmetry() {
        let cfg = TrainConfig::default();
        let mut a = layer(&[0.5, -0.25, 1.0]);
        let mut b = a.clone();
        let g = Tensor::from_vec(&[3], vec![0.3, -2.0, 7.0]).unwrap();
        for t in 1..=5 {
            adam_step(&mut a, std::slice::from_ref(&g), t, &cfg).unwrap();
            adam_step(&mut b, &[g.map(|x| -x)], t, &cfg).unwrap();
        }
        let start = [0.5, -0.25, 1.0];
        for (i, s0) in start.iter().enumerate() {
            let da = a.params[0].data()[i] - s0;
            let db = b.params[0].data()[i] - s0;
            assert!((da + db).abs() < 1e-12, "{da} {db}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                val_fraction: 1.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    fn tiny_dataset(n_per_class: usize) -> Dataset {
        let mut ds = Dataset::empty(vec!["a".into(), "b".into()], "tiny");
        ds.image_shape = [1, 4, 4];
        let mut rng = Rng::new(1);
        for c in 0..2 {
            for i in 0..n_per_class {
                let img: Vec<f32> = (0..16)
                    .map(|_| {
                        rng.uniform(-0.2, 0.2).unwrap() as f32 + if c == 0 { 0.5 } else { -0.5 }
                    })
                    .collect();
                ds.push(&img, c, format!("{c}/{i}")).unwrap();
            }
        }
        ds
    }

    fn tiny_model(seed: u64) -> Model<f32> {
        let spec = ModelSpec {
            input_shape: [1, 4, 4],
            layers: vec![
                LayerSpec::conv(1, 2, 3),
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::dense(8, 2),
                LayerSpec::Softmax,
            ],
            class_count: 2,
        };
        Model::new(spec, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn fit_bookkeeping_and_determinism() {
        let ds = tiny_dataset(10);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..Default::default()
        };
        let mut m1 = tiny_model(3);
        let mut m2 = tiny_model(3);
        let h1 = fit(&mut m1, &ds, &ds, &cfg).unwrap();
        let h2 = fit(&mut m2, &ds, &ds, &cfg).unwrap();
        assert_eq!(h1.len(), 5);
        assert_eq!(
            h1.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        // 20 samples, batch 4 -> 5 steps per epoch
        assert_eq!(m1.step, 25);
        for e in &h1.epochs {
            assert!((0.0..=1.0).contains(&e.train_acc));
            assert!(e.train_loss >= 0.0);
        }
    }

    #[test]
    fn empty_split_rejected_and_val_optional() {
        let ds = tiny_dataset(3);
        let empty = Dataset::empty(ds.class_names.clone(), "none");
        let mut m = tiny_model(0);
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(
            run_epoch(&mut m, &empty, &cfg, &mut Rng::new(0), Phase::Train),
            Err(Error::EmptyDataset)
        ));
        let h = fit(&mut m, &ds, &empty, &cfg).unwrap();
        assert_eq!(h.epochs[0].val_acc, None);
        assert!(matches!(evaluate(&m, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn evaluate_recount() {
        let ds = tiny_dataset(6);
        let mut m = tiny_model(5);
        fit(
            &mut m,
            &ds,
            &ds,
            &TrainConfig {
                epochs: 3,
                batch_size: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let r = evaluate(&m, &ds).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, ds.len());
        let recount = r
            .predictions
            .iter()
            .filter(|p| p.true_label == p.predicted)
            .count() as f64
            / ds.len() as f64;
        assert_eq!(recount, r.accuracy);
        let diag: usize = (0..2).map(|i| r.confusion[i][i]).sum();
        assert_eq!(diag as f64 / ds.len() as f64, r.accuracy);
    }

    #[test]
    fn eval_epoch_matches_evaluate() {
        let ds = tiny_dataset(5);
        let mut m = tiny_model(8);
        let cfg = TrainConfig::default();
        let s = run_epoch(&mut m, &ds, &cfg, &mut Rng::new(0), Phase::Eval).unwrap();
        let r = evaluate(&m, &ds).unwrap();
        assert_eq!(s.accuracy, r.accuracy);
        assert!((s.loss - r.loss).abs() < 1e-12);
        assert_eq!(m.step, 0);
    }
}
