//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The page can preview synthetic signs, print the layer table for any class
//! count, and train a model epoch by epoch before classifying fresh samples.
//! The exported functions are thin wrappers over plain Rust so the logic is
//! testable on native targets.

use signcraft::data::synth::{self, SynthClass};
use signcraft::data::{preprocess, Dataset};
use signcraft::nn::{Model, ModelSpec, Phase};
use signcraft::train::{run_epoch, TrainConfig};
use signcraft::{transfer, Error, Result, Rng};
use wasm_bindgen::prelude::*;

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn domain(name: &str) -> Result<Vec<SynthClass>> {
    match name {
        "a" | "A" => Ok(synth::domain_a()),
        "b" | "B" => Ok(synth::domain_b()),
        other => Err(Error::InvalidParameter(format!("unknown domain '{other}'"))),
    }
}

fn pick(classes: &[SynthClass], index: usize) -> Result<&SynthClass> {
    classes.get(index).ok_or(Error::Index {
        index,
        len: classes.len(),
    })
}

/// Side length of the images returned by [`synth_preview`].
#[wasm_bindgen]
pub fn preview_side() -> usize {
    synth::SYNTH_SIDE
}

pub fn class_names_for(domain_name: &str) -> Result<Vec<String>> {
    Ok(domain(domain_name)?.into_iter().map(|c| c.name).collect())
}

#[wasm_bindgen]
pub fn class_names(domain_name: &str) -> Result<Vec<String>, JsError> {
    class_names_for(domain_name).map_err(to_js)
}

/// RGBA pixels of one rendered sample, ready for `ImageData`.
pub fn render_rgba(domain_name: &str, class_index: usize, seed: u64) -> Result<Vec<u8>> {
    let classes = domain(domain_name)?;
    let img = synth::render_sign(pick(&classes, class_index)?, &mut Rng::new(seed));
    Ok(img
        .pixels
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect())
}

#[wasm_bindgen]
pub fn synth_preview(domain_name: &str, class_index: usize, seed: u64) -> Result<Vec<u8>, JsError> {
    render_rgba(domain_name, class_index, seed).map_err(to_js)
}

pub fn summary_text(class_count: usize) -> Result<String> {
    if class_count == 0 {
        return Err(Error::InvalidParameter("class count must be >= 1".into()));
    }
    Ok(ModelSpec::canonical(class_count).summary()?.to_string())
}

#[wasm_bindgen]
pub fn architecture_summary(class_count: usize) -> Result<String, JsError> {
    summary_text(class_count).map_err(to_js)
}

/// Trains the canonical network on a synthetic domain, one epoch per call.
#[wasm_bindgen]
pub struct Trainer {
    classes: Vec<SynthClass>,
    model: Model<f32>,
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    rng: Rng,
    epoch: usize,
}

impl Trainer {
    pub fn create(domain_name: &str, per_class: usize, seed: u64) -> Result<Trainer> {
        let classes = domain(domain_name)?;
        let ds = synth::synth_dataset(&classes, per_class, &mut Rng::stream(seed, 0))?;
        let config = TrainConfig {
            seed,
            epochs: 1,
            ..TrainConfig::default()
        };
        let split = transfer::split_for(&ds, &config)?;
        let model = Model::canonical(classes.len(), &mut Rng::stream(seed, 1))?;
        Ok(Trainer {
            classes,
            model,
            train: split.train,
            val: split.val,
            config,
            rng: Rng::stream(seed, 2),
            epoch: 0,
        })
    }

    /// Runs one epoch and returns `[train_loss, train_acc, val_loss, val_acc]`.
    pub fn step(&mut self) -> Result<Vec<f64>> {
        let mut epoch_rng = self.rng.fork();
        let tr = run_epoch(
            &mut self.model,
            &self.train,
            &self.config,
            &mut epoch_rng,
            Phase::Train,
        )?;
        let va = run_epoch(
            &mut self.model,
            &self.val,
            &self.config,
            &mut Rng::new(0),
            Phase::Eval,
        )?;
        self.epoch += 1;
        Ok(vec![tr.loss, tr.accuracy, va.loss, va.accuracy])
    }

    /// Class probabilities for a freshly rendered sample of `class_index`.
    pub fn classify(&self, class_index: usize, seed: u64) -> Result<Vec<f32>> {
        let img = synth::render_sign(pick(&self.classes, class_index)?, &mut Rng::new(seed));
        let x = preprocess(&img)?;
        let [c, h, w] = self.model.spec.input_shape;
        Ok(self.model.predict(&x.reshape(&[1, c, h, w])?)?.into_data())
    }
}

#[wasm_bindgen]
impl Trainer {
    #[wasm_bindgen(constructor)]
    pub fn new(domain_name: &str, per_class: usize, seed: u64) -> Result<Trainer, JsError> {
        Trainer::create(domain_name, per_class, seed).map_err(to_js)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn train_size(&self) -> usize {
        self.train.len()
    }

    pub fn val_size(&self) -> usize {
        self.val.len()
    }

    pub fn run_epoch(&mut self) -> Result<Vec<f64>, JsError> {
        self.step().map_err(to_js)
    }

    pub fn predict(&self, class_index: usize, seed: u64) -> Result<Vec<f32>, JsError> {
        self.classify(class_index, seed).map_err(to_js)
    }
}
