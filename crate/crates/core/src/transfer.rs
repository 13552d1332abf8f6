//! Checkpoints and the pretrain / fine-tune pipeline.
//!
//! # Checkpoint layout
//!
//! Little-endian throughout:
//!
//! | bytes            | content                                        |
//! |------------------|------------------------------------------------|
//! | 0..8             | ASCII `SIGNCKPT`                               |
//! | 8..12            | `u32` format version (1)                       |
//! | 12..16           | `u32` header length `H`                        |
//! | 16..16+H         | UTF-8 JSON header                              |
//! | ...              | `f32` arrays in manifest order                 |
//! | last 4           | CRC32 of everything before it                  |
//!
//! The header holds `model_spec`, `class_names`, `normalization_id`,
//! `step_counter`, and `tensor_manifest`, an ordered list of `(name, shape)`.
//! Per layer the manifest lists the parameters, then their first moments,
//! then their second moments.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, Dataset, Split, NORMALIZATION_ID};
use crate::error::{CorruptKind, Error, Result};
use crate::nn::{init_params, LayerSpec, LayerState, Model};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{fit_with, EpochMetrics, History, TrainConfig};

pub const MAGIC: &[u8; 8] = b"SIGNCKPT";
pub const FORMAT_VERSION: u32 = 1;

const INIT_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const HEAD_STREAM: u64 = 3;

/// A model together with the label space and preprocessing it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub class_names: Vec<String>,
    pub normalization_id: String,
}

impl Checkpoint {
    pub fn new(model: Model<f32>, class_names: Vec<String>) -> Result<Self> {
        if class_names.len() != model.class_count() {
            return Err(Error::InvalidArchitecture(format!(
                "{} class names for a {}-way head",
                class_names.len(),
                model.class_count()
            )));
        }
        Ok(Checkpoint {
            model,
            class_names,
            normalization_id: NORMALIZATION_ID.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model_spec: crate::nn::ModelSpec,
    class_names: Vec<String>,
    normalization_id: String,
    step_counter: u64,
    tensor_manifest: Vec<ManifestEntry>,
}

fn manifest_for(layers: &[LayerSpec]) -> Vec<ManifestEntry> {
    let mut out = Vec::new();
    for (i, spec) in layers.iter().enumerate() {
        let shapes = spec.param_shapes();
        let names = ["weight", "bias"];
        for suffix in ["", ".adam_m", ".adam_v"] {
            for (shape, base) in shapes.iter().zip(names) {
                out.push(ManifestEntry {
                    name: format!("{i}.{}.{base}{suffix}", spec.kind_name()),
                    shape: shape.clone(),
                });
            }
        }
    }
    out
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let model = &ckpt.model;
    model.spec.validate()?;
    if ckpt.class_names.len() != model.class_count() {
        return Err(Error::InvalidArchitecture(format!(
            "{} class names for a {}-way head",
            ckpt.class_names.len(),
            model.class_count()
        )));
    }
    let header = Header {
        model_spec: model.spec.clone(),
        class_names: ckpt.class_names.clone(),
        normalization_id: ckpt.normalization_id.clone(),
        step_counter: model.step,
        tensor_manifest: manifest_for(&model.spec.layers),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * 3 * 200_000);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (spec, state) in model.spec.layers.iter().zip(&model.layers) {
        let shapes = spec.param_shapes();
        for group in [&state.params, &state.adam_m, &state.adam_v] {
            if group.len() != shapes.len() || group.iter().zip(&shapes).any(|(t, s)| t.shape() != s)
            {
                return Err(Error::Shape(format!(
                    "{} state does not match its spec",
                    spec.kind_name()
                )));
            }
            for t in group.iter() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses and fully validates checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic: not a SIGNCKPT checkpoint".into()));
    }
    if bytes.len() < 16 {
        return Err(Error::corrupt(
            CorruptKind::Truncated,
            "file ends inside the preamble",
        ));
    }
    let version = read_u32(bytes, 8);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = read_u32(bytes, 12) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end {
        return Err(Error::corrupt(
            CorruptKind::Truncated,
            "file ends inside the header",
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::corrupt(CorruptKind::Header, e.to_string()))?;
    header
        .model_spec
        .validate()
        .map_err(|e| Error::corrupt(CorruptKind::Header, e.to_string()))?;
    if header.class_names.len() != header.model_spec.class_count {
        return Err(Error::corrupt(
            CorruptKind::Header,
            format!(
                "{} class names for class_count {}",
                header.class_names.len(),
                header.model_spec.class_count
            ),
        ));
    }
    let expected = manifest_for(&header.model_spec.layers);
    if header.tensor_manifest != expected {
        let detail = header
            .tensor_manifest
            .iter()
            .zip(&expected)
            .find(|(a, b)| a != b)
            .map(|(a, b)| {
                format!(
                    "{} {:?} but spec implies {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )
            })
            .unwrap_or_else(|| {
                format!(
                    "manifest lists {} tensors, spec implies {}",
                    header.tensor_manifest.len(),
                    expected.len()
                )
            });
        return Err(Error::corrupt(CorruptKind::ShapeMismatch, detail));
    }
    let floats: usize = expected
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    let total = header_end + 4 * floats + 4;
    if bytes.len() < total {
        return Err(Error::corrupt(
            CorruptKind::Truncated,
            format!("expected {total} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > total {
        return Err(Error::corrupt(
            CorruptKind::TrailingBytes,
            format!("{} bytes after the CRC footer", bytes.len() - total),
        ));
    }
    let stored = read_u32(bytes, total - 4);
    let actual = crc32fast::hash(&bytes[..total - 4]);
    if stored != actual {
        return Err(Error::corrupt(
            CorruptKind::Crc,
            format!("stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let mut pos = header_end;
    let mut take = |shape: &[usize]| -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let data = bytes[pos..pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        pos += 4 * n;
        Tensor::from_vec(shape, data)
    };
    let mut layers = Vec::with_capacity(header.model_spec.layers.len());
    for spec in &header.model_spec.layers {
        let shapes = spec.param_shapes();
        let mut group = || shapes.iter().map(|s| take(s)).collect::<Result<Vec<_>>>();
        let params = group()?;
        let adam_m = group()?;
        let adam_v = group()?;
        layers.push(LayerState {
            params,
            adam_m,
            adam_v,
            frozen: false,
        });
    }
    Ok(Checkpoint {
        model: Model {
            spec: header.model_spec,
            layers,
            step: header.step_counter,
        },
        class_names: header.class_names,
        normalization_id: header.normalization_id,
    })
}

/// Writes the checkpoint through a temporary file and a rename.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ckpt)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.in_file(path))
}

/// Swaps the Dense head for a freshly initialized one with `new_class_count`
/// outputs. Every other layer keeps its parameters; the step counter and all
/// Adam moments restart from zero.
pub fn replace_head(
    mut model: Model<f32>,
    new_class_count: usize,
    rng: &mut Rng,
) -> Result<Model<f32>> {
    let head = model.spec.head_index()?;
    let LayerSpec::Dense { in_features, .. } = model.spec.layers[head] else {
        unreachable!("head_index guarantees a Dense layer");
    };
    if new_class_count == 0 {
        return Err(Error::InvalidParameter(
            "new class count must be >= 1".into(),
        ));
    }
    let spec = LayerSpec::dense(in_features, new_class_count);
    model.layers[head] = init_params(&spec, rng)?;
    model.spec.layers[head] = spec;
    model.spec.class_count = new_class_count;
    model.step = 0;
    for state in &mut model.layers {
        *state = LayerState {
            frozen: state.frozen,
            ..LayerState::from_params(std::mem::take(&mut state.params))
        };
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelector {
    /// Every Conv2D layer.
    ConvOnly,
    /// No layers.
    None,
    Indices(Vec<usize>),
}

pub fn set_frozen<T: crate::tensor::Scalar>(
    model: &mut Model<T>,
    selector: &LayerSelector,
    frozen: bool,
) -> Result<()> {
    let n = model.layers.len();
    let targets: Vec<usize> = match selector {
        LayerSelector::None => Vec::new(),
        LayerSelector::ConvOnly => (0..n)
            .filter(|&i| matches!(model.spec.layers[i], LayerSpec::Conv2D { .. }))
            .collect(),
        LayerSelector::Indices(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                return Err(Error::Index { index: bad, len: n });
            }
            idx.clone()
        }
    };
    for i in targets {
        model.layers[i].frozen = frozen;
    }
    Ok(())
}

/// Which layers stay fixed during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezeMode {
    #[default]
    None,
    Conv,
}

impl std::str::FromStr for FreezeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezeMode::None),
            "conv" => Ok(FreezeMode::Conv),
            other => Err(Error::InvalidParameter(format!(
                "freeze mode must be 'none' or 'conv', got '{other}'"
            ))),
        }
    }
}

/// Seeded stratified train/validation split used by both pipelines.
pub fn split_for(ds: &Dataset, config: &TrainConfig) -> Result<Split> {
    stratified_split(
        ds,
        config.val_fraction,
        &mut Rng::stream(config.seed, SPLIT_STREAM),
    )
}

pub struct RunOutput {
    pub history: History,
    pub checkpoint: Checkpoint,
    pub split_warnings: Vec<String>,
}

/// Trains the canonical architecture from scratch on `ds`.
pub fn train_from_scratch(
    ds: &Dataset,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutput> {
    config.validate()?;
    let split = split_for(ds, config)?;
    let mut model = Model::canonical(ds.class_count(), &mut Rng::stream(config.seed, INIT_STREAM))?;
    let history = fit_with(&mut model, &split.train, &split.val, config, on_epoch)?;
    Ok(RunOutput {
        history,
        checkpoint: Checkpoint::new(model, ds.class_names.clone())?,
        split_warnings: split.warnings,
    })
}

fn check_class_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::InvalidParameter(
            "target dataset has no classes".into(),
        ));
    }
    if names.windows(2).any(|w| w[0].as_bytes() >= w[1].as_bytes()) {
        return Err(Error::InvalidParameter(
            "target class names must be unique and sorted".into(),
        ));
    }
    Ok(())
}

/// Replaces the head of `base` for `target`'s classes, applies `freeze`,
/// and trains on a stratified split of `target`.
pub fn fine_tune(
    base: Checkpoint,
    target: &Dataset,
    config: &TrainConfig,
    freeze: FreezeMode,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutput> {
    config.validate()?;
    check_class_names(&target.class_names)?;
    if base.normalization_id != NORMALIZATION_ID {
        return Err(Error::Format(format!(
            "base checkpoint uses normalization '{}', expected '{NORMALIZATION_ID}'",
            base.normalization_id
        )));
    }
    if base.model.spec.input_shape != target.image_shape {
        return Err(Error::Shape(format!(
            "base model input {:?} vs target images {:?}",
            base.model.spec.input_shape, target.image_shape
        )));
    }
    let split = split_for(target, config)?;
    let mut model = replace_head(
        base.model,
        target.class_count(),
        &mut Rng::stream(config.seed, HEAD_STREAM),
    )?;
    let selector = match freeze {
        FreezeMode::None => LayerSelector::None,
        FreezeMode::Conv => LayerSelector::ConvOnly,
    };
    let all = LayerSelector::Indices((0..model.layers.len()).collect());
    set_frozen(&mut model, &all, false)?;
    set_frozen(&mut model, &selector, true)?;
    let history = fit_with(&mut model, &split.train, &split.val, config, on_epoch)?;
    Ok(RunOutput {
        history,
        checkpoint: Checkpoint::new(model, target.class_names.clone())?,
        split_warnings: split.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    fn small_ckpt(seed: u64) -> Checkpoint {
        let spec = ModelSpec {
            input_shape: [1, 6, 6],
            layers: vec![
                LayerSpec::conv(1, 2, 3),
                LayerSpec::ReLU,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::dense(8, 5),
                LayerSpec::ReLU,
                LayerSpec::dense(5, 3),
                LayerSpec::Softmax,
            ],
            class_count: 3,
        };
        let mut model = Model::new(spec, &mut Rng::new(seed)).unwrap();
        model.step = 17;
        for l in &mut model.layers {
            for m in &mut l.adam_m {
                *m = m.map(|_| 0.125);
            }
            for v in &mut l.adam_v {
                *v = v.map(|_| 0.5);
            }
        }
        Checkpoint::new(model, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn bytes_roundtrip() {
        let c = small_ckpt(1);
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..8], b"SIGNCKPT");
        assert_eq!(read_u32(&bytes, 8), 1);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn header_is_json_with_manifest() {
        let bytes = encode_checkpoint(&small_ckpt(1)).unwrap();
        let hl = read_u32(&bytes, 12) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hl]).unwrap();
        assert_eq!(v["step_counter"], 17);
        assert_eq!(v["class_names"][2], "c");
        assert_eq!(v["tensor_manifest"][0]["name"], "0.conv2d.weight");
        assert_eq!(v["tensor_manifest"][2]["name"], "0.conv2d.weight.adam_m");
        assert_eq!(v["tensor_manifest"].as_array().unwrap().len(), 18);
    }

    fn kind(e: Error) -> CorruptKind {
        match e {
            Error::CorruptCheckpoint { kind, .. } => kind,
            other => panic!("expected corrupt checkpoint, got {other}"),
        }
    }

    #[test]
    fn corruptions() {
        let good = encode_checkpoint(&small_ckpt(2)).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[8] = 2;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));

        assert_eq!(
            kind(decode_checkpoint(&good[..good.len() - 9]).unwrap_err()),
            CorruptKind::Truncated
        );
        assert_eq!(
            kind(decode_checkpoint(&good[..20]).unwrap_err()),
            CorruptKind::Truncated
        );
        assert_eq!(
            kind(decode_checkpoint(&good[..12]).unwrap_err()),
            CorruptKind::Truncated
        );

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(
            kind(decode_checkpoint(&bad).unwrap_err()),
            CorruptKind::TrailingBytes
        );

        let mut bad = good.clone();
        let mid = good.len() - 40;
        bad[mid] ^= 0x01;
        assert_eq!(kind(decode_checkpoint(&bad).unwrap_err()), CorruptKind::Crc);

        let mut bad = good.clone();
        bad[16] = b'[';
        assert_eq!(
            kind(decode_checkpoint(&bad).unwrap_err()),
            CorruptKind::Header
        );
    }

    #[test]
    fn replace_head_isolation() {
        let c = small_ckpt(3);
        let m = replace_head(c.model.clone(), 7, &mut Rng::new(1)).unwrap();
        assert_eq!(m.class_count(), 7);
        assert_eq!(m.spec.layers[6], LayerSpec::dense(5, 7));
        assert_eq!(m.layers[6].params[0].shape(), &[5, 7]);
        assert!(m.layers[6].params[1].data().iter().all(|&b| b == 0.0));
        assert_eq!(m.step, 0);
        for i in [0, 4] {
            assert_eq!(m.layers[i].params, c.model.layers[i].params);
        }
        for l in &m.layers {
            for t in l.adam_m.iter().chain(&l.adam_v) {
                assert!(t.data().iter().all(|&x| x == 0.0));
            }
        }
        m.spec.validate().unwrap();
    }

    #[test]
    fn replace_head_needs_dense_head() {
        let mut c = small_ckpt(3);
        c.model.spec.layers.pop();
        assert!(matches!(
            replace_head(c.model, 2, &mut Rng::new(0)),
            Err(Error::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn freeze_accounting() {
        let mut m = Model::<f32>::canonical(37, &mut Rng::new(0)).unwrap();
        set_frozen(&mut m, &LayerSelector::ConvOnly, true).unwrap();
        let s = m.summary().unwrap();
        assert_eq!(s.total_params - s.trainable_params, 896 + 18_496);
        set_frozen(&mut m, &LayerSelector::ConvOnly, false).unwrap();
        assert_eq!(m.summary().unwrap().trainable_params, s.total_params);
        assert!(matches!(
            set_frozen(&mut m, &LayerSelector::Indices(vec![0, 13]), true),
            Err(Error::Index { index: 13, .. })
        ));
        assert!(!m.layers[0].frozen);
    }

    #[test]
    fn freeze_modes_parse() {
        assert_eq!("none".parse::<FreezeMode>().unwrap(), FreezeMode::None);
        assert_eq!("conv".parse::<FreezeMode>().unwrap(), FreezeMode::Conv);
        assert!("all".parse::<FreezeMode>().is_err());
    }
}
