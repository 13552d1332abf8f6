use std::fs;
use std::path::{Path, PathBuf};

use super::image::{preprocess, IMAGE_SIDE};
use super::ppm::{decode_ppm, RawImage};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Normalized images with integer labels and the ordered class-name list.
///
/// Images are stored back to back as flat `f32` planes so that an empty
/// dataset (e.g. an empty validation split) is representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// (channels, height, width) of every image.
    pub image_shape: [usize; 3],
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Per-sample origin, e.g. the file path.
    pub paths: Vec<String>,
    /// Where the dataset came from.
    pub source: String,
}

impl Dataset {
    pub fn empty(class_names: Vec<String>, source: impl Into<String>) -> Self {
        Dataset {
            image_shape: [3, IMAGE_SIDE, IMAGE_SIDE],
            images: Vec::new(),
            labels: Vec::new(),
            class_names,
            paths: Vec::new(),
            source: source.into(),
        }
    }

    /// Builds a dataset from decoded images, resizing and normalizing each.
    pub fn from_raw(
        samples: Vec<(RawImage, usize, String)>,
        class_names: Vec<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let mut ds = Dataset::empty(class_names, source);
        for (img, label, path) in samples {
            ds.push(preprocess(&img)?.data(), label, path)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, image: &[f32], label: usize, path: String) -> Result<()> {
        if image.len() != self.image_len() {
            return Err(Error::Shape(format!(
                "image has {} values, dataset expects {}",
                image.len(),
                self.image_len()
            )));
        }
        if label >= self.class_names.len() {
            return Err(Error::Index {
                index: label,
                len: self.class_names.len(),
            });
        }
        self.images.extend_from_slice(image);
        self.labels.push(label);
        self.paths.push(path);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Samples per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Stacks the selected images into an NCHW batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index {
                    index: i,
                    len: self.len(),
                });
            }
            data.extend_from_slice(self.image(i));
        }
        let [c, h, w] = self.image_shape;
        Tensor::from_vec(&[indices.len(), c, h, w], data)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut out = Dataset {
            image_shape: self.image_shape,
            images: Vec::with_capacity(indices.len() * self.image_len()),
            labels: Vec::with_capacity(indices.len()),
            class_names: self.class_names.clone(),
            paths: Vec::with_capacity(indices.len()),
            source: self.source.clone(),
        };
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index {
                    index: i,
                    len: self.len(),
                });
            }
            out.push(self.image(i), self.labels[i], self.paths[i].clone())?;
        }
        Ok(out)
    }
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let file_type = entry.file_type().map_err(|e| Error::io(&path, e))?;
        let is_dir = file_type.is_dir() || (file_type.is_symlink() && path.is_dir());
        if is_dir != want_dirs {
            continue;
        }
        if !want_dirs
            && !path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
        {
            continue;
        }
        let name = entry
            .file_name()
            .into_string()
            .map_err(|n| Error::Format(format!("non-UTF-8 name {n:?} in {}", dir.display())))?;
        out.push((name, path));
    }
    // byte-wise order, independent of filesystem enumeration
    out.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    Ok(out)
}

/// Loads `<root>/<class_name>/<file>.ppm`.
///
/// Class indices follow the byte-wise sort of the subdirectory names; empty
/// class directories keep their index. Any unreadable or undecodable file
/// aborts the load with that file's path in the error.
pub fn load_directory_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let classes = sorted_entries(root, true)?;
    if classes.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} contains no class subdirectories",
            root.display()
        )));
    }
    let mut files = Vec::new();
    for (label, (_, dir)) in classes.iter().enumerate() {
        for (_, path) in sorted_entries(dir, false)? {
            files.push((label, path));
        }
    }
    let decoded = parallel::map_indexed(files.len(), parallel::worker_threads(), |i| {
        let (_, path) = &files[i];
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = decode_ppm(&bytes).map_err(|e| e.in_file(path))?;
        preprocess(&img)
    })?;
    let class_names = classes.into_iter().map(|(n, _)| n).collect();
    let mut ds = Dataset::empty(class_names, root.display().to_string());
    for ((label, path), img) in files.into_iter().zip(decoded) {
        ds.push(img.data(), label, path.display().to_string())?;
    }
    Ok(ds)
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    /// One message per class that could not contribute to validation.
    pub warnings: Vec<String>,
}

/// Per-class split: `round(n * val_fraction)` samples of each class go to
/// validation, capped at `n - 1` so every non-empty class keeps one training
/// sample. Samples are chosen by a seeded shuffle; both halves keep the
/// original sample order.
pub fn stratified_split(ds: &Dataset, val_fraction: f64, rng: &mut Rng) -> Result<Split> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidParameter(format!(
            "val_fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut warnings = Vec::new();
    for (class, mut idx) in per_class.into_iter().enumerate() {
        let n = idx.len();
        let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
        if n == 1 && val_fraction > 0.0 {
            let msg = format!(
                "class '{}' has a single sample; it stays in the training split",
                ds.class_names[class]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        rng.shuffle(&mut idx);
        val_idx.extend_from_slice(&idx[..n_val]);
        train_idx.extend_from_slice(&idx[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok(Split {
        train: ds.subset(&train_idx)?,
        val: ds.subset(&val_idx)?,
        warnings,
    })
}
