//! Image decoding, preprocessing, dataset loading and splitting, and the
//! synthetic sign generator.

mod dataset;
mod image;
mod ppm;
pub mod synth;

pub use dataset::{load_directory_dataset, stratified_split, Dataset, Split};
pub use image::{
    normalize, normalize_byte, preprocess, resize_bilinear, IMAGE_SIDE, NORMALIZATION_ID,
};
pub use ppm::{decode_ppm, encode_ppm, RawImage};
