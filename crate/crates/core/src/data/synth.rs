//! Seeded synthetic sign generator.
//!
//! Each class is a solid shape in one color on a noisy background of random tone,
//! rendered at 48x48 with random translation and scale. Output uses the same
//! directory layout as [`load_directory_dataset`](super::load_directory_dataset).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::dataset::Dataset;
use super::ppm::{encode_ppm, RawImage};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SYNTH_SIDE: usize = 48;
const MAX_SHIFT: u64 = 4;
const SCALE_JITTER: f64 = 0.15;
const BASE_RADIUS: f64 = 14.0;
/// Each image gets a random background tone per channel in
/// `BACKGROUND_LO..BACKGROUND_LO + BACKGROUND_SPAN`, plus per-pixel noise of
/// up to `NOISE` levels either way.
const BACKGROUND_LO: i64 = 40;
const BACKGROUND_SPAN: u64 = 160;
const NOISE: u64 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Triangle,
    Square,
    Octagon,
    Diamond,
    Bar,
}

impl Shape {
    pub const ALL: [Shape; 6] = [
        Shape::Circle,
        Shape::Triangle,
        Shape::Square,
        Shape::Octagon,
        Shape::Diamond,
        Shape::Bar,
    ];

    /// Whether offset `(dx, dy)` from the center lies inside a shape of radius `r`.
    fn contains(self, dx: f64, dy: f64, r: f64) -> bool {
        let (ax, ay) = (dx.abs(), dy.abs());
        match self {
            Shape::Circle => dx * dx + dy * dy <= r * r,
            // upward equilateral triangle inscribed in the circle of radius r
            Shape::Triangle => dy <= r / 2.0 && 3f64.sqrt() * ax <= dy + r,
            Shape::Square => ax <= 0.8 * r && ay <= 0.8 * r,
            Shape::Octagon => {
                let a = 0.92 * r;
                ax <= a && ay <= a && (ax + ay) <= a * std::f64::consts::SQRT_2
            }
            Shape::Diamond => ax + ay <= r,
            Shape::Bar => ax <= r && ay <= 0.3 * r,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
            Shape::Square => "square",
            Shape::Octagon => "octagon",
            Shape::Diamond => "diamond",
            Shape::Bar => "bar",
        };
        f.write_str(s)
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown shape '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthClass {
    pub name: String,
    pub shape: Shape,
    pub color: [u8; 3],
}

impl SynthClass {
    pub fn new(name: &str, shape: Shape, color: [u8; 3]) -> Self {
        SynthClass {
            name: name.to_string(),
            shape,
            color,
        }
    }
}

const RED: [u8; 3] = [220, 40, 40];
const YELLOW: [u8; 3] = [240, 200, 30];
const BLUE: [u8; 3] = [40, 80, 220];
const GREEN: [u8; 3] = [40, 170, 60];

/// Six-class pretraining domain: three shapes in red and three in blue, so
/// color alone never identifies a class.
pub fn domain_a() -> Vec<SynthClass> {
    vec![
        SynthClass::new("circle-red", Shape::Circle, RED),
        SynthClass::new("square-red", Shape::Square, RED),
        SynthClass::new("triangle-red", Shape::Triangle, RED),
        SynthClass::new("octagon-blue", Shape::Octagon, BLUE),
        SynthClass::new("diamond-blue", Shape::Diamond, BLUE),
        SynthClass::new("bar-blue", Shape::Bar, BLUE),
    ]
}

/// Four-class target domain in colors absent from [`domain_a`]; two shapes
/// share each color.
pub fn domain_b() -> Vec<SynthClass> {
    vec![
        SynthClass::new("circle-yellow", Shape::Circle, YELLOW),
        SynthClass::new("triangle-yellow", Shape::Triangle, YELLOW),
        SynthClass::new("square-green", Shape::Square, GREEN),
        SynthClass::new("diamond-green", Shape::Diamond, GREEN),
    ]
}

/// Renders one 48x48 sample.
pub fn render_sign(class: &SynthClass, rng: &mut Rng) -> RawImage {
    let shift = |rng: &mut Rng| rng.below(2 * MAX_SHIFT + 1) as f64 - MAX_SHIFT as f64;
    let cx = SYNTH_SIDE as f64 / 2.0 + shift(rng);
    let cy = SYNTH_SIDE as f64 / 2.0 + shift(rng);
    let scale = 1.0 - SCALE_JITTER + 2.0 * SCALE_JITTER * rng.next_f64();
    let r = BASE_RADIUS * scale;
    let base: [i64; 3] = std::array::from_fn(|_| BACKGROUND_LO + rng.below(BACKGROUND_SPAN) as i64);
    let mut pixels = Vec::with_capacity(3 * SYNTH_SIDE * SYNTH_SIDE);
    for y in 0..SYNTH_SIDE {
        for x in 0..SYNTH_SIDE {
            let noise = base
                .map(|b| (b + rng.below(2 * NOISE + 1) as i64 - NOISE as i64).clamp(0, 255) as u8);
            let inside = class
                .shape
                .contains(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy, r);
            pixels.extend_from_slice(if inside { &class.color } else { &noise });
        }
    }
    RawImage {
        width: SYNTH_SIDE,
        height: SYNTH_SIDE,
        pixels,
    }
}

/// Directory name for class `index`; the numeric prefix keeps the on-disk
/// sort order equal to the generation order.
pub fn class_dir_name(index: usize, class: &SynthClass) -> String {
    format!("{index:02}_{}", class.name)
}

fn check(classes: &[SynthClass], per_class: usize) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::InvalidParameter("no synthetic classes given".into()));
    }
    if per_class == 0 {
        return Err(Error::InvalidParameter("per_class must be >= 1".into()));
    }
    Ok(())
}

/// Renders every sample in generation order: class by class, `per_class` each.
pub fn render_all(
    classes: &[SynthClass],
    per_class: usize,
    rng: &mut Rng,
) -> Result<Vec<(usize, RawImage)>> {
    check(classes, per_class)?;
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for (label, class) in classes.iter().enumerate() {
        for _ in 0..per_class {
            out.push((label, render_sign(class, rng)));
        }
    }
    Ok(out)
}

/// Writes `<out>/<NN_name>/<iiii>.ppm` for every class.
pub fn synth_generate(
    classes: &[SynthClass],
    per_class: usize,
    rng: &mut Rng,
    out: impl AsRef<Path>,
) -> Result<()> {
    let out = out.as_ref();
    let samples = render_all(classes, per_class, rng)?;
    for (label, class) in classes.iter().enumerate() {
        let dir = out.join(class_dir_name(label, class));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (i, (label, img)) in samples.iter().enumerate() {
        let path = out
            .join(class_dir_name(*label, &classes[*label]))
            .join(format!("{:04}.ppm", i % per_class));
        fs::write(&path, encode_ppm(img)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// In-memory equivalent of generating to disk and loading back.
pub fn synth_dataset(classes: &[SynthClass], per_class: usize, rng: &mut Rng) -> Result<Dataset> {
    let samples = render_all(classes, per_class, rng)?;
    let names = classes
        .iter()
        .enumerate()
        .map(|(i, c)| class_dir_name(i, c))
        .collect();
    let samples = samples
        .into_iter()
        .enumerate()
        .map(|(i, (label, img))| {
            let path = format!(
                "{}/{:04}.ppm",
                class_dir_name(label, &classes[label]),
                i % per_class
            );
            (img, label, path)
        })
        .collect();
    Dataset::from_raw(samples, names, "synthetic")
}
