//! Seeded splitmix64 generator.
//!
//! Every random draw in the crate (initialization, shuffling, dropout masks,
//! synthetic data) goes through [`Rng`], so a seed fully determines a run on
//! any platform. An `Rng` is single-owner: parallel code derives independent
//! streams with [`Rng::stream`] instead of sharing one.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent generator for sub-stream `tag` of `seed`.
    pub fn stream(seed: u64, tag: u64) -> Self {
        Rng::new(mix64(seed ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    /// Splits off a child generator, advancing `self` by one draw.
    pub fn fork(&mut self) -> Self {
        Rng::new(self.next_u64())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        let v = lo + (hi - lo) * self.next_f64();
        // rounding can land exactly on hi for wide ranges
        Ok(if v >= hi { hi.next_down() } else { v })
    }

    /// Box-Muller sample; consumes two uniform draws.
    pub fn normal(&mut self, mean: f64, stddev: f64) -> Result<f64> {
        if !stddev.is_finite() || stddev <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stddev must be > 0, got {stddev}"
            )));
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mean + stddev * z)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn shuffle_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
