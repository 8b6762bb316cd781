//! Seeded randomness helpers.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`] seeded from a
//! run seed mixed with a stream tag and a sentence index, so per-sentence
//! results do not depend on processing order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` from a run seed.
pub fn split_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ index)
}

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rng for one sentence of one random stream.
pub fn sentence_rng(seed: u64, stream: u64, index: usize) -> SeededRng {
    seeded(split_seed(seed, stream, index as u64))
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Draws a class index from `softmax(scores)`.
///
/// `slot` only labels the error when a score is not finite.
pub fn sample_softmax<R: Rng + ?Sized>(scores: &[f64], slot: usize, rng: &mut R) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Shape(format!("slot {slot} has no candidates")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { slot });
    }
    let probs = softmax(scores);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (class, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(class);
        }
    }
    // u landed in the rounding slack above the cumulative sum
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
