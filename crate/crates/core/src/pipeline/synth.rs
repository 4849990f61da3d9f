//! Synthetic concealed-object scenes.
//!
//! A smooth random background carries one irregular blob. The blob is
//! brighter than the background by `0.45·(1 − difficulty)` and its
//! texture is blended toward the background texture as difficulty rises, so
//! at difficulty 1 the object is statistically indistinguishable.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::convolve2d_same;
use crate::surround::{
    boundary, gaussian_kernel, sigma_for_side, surrounding_label, SurroundingLabel,
};
use crate::tensor::{Mask, SoftMap, Tensor3};

const MAX_GAP: f64 = 0.45;
const TEXTURE_AMPLITUDE: f64 = 0.12;
const BACKGROUND_GRAIN: f64 = 1.5;
const OBJECT_GRAIN: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    /// RGB image in `[0, 1]`, `3 × side × side`.
    pub image: Tensor3,
    pub gt: Mask,
    /// One-pixel inner boundary of `gt`.
    pub edge: Mask,
    pub lm: SurroundingLabel,
}

fn noise_field(rng: &mut ChaCha8Rng, side: usize, grain: f64) -> Result<SoftMap> {
    let raw = SoftMap::from_fn(side, side, |_, _| rng.gen_range(-1.0..1.0));
    let smooth = convolve2d_same(&raw, &gaussian_kernel(grain)?)?;
    let peak = smooth.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(if peak > 0.0 {
        smooth.map(|v| v / peak)
    } else {
        smooth
    })
}

fn blob(rng: &mut ChaCha8Rng, side: usize) -> Mask {
    let s = side as f64;
    let r0 = rng.gen_range(0.15..0.28) * s;
    let margin = r0 * 1.3 + 1.0;
    let cy = rng.gen_range(margin..s - margin);
    let cx = rng.gen_range(margin..s - margin);
    let harmonics: Vec<(f64, f64, f64)> = (2..=4)
        .map(|n| (n as f64, rng.gen_range(0.0..0.12), rng.gen_range(0.0..TAU)))
        .collect();
    Mask::from_fn(side, side, |y, x| {
        let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
        let theta = dy.atan2(dx);
        let r = r0
            * (1.0
                + harmonics
                    .iter()
                    .map(|(n, a, p)| a * (n * theta + p).cos())
                    .sum::<f64>());
        dy.hypot(dx) <= r
    })
}

/// Deterministic sample for `seed`; the surrounding label uses the spread
/// scaled to `side`.
pub fn synth_sample(seed: u64, side: usize, difficulty: f64) -> Result<SynthSample> {
    synth_sample_with_sigma(seed, side, difficulty, sigma_for_side(side))
}

pub fn synth_sample_with_sigma(
    seed: u64,
    side: usize,
    difficulty: f64,
    sigma: f64,
) -> Result<SynthSample> {
    if side == 0 || !side.is_multiple_of(8) {
        return Err(Error::Parameter(format!(
            "side must be a positive multiple of 8, got {side}"
        )));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Parameter(format!(
            "difficulty must lie in [0, 1], got {difficulty}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = blob(&mut rng, side);
    let bg_level = rng.gen_range(0.15..0.45);
    let obj_level = bg_level + MAX_GAP * (1.0 - difficulty);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));

    let mut image = Tensor3::zeros(3, side, side);
    for (ch, t) in tint.iter().enumerate() {
        let bg_tex = noise_field(&mut rng, side, BACKGROUND_GRAIN)?;
        let own_tex = noise_field(&mut rng, side, OBJECT_GRAIN)?;
        let plane = image.channel_mut(ch);
        for (i, v) in plane.iter_mut().enumerate() {
            let b = bg_tex.data()[i];
            let value = if gt.data()[i] == 1 {
                let tex = (1.0 - difficulty) * own_tex.data()[i] + difficulty * b;
                obj_level + t + TEXTURE_AMPLITUDE * tex
            } else {
                bg_level + t + TEXTURE_AMPLITUDE * b
            };
            *v = value.clamp(0.0, 1.0);
        }
    }
    let edge = boundary(&gt);
    let lm = surrounding_label(&gt, sigma)?;
    Ok(SynthSample {
        image,
        gt,
        edge,
        lm,
    })
}

/// Per-sample seed derived from a run seed.
pub fn sample_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` samples with seeds derived from `run_seed`.
pub fn synth_dataset(
    run_seed: u64,
    n: usize,
    side: usize,
    difficulty: f64,
    sigma: f64,
) -> Result<Vec<SynthSample>> {
    (0..n)
        .map(|i| synth_sample_with_sigma(sample_seed(run_seed, i), side, difficulty, sigma))
        .collect()
}
