//! Timing harness comparing the four sampling modes on one layer.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sacloss::{sacloss_multi_layer, SacConfig, SamplingMode};
use crate::scct::ScctLayout;
use crate::surround::{sigma_for_side, surrounding_label};
use crate::tensor::{Mask, Tensor3};

const BENCH_SEED: u64 = 0x5eed_5ac1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub mode: SamplingMode,
    /// Median over the repeats, in seconds.
    pub wall_time: f64,
    pub distance_evals: usize,
    pub candidate_pairs: u64,
    pub loss_value: f64,
}

/// Disc covering roughly a fifth of the grid, centred.
fn bench_mask(h: usize, w: usize) -> Mask {
    let r = h.min(w) as f64 / 4.0;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Mask::from_fn(h, w, |y, x| {
        (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every sampling mode on the same random `c × h × w` layer-`k` feature
/// map `repeats` times. Returns nothing when `repeats` is zero.
pub fn bench_sacloss(
    h: usize,
    w: usize,
    c: usize,
    k: u8,
    repeats: usize,
) -> Result<Vec<BenchResult>> {
    bench_sacloss_seeded(h, w, c, k, repeats, BENCH_SEED)
}

/// [`bench_sacloss`] with an explicit seed for the random features.
pub fn bench_sacloss_seeded(
    h: usize,
    w: usize,
    c: usize,
    k: u8,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchResult>> {
    let layout = ScctLayout::for_layer(k)?;
    let s = layout.stride();
    if h == 0 || w == 0 || c == 0 || !h.is_multiple_of(s) || !w.is_multiple_of(s) {
        return Err(Error::Dimension(format!(
            "{c}x{h}x{w} features are not divisible by the layer-{k} stride {s}"
        )));
    }
    if repeats == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Tensor3::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
    let gt = bench_mask(h, w);
    let lm = surrounding_label(&gt, sigma_for_side(h.max(w)))?.into_map();
    let input = [(features, k)];

    SamplingMode::ALL
        .iter()
        .map(|&mode| {
            let cfg = SacConfig {
                mode,
                ..SacConfig::default()
            };
            let mut times = Vec::with_capacity(repeats);
            let mut last = None;
            for _ in 0..repeats {
                let t0 = Instant::now();
                let r = sacloss_multi_layer(&input, &gt, &lm, &cfg)?;
                times.push(t0.elapsed().as_secs_f64());
                last = Some(r);
            }
            let r = last.expect("repeats > 0");
            Ok(BenchResult {
                mode,
                wall_time: median(times),
                distance_evals: r.distance_evals(),
                candidate_pairs: r.candidate_pairs(),
                loss_value: r.value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn by_mode(rs: &[BenchResult], m: SamplingMode) -> &BenchResult {
        rs.iter().find(|r| r.mode == m).unwrap()
    }

    #[test]
    fn identity_layer_costs_the_same() {
        let rs = bench_sacloss(12, 12, 4, 4, 1).unwrap();
        assert_eq!(rs.len(), 4);
        let full = by_mode(&rs, SamplingMode::FullPairwise);
        let scct = by_mode(&rs, SamplingMode::Scct);
        assert_eq!(full.distance_evals, scct.distance_evals);
        assert!(full.distance_evals > 0);
        assert_eq!(full.loss_value, scct.loss_value);
    }

    #[test]
    fn pair_space_shrinks_by_stride_to_the_fourth() {
        let rs = bench_sacloss(24, 24, 2, 3, 1).unwrap();
        let full = by_mode(&rs, SamplingMode::FullPairwise).candidate_pairs;
        assert_eq!(full, by_mode(&rs, SamplingMode::Scct).candidate_pairs * 16);
        let rs = bench_sacloss(24, 24, 2, 2, 1).unwrap();
        let full = by_mode(&rs, SamplingMode::FullPairwise).candidate_pairs;
        assert_eq!(full, by_mode(&rs, SamplingMode::Scct).candidate_pairs * 81);
    }

    #[test]
    fn zero_repeats_and_bad_dims() {
        assert!(bench_sacloss(12, 12, 2, 3, 0).unwrap().is_empty());
        assert!(matches!(
            bench_sacloss(10, 10, 2, 2, 1),
            Err(Error::Dimension(_))
        ));
    }
}
