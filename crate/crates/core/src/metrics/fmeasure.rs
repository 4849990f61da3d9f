//! Weighted F-measure.
//!
//! Errors `E = |O − GT|` are reweighted before precision and recall are
//! formed: foreground errors may be replaced by their Gaussian-smoothed
//! neighbourhood (7×7, σ = 5) when that is smaller, background pixels
//! inherit the error of their nearest foreground pixel before smoothing, and
//! background errors are amplified by `2 − exp(ln(0.5)/5 · dist)` with
//! `dist` the Euclidean distance to the object.

use crate::error::Result;
use crate::ops::convolve2d_same;
use crate::surround::gaussian_kernel_with_side;
use crate::tensor::{Mask, SoftMap};

use super::check_dims;

const DEPENDENCY_SIDE: usize = 7;
const DEPENDENCY_SIGMA: f64 = 5.0;
const IMPORTANCE_RATE: f64 = 5.0;

/// Euclidean distance to, and flat index of, the closest foreground pixel.
#[derive(Debug, Clone)]
pub struct NearestForeground {
    pub distance: Vec<f64>,
    pub index: Vec<usize>,
}

/// Exact nearest-foreground transform. Ties resolve to the smallest column,
/// then the smallest row. Requires at least one foreground pixel.
pub fn nearest_foreground(gt: &Mask) -> Option<NearestForeground> {
    let (h, w) = gt.dims();
    if gt.count_ones() == 0 {
        return None;
    }
    // per column: vertical offset to the nearest foreground row (ties: upper)
    let mut col_row: Vec<Option<usize>> = vec![None; h * w];
    for x in 0..w {
        let mut above: Option<usize> = None;
        let mut up = vec![None; h];
        for (y, slot) in up.iter_mut().enumerate() {
            if gt.get(y, x) {
                above = Some(y);
            }
            *slot = above;
        }
        let mut below: Option<usize> = None;
        for y in (0..h).rev() {
            if gt.get(y, x) {
                below = Some(y);
            }
            col_row[y * w + x] = match (up[y], below) {
                (Some(a), Some(b)) => Some(if y - a <= b - y { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }
    let mut distance = vec![0.0; h * w];
    let mut index = vec![0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(usize, usize)> = None;
            for xc in 0..w {
                if let Some(r) = col_row[y * w + xc] {
                    let d2 = y.abs_diff(r).pow(2) + x.abs_diff(xc).pow(2);
                    if best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, r * w + xc));
                    }
                }
            }
            let (d2, i) = best.expect("foreground exists");
            distance[y * w + x] = (d2 as f64).sqrt();
            index[y * w + x] = i;
        }
    }
    Some(NearestForeground { distance, index })
}

/// Weighted F-measure with `beta2 = β²`. `None` when the ground truth has
/// no foreground, where the measure is undefined.
pub fn weighted_fmeasure(o: &SoftMap, gt: &Mask, beta2: f64) -> Result<Option<f64>> {
    check_dims(o.dims(), gt.dims())?;
    let Some(nearest) = nearest_foreground(gt) else {
        return Ok(None);
    };
    let (h, w) = gt.dims();
    let fg: Vec<bool> = gt.data().iter().map(|&g| g == 1).collect();
    let err: Vec<f64> = o
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p - f64::from(g)).abs())
        .collect();
    let spread: Vec<f64> = (0..h * w)
        .map(|i| if fg[i] { err[i] } else { err[nearest.index[i]] })
        .collect();
    let kernel = gaussian_kernel_with_side(DEPENDENCY_SIGMA, DEPENDENCY_SIDE)?;
    let smoothed = convolve2d_same(&SoftMap::from_vec(h, w, spread)?, &kernel)?;

    let decay = 0.5f64.ln() / IMPORTANCE_RATE;
    let (mut fg_sum, mut bg_sum, mut fg_count) = (0.0, 0.0, 0usize);
    for i in 0..h * w {
        if fg[i] {
            let e = err[i].min(smoothed.data()[i]);
            fg_sum += e;
            fg_count += 1;
        } else {
            bg_sum += err[i] * (2.0 - (decay * nearest.distance[i]).exp());
        }
    }
    let eps = f64::EPSILON;
    let tp = fg_count as f64 - fg_sum;
    let recall = 1.0 - fg_sum / fg_count as f64;
    let precision = tp / (eps + tp + bg_sum);
    Ok(Some(
        (1.0 + beta2) * recall * precision / (eps + recall + beta2 * precision),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty_predictions() {
        let gt = Mask::from_fn(16, 16, |y, x| (5..11).contains(&y) && (4..12).contains(&x));
        let perfect = weighted_fmeasure(&gt.to_soft(), &gt, 1.0).unwrap().unwrap();
        assert!((perfect - 1.0).abs() < 1e-9);
        let zero = weighted_fmeasure(&SoftMap::zeros(16, 16), &gt, 1.0)
            .unwrap()
            .unwrap();
        assert!(zero.abs() < 1e-9);
        assert_eq!(
            weighted_fmeasure(&SoftMap::zeros(4, 4), &Mask::zeros(4, 4), 1.0).unwrap(),
            None
        );
    }

    #[test]
    fn nearest_foreground_ties_prefer_left_then_up() {
        // foreground at (0,0), (0,2), (2,0), (2,2); centre (1,1) ties four ways
        let gt = Mask::from_fn(3, 3, |y, x| y % 2 == 0 && x % 2 == 0);
        let nf = nearest_foreground(&gt).unwrap();
        assert_eq!(nf.index[4], 0);
        assert!((nf.distance[4] - 2f64.sqrt()).abs() < 1e-15);
        // (1,2) ties between (0,2) and (2,2): upper wins
        assert_eq!(nf.index[5], 2);
        assert_eq!(nf.distance[0], 0.0);
    }
}
